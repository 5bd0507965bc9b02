//! Dense rank-1 / rank-2 tensors of `f64`, stored row-major.

use std::fmt;

use crate::error::{Result, TensorError};
use crate::kernels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn numel(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn dims(self) -> Vec<usize> {
        match self {
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        match *dims {
            [n] if n > 0 => Ok(Shape::Vector(n)),
            [r, c] if r > 0 && c > 0 => Ok(Shape::Matrix(r, c)),
            _ => Err(TensorError::arg(
                "shape",
                format!("expected 1 or 2 positive dimensions, got {dims:?}"),
            )),
        }
    }

    pub fn is_scalar(self) -> bool {
        self == Shape::Vector(1)
    }

    /// Length of a vector shape, if this is one.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> Option<usize> {
        match self {
            Shape::Vector(n) => Some(n),
            Shape::Matrix(..) => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

/// A value with an optional gradient slot.
///
/// Parameters live as `Tensor`s outside any tape; a tape borrows their data
/// for one forward/backward pass and the caller folds the resulting gradient
/// back into `grad`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(TensorError::dim("tensor", shape.numel(), data.len()));
        }
        if shape.numel() == 0 {
            return Err(TensorError::arg("tensor", "dimensions must be positive"));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::Vector(data.len()), data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::Matrix(rows, cols), data)
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut t = Tensor::zeros(Shape::Matrix(d, d));
        for i in 0..d {
            t.data[i * d + i] = 1.0;
        }
        t
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Vector(n) => n,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Vector(_) => 1,
            Shape::Matrix(_, c) => c,
        }
    }

    /// Row `i` of a matrix.
    pub fn row(&self, i: usize) -> Result<&[f64]> {
        match self.shape {
            Shape::Matrix(r, c) if i < r => Ok(&self.data[i * c..(i + 1) * c]),
            Shape::Matrix(r, _) => Err(TensorError::Index {
                op: "row",
                index: i,
                len: r,
            }),
            Shape::Vector(_) => Err(TensorError::dim("row", "matrix", self.shape)),
        }
    }

    pub fn row_mut(&mut self, i: usize) -> Result<&mut [f64]> {
        match self.shape {
            Shape::Matrix(r, c) if i < r => Ok(&mut self.data[i * c..(i + 1) * c]),
            Shape::Matrix(r, _) => Err(TensorError::Index {
                op: "row",
                index: i,
                len: r,
            }),
            Shape::Vector(_) => Err(TensorError::dim("row", "matrix", self.shape)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Adds `g` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(TensorError::dim("accumulate_grad", self.data.len(), g.len()));
        }
        let slot = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        kernels::axpy(1.0, g, slot);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub fn frobenius_norm(&self) -> f64 {
        kernels::dot(&self.data, &self.data).sqrt()
    }
}

/// `u ⊗ v` for equal-length vectors: `out[i][j] = u[i] * v[j]`.
pub fn outer(u: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (n, m) = match (u.shape, v.shape) {
        (Shape::Vector(n), Shape::Vector(m)) if n == m => (n, m),
        _ => return Err(TensorError::dim("outer", u.shape, v.shape)),
    };
    let mut out = vec![0.0; n * m];
    kernels::outer(&u.data, &v.data, &mut out);
    Tensor::matrix(n, m, out)
}

/// Matrix-vector product.
pub fn matvec(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    match (m.shape, v.shape) {
        (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => {
            let mut out = vec![0.0; r];
            kernels::matvec(&m.data, c, &v.data, &mut out);
            Tensor::vector(out)
        }
        _ => Err(TensorError::dim(
            "matvec",
            "[r x n]·[n]",
            format!("{}·{}", m.shape, v.shape),
        )),
    }
}
