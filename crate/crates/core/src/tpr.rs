//! Two-dimensional node memories: fillers bound to roles by outer products
//! and read back by matrix-vector unbinding.
//!
//! Rows index filler space and columns index role space, so
//! `store(m, f, r) = m + f rᵀ` and `retrieve(m, k) = m k`.

use depwise_autodiff::{Result as TensorResult, Tape, Tensor, TensorError, Var};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NodeMemory {
    d: usize,
    data: Vec<f64>,
}

impl NodeMemory {
    pub fn zeros(d: usize) -> Self {
        NodeMemory {
            d,
            data: vec![0.0; d * d],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rows() != t.cols() || t.shape().dims().len() != 2 {
            return Err(Error::Tensor(TensorError::Dimension {
                op: "NodeMemory::from_tensor",
                expected: "square matrix".into(),
                got: t.shape().to_string(),
            }));
        }
        Ok(NodeMemory {
            d: t.rows(),
            data: t.data().to_vec(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Row-major `d × d` entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.d, self.d, self.data.clone()).expect("square by construction")
    }

    fn check(&self, op: &'static str, v: &[f64]) -> Result<()> {
        if v.len() != self.d {
            return Err(Error::Tensor(TensorError::Dimension {
                op,
                expected: format!("vector[{}]", self.d),
                got: format!("vector[{}]", v.len()),
            }));
        }
        Ok(())
    }

    /// `self + filler ⊗ role`; `self` is left untouched.
    pub fn store(&self, filler: &[f64], role: &[f64]) -> Result<NodeMemory> {
        self.check("store", filler)?;
        self.check("store", role)?;
        let mut next = self.clone();
        for (row, &f) in next.data.chunks_exact_mut(self.d).zip(filler) {
            for (m, &r) in row.iter_mut().zip(role) {
                *m += f * r;
            }
        }
        Ok(next)
    }

    pub fn retrieve(&self, key: &[f64]) -> Result<Vec<f64>> {
        self.check("retrieve", key)?;
        Ok(self
            .data
            .chunks_exact(self.d)
            .map(|row| row.iter().zip(key).map(|(m, k)| m * k).sum())
            .collect())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn memory_norm(mem: &NodeMemory) -> f64 {
    mem.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleMode {
    OrthonormalOneHot,
    RandomUnit,
}

/// Unit-norm role vectors, one per entity.
#[derive(Debug, Clone)]
pub struct RoleBasis {
    mode: RoleMode,
    d: usize,
    vectors: Vec<Vec<f64>>,
}

impl RoleBasis {
    /// Standard basis vectors `e_0 .. e_{n-1}`; needs `n ≤ d`.
    pub fn one_hot(n: usize, d: usize) -> Result<Self> {
        if n > d {
            return Err(Error::Argument(format!("{n} one-hot roles do not fit in width {d}")));
        }
        let vectors = (0..n)
            .map(|i| {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                v
            })
            .collect();
        Ok(RoleBasis {
            mode: RoleMode::OrthonormalOneHot,
            d,
            vectors,
        })
    }

    /// Gaussian directions scaled to unit length.
    pub fn random_unit(n: usize, d: usize, rng: &mut impl Rng) -> Result<Self> {
        if d == 0 {
            return Err(Error::Argument("role width must be positive".into()));
        }
        let vectors = (0..n).map(|_| random_unit_vector(d, rng)).collect();
        Ok(RoleBasis {
            mode: RoleMode::RandomUnit,
            d,
            vectors,
        })
    }

    pub fn mode(&self) -> RoleMode {
        self.mode
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn role(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

pub fn random_unit_vector(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Tape-recorded bind: `mem + filler ⊗ role`.
pub fn tape_store(tape: &mut Tape<'_>, mem: Var, filler: Var, role: Var) -> TensorResult<Var> {
    let bound = tape.outer(filler, role)?;
    tape.add(mem, bound)
}

/// Tape-recorded unbind: `mem · key`.
pub fn tape_retrieve(tape: &mut Tape<'_>, mem: Var, key: Var) -> TensorResult<Var> {
    tape.matvec(mem, key)
}
