//! Parameterised building blocks: affine layers, feed-forward stacks, layer
//! norm and a gated recurrent (LSTM-style) cell.
//!
//! Each block owns its weights as [`Tensor`]s. `bind` registers them on a
//! tape as borrowed parameter leaves and returns a handle whose `forward`
//! records the computation.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};

/// Anything that owns trainable tensors, visited in a fixed order.
pub trait Parameters {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |t| n += t.numel());
        n
    }
}

/// Records the parameter vars created while binding, in visit order.
#[derive(Debug, Default, Clone)]
pub struct ParamVars(pub Vec<Var>);

impl ParamVars {
    pub fn bind<'p>(&mut self, tape: &mut Tape<'p>, t: &'p Tensor) -> Var {
        let v = tape.param(t);
        self.0.push(v);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape<'_>, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data).expect("positive dims")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        Linear {
            weight: uniform_matrix(output, input, bound, rng),
            bias: Tensor::zeros(Shape::Vector(output)),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Tensor::zeros(Shape::Matrix(output, input)),
            bias: Tensor::zeros(Shape::Vector(output)),
        }
    }

    pub fn identity(d: usize) -> Self {
        Linear {
            weight: Tensor::identity(d),
            bias: Tensor::zeros(Shape::Vector(d)),
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        tape.affine(self.weight, x, self.bias)
    }
}

impl Linear {
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>, vars: &mut ParamVars) -> BoundLinear {
        BoundLinear {
            weight: vars.bind(tape, &self.weight),
            bias: vars.bind(tape, &self.bias),
        }
    }
}

/// Affine layers with `activation` between them (not after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Ffn {
    /// `widths = [in, hidden.., out]`.
    pub fn init(widths: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2, "an FFN needs at least input and output widths");
        Ffn {
            layers: widths.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect(),
            activation,
        }
    }

    /// Two layers `input -> hidden -> output`.
    pub fn two_layer(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Ffn::init(&[input, hidden, output], Activation::Tanh, rng)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, Linear::output_width)
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>, vars: &mut ParamVars) -> BoundFfn {
        BoundFfn {
            layers: self.layers.iter().map(|l| l.bind(tape, vars)).collect(),
            activation: self.activation,
        }
    }
}

impl Parameters for Ffn {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

#[derive(Debug, Clone)]
pub struct BoundFfn {
    layers: Vec<BoundLinear>,
    activation: Activation,
}

impl BoundFfn {
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last {
                h = self.activation.apply(tape, h);
            }
        }
        Ok(h)
    }
}

/// Learned scale and shift for layer normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        LayerNorm {
            gamma: Tensor::vector(vec![1.0; d]).expect("positive width"),
            beta: Tensor::zeros(Shape::Vector(d)),
        }
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>, vars: &mut ParamVars) -> BoundLayerNorm {
        BoundLayerNorm {
            gamma: vars.bind(tape, &self.gamma),
            beta: vars.bind(tape, &self.beta),
        }
    }
}

impl Parameters for LayerNorm {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        f(&self.gamma);
        f(&self.beta);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLayerNorm {
    pub gamma: Var,
    pub beta: Var,
}

impl BoundLayerNorm {
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        tape.layernorm(x, self.gamma, self.beta)
    }
}

/// LSTM-style gated cell. Gate blocks in the stacked weights are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

impl LstmCell {
    /// Glorot-uniform weights; forget-gate bias starts at 1.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (input + hidden) as f64).sqrt();
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        LstmCell {
            w_input: uniform_matrix(4 * hidden, input, bound, rng),
            w_hidden: uniform_matrix(4 * hidden, hidden, bound, rng),
            bias: Tensor::vector(bias).expect("positive width"),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            w_input: Tensor::zeros(Shape::Matrix(4 * hidden, input)),
            w_hidden: Tensor::zeros(Shape::Matrix(4 * hidden, hidden)),
            bias: Tensor::zeros(Shape::Vector(4 * hidden)),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn input_width(&self) -> usize {
        self.w_input.cols()
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>, vars: &mut ParamVars) -> BoundLstmCell {
        BoundLstmCell {
            w_input: vars.bind(tape, &self.w_input),
            w_hidden: vars.bind(tape, &self.w_hidden),
            bias: vars.bind(tape, &self.bias),
            hidden: self.hidden_width(),
        }
    }
}

impl Parameters for LstmCell {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Tensor)) {
        f(&self.w_input);
        f(&self.w_hidden);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.w_input);
        f(&mut self.w_hidden);
        f(&mut self.bias);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape<'_>, hidden: usize) -> Self {
        LstmState {
            h: tape.constant(Tensor::zeros(Shape::Vector(hidden))),
            c: tape.constant(Tensor::zeros(Shape::Vector(hidden))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLstmCell {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
    hidden: usize,
}

impl BoundLstmCell {
    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    /// One step:
    /// `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, state: LstmState) -> Result<LstmState> {
        let n = self.hidden;
        for s in [state.h, state.c] {
            if tape.shape(s) != Shape::Vector(n) {
                return Err(TensorError::dim("lstm", Shape::Vector(n), tape.shape(s)));
            }
        }
        let zx = tape.affine(self.w_input, x, self.bias)?;
        let zh = tape.matvec(self.w_hidden, state.h)?;
        let z = tape.add(zx, zh)?;
        let zi = tape.slice(z, 0, n)?;
        let zf = tape.slice(z, n, n)?;
        let zg = tape.slice(z, 2 * n, n)?;
        let zo = tape.slice(z, 3 * n, n)?;
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let g = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let fc = tape.mul(f, state.c)?;
        let ig = tape.mul(i, g)?;
        let c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}
