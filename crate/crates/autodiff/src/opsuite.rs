//! Gradient checks for every differentiable tape op on random fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckReport};
use crate::nn::{Ffn, LstmCell, LstmState, ParamVars};
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};

fn random_vec(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[derive(Debug, Clone)]
pub struct OpCheck {
    pub op: &'static str,
    pub d: usize,
    pub seed: u64,
    pub report: GradCheckReport,
}

/// Runs the op suite at every `(d, seed)` combination.
pub fn check_all_ops(dims: &[usize], seeds: &[u64], h: f64, tol: f64) -> Result<Vec<OpCheck>> {
    let mut out = Vec::new();
    for &d in dims {
        for &seed in seeds {
            let x = Tensor::vector(random_vec(&mut ChaCha8Rng::seed_from_u64(1000 + seed), d))?;
            let fx = Fixtures::new(d, seed);
            for (op, f) in op_suite(&fx) {
                let report = grad_check(|t, x| f(t, x), &x, h, tol)?;
                out.push(OpCheck { op, d, seed, report });
            }
        }
    }
    Ok(out)
}

struct Fixtures {
    d: usize,
    other: Vec<f64>,
    proj: Vec<f64>,
    proj_mat: Vec<f64>,
    mat: Vec<f64>,
    ffn: Ffn,
    cell: LstmCell,
    gamma: Vec<f64>,
    gold: usize,
}

impl Fixtures {
    fn new(d: usize, seed: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Fixtures {
            d,
            other: random_vec(&mut r, d),
            proj: random_vec(&mut r, d),
            proj_mat: random_vec(&mut r, d * d),
            mat: random_vec(&mut r, d * d),
            ffn: Ffn::two_layer(d, d, d, &mut r),
            cell: LstmCell::init(d, d, &mut r),
            gamma: random_vec(&mut r, d),
            gold: r.random_range(0..d),
        }
    }
}

type Res = Result<Var>;
type OpFn<'a> = Box<dyn Fn(&mut Tape<'a>, Var) -> Res + 'a>;

fn project(t: &mut Tape<'_>, y: Var, p: &[f64]) -> Res {
    let pv = t.constant(Tensor::vector(p.to_vec())?);
    t.dot(y, pv)
}

fn project_mat(t: &mut Tape<'_>, m: Var, p: &[f64], d: usize) -> Res {
    let pm = t.constant(Tensor::matrix(d, d, p.to_vec())?);
    let prod = t.mul(m, pm)?;
    Ok(t.sum(prod))
}

/// Every differentiable op, reduced to a scalar through a fixed random
/// projection so no coordinate's gradient is trivially symmetric.
fn op_suite(fx: &Fixtures) -> Vec<(&'static str, OpFn<'_>)> {
    let d = fx.d;
    let mut suite: Vec<(&'static str, OpFn<'_>)> = vec![
        (
            "mul",
            Box::new(move |t, x| {
                let c = t.constant(Tensor::vector(fx.other.clone())?);
                let y = t.mul(x, c)?;
                let y = t.mul(y, x)?;
                project(t, y, &fx.proj)
            }),
        ),
        (
            "outer",
            Box::new(move |t, x| {
                let c = t.constant(Tensor::vector(fx.other.clone())?);
                let m1 = t.outer(x, c)?;
                let m2 = t.outer(c, x)?;
                let m = t.add_n(&[m1, m2])?;
                project_mat(t, m, &fx.proj_mat, d)
            }),
        ),
        (
            "matvec",
            Box::new(move |t, x| {
                let mv = t.constant(Tensor::matrix(d, d, fx.mat.clone())?);
                let outer = t.outer(x, x)?;
                let msum = t.add(mv, outer)?;
                let y = t.matvec(msum, x)?;
                project(t, y, &fx.proj)
            }),
        ),
        (
            "tanh_sigmoid",
            Box::new(move |t, x| {
                let a = t.tanh(x);
                let b = t.sigmoid(x);
                let y = t.sub(a, b)?;
                let y = t.scale(y, 1.7);
                project(t, y, &fx.proj)
            }),
        ),
        (
            "max_mean",
            Box::new(move |t, x| {
                let a = t.scale(x, 2.0);
                let b = t.tanh(x);
                let mx = t.max_n(&[a, b])?;
                let mn = t.mean_n(&[a, b, mx])?;
                project(t, mn, &fx.proj)
            }),
        ),
        (
            "concat_slice_row",
            Box::new(move |t, x| {
                let cat = t.concat(&[x, x])?;
                let s = t.slice(cat, d / 2, d)?;
                let m = t.outer(x, s)?;
                let r = t.row(m, d - 1)?;
                let y = t.add(r, s)?;
                project(t, y, &fx.proj)
            }),
        ),
        (
            "ffn",
            Box::new(move |t, x| {
                let b = fx.ffn.bind(t, &mut ParamVars::default());
                let y = b.forward(t, x)?;
                project(t, y, &fx.proj)
            }),
        ),
        (
            "lstm",
            Box::new(move |t, x| {
                let b = fx.cell.bind(t, &mut ParamVars::default());
                let mut s = LstmState::zeros(t, d);
                s = b.step(t, x, s)?;
                s = b.step(t, x, s)?;
                let y = t.add(s.h, s.c)?;
                project(t, y, &fx.proj)
            }),
        ),
        (
            "relu_dot",
            Box::new(move |t, x| {
                let c = t.constant(Tensor::vector(fx.other.clone())?);
                let shifted = t.add(x, c)?;
                let r = t.relu(shifted);
                let y = t.mul(r, x)?;
                let a = t.dot(y, c)?;
                let b = project(t, y, &fx.proj)?;
                t.add(a, b)
            }),
        ),
    ];
    if d >= 2 {
        suite.push((
            "layernorm",
            Box::new(move |t, x| {
                let gv = t.constant(Tensor::vector(fx.gamma.clone())?);
                let bv = t.constant(Tensor::zeros(Shape::Vector(d)));
                let y = t.layernorm(x, gv, bv)?;
                project(t, y, &fx.proj)
            }),
        ));
        suite.push((
            "softmax_xent",
            Box::new(move |t, x| {
                let y = t.scale(x, 3.0);
                t.softmax_xent(y, fx.gold)
            }),
        ));
    }
    suite
}
