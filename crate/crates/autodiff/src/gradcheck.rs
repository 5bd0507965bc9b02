//! Central finite-difference checks against tape gradients.

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|analytic - numeric| / max(1, |analytic|)` per coordinate.
    pub rel_errors: Vec<f64>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `eval`, where
/// `eval(i, delta)` returns the objective with coordinate `i` shifted by `delta`.
pub fn finite_difference_report(
    analytic: &[f64],
    h: f64,
    tol: f64,
    mut eval: impl FnMut(usize, f64) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..analytic.len() {
        let plus = eval(i, h)?;
        let minus = eval(i, -h)?;
        numeric.push((plus - minus) / (2.0 * h));
    }
    let rel_errors: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .collect();
    let max_rel_error = rel_errors.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        analytic: analytic.to_vec(),
        numeric,
        rel_errors,
        max_rel_error,
        tol,
        passed: max_rel_error <= tol,
    })
}

/// Checks `d f / d x` for a scalar-valued `f` recorded on a fresh tape.
pub fn grad_check<'p, F>(f: F, x: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'p>, Var) -> Result<Var>,
{
    let eval = |input: Tensor, with_grad: bool| -> Result<(f64, Option<Vec<f64>>)> {
        let mut tape = Tape::new();
        let xv = tape.leaf(if with_grad { input.with_grad() } else { input });
        let y = f(&mut tape, xv)?;
        let shape = tape.shape(y);
        if !shape.is_scalar() {
            return Err(TensorError::NotScalar {
                op: "grad_check",
                shape,
            });
        }
        let value = tape.value(y)[0];
        let grad = if with_grad {
            let g = tape.backward(y)?;
            Some(g.get_or_zeros(xv, tape.value(xv).len()).into_owned())
        } else {
            None
        };
        Ok((value, grad))
    };

    let base = Tensor::new(x.shape(), x.data().to_vec())?;
    let (_, analytic) = eval(base.clone(), true)?;
    let analytic = analytic.expect("gradient requested");
    finite_difference_report(&analytic, h, tol, |i, delta| {
        let mut shifted = base.clone();
        shifted.data_mut()[i] += delta;
        Ok(eval(shifted, false)?.0)
    })
}
