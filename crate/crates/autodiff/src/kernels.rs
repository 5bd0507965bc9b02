//! Slice-level numeric kernels shared by the tape and the value-level API.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn outer(u: &[f64], v: &[f64], out: &mut [f64]) {
    let m = v.len();
    for (row, &ui) in out.chunks_exact_mut(m).zip(u) {
        for (o, &vj) in row.iter_mut().zip(v) {
            *o = ui * vj;
        }
    }
}

/// `out = M v` where `M` is row-major with `cols` columns.
pub fn matvec(m: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o = dot(row, v);
    }
}

/// `gm += g ⊗ v` (gradient of `M v` w.r.t. `M`).
pub fn add_outer(g: &[f64], v: &[f64], gm: &mut [f64]) {
    let cols = v.len();
    for (row, &gi) in gm.chunks_exact_mut(cols).zip(g) {
        if gi != 0.0 {
            axpy(gi, v, row);
        }
    }
}

/// `gv += Mᵀ g`.
pub fn add_matvec_t(m: &[f64], cols: usize, g: &[f64], gv: &mut [f64]) {
    for (row, &gi) in m.chunks_exact(cols).zip(g) {
        if gi != 0.0 {
            axpy(gi, row, gv);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln Σ exp(x)` with max subtraction.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
