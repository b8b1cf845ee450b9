//! Finite-difference oracles shared by unit tests.

use crate::nn::Tensor;

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut v = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + h;
            let up = f(&v);
            v[i] = orig - h;
            let down = f(&v);
            v[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Column-wise zero mean, unit biased variance.
pub fn standardize(t: &Tensor) -> Tensor {
    let (m, v) = t.column_moments();
    let mut out = t.clone();
    for r in 0..out.rows() {
        for (j, x) in out.row_mut(r).iter_mut().enumerate() {
            *x = (*x - m[j]) / v[j].sqrt();
        }
    }
    out
}
