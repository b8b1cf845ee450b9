//! Nearest-neighbor (Kozachenko–Leonenko) differential entropy.
//!
//! For `n = N + 1` points in `R^d` with nearest-neighbor distances `R_i`,
//!
//! ```text
//! H ≈ (1/n) Σ_i ln(N · R_i^d) + ln B_d + γ
//! ```
//!
//! where `B_d` is the volume of the unit `d`-ball and `γ` the Euler–Mascheroni
//! constant. Everything here is in nats. The estimator is piecewise smooth in
//! the points, so [`kl_entropy_grad`] differentiates it with the neighbor
//! assignment held fixed.
//!
//! Also here: closed-form maximum-entropy references (Gaussian under fixed
//! second moments, Laplace under a fixed absolute moment) and the
//! moment-based KL divergence to `N(0, I)`.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EaeError, Result};
use crate::nn::Tensor;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Distances below this are clamped; such pairs carry no gradient.
pub const DISTANCE_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln Γ(m / 2)` for a positive integer `m`, exact up to rounding.
fn ln_gamma_half(m: usize) -> f64 {
    debug_assert!(m >= 1);
    // Γ(1/2) = √π, Γ(1) = 1, Γ(x + 1) = x Γ(x)
    let (mut acc, mut x) = if m % 2 == 0 {
        (0.0, 1.0)
    } else {
        (0.5 * std::f64::consts::PI.ln(), 0.5)
    };
    let target = m as f64 / 2.0;
    while x < target {
        acc += x.ln();
        x += 1.0;
    }
    acc
}

/// `ln B_d` with `B_d = π^(d/2) / Γ(d/2 + 1)`.
pub fn ln_unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(EaeError::Domain("unit ball dimension must be >= 1".into()));
    }
    Ok(0.5 * d as f64 * std::f64::consts::PI.ln() - ln_gamma_half(d + 2))
}

pub fn unit_ball_volume(d: usize) -> Result<f64> {
    ln_unit_ball_volume(d).map(f64::exp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value_nats: f64,
    /// Distance from each point to its k-th nearest neighbor (after clamping).
    pub nn_distance: Vec<f64>,
    /// Index of that neighbor.
    pub nn_index: Vec<usize>,
    /// Number of points whose distance hit [`DISTANCE_FLOOR`].
    pub clamped: usize,
}

impl EntropyEstimate {
    /// True when duplicate (or near-duplicate) points were found.
    pub fn has_duplicates(&self) -> bool {
        self.clamped > 0
    }
}

/// For each row, the index and squared distance of its k-th nearest other row.
/// Ties go to the lower index.
fn kth_neighbors(points: &Tensor, k: usize) -> (Vec<usize>, Vec<f64>) {
    let n = points.rows();
    let mut idx = Vec::with_capacity(n);
    let mut dist = Vec::with_capacity(n);
    // sorted (dist², index) of the k best so far; strict < keeps earlier index
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for i in 0..n {
        best.clear();
        let xi = points.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2: f64 = xi
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.len() == k && d2 >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d2);
            best.insert(pos, (d2, j));
            best.truncate(k);
        }
        let (d2, j) = best[k - 1];
        idx.push(j);
        dist.push(d2);
    }
    (idx, dist)
}

fn check_points(points: &Tensor, k: usize) -> Result<(usize, usize)> {
    let (n, d) = (points.rows(), points.cols());
    if k == 0 {
        return Err(EaeError::Domain("neighbor count k must be >= 1".into()));
    }
    if n < k + 1 || n < 2 {
        return Err(EaeError::SampleSize {
            needed: (k + 1).max(2),
            got: n,
        });
    }
    if d == 0 {
        return Err(EaeError::Domain("points must have dimension >= 1".into()));
    }
    Ok((n, d))
}

/// Entropy estimate from the k-th nearest neighbor.
///
/// `k = 1` is the classic estimator; for larger `k` the constant becomes
/// `γ - H_{k-1}` (i.e. `-ψ(k)`), which reduces to `γ` at `k = 1`.
pub fn kl_entropy_k(points: &Tensor, k: usize) -> Result<EntropyEstimate> {
    let (n, d) = check_points(points, k)?;
    let (nn_index, d2) = kth_neighbors(points, k);
    let mut clamped = 0;
    let nn_distance: Vec<f64> = d2
        .iter()
        .map(|&s| {
            let r = s.sqrt();
            if r < DISTANCE_FLOOR {
                clamped += 1;
                DISTANCE_FLOOR
            } else {
                r
            }
        })
        .collect();
    if clamped > 0 {
        warn!("{clamped} of {n} points have a duplicate neighbor; distances clamped");
    }
    let big_n = (n - 1) as f64;
    let mean_log_y = nn_distance
        .iter()
        .map(|r| big_n.ln() + d as f64 * r.ln())
        .sum::<f64>()
        / n as f64;
    let harmonic: f64 = (1..k).map(|j| 1.0 / j as f64).sum();
    let value_nats = mean_log_y + ln_unit_ball_volume(d)? + EULER_GAMMA - harmonic;
    Ok(EntropyEstimate {
        value_nats,
        nn_distance,
        nn_index,
        clamped,
    })
}

/// Single-neighbor estimate over the rows of `points`.
pub fn kl_entropy(points: &Tensor) -> Result<EntropyEstimate> {
    kl_entropy_k(points, 1)
}

/// Gradient of the estimate given an already computed neighbor assignment.
///
/// Each pair `(a, b = nn(a))` contributes `(d/n)(X_a − X_b)/R_a²` to `a` and
/// the negative of that to `b`.
pub fn entropy_grad_from(points: &Tensor, est: &EntropyEstimate) -> Tensor {
    let (n, d) = (points.rows(), points.cols());
    let scale = d as f64 / n as f64;
    let mut grad = Tensor::zeros(&[n, d]);
    for a in 0..n {
        let r = est.nn_distance[a];
        if r <= DISTANCE_FLOOR {
            continue;
        }
        let b = est.nn_index[a];
        let c = scale / (r * r);
        let diff: Vec<f64> = points
            .row(a)
            .iter()
            .zip(points.row(b))
            .map(|(x, y)| c * (x - y))
            .collect();
        for (g, v) in grad.row_mut(a).iter_mut().zip(&diff) {
            *g += v;
        }
        for (g, v) in grad.row_mut(b).iter_mut().zip(&diff) {
            *g -= v;
        }
    }
    grad
}

pub fn kl_entropy_grad(points: &Tensor) -> Result<Tensor> {
    let est = kl_entropy(points)?;
    Ok(entropy_grad_from(points, &est))
}

/// Estimate and gradient in one neighbor search.
pub fn kl_entropy_with_grad(points: &Tensor, k: usize) -> Result<(EntropyEstimate, Tensor)> {
    let est = kl_entropy_k(points, k)?;
    let g = entropy_grad_from(points, &est);
    Ok((est, g))
}

/// Entropy of `N(μ, σ² I_d)`.
pub fn gaussian_entropy(d: usize, variance: f64) -> Result<f64> {
    if d == 0 || !(variance > 0.0) {
        return Err(EaeError::Domain(format!(
            "gaussian entropy needs d >= 1 and variance > 0 (got d={d}, variance={variance})"
        )));
    }
    let d = d as f64;
    Ok(0.5 * d * (LN_2PI + 1.0) + 0.5 * d * variance.ln())
}

/// Entropy of `N(μ, Σ)`: `(d/2) ln(2πe) + ½ ln det Σ`.
pub fn gaussian_entropy_cov(cov: &DMatrix<f64>) -> Result<f64> {
    let d = cov.nrows();
    if d == 0 || cov.ncols() != d {
        return Err(EaeError::dim("gaussian_entropy_cov", "square d×d, d>=1", format!("{}x{}", d, cov.ncols())));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| EaeError::Domain("covariance is not positive definite".into()))?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * d as f64 * (LN_2PI + 1.0) + 0.5 * log_det)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// `E[X] = 0, E[X²] = 1` per coordinate: the Gaussian.
    ZeroMeanUnitVariance,
    /// `E|X| = 1` per coordinate: the Laplace with scale 1.
    UnitAbsoluteMoment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxEntConstraint {
    pub kind: ConstraintKind,
    pub dimension: usize,
}

impl MaxEntConstraint {
    pub fn new(kind: ConstraintKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(EaeError::Domain("constraint dimension must be >= 1".into()));
        }
        Ok(MaxEntConstraint { kind, dimension })
    }
}

/// Entropy of the maximum-entropy distribution under the constraint.
pub fn maxent_reference_entropy(c: MaxEntConstraint) -> f64 {
    let d = c.dimension as f64;
    match c.kind {
        ConstraintKind::ZeroMeanUnitVariance => 0.5 * d * (LN_2PI + 1.0),
        ConstraintKind::UnitAbsoluteMoment => d * (1.0 + std::f64::consts::LN_2),
    }
}

/// `E_Q[-ln φ(X)]` for the standard normal `φ`, from the empirical moments:
/// `(d/2) ln 2π + ½ Σ_j (mean_j² + var_j)` with biased variance.
pub fn gaussian_cross_entropy(points: &Tensor) -> f64 {
    let d = points.cols() as f64;
    let (mean, var) = points.column_moments();
    0.5 * d * LN_2PI
        + 0.5
            * mean
                .iter()
                .zip(&var)
                .map(|(m, v)| m * m + v)
                .sum::<f64>()
}

/// `H(Q, P) − H(Q)` with `P = N(0, I)`: cross-entropy from moments minus the
/// nearest-neighbor entropy. For exactly standardized points the first term
/// is the constant `(d/2)(ln 2π + 1)`.
pub fn kl_to_standard_gaussian(points: &Tensor) -> Result<f64> {
    let est = kl_entropy(points)?;
    let (mean, var) = points.column_moments();
    let off = mean
        .iter()
        .zip(&var)
        .any(|(m, v)| m.abs() > 0.1 || (v - 1.0).abs() > 0.1);
    if off {
        warn!("points are not standardized (per-dim mean/var off by > 0.1); KL identity is approximate");
    }
    Ok(gaussian_cross_entropy(points) - est.value_nats)
}
