//! Evaluation metrics: reconstruction error, per-dimension and joint
//! Gaussianity diagnostics for latent codes, and a Fréchet distance computed
//! on PCA features of the data ("proxy FID").

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::entropy::{gaussian_entropy_cov, kl_entropy, kl_to_standard_gaussian};
use crate::error::{EaeError, Result};
use crate::model::EaeModel;
use crate::nn::Tensor;

const EVAL_CHUNK: usize = 1000;

/// Mean over examples of the per-example squared error, eval-mode batch norm.
pub fn reconstruction_error(model: &EaeModel, data: &Tensor) -> Result<f64> {
    if data.rows() == 0 {
        return Err(EaeError::SampleSize { needed: 1, got: 0 });
    }
    let mut per_example = Vec::with_capacity(data.rows());
    for start in (0..data.rows()).step_by(EVAL_CHUNK) {
        let x = data.slice_rows(start, (start + EVAL_CHUNK).min(data.rows()));
        let y = model.reconstruct_eval(&x)?;
        for (a, b) in x.iter_rows().zip(y.iter_rows()) {
            per_example.push(a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>());
        }
    }
    Ok(per_example.iter().sum::<f64>() / per_example.len() as f64)
}

/// Encodes `data` in eval mode, chunked.
pub fn encode_all(model: &EaeModel, data: &Tensor) -> Result<Tensor> {
    let parts = (0..data.rows())
        .step_by(EVAL_CHUNK)
        .map(|s| model.encode_eval(&data.slice_rows(s, (s + EVAL_CHUNK).min(data.rows()))))
        .collect::<Result<Vec<_>>>()?;
    if parts.is_empty() {
        return Ok(Tensor::zeros(&[0, model.latent_dim()]));
    }
    Tensor::vstack(&parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub n: usize,
    pub d: usize,
    pub per_dim_mean: Vec<f64>,
    pub per_dim_var: Vec<f64>,
    pub per_dim_skewness: Vec<f64>,
    /// Gaussian = 0.
    pub per_dim_excess_kurtosis: Vec<f64>,
    pub joint_entropy_nats: f64,
    /// Entropy of the Gaussian with the codes' mean and covariance.
    pub gaussian_reference_nats: f64,
    pub negentropy_nats: f64,
    pub kl_to_isotropic_nats: f64,
}

impl GaussianityReport {
    pub fn median_abs_excess_kurtosis(&self) -> f64 {
        median(self.per_dim_excess_kurtosis.iter().map(|k| k.abs()).collect())
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Biased covariance of the rows.
pub(crate) fn covariance(points: &Tensor) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = (points.rows(), points.cols());
    let (mean, _) = points.column_moments();
    let mut centered = points.clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = vec![0.0; d * d];
    crate::nn::gemm(d, n, d, 1.0 / n as f64, centered.data(), true, centered.data(), false, 0.0, &mut cov);
    let mut c = DMatrix::from_row_slice(d, d, &cov);
    c = (&c + c.transpose()) * 0.5;
    (DVector::from_vec(mean), c)
}

pub fn gaussianity_report(codes: &Tensor) -> Result<GaussianityReport> {
    let (n, d) = (codes.rows(), codes.cols());
    if n < 50 {
        warn!("gaussianity report on only {n} codes; estimates are unreliable");
    }
    let (mean, var) = codes.column_moments();
    let mut m3 = vec![0.0; d];
    let mut m4 = vec![0.0; d];
    for r in codes.iter_rows() {
        for j in 0..d {
            let c = r[j] - mean[j];
            m3[j] += c.powi(3);
            m4[j] += c.powi(4);
        }
    }
    let skew = (0..d)
        .map(|j| m3[j] / n as f64 / var[j].powf(1.5))
        .collect();
    let kurt = (0..d)
        .map(|j| m4[j] / n as f64 / (var[j] * var[j]) - 3.0)
        .collect();
    let joint = kl_entropy(codes)?.value_nats;
    let (_, mut cov) = covariance(codes);
    let reference = match gaussian_entropy_cov(&cov) {
        Ok(h) => h,
        Err(_) => {
            // collinear codes: a relative ridge keeps the reference finite
            let lambda = 1e-10 * (cov.trace() / d as f64).max(1e-300);
            warn!("code covariance is singular; adding ridge {lambda:e} for the Gaussian reference");
            for j in 0..d {
                cov[(j, j)] += lambda;
            }
            gaussian_entropy_cov(&cov)?
        }
    };
    Ok(GaussianityReport {
        n,
        d,
        per_dim_mean: mean,
        per_dim_var: var,
        per_dim_skewness: skew,
        per_dim_excess_kurtosis: kurt,
        joint_entropy_nats: joint,
        gaussian_reference_nats: reference,
        negentropy_nats: reference - joint,
        kl_to_isotropic_nats: kl_to_standard_gaussian(codes)?,
    })
}

/// Top-`k` principal directions of a reference dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    /// `k × input_dim`, orthonormal rows.
    pub projection: Tensor,
    pub mean_offset: Vec<f64>,
    pub k: usize,
    /// Fraction of total variance captured by the `k` directions.
    pub explained_variance_ratio: f64,
}

pub const DEFAULT_FEATURES: usize = 32;

/// PCA by eigendecomposition of the biased data covariance. Each direction
/// is signed so its largest-magnitude entry is positive.
pub fn fit_feature_map(real: &Tensor, k: usize) -> Result<FeatureMap> {
    let (n, dim) = (real.rows(), real.cols());
    if k == 0 || k > dim || k >= n {
        return Err(EaeError::Rank(format!(
            "cannot take {k} principal components of {n} points in {dim} dimensions"
        )));
    }
    let (mean, cov) = covariance(real);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut proj = Tensor::zeros(&[k, dim]);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let mut pivot = 0;
        for j in 1..dim {
            if v[j].abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (dst, src) in proj.row_mut(row).iter_mut().zip(v.iter()) {
            *dst = sign * src;
        }
    }
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let kept: f64 = order.iter().take(k).map(|&i| eig.eigenvalues[i].max(0.0)).sum();
    Ok(FeatureMap {
        projection: proj,
        mean_offset: mean.as_slice().to_vec(),
        k,
        explained_variance_ratio: if total > 0.0 { kept / total } else { 1.0 },
    })
}

impl FeatureMap {
    pub fn input_dim(&self) -> usize {
        self.mean_offset.len()
    }

    /// `(x − mean) · Pᵀ`.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(EaeError::dim("FeatureMap::project", self.input_dim(), x.cols()));
        }
        let n = x.rows();
        let mut centered = x.clone();
        for r in 0..n {
            for (v, m) in centered.row_mut(r).iter_mut().zip(&self.mean_offset) {
                *v -= m;
            }
        }
        let mut out = Tensor::zeros(&[n, self.k]);
        crate::nn::gemm(
            n,
            self.input_dim(),
            self.k,
            1.0,
            centered.data(),
            false,
            self.projection.data(),
            true,
            0.0,
            out.data_mut(),
        );
        Ok(out)
    }
}

/// Symmetric PSD square root with negative eigenvalues clamped to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let s = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})` with biased covariances.
///
/// The trace of the cross term is taken from the eigenvalues of the
/// symmetric matrix `Σa^{1/2} Σb Σa^{1/2}`, which has the same spectrum as
/// `Σa Σb`.
pub fn frechet_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    let k = a.cols();
    if b.cols() != k {
        return Err(EaeError::dim("frechet_distance", k, b.cols()));
    }
    for t in [a, b] {
        if t.rows() < k + 1 {
            return Err(EaeError::SampleSize {
                needed: k + 1,
                got: t.rows(),
            });
        }
    }
    let (ma, ca) = covariance(a);
    let (mb, cb) = covariance(b);
    let sa = psd_sqrt(&ca);
    let mut m = &sa * &cb * &sa;
    m = (&m + m.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let fd = (ma - mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross;
    if !fd.is_finite() {
        return Err(EaeError::Numeric("Fréchet distance is not finite".into()));
    }
    Ok(fd.max(0.0))
}

/// Fréchet distance between two sample sets under one feature map.
pub fn proxy_fid(samples: &Tensor, real: &Tensor, map: &FeatureMap) -> Result<f64> {
    frechet_distance(&map.project(samples)?, &map.project(real)?)
}

/// Proxy FID between two random halves of `real`: the metric's noise floor.
pub fn proxy_fid_noise_floor(real: &Tensor, map: &FeatureMap, seed: u64) -> Result<f64> {
    let mut idx: Vec<usize> = (0..real.rows()).collect();
    idx.shuffle(&mut crate::seeded_rng(seed));
    let half = idx.len() / 2;
    proxy_fid(&real.select_rows(&idx[..half]), &real.select_rows(&idx[half..]), map)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::model::{ArchSpec, OutputActivation};
    use crate::testutil::standardize;

    fn normal(seed: u64, n: usize, d: usize) -> Tensor {
        let mut rng = crate::seeded_rng(seed);
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    /// Standardize each column so its biased mean/std are exactly (mu, sigma).
    fn with_exact_moments(t: &Tensor, mu: f64, sigma: f64) -> Tensor {
        standardize(t).map(|v| mu + sigma * v)
    }

    #[test]
    fn frechet_closed_forms() {
        let base = normal(1, 500, 1);
        let a = with_exact_moments(&base, 0.0, 1.0);
        let b = with_exact_moments(&normal(2, 700, 1), 1.0, 1.0);
        assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-9);
        let c = with_exact_moments(&normal(3, 600, 1), 0.0, 2.0);
        assert!((frechet_distance(&a, &c).unwrap() - 1.0).abs() < 1e-9);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-8);
    }

    #[test]
    fn frechet_matches_commuting_oracle() {
        // diagonal covariances commute: distance is Σ (μa−μb)² + (σa−σb)²
        let mut a = standardize(&normal(4, 400, 3));
        let mut b = standardize(&normal(5, 400, 3));
        let (sa, sb, mb) = ([1.0, 2.0, 0.5], [3.0, 1.0, 0.5], [0.2, -0.1, 1.0]);
        for r in 0..400 {
            for j in 0..3 {
                a.row_mut(r)[j] *= sa[j];
                b.row_mut(r)[j] = b.row(r)[j] * sb[j] + mb[j];
            }
        }
        // sample cross-covariances are not exactly zero, so compare loosely
        let want: f64 = (0..3).map(|j| mb[j] * mb[j] + (sa[j] - sb[j]).powi(2)).sum();
        assert!((frechet_distance(&a, &b).unwrap() - want).abs() < 0.1);
    }

    #[test]
    fn frechet_preconditions() {
        let a = normal(6, 3, 3);
        assert!(matches!(
            frechet_distance(&a, &normal(7, 10, 3)),
            Err(EaeError::SampleSize { needed: 4, got: 3 })
        ));
        assert!(frechet_distance(&normal(8, 10, 2), &normal(9, 10, 3)).is_err());
    }

    #[test]
    fn feature_map_on_plane() {
        let n = 500;
        let mut rng = crate::seeded_rng(10);
        let u = [0.6, 0.8, 0.0, 0.0];
        let v = [0.0, 0.0, 0.6, -0.8];
        let mut data = Vec::new();
        for _ in 0..n {
            let (s, t): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            for j in 0..4 {
                data.push(3.0 * s * u[j] + t * v[j] + 1e-6 * rng.sample::<f64, _>(StandardNormal));
            }
        }
        let x = Tensor::matrix(n, 4, data).unwrap();
        let fm = fit_feature_map(&x, 2).unwrap();
        assert!(fm.explained_variance_ratio > 0.999);
        for i in 0..2 {
            for j in 0..2 {
                let dot: f64 = fm.projection.row(i).iter().zip(fm.projection.row(j)).map(|(a, b)| a * b).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
            let row = fm.projection.row(i);
            let pivot = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
        assert_eq!(fit_feature_map(&x, 2).unwrap(), fm);
        assert!(matches!(fit_feature_map(&x, 5), Err(EaeError::Rank(_))));
        assert!(matches!(fit_feature_map(&x.slice_rows(0, 2), 2), Err(EaeError::Rank(_))));
    }

    #[test]
    fn proxy_fid_noise_floor_is_small() {
        let x = normal(11, 2000, 6).map(|v| v.abs());
        let fm = fit_feature_map(&x, 4).unwrap();
        let floor = proxy_fid_noise_floor(&x, &fm, 1).unwrap();
        let shifted = x.map(|v| v + 0.5);
        assert!(floor < 0.05, "{floor}");
        assert!(proxy_fid(&shifted, &x, &fm).unwrap() > 10.0 * floor);
    }

    #[test]
    fn gaussian_report_on_normal_draws() {
        let r = gaussianity_report(&normal(12, 5000, 8)).unwrap();
        assert!(r.per_dim_skewness.iter().all(|s| s.abs() < 0.15));
        assert!(r.per_dim_excess_kurtosis.iter().all(|k| k.abs() < 0.3));
        assert!(r.negentropy_nats < 0.8, "{}", r.negentropy_nats);
    }

    #[test]
    fn uniform_report_has_platykurtosis_and_negentropy() {
        let mut rng = crate::seeded_rng(13);
        let a = 3f64.sqrt();
        let x = Tensor::matrix(4000, 2, (0..8000).map(|_| rng.random_range(-a..a)).collect()).unwrap();
        let r = gaussianity_report(&x).unwrap();
        assert!(r.per_dim_excess_kurtosis.iter().all(|k| (k + 1.2).abs() < 0.1));
        // exact gap: ln(2πe) − 2 ln(2√3)
        let gap = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() - 2.0 * (2.0 * a).ln();
        assert!(r.negentropy_nats > 0.0);
        assert!((r.negentropy_nats - gap).abs() < 0.1, "{} vs {gap}", r.negentropy_nats);
    }

    #[test]
    fn standardized_report_moments() {
        let x = standardize(&normal(14, 300, 3).map(|v| v.exp()));
        let r = gaussianity_report(&x).unwrap();
        assert!(r.per_dim_mean.iter().all(|m| m.abs() < 1e-6));
        assert!(r.per_dim_var.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn reconstruction_error_order_invariant() {
        let spec = ArchSpec {
            input_dim: 3,
            encoder_widths: vec![4],
            latent_dim: 2,
            decoder_widths: vec![4],
            output_activation: OutputActivation::Sigmoid,
        };
        let mut m = EaeModel::build(spec, 1).unwrap();
        let mut rng = crate::seeded_rng(15);
        let x = Tensor::matrix(50, 3, (0..150).map(|_| rng.random::<f64>()).collect()).unwrap();
        m.calibrate_batch_norm(&x).unwrap();
        let rev: Vec<usize> = (0..50).rev().collect();
        let a = reconstruction_error(&m, &x).unwrap();
        let b = reconstruction_error(&m, &x.select_rows(&rev)).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(reconstruction_error(&m, &Tensor::zeros(&[0, 3])).is_err());
    }

    proptest! {
        #[test]
        fn frechet_is_symmetric(s1 in 0u64..1000, s2 in 0u64..1000, shift in -2.0f64..2.0) {
            let a = normal(s1, 60, 3);
            let b = normal(s2 + 5000, 80, 3).map(|v| 1.5 * v + shift);
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-8 * (1.0 + ab));
        }

        #[test]
        fn proxy_fid_ignores_row_signs(seed in 0u64..1000) {
            let real = normal(seed, 100, 5);
            let fake = normal(seed + 1, 100, 5).map(|v| v * 1.3);
            let fm = fit_feature_map(&real, 3).unwrap();
            let mut flipped = fm.clone();
            for v in flipped.projection.row_mut(1) {
                *v = -*v;
            }
            let a = proxy_fid(&fake, &real, &fm).unwrap();
            let b = proxy_fid(&fake, &real, &flipped).unwrap();
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + a));
        }
    }
}
