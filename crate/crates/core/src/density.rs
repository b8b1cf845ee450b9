//! Densities over latent codes: the isotropic prior, a full-covariance
//! Gaussian and a full-covariance Gaussian mixture fitted by EM.

use std::path::Path;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EaeError, Result};
use crate::nn::Tensor;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative ridge added to every fitted covariance: `λ = RIDGE · tr(Σ) / d`.
pub const RIDGE: f64 = 1e-6;
/// Absolute floor on `λ` for fully degenerate (zero-trace) covariances.
const RIDGE_FLOOR: f64 = 1e-12;
/// Mixture components whose weight falls below this are dropped.
pub const MIN_WEIGHT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentDensity {
    IsotropicGaussian {
        d: usize,
    },
    FullGaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covs: Vec<Vec<Vec<f64>>>,
    },
}

/// A Gaussian with its Cholesky factor cached.
#[derive(Debug, Clone)]
struct Component {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl Component {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = cov.clone().cholesky().ok_or_else(|| {
            EaeError::Numeric("covariance is not symmetric positive definite".into())
        })?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Component {
            mean,
            cov,
            chol,
            log_det,
        })
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let diff = DVector::from_iterator(d, x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (d as f64 * LN_2PI + self.log_det + y.norm_squared())
    }

    fn sample_into(&self, rng: &mut impl Rng, out: &mut [f64]) {
        let d = self.mean.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.mean + self.chol.l() * z;
        out.copy_from_slice(x.as_slice());
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(EaeError::dim("covariance", "square matrix", "ragged rows"));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

/// Weighted mean and biased covariance plus the ridge.
fn weighted_moments(points: &Tensor, weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = points.cols();
    let total: f64 = weights.iter().sum();
    let mut mean = DVector::zeros(d);
    for (x, &w) in points.iter_rows().zip(weights) {
        for j in 0..d {
            mean[j] += w * x[j];
        }
    }
    mean /= total;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (x, &w) in points.iter_rows().zip(weights) {
        for a in 0..d {
            let da = x[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += w * da * (x[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let lambda = (RIDGE * cov.trace() / d as f64).max(RIDGE_FLOOR);
    for a in 0..d {
        cov[(a, a)] += lambda;
    }
    (mean, cov)
}

impl LatentDensity {
    pub fn isotropic(d: usize) -> Self {
        LatentDensity::IsotropicGaussian { d }
    }

    pub fn dim(&self) -> usize {
        match self {
            LatentDensity::IsotropicGaussian { d } => *d,
            LatentDensity::FullGaussian { mean, .. } => mean.len(),
            LatentDensity::GaussianMixture { means, .. } => means.first().map_or(0, Vec::len),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LatentDensity::IsotropicGaussian { .. } => "iso",
            LatentDensity::FullGaussian { .. } => "mvg",
            LatentDensity::GaussianMixture { .. } => "gmm",
        }
    }

    /// Weights and factorized components; identity for the isotropic case.
    fn components(&self) -> Result<(Vec<f64>, Vec<Component>)> {
        match self {
            LatentDensity::IsotropicGaussian { d } => {
                if *d == 0 {
                    return Err(EaeError::Domain("density dimension must be >= 1".into()));
                }
                Ok((
                    vec![1.0],
                    vec![Component::new(DVector::zeros(*d), DMatrix::identity(*d, *d))?],
                ))
            }
            LatentDensity::FullGaussian { mean, cov } => {
                let c = from_rows(cov)?;
                if c.nrows() != mean.len() || mean.is_empty() {
                    return Err(EaeError::dim("FullGaussian", mean.len(), c.nrows()));
                }
                if !is_symmetric(&c) {
                    return Err(EaeError::Numeric("covariance is not symmetric".into()));
                }
                Ok((vec![1.0], vec![Component::new(DVector::from_vec(mean.clone()), c)?]))
            }
            LatentDensity::GaussianMixture {
                weights,
                means,
                covs,
            } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != covs.len() {
                    return Err(EaeError::dim("GaussianMixture", weights.len(), means.len()));
                }
                if weights.iter().any(|&w| !(w >= 0.0))
                    || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(EaeError::Domain(
                        "mixture weights must be nonnegative and sum to 1".into(),
                    ));
                }
                let d = means[0].len();
                let comps = means
                    .iter()
                    .zip(covs)
                    .map(|(m, c)| {
                        let c = from_rows(c)?;
                        if m.len() != d || c.nrows() != d {
                            return Err(EaeError::dim("GaussianMixture component", d, m.len()));
                        }
                        if !is_symmetric(&c) {
                            return Err(EaeError::Numeric("covariance is not symmetric".into()));
                        }
                        Component::new(DVector::from_vec(m.clone()), c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((weights.clone(), comps))
            }
        }
    }

    /// Checks shapes, weights and that every covariance is symmetric PD.
    pub fn validate(&self) -> Result<()> {
        self.components().map(|_| ())
    }

    /// `n` i.i.d. draws as an `n × d` matrix.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Tensor> {
        let (weights, comps) = self.components()?;
        let d = self.dim();
        let mut rng = crate::seeded_rng(seed);
        let mut out = Tensor::zeros(&[n, d]);
        let cumulative: Vec<f64> = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        for i in 0..n {
            let k = if comps.len() == 1 {
                0
            } else {
                let u: f64 = rng.random();
                cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(comps.len() - 1)
            };
            comps[k].sample_into(&mut rng, out.row_mut(i));
        }
        Ok(out)
    }

    /// Per-point log densities.
    pub fn log_likelihood(&self, points: &Tensor) -> Result<Vec<f64>> {
        if points.cols() != self.dim() {
            return Err(EaeError::dim("log_likelihood", self.dim(), points.cols()));
        }
        let (weights, comps) = self.components()?;
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        Ok(points
            .iter_rows()
            .map(|x| {
                let terms: Vec<f64> = comps
                    .iter()
                    .zip(&log_w)
                    .map(|(c, lw)| lw + c.log_pdf(x))
                    .collect();
                log_sum_exp(&terms)
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: LatentDensity = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| EaeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(EaeError::MissingDensity(path.to_path_buf()));
        }
        let s = std::fs::read_to_string(path).map_err(|e| EaeError::io(path, e))?;
        Self::from_json(&s)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Empirical mean and ridge-regularized biased covariance.
pub fn fit_mvg(latents: &Tensor) -> Result<LatentDensity> {
    if latents.rows() < 2 {
        return Err(EaeError::SampleSize {
            needed: 2,
            got: latents.rows(),
        });
    }
    let (mean, cov) = weighted_moments(latents, &vec![1.0; latents.rows()]);
    let density = LatentDensity::FullGaussian {
        mean: mean.as_slice().to_vec(),
        cov: to_rows(&cov),
    };
    density.validate()?;
    Ok(density)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Mean per-point log-likelihood gain counted as "no improvement".
    pub tol: f64,
    /// Consecutive non-improving iterations before stopping.
    pub patience: usize,
    pub max_iter: usize,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            k: 10,
            seed: 0,
            restarts: 3,
            tol: 1e-6,
            patience: 5,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub density: LatentDensity,
    /// Mean per-point log-likelihood after each E-step of the kept restart.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub dropped_components: usize,
    /// Iterations where the log-likelihood fell by more than rounding
    /// tolerance (excluding iterations right after a component drop).
    pub monotone_violations: usize,
}

impl GmmFit {
    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihood_trace
            .last()
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// D²-weighted seeding of `k` centers.
fn kmeans_pp(points: &Tensor, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = points.iter_rows().map(|x| sq(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points.row(idx).to_vec();
        for (i, x) in points.iter_rows().enumerate() {
            dist[i] = dist[i].min(sq(x, &c));
        }
        centers.push(c);
    }
    centers
}

struct EmRun {
    weights: Vec<f64>,
    comps: Vec<Component>,
    trace: Vec<f64>,
    iterations: usize,
    dropped: usize,
    violations: usize,
}

fn em_once(points: &Tensor, opts: &GmmOptions, rng: &mut impl Rng) -> Result<EmRun> {
    let n = points.rows();
    let centers = kmeans_pp(points, opts.k, rng);
    let (_, global_cov) = weighted_moments(points, &vec![1.0; n]);
    let mut comps = centers
        .into_iter()
        .map(|c| Component::new(DVector::from_vec(c), global_cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = vec![1.0 / opts.k as f64; opts.k];

    let mut trace: Vec<f64> = Vec::new();
    let mut stall = 0;
    let mut dropped = 0;
    let mut violations = 0;
    let mut just_dropped = false;
    let mut resp = vec![0.0; n * opts.k];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let k = comps.len();
        // E-step
        let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let mut ll = 0.0;
        let mut terms = vec![0.0; k];
        for (i, x) in points.iter_rows().enumerate() {
            for c in 0..k {
                terms[c] = log_w[c] + comps[c].log_pdf(x);
            }
            let lse = log_sum_exp(&terms);
            ll += lse;
            for c in 0..k {
                resp[i * k + c] = (terms[c] - lse).exp();
            }
        }
        ll /= n as f64;
        if !ll.is_finite() {
            return Err(EaeError::Numeric("EM log-likelihood is not finite".into()));
        }
        if let Some(&prev) = trace.last() {
            if !just_dropped && ll < prev - 1e-9 * prev.abs().max(1.0) {
                violations += 1;
                warn!("EM log-likelihood decreased: {prev} -> {ll}");
            }
            if ll - prev < opts.tol {
                stall += 1;
            } else {
                stall = 0;
            }
        }
        trace.push(ll);
        just_dropped = false;
        if stall >= opts.patience {
            break;
        }
        // M-step
        let mut next_w = Vec::with_capacity(k);
        let mut next_c = Vec::with_capacity(k);
        for c in 0..k {
            let r: Vec<f64> = (0..n).map(|i| resp[i * k + c]).collect();
            let nk: f64 = r.iter().sum();
            let w = nk / n as f64;
            if w < MIN_WEIGHT {
                dropped += 1;
                just_dropped = true;
                warn!("mixture component collapsed (weight {w:e}); dropping it");
                continue;
            }
            let (mean, cov) = weighted_moments(points, &r);
            next_w.push(w);
            next_c.push(Component::new(mean, cov)?);
        }
        if next_c.is_empty() {
            return Err(EaeError::Numeric("every mixture component collapsed".into()));
        }
        let total: f64 = next_w.iter().sum();
        weights = next_w.into_iter().map(|w| w / total).collect();
        comps = next_c;
    }
    Ok(EmRun {
        weights,
        comps,
        trace,
        iterations,
        dropped,
        violations,
    })
}

/// Full-covariance mixture via EM from k-means++ starts; the restart with the
/// best final log-likelihood is kept.
pub fn fit_gmm(latents: &Tensor, opts: GmmOptions) -> Result<GmmFit> {
    let (n, d) = (latents.rows(), latents.cols());
    if opts.k == 0 {
        return Err(EaeError::Domain("mixture needs k >= 1".into()));
    }
    let needed = opts.k * (d + 1);
    if n < needed {
        return Err(EaeError::SampleSize { needed, got: n });
    }
    let mut rng = crate::seeded_rng(opts.seed);
    let mut best: Option<EmRun> = None;
    for _ in 0..opts.restarts.max(1) {
        let run = em_once(latents, &opts, &mut rng)?;
        let better = match &best {
            None => true,
            Some(b) => run.trace.last() > b.trace.last(),
        };
        if better {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    let density = LatentDensity::GaussianMixture {
        weights: run.weights,
        means: run
            .comps
            .iter()
            .map(|c| c.mean.as_slice().to_vec())
            .collect(),
        covs: run.comps.iter().map(|c| to_rows(&c.cov)).collect(),
    };
    density.validate()?;
    Ok(GmmFit {
        density,
        log_likelihood_trace: run.trace,
        iterations: run.iterations,
        dropped_components: run.dropped,
        monotone_violations: run.violations,
    })
}
