//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use eae_core::cli::{self, DensityKind, RunConfig};
use eae_core::data::{synth_dataset, SynthKind};
use eae_core::density::{fit_gmm, fit_mvg, GmmFit, GmmOptions, LatentDensity};
use eae_core::entropy::{
    gaussian_cross_entropy, kl_entropy, kl_entropy_grad, kl_to_standard_gaussian, maxent_reference_entropy,
    ConstraintKind, MaxEntConstraint,
};
use eae_core::eval::encode_all;
use eae_core::model::{ArchSpec, EaeModel, OutputActivation, BOTTLENECK_EPSILON};
use eae_core::nn::{BatchNorm, Layer, Mode, Tensor};
use eae_core::seeded_rng;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn report(o: &Outcome) {
    println!(
        "criterion {:>2} [PRIMARY] {}: {} -- {}",
        o.id,
        if o.pass { "PASS" } else { "FAIL" },
        o.title,
        o.detail
    );
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn normal(rng: &mut impl Rng, n: usize, d: usize) -> Tensor {
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn bn_normalize(x: &Tensor) -> Tensor {
    let mut bn = BatchNorm::new("acceptance", x.cols(), false, BOTTLENECK_EPSILON);
    bn.train_forward(x).unwrap().0
}

fn gaussian_entropy_oracle(d: usize) -> f64 {
    0.5 * d as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut v = x.to_vec();
    (0..x.len())
        .map(|i| {
            let o = v[i];
            v[i] = o + h;
            let up = f(&v);
            v[i] = o - h;
            let down = f(&v);
            v[i] = o;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Smallest relative gap between nearest and second-nearest neighbor.
fn min_nn_gap(points: &Tensor) -> f64 {
    let n = points.rows();
    let mut worst = f64::INFINITY;
    for i in 0..n {
        let mut d: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                points
                    .row(i)
                    .iter()
                    .zip(points.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        d.sort_by(f64::total_cmp);
        worst = worst.min((d[1] - d[0]) / d[0]);
    }
    worst
}

/// Smallest |input| to any ReLU in a training-mode pass.
fn min_relu_margin(model: &EaeModel, x: &Tensor) -> f64 {
    let mut m = model.clone();
    let mut worst = f64::INFINITY;
    let mut walk = |layers: &mut Vec<Layer>, mut h: Tensor| -> Tensor {
        for l in layers.iter_mut() {
            h = match l {
                Layer::Dense(d) => d.forward(&h).unwrap(),
                Layer::BatchNorm(bn) => bn.train_forward(&h).unwrap().0,
                Layer::Relu => {
                    worst = h.data().iter().fold(worst, |w, v| w.min(v.abs()));
                    h.map(|v| v.max(0.0))
                }
                Layer::Sigmoid => h.map(|v| 1.0 / (1.0 + (-v).exp())),
            };
        }
        h
    };
    let h = walk(&mut m.encoder.layers, x.clone());
    let z = m.bottleneck.train_forward(&h).unwrap().0;
    walk(&mut m.decoder.layers, z);
    worst
}

fn criterion_1() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, d) in [1usize, 2, 8, 16].into_iter().enumerate() {
        let mut rng = seeded_rng(100 + i as u64);
        let x = normal(&mut rng, 2000, d);
        let t = Instant::now();
        let est = kl_entropy(&x).unwrap().value_nats;
        let secs = t.elapsed().as_secs_f64();
        let want = gaussian_entropy_oracle(d);
        let tol = f64::max(0.1, 0.05 * d as f64);
        let ok = (est - want).abs() <= tol && secs < 5.0;
        pass &= ok;
        lines.push(format!("d={d}: {est:.4} vs {want:.4} (tol {tol}) {secs:.2}s"));
    }
    Outcome {
        id: 1,
        title: "estimator accuracy on N=2000 Gaussian samples",
        pass,
        detail: lines.join("; "),
    }
}

fn criterion_2() -> Outcome {
    let x = Tensor::matrix(3, 1, vec![0.0, 1.0, 3.0]).unwrap();
    let est = kl_entropy(&x).unwrap().value_nats;
    // hand evaluation: N = 2, R = (1, 1, 2), B1 = 2
    let oracle = (2f64.ln() + 2f64.ln() + 4f64.ln()) / 3.0 + 2f64.ln() + 0.5772156649;
    Outcome {
        id: 2,
        title: "hand-computed estimate for {0, 1, 3}",
        pass: (est - 2.1945).abs() < 1e-3 && (est - oracle).abs() < 1e-9,
        detail: format!("{est:.6} (target 2.1945 ± 1e-3, formula {oracle:.6})"),
    }
}

fn criterion_3() -> Outcome {
    let h = 1e-5;
    let mut worst_entropy = 0.0f64;
    let mut rng = seeded_rng(300);
    let mut done = 0;
    while done < 20 {
        let x = normal(&mut rng, 20, 3);
        if min_nn_gap(&x) < 1e-2 {
            continue;
        }
        let g = kl_entropy_grad(&x).unwrap();
        let shape = x.shape().to_vec();
        let num = central_diff(x.data(), h, |v| {
            kl_entropy(&Tensor::new(shape.clone(), v.to_vec()).unwrap()).unwrap().value_nats
        });
        worst_entropy = worst_entropy.max(rel_err(g.data(), &num));
        done += 1;
    }

    let mut worst_model = 0.0f64;
    let mut done = 0;
    let mut seed = 0;
    while done < 20 {
        seed += 1;
        let act = if seed % 2 == 0 {
            OutputActivation::Sigmoid
        } else {
            OutputActivation::Identity
        };
        let spec = ArchSpec {
            input_dim: 3,
            encoder_widths: vec![6],
            latent_dim: 2,
            decoder_widths: vec![5],
            output_activation: act,
        };
        let model = EaeModel::build(spec, seed).unwrap();
        let mut r = seeded_rng(1000 + seed);
        let x = Tensor::matrix(10, 3, (0..30).map(|_| r.random::<f64>()).collect()).unwrap();
        let beta = [0.0, 0.5, 1.0, 2.0][seed as usize % 4];
        let codes = model.clone().encode(&x, Mode::Train).unwrap();
        if min_relu_margin(&model, &x) < 1e-3 || min_nn_gap(&codes) < 1e-2 {
            continue;
        }
        let mut m = model.clone();
        m.zero_grad();
        m.loss_and_grad(&x, beta).unwrap();
        let analytic: Vec<f64> = m.parameters().iter().flat_map(|p| p.grad.data().to_vec()).collect();
        let p0: Vec<f64> = model.parameters().iter().flat_map(|p| p.value.data().to_vec()).collect();
        let mut probe = model.clone();
        let numeric = central_diff(&p0, h, |v| {
            let mut off = 0;
            for p in probe.parameters_mut() {
                let n = p.value.len();
                p.value.data_mut().copy_from_slice(&v[off..off + n]);
                off += n;
            }
            probe.loss(&x, beta).unwrap().total
        });
        worst_model = worst_model.max(rel_err(&analytic, &numeric));
        done += 1;
    }
    Outcome {
        id: 3,
        title: "entropy and full-loss gradients vs central differences (h=1e-5)",
        pass: worst_entropy < 1e-3 && worst_model < 1e-3,
        detail: format!(
            "worst rel. err: entropy {worst_entropy:.2e}, loss_and_grad {worst_model:.2e} over 20 instances each"
        ),
    }
}

fn criterion_4() -> Outcome {
    let d = 16;
    let constant = 0.5 * d as f64 * ((2.0 * std::f64::consts::PI).ln() + 1.0);
    let mut rng = seeded_rng(400);
    let mut worst_identity = 0.0f64;
    let mut kls = Vec::new();
    for _ in 0..100 {
        let z = bn_normalize(&normal(&mut rng, 100, d));
        worst_identity = worst_identity.max((gaussian_cross_entropy(&z) - constant).abs());
        kls.push(kl_to_standard_gaussian(&z).unwrap());
    }
    let min_kl = kls.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_kl = kls.iter().sum::<f64>() / kls.len() as f64;
    Outcome {
        id: 4,
        title: "moment cross-entropy identity and KL >= -0.15 (B=100, d=16)",
        pass: worst_identity < 1e-9 && min_kl >= -0.15,
        detail: format!(
            "max |cross − (d/2)(ln2π+1)| = {worst_identity:.1e}; KL min {min_kl:.3}, mean {mean_kl:.3} over 100 Gaussian batches"
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut rng = seeded_rng(500);
    let b = 1000;
    let mut max_excess = f64::NEG_INFINITY;
    let mut non_gauss_in_band = 0;
    let mut gauss_outside_band = 0;
    let mut gauss_count = 0;
    let mut closest_non_gauss = f64::NEG_INFINITY;
    let names = ["gaussian d1/d2", "uniform d2", "exponential d1", "bimodal d1", "laplace d6"];
    let mut per_kind = [(0.0f64, 0usize); 5];
    for i in 0..100 {
        let (gaussian, x) = match i % 5 {
            0 => (true, normal(&mut rng, b, 1 + (i / 5) % 2)),
            1 => (
                false,
                Tensor::matrix(b, 2, (0..2 * b).map(|_| rng.random::<f64>()).collect()).unwrap(),
            ),
            2 => (
                false,
                Tensor::matrix(b, 1, (0..b).map(|_| rng.sample::<f64, _>(Exp1)).collect()).unwrap(),
            ),
            3 => (
                false,
                Tensor::matrix(
                    b,
                    1,
                    (0..b)
                        .map(|_| {
                            let c = if rng.random_bool(0.5) { 0.9 } else { -0.9 };
                            c + 0.436 * rng.sample::<f64, _>(StandardNormal)
                        })
                        .collect(),
                )
                .unwrap(),
            ),
            _ => (
                false,
                Tensor::matrix(
                    b,
                    6,
                    (0..6 * b)
                        .map(|_| {
                            let e: f64 = rng.sample(Exp1);
                            if rng.random_bool(0.5) {
                                e
                            } else {
                                -e
                            }
                        })
                        .collect(),
                )
                .unwrap(),
            ),
        };
        let z = bn_normalize(&x);
        let d = z.cols();
        let reference = maxent_reference_entropy(MaxEntConstraint::new(ConstraintKind::ZeroMeanUnitVariance, d).unwrap());
        let gap = kl_entropy(&z).unwrap().value_nats - reference;
        max_excess = max_excess.max(gap);
        let in_band = gap >= -0.15;
        per_kind[i % 5].0 += gap / 20.0;
        per_kind[i % 5].1 += in_band as usize;
        if gaussian {
            gauss_count += 1;
            if !in_band {
                gauss_outside_band += 1;
            }
        } else {
            closest_non_gauss = closest_non_gauss.max(gap);
            if in_band {
                non_gauss_in_band += 1;
            }
        }
    }
    Outcome {
        id: 5,
        title: "maximum-entropy bound over 100 standardized batches",
        pass: max_excess <= 0.15 && non_gauss_in_band == 0 && gauss_outside_band == 0,
        detail: format!(
            "max (Ĥ − ref) = {max_excess:.3}; {gauss_count} Gaussian batches, {gauss_outside_band} outside the band; \
             {non_gauss_in_band}/80 non-Gaussian in band (closest {closest_non_gauss:.3}); mean gap [in band]: {}",
            names
                .iter()
                .zip(per_kind)
                .map(|(n, (g, c))| format!("{n} {g:.3} [{c}/20]"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

struct RingRun {
    seed: u64,
    beta: f64,
    negentropy: f64,
    kl: f64,
    fid_iso: f64,
    fid_gmm: f64,
    gmm: GmmFit,
}

fn run_ring(base: &RunConfig, seed: u64, beta: f64, out: &Path) -> RingRun {
    let mut cfg = base.clone().with_seed(Some(seed));
    cfg.train.beta = beta;
    let o = cli::cmd_train(&cfg, out).unwrap();
    let data = cli::load_dataset(&cfg.dataset).unwrap().examples;
    let codes = encode_all(&o.model, &data).unwrap();
    let gmm = fit_gmm(
        &codes,
        GmmOptions {
            k: cfg.eval.gmm_components,
            seed: cfg.seed,
            ..Default::default()
        },
    )
    .unwrap();
    let fmap = cli::feature_map_for(&cfg, &data).unwrap();
    let m = cli::evaluate(
        &cfg,
        &o.model,
        &data,
        &fmap,
        &[(DensityKind::Iso, LatentDensity::isotropic(2)), (DensityKind::Gmm, gmm.density.clone())],
    )
    .unwrap();
    RingRun {
        seed,
        beta,
        negentropy: o.gaussianity.negentropy_nats,
        kl: o.gaussianity.kl_to_isotropic_nats,
        fid_iso: m.proxy_fid_iso.unwrap(),
        fid_gmm: m.proxy_fid_gmm.unwrap(),
        gmm,
    }
}

struct MnistRun {
    first_recon: f64,
    last_recon: f64,
    median_abs_kurtosis: f64,
    fid_iso: f64,
    fid_gmm: f64,
    pgm_ok: bool,
    pgm_detail: String,
    gmm: GmmFit,
    secs: f64,
}

fn run_mnist(out: &Path) -> MnistRun {
    let t = Instant::now();
    let cfg = RunConfig::load(&repo_root().join("configs/mnist_desk.json")).unwrap();
    let o = cli::cmd_train(&cfg, out).unwrap();
    let data = cli::load_dataset(&cfg.dataset).unwrap().examples;
    let codes = encode_all(&o.model, &data).unwrap();
    let gmm = fit_gmm(
        &codes,
        GmmOptions {
            k: cfg.eval.gmm_components,
            seed: cfg.seed,
            ..Default::default()
        },
    )
    .unwrap();
    gmm.density.save(&cli::density_file(out, DensityKind::Gmm)).unwrap();
    let fmap = cli::feature_map_for(&cfg, &data).unwrap();
    let m = cli::evaluate(
        &cfg,
        &o.model,
        &data,
        &fmap,
        &[(DensityKind::Iso, LatentDensity::isotropic(16)), (DensityKind::Gmm, gmm.density.clone())],
    )
    .unwrap();
    let pgm_path = out.join("grid.pgm");
    cli::cmd_sample(&cli::SampleArgs {
        common: cli::Common {
            config: None,
            seed: None,
            out: out.to_path_buf(),
        },
        checkpoint: None,
        density: DensityKind::Iso,
        n: 64,
        format: cli::SampleFormat::Pgm,
        output: Some(pgm_path.clone()),
    })
    .unwrap();
    let bytes = fs::read(&pgm_path).unwrap();
    let header = b"P5\n256 256\n255\n";
    let pgm_ok = bytes.starts_with(header) && bytes.len() == header.len() + 256 * 256;
    MnistRun {
        first_recon: o.records[0].recon,
        last_recon: o.records.last().unwrap().recon,
        median_abs_kurtosis: o.gaussianity.median_abs_excess_kurtosis(),
        fid_iso: m.proxy_fid_iso.unwrap(),
        fid_gmm: m.proxy_fid_gmm.unwrap(),
        pgm_ok,
        pgm_detail: format!("{} bytes, 8x8 tiles of 32x32", bytes.len()),
        gmm,
        secs: t.elapsed().as_secs_f64(),
    }
}

fn criterion_6(runs: &[RingRun], secs: f64) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for r1 in runs.iter().filter(|r| r.beta == 1.0) {
        let r0 = runs.iter().find(|r| r.beta == 0.0 && r.seed == r1.seed).unwrap();
        if r1.negentropy < r0.negentropy && r1.kl < r0.kl {
            wins += 1;
        }
        parts.push(format!(
            "seed {}: negentropy {:.3} vs {:.3}, KL {:.3} vs {:.3}",
            r1.seed, r1.negentropy, r0.negentropy, r1.kl, r0.kl
        ));
    }
    Outcome {
        id: 6,
        title: "beta=1 lowers latent negentropy and KL vs beta=0 on the ring",
        pass: wins == 3 && secs < 600.0,
        detail: format!("{wins}/3 seed pairs; {}; {secs:.0}s total", parts.join("; ")),
    }
}

fn criterion_7(runs: &[RingRun], mnist: &MnistRun) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [1.0, 0.0] {
        let group: Vec<&RingRun> = runs.iter().filter(|r| r.beta == beta).collect();
        let gmm = median(group.iter().map(|r| r.fid_gmm).collect());
        let iso = median(group.iter().map(|r| r.fid_iso).collect());
        ok &= gmm <= iso;
        parts.push(format!("ring beta={beta}: median GMM {gmm:.5} vs iso {iso:.5}"));
    }
    ok &= mnist.fid_gmm <= mnist.fid_iso;
    parts.push(format!("MNIST: GMM {:.4} vs iso {:.4}", mnist.fid_gmm, mnist.fid_iso));
    Outcome {
        id: 7,
        title: "ex-post GMM sampling beats isotropic sampling (proxy FID)",
        pass: ok,
        detail: parts.join("; "),
    }
}

fn criterion_8(m: &MnistRun) -> Outcome {
    let converged = m.last_recon < 0.5 * m.first_recon;
    let pass = converged && m.median_abs_kurtosis < 1.0 && m.pgm_ok && m.secs < 1800.0;
    Outcome {
        id: 8,
        title: "MNIST desk-scale sanity",
        pass,
        detail: format!(
            "recon epoch 1 {:.3} -> epoch 10 {:.3}; median |excess kurtosis| {:.3}; PGM {} ({}); {:.0}s",
            m.first_recon,
            m.last_recon,
            m.median_abs_kurtosis,
            if m.pgm_ok { "valid" } else { "invalid" },
            m.pgm_detail,
            m.secs
        ),
    }
}

fn monotone(fit: &GmmFit) -> bool {
    fit.monotone_violations == 0
        && fit
            .log_likelihood_trace
            .windows(2)
            .all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
}

fn criterion_9(runs: &[RingRun], mnist: &MnistRun) -> Outcome {
    let mut fits: Vec<&GmmFit> = runs.iter().map(|r| &r.gmm).collect();
    fits.push(&mnist.gmm);

    let mut rng = seeded_rng(900);
    let x = normal(&mut rng, 500, 4).map(|v| v * v.abs());
    let k1 = fit_gmm(&x, GmmOptions { k: 1, ..Default::default() }).unwrap();
    let (LatentDensity::GaussianMixture { means, covs, .. }, LatentDensity::FullGaussian { mean, cov }) =
        (k1.density.clone(), fit_mvg(&x).unwrap())
    else {
        unreachable!()
    };
    let mut k1_gap = 0.0f64;
    for j in 0..4 {
        k1_gap = k1_gap.max((means[0][j] - mean[j]).abs());
        for l in 0..4 {
            k1_gap = k1_gap.max((covs[0][j][l] - cov[j][l]).abs());
        }
    }

    let mut data = Vec::new();
    for i in 0..2000 {
        let c = if i % 2 == 0 { 5.0 } else { -5.0 };
        for _ in 0..2 {
            data.push(c + rng.sample::<f64, _>(StandardNormal));
        }
    }
    let two = fit_gmm(
        &Tensor::matrix(2000, 2, data).unwrap(),
        GmmOptions { k: 2, seed: 1, ..Default::default() },
    )
    .unwrap();
    let LatentDensity::GaussianMixture { means: tm, .. } = &two.density else {
        unreachable!()
    };
    let mut err = 0.0f64;
    for target in [-5.0, 5.0] {
        let best = tm
            .iter()
            .map(|m| m.iter().map(|v| (v - target).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        err = err.max(best);
    }
    fits.push(&k1);
    fits.push(&two);
    let all_monotone = fits.iter().all(|f| monotone(f));
    Outcome {
        id: 9,
        title: "EM monotone, GMM(K=1) = MVG, two-cluster recovery",
        pass: all_monotone && k1_gap < 1e-9 && err < 0.1,
        detail: format!(
            "{} fits monotone: {all_monotone}; K=1 vs MVG max gap {k1_gap:.1e}; cluster means within {err:.3} of ±5",
            fits.len()
        ),
    }
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_eae"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn eae");
    assert!(
        out.status.success(),
        "eae {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn cli_pipeline(dir: &Path, ring_cfg: &Path, mnist_cfg: &Path, csv: &Path) -> Vec<(String, Vec<u8>)> {
    let r = dir.join("ring");
    let m = dir.join("mnist");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (rs, ms) = (s(&r), s(&m));
    run_cli(&["train", "--config", &s(ring_cfg), "--seed", "7", "--out", &rs]);
    run_cli(&["fit-density", "--kind", "mvg", "--out", &rs]);
    run_cli(&["fit-density", "--kind", "gmm", "--out", &rs]);
    run_cli(&["sample", "--density", "gmm", "--n", "100", "--out", &rs]);
    run_cli(&["eval", "--out", &rs]);
    run_cli(&["train", "--config", &s(mnist_cfg), "--out", &ms]);
    run_cli(&["fit-density", "--kind", "gmm", "--k", "3", "--out", &ms]);
    run_cli(&["sample", "--density", "iso", "--n", "16", "--out", &ms]);
    run_cli(&["sample", "--density", "gmm", "--n", "16", "--out", &ms]);
    let stdout = run_cli(&["entropy", &s(csv), "--out", &s(&dir.join("entropy.json"))]);
    run_cli(&[
        "sweep",
        "--config",
        &s(ring_cfg),
        "--latent-dims",
        "1,2",
        "--beta",
        "0",
        "--out",
        &s(&dir.join("sweep")),
    ]);
    let mut files = vec![("entropy stdout".to_string(), stdout)];
    for entry in walk(dir) {
        if entry.file_name().is_some_and(|n| n == "timing.json") {
            continue;
        }
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        files.push((rel, fs::read(&entry).unwrap()));
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn criterion_10(tmp: &Path) -> Outcome {
    let inputs = tmp.join("inputs");
    fs::create_dir_all(&inputs).unwrap();
    let mut ring = RunConfig::load(&repo_root().join("configs/ring.json")).unwrap();
    ring.dataset = cli::DatasetSpec::Synthetic {
        kind: SynthKind::EightGaussianRing,
        n: 1000,
        seed: 0,
    };
    ring.train.epochs = 3;
    ring.eval.samples = 500;
    let ring_path = inputs.join("ring.json");
    fs::write(&ring_path, ring.to_json().unwrap()).unwrap();
    let mut mnist = RunConfig::load(&repo_root().join("configs/mnist_desk.json")).unwrap();
    if let cli::DatasetSpec::Idx { limit, .. } = &mut mnist.dataset {
        *limit = Some(300);
    }
    mnist.arch.encoder_widths = vec![64];
    mnist.arch.decoder_widths = vec![64];
    mnist.arch.latent_dim = 4;
    mnist.train.epochs = 1;
    let mnist_path = inputs.join("mnist.json");
    fs::write(&mnist_path, mnist.to_json().unwrap()).unwrap();
    let csv = inputs.join("points.csv");
    let pts = synth_dataset(SynthKind::TwoMoons, 300, 3);
    fs::write(&csv, pts.to_csv().unwrap()).unwrap();

    let a = cli_pipeline(&tmp.join("a"), &ring_path, &mnist_path, &csv);
    let b = cli_pipeline(&tmp.join("b"), &ring_path, &mnist_path, &csv);
    let names_match = a.iter().map(|f| &f.0).eq(b.iter().map(|f| &f.0));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let kinds = ["csv", "pgm", "json"]
        .iter()
        .map(|ext| {
            let n = a.iter().filter(|f| f.0.ends_with(ext)).count();
            format!("{n} {ext}")
        })
        .collect::<Vec<_>>()
        .join(", ");
    Outcome {
        id: 10,
        title: "CLI reruns are byte-identical",
        pass: names_match && differing.is_empty(),
        detail: format!(
            "{} outputs compared ({kinds}, plus stdout); differing: {:?}",
            a.len(),
            differing
        ),
    }
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outcomes = Vec::new();
    let mut push = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };
    push(criterion_1());
    push(criterion_2());
    push(criterion_3());
    push(criterion_4());
    push(criterion_5());

    let base = RunConfig::load(&repo_root().join("configs/ring.json")).unwrap();
    let t = Instant::now();
    let mut runs = Vec::new();
    for seed in 0..3 {
        for beta in [1.0, 0.0] {
            runs.push(run_ring(&base, seed, beta, &tmp.path().join(format!("ring_b{beta}_s{seed}"))));
        }
    }
    let ring_secs = t.elapsed().as_secs_f64();
    push(criterion_6(&runs, ring_secs));
    let mnist = run_mnist(&tmp.path().join("mnist"));
    push(criterion_7(&runs, &mnist));
    push(criterion_8(&mnist));
    push(criterion_9(&runs, &mnist));
    push(criterion_10(&tmp.path().join("cli")));

    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
