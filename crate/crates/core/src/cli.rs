//! The `eae` command line: train, sample, fit-density, eval, entropy and
//! sweep. Every command is a function of its config file, input files and
//! seed; only `timing.json` carries wall-clock values.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::data::{load_idx, pad_to_32, points_to_csv, synth_dataset, Dataset, InputShape, SynthKind};
use crate::density::{fit_gmm, fit_mvg, GmmOptions, LatentDensity};
use crate::entropy::{gaussian_entropy_cov, kl_entropy_k};
use crate::error::{EaeError, Result};
use crate::eval::{
    covariance, encode_all, fit_feature_map, gaussianity_report, proxy_fid, proxy_fid_noise_floor,
    reconstruction_error, FeatureMap, GaussianityReport,
};
use crate::model::{train_with, ArchSpec, EaeModel, EpochRecord, OutputActivation, TrainConfig};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        kind: SynthKind,
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        images: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        /// 28×28 → 32×32 zero padding.
        #[serde(default = "yes")]
        pad_to_32: bool,
        /// Keep only the first `limit` examples.
        #[serde(default)]
        limit: Option<usize>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub encoder_widths: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_widths: Vec<usize>,
    pub output_activation: OutputActivation,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let a = ArchSpec::mlp(1, 16);
        ArchConfig {
            encoder_widths: a.encoder_widths,
            latent_dim: a.latent_dim,
            decoder_widths: a.decoder_widths,
            output_activation: a.output_activation,
        }
    }
}

impl ArchConfig {
    pub fn spec(&self, input_dim: usize) -> ArchSpec {
        ArchSpec {
            input_dim,
            encoder_widths: self.encoder_widths.clone(),
            latent_dim: self.latent_dim,
            decoder_widths: self.decoder_widths.clone(),
            output_activation: self.output_activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// PCA features for proxy FID, capped at the input dimension.
    pub feature_dim: usize,
    /// Generated samples per density.
    pub samples: usize,
    pub gmm_components: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            feature_dim: crate::eval::DEFAULT_FEATURES,
            samples: 2000,
            gmm_components: 10,
        }
    }
}

/// One experiment, serialized beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Model initialization, GMM fitting and sampling seed.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Parses a config file; dataset paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| EaeError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&s)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatasetSpec::Idx { images, labels, .. } = &mut cfg.dataset {
            *images = absolutize(base, images);
            if let Some(l) = labels {
                *l = absolutize(base, l);
            }
        }
        Ok(cfg)
    }

    /// `--seed` replaces both the run seed and the shuffle seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
            self.train.seed = s;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.arch.spec(1).validate()?;
        if self.eval.feature_dim == 0 || self.eval.samples < 2 || self.eval.gmm_components == 0 {
            return Err(EaeError::Config(
                "eval.feature_dim, eval.gmm_components must be >= 1 and eval.samples >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    let joined = base.join(p);
    let joined = if joined.is_absolute() {
        joined
    } else {
        std::env::current_dir().map(|c| c.join(&joined)).unwrap_or(joined)
    };
    joined.canonicalize().unwrap_or(joined)
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    match spec {
        DatasetSpec::Synthetic { kind, n, seed } => {
            if *n == 0 {
                return Err(EaeError::Config("synthetic dataset needs n >= 1".into()));
            }
            Ok(synth_dataset(*kind, *n, *seed))
        }
        DatasetSpec::Idx {
            images,
            labels,
            pad_to_32: pad,
            limit,
        } => {
            let mut ds = load_idx(images, labels.as_deref())?;
            if let Some(n) = limit {
                ds = ds.truncate(*n);
            }
            if *pad {
                ds = pad_to_32(&ds)?;
            }
            Ok(ds)
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eae", version, about = "Entropic autoencoder experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, per-epoch metrics and a latent report.
    Train(TrainArgs),
    /// Decode samples from a latent density into a PGM grid or CSV.
    Sample(SampleArgs),
    /// Fit an MVG or GMM to the eval-mode codes of the dataset.
    FitDensity(FitDensityArgs),
    /// Reconstruction, proxy FID per density and latent Gaussianity.
    Eval(EvalArgs),
    /// Nearest-neighbor entropy of a CSV point cloud.
    Entropy(EntropyArgs),
    /// Train one model per latent width at a fixed beta.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run config (JSON). Defaults to `<out>/config.json` after `train`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let path = self
            .config
            .clone()
            .unwrap_or_else(|| self.out.join(CONFIG_FILE));
        let cfg = RunConfig::load(&path)?.with_seed(self.seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Iso,
    Mvg,
    Gmm,
}

impl DensityKind {
    pub fn name(self) -> &'static str {
        match self {
            DensityKind::Iso => "iso",
            DensityKind::Mvg => "mvg",
            DensityKind::Gmm => "gmm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleFormat {
    /// PGM grid for image datasets, CSV otherwise.
    Auto,
    Pgm,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "iso")]
    pub density: DensityKind,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: SampleFormat,
    /// Output file. Defaults to `<out>/samples_<density>.<pgm|csv>`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitDensityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: DensityKind,
    /// Mixture components. Defaults to `eval.gmm_components`.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "iso,mvg,gmm")]
    pub densities: Vec<DensityKind>,
    /// CSV ledger that receives one row per evaluation.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EntropyArgs {
    /// CSV with one point per row; a non-numeric first line is a header.
    pub csv: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Also write the JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', required = true)]
    pub latent_dims: Vec<usize>,
    #[arg(long)]
    pub beta: f64,
}

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const GAUSSIANITY_FILE: &str = "gaussianity.json";
pub const TIMING_FILE: &str = "timing.json";
pub const EVAL_FILE: &str = "metrics.json";
pub const LEDGER_FILE: &str = "runs.csv";
pub const SWEEP_CSV: &str = "sweep.csv";

pub fn density_file(out: &Path, kind: DensityKind) -> PathBuf {
    out.join(format!("density_{}.json", kind.name()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| EaeError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(v)? + "\n")
}

fn ensure_finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EaeError::Numeric(format!("{what} is not finite")))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| EaeError::io(dir, e))
}

pub const METRICS_HEADER: &str = "epoch,lr,steps,recon,entropy_nats,total,kl_to_gaussian";

fn metrics_row(r: &EpochRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.epoch, r.lr, r.steps, r.recon, r.entropy_nats, r.total, r.kl_to_gaussian
    )
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    epoch_wall_time_s: Vec<f64>,
    total_s: f64,
}

pub struct TrainOutcome {
    pub model: EaeModel,
    pub records: Vec<EpochRecord>,
    pub gaussianity: GaussianityReport,
}

/// Trains on `cfg` and writes config, checkpoint, metrics CSV, latent report
/// and timing into `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    create_dir(out)?;
    let ds = load_dataset(&cfg.dataset)?;
    let mut model = EaeModel::build(cfg.arch.spec(ds.input_dim()), cfg.seed)?;
    write(&out.join(CONFIG_FILE), cfg.to_json()?)?;
    info!(
        "training {} on {} ({} examples, {} parameters)",
        cfg.name,
        ds.name,
        ds.len(),
        model.parameter_count()
    );
    let report = train_with(&mut model, &ds.examples, &cfg.train, |_, _| Ok(()))?;
    let codes = encode_all(&model, &ds.examples)?;
    let gauss = gaussianity_report(&codes)?;
    ensure_finite("negentropy", gauss.negentropy_nats)?;

    model.save(&out.join(CHECKPOINT_FILE))?;
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for r in &report.epochs {
        csv.push_str(&metrics_row(r));
        csv.push('\n');
    }
    write(&out.join(METRICS_CSV), csv)?;
    write_json(&out.join(GAUSSIANITY_FILE), &gauss)?;
    let times: Vec<f64> = report.epochs.iter().map(|r| r.wall_time_s).collect();
    write_json(
        &out.join(TIMING_FILE),
        &Timing {
            total_s: times.iter().sum(),
            epoch_wall_time_s: times,
        },
    )?;
    Ok(TrainOutcome {
        model,
        records: report.epochs,
        gaussianity: gauss,
    })
}

fn checkpoint_path(common: &Common, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| common.out.join(CHECKPOINT_FILE))
}

/// Resolves a density: `iso` from the model, `mvg`/`gmm` from their files.
pub fn load_density(out: &Path, kind: DensityKind, latent_dim: usize) -> Result<LatentDensity> {
    let d = match kind {
        DensityKind::Iso => LatentDensity::isotropic(latent_dim),
        _ => LatentDensity::load(&density_file(out, kind))?,
    };
    if d.dim() != latent_dim {
        return Err(EaeError::dim("density", latent_dim, d.dim()));
    }
    Ok(d)
}

/// Fits `kind` to the eval-mode codes of the whole dataset.
pub fn fit_density(
    model: &EaeModel,
    data: &Tensor,
    kind: DensityKind,
    k: usize,
    seed: u64,
) -> Result<LatentDensity> {
    let codes = encode_all(model, data)?;
    match kind {
        DensityKind::Iso => Ok(LatentDensity::isotropic(model.latent_dim())),
        DensityKind::Mvg => fit_mvg(&codes),
        DensityKind::Gmm => {
            let fit = fit_gmm(
                &codes,
                GmmOptions {
                    k,
                    seed,
                    ..Default::default()
                },
            )?;
            if fit.monotone_violations > 0 {
                warn!(
                    "EM log-likelihood decreased on {} iterations",
                    fit.monotone_violations
                );
            }
            info!(
                "GMM: {} iterations, final mean log-likelihood {:.4}",
                fit.iterations,
                fit.final_log_likelihood()
            );
            Ok(fit.density)
        }
    }
}

pub fn cmd_fit_density(args: &FitDensityArgs) -> Result<PathBuf> {
    let cfg = args.common.config()?;
    let model = EaeModel::load(&checkpoint_path(&args.common, &args.checkpoint))?;
    let ds = load_dataset(&cfg.dataset)?;
    let k = args.k.unwrap_or(cfg.eval.gmm_components);
    let density = fit_density(&model, &ds.examples, args.kind, k, cfg.seed)?;
    create_dir(&args.common.out)?;
    let path = density_file(&args.common.out, args.kind);
    density.save(&path)?;
    Ok(path)
}

/// Row-major grid of `h × w` tiles, `ceil(√n)` per row, as binary PGM.
/// Values are clamped to `[0, 1]` and quantized round-half-up.
pub fn pgm_grid(images: &Tensor, h: usize, w: usize) -> Result<Vec<u8>> {
    if images.cols() != h * w {
        return Err(EaeError::dim("pgm_grid", h * w, images.cols()));
    }
    let n = images.rows();
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols).max(1);
    let (gw, gh) = (cols * w, rows * h);
    let mut pixels = vec![0u8; gw * gh];
    for (i, img) in images.iter_rows().enumerate() {
        let (gr, gc) = (i / cols, i % cols);
        for r in 0..h {
            for c in 0..w {
                let v = img[r * w + c].clamp(0.0, 1.0);
                pixels[(gr * h + r) * gw + gc * w + c] = (v * 255.0 + 0.5).floor() as u8;
            }
        }
    }
    let mut out = format!("P5\n{gw} {gh}\n255\n").into_bytes();
    out.extend(pixels);
    Ok(out)
}

pub fn cmd_sample(args: &SampleArgs) -> Result<PathBuf> {
    let cfg = args.common.config()?;
    let model = EaeModel::load(&checkpoint_path(&args.common, &args.checkpoint))?;
    let density = load_density(&args.common.out, args.density, model.latent_dim())?;
    let samples = model.generate(&density, args.n, cfg.seed)?;
    if !samples.is_finite() {
        return Err(EaeError::Numeric("generated samples are not finite".into()));
    }
    let shape = load_dataset(&cfg.dataset)?.input_shape;
    let image = match (args.format, shape) {
        (SampleFormat::Csv, _) => None,
        (_, InputShape::Image { height, width }) => Some((height, width)),
        (SampleFormat::Pgm, InputShape::Flat { .. }) => {
            return Err(EaeError::Config("PGM output needs an image dataset".into()))
        }
        (SampleFormat::Auto, InputShape::Flat { .. }) => None,
    };
    let ext = if image.is_some() { "pgm" } else { "csv" };
    let path = args.output.clone().unwrap_or_else(|| {
        args.common
            .out
            .join(format!("samples_{}.{ext}", args.density.name()))
    });
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    match image {
        Some((h, w)) => write(&path, pgm_grid(&samples, h, w)?)?,
        None => write(&path, points_to_csv(&samples))?,
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub name: String,
    pub seed: u64,
    pub latent_dim: usize,
    pub beta: f64,
    pub recon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proxy_fid_iso: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proxy_fid_mvg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proxy_fid_gmm: Option<f64>,
    pub proxy_fid_noise_floor: f64,
    pub feature_dim: usize,
    pub samples: usize,
    pub negentropy: f64,
    pub kl_to_isotropic: f64,
    pub gaussianity: GaussianityReport,
}

pub const LEDGER_HEADER: &str =
    "name,seed,latent_dim,beta,recon,proxy_fid_iso,proxy_fid_mvg,proxy_fid_gmm,proxy_fid_noise_floor,negentropy,kl_to_isotropic";

impl EvalMetrics {
    pub fn ledger_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.name,
            self.seed,
            self.latent_dim,
            self.beta,
            self.recon,
            opt(self.proxy_fid_iso),
            opt(self.proxy_fid_mvg),
            opt(self.proxy_fid_gmm),
            self.proxy_fid_noise_floor,
            self.negentropy,
            self.kl_to_isotropic
        )
    }
}

/// Feature map for proxy FID with `k` capped at the input dimension.
pub fn feature_map_for(cfg: &RunConfig, data: &Tensor) -> Result<FeatureMap> {
    let k = cfg.eval.feature_dim.min(data.cols());
    fit_feature_map(data, k)
}

/// All metrics for one model; `densities` supplies the fitted densities.
pub fn evaluate(
    cfg: &RunConfig,
    model: &EaeModel,
    data: &Tensor,
    fmap: &FeatureMap,
    densities: &[(DensityKind, LatentDensity)],
) -> Result<EvalMetrics> {
    let recon = ensure_finite("recon", reconstruction_error(model, data)?)?;
    let gauss = gaussianity_report(&encode_all(model, data)?)?;
    let mut fids = [None, None, None];
    for (kind, density) in densities {
        let samples = model.generate(density, cfg.eval.samples, cfg.seed)?;
        let fid = ensure_finite("proxy FID", proxy_fid(&samples, data, fmap)?)?;
        fids[*kind as usize] = Some(fid);
    }
    Ok(EvalMetrics {
        name: cfg.name.clone(),
        seed: cfg.seed,
        latent_dim: model.latent_dim(),
        beta: cfg.train.beta,
        recon,
        proxy_fid_iso: fids[0],
        proxy_fid_mvg: fids[1],
        proxy_fid_gmm: fids[2],
        proxy_fid_noise_floor: proxy_fid_noise_floor(data, fmap, cfg.seed)?,
        feature_dim: fmap.k,
        samples: cfg.eval.samples,
        negentropy: ensure_finite("negentropy", gauss.negentropy_nats)?,
        kl_to_isotropic: ensure_finite("kl_to_isotropic", gauss.kl_to_isotropic_nats)?,
        gaussianity: gauss,
    })
}

fn append_line(path: &Path, header: &str, line: &str) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| EaeError::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(header);
        text.push('\n');
    }
    text.push_str(line);
    text.push('\n');
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| EaeError::io(path, e))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalMetrics> {
    let cfg = args.common.config()?;
    let out = &args.common.out;
    let model = EaeModel::load(&checkpoint_path(&args.common, &args.checkpoint))?;
    let densities = args
        .densities
        .iter()
        .map(|&k| Ok((k, load_density(out, k, model.latent_dim())?)))
        .collect::<Result<Vec<_>>>()?;
    let ds = load_dataset(&cfg.dataset)?;
    let fmap = feature_map_for(&cfg, &ds.examples)?;
    let metrics = evaluate(&cfg, &model, &ds.examples, &fmap, &densities)?;
    create_dir(out)?;
    write_json(&out.join(EVAL_FILE), &metrics)?;
    let ledger = args.ledger.clone().unwrap_or_else(|| out.join(LEDGER_FILE));
    append_line(&ledger, LEDGER_HEADER, &metrics.ledger_row())?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyOutput {
    pub value_nats: f64,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    /// Entropy of the Gaussian with the points' mean and covariance; absent
    /// when the covariance is singular.
    pub gaussian_reference_nats: Option<f64>,
    pub duplicates: usize,
}

/// Reads a numeric CSV; a first line that does not parse is a header.
pub fn read_points_csv(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| EaeError::io(path, e))?;
    parse_points_csv(&text)
}

pub fn parse_points_csv(text: &str) -> Result<Tensor> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| EaeError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => {
                if let Some(first) = rows.first() {
                    if first.len() != v.len() {
                        return Err(EaeError::Parse {
                            line,
                            msg: format!("expected {} fields, found {}", first.len(), v.len()),
                        });
                    }
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(EaeError::Parse {
                        line,
                        msg: "non-finite value".into(),
                    });
                }
                rows.push(v);
            }
            Err(_) if line == 1 => {}
            Err(e) => {
                return Err(EaeError::Parse {
                    line,
                    msg: e.to_string(),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(EaeError::SampleSize { needed: 2, got: 0 });
    }
    Tensor::from_rows(&rows)
}

pub fn entropy_of_points(points: &Tensor, k: usize) -> Result<EntropyOutput> {
    let est = kl_entropy_k(points, k)?;
    let (_, cov) = covariance(points);
    Ok(EntropyOutput {
        value_nats: est.value_nats,
        d: points.cols(),
        n: points.rows(),
        k,
        gaussian_reference_nats: gaussian_entropy_cov(&cov).ok(),
        duplicates: est.clamped,
    })
}

pub fn cmd_entropy(args: &EntropyArgs) -> Result<EntropyOutput> {
    let points = read_points_csv(&args.csv)?;
    let out = entropy_of_points(&points, args.k)?;
    if let Some(p) = &args.out {
        write_json(p, &out)?;
    }
    Ok(out)
}

pub const SWEEP_HEADER: &str =
    "latent_dim,beta,best_epoch,negentropy,proxy_fid,recon,kl_to_isotropic,final_negentropy,final_proxy_fid,final_recon";
pub const SWEEP_EPOCHS_HEADER: &str =
    "epoch,train_recon,train_entropy_nats,train_kl_to_gaussian,recon,negentropy,kl_to_isotropic,proxy_fid,best";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEpoch {
    pub epoch: usize,
    pub train_recon: f64,
    pub train_entropy_nats: f64,
    pub train_kl_to_gaussian: f64,
    pub recon: f64,
    pub negentropy: f64,
    pub kl_to_isotropic: f64,
    pub proxy_fid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub latent_dim: usize,
    pub beta: f64,
    /// Epoch with the lowest isotropic proxy FID (earliest on ties).
    pub best_epoch: usize,
    pub best: SweepEpoch,
    pub last: SweepEpoch,
}

impl SweepRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.latent_dim,
            self.beta,
            self.best_epoch,
            self.best.negentropy,
            self.best.proxy_fid,
            self.best.recon,
            self.best.kl_to_isotropic,
            self.last.negentropy,
            self.last.proxy_fid,
            self.last.recon
        )
    }
}

/// Trains one model per latent width at `beta`, scoring every epoch. Each
/// width gets `<out>/latent_<d>/` and a row in `<out>/sweep.csv`, written
/// as soon as that width finishes.
pub fn cmd_sweep(cfg: &RunConfig, latent_dims: &[usize], beta: f64, out: &Path) -> Result<Vec<SweepRow>> {
    if latent_dims.is_empty() {
        return Err(EaeError::Config("sweep needs at least one latent dimension".into()));
    }
    create_dir(out)?;
    let ds = load_dataset(&cfg.dataset)?;
    let fmap = feature_map_for(cfg, &ds.examples)?;
    let sweep_csv = out.join(SWEEP_CSV);
    write(&sweep_csv, format!("{SWEEP_HEADER}\n"))?;
    let mut rows = Vec::new();
    for &d in latent_dims {
        let mut run = cfg.clone();
        run.name = format!("{}-latent{d}", cfg.name);
        run.arch.latent_dim = d;
        run.train.beta = beta;
        run.validate()?;
        let dir = out.join(format!("latent_{d}"));
        create_dir(&dir)?;
        write(&dir.join(CONFIG_FILE), run.to_json()?)?;
        let mut model = EaeModel::build(run.arch.spec(ds.input_dim()), run.seed)?;
        let iso = LatentDensity::isotropic(d);
        let mut epochs: Vec<SweepEpoch> = Vec::new();
        let mut best: Option<(f64, EaeModel)> = None;
        train_with(&mut model, &ds.examples, &run.train, |m, rec| {
            let metrics = evaluate(&run, m, &ds.examples, &fmap, &[(DensityKind::Iso, iso.clone())])?;
            let fid = metrics.proxy_fid_iso.expect("iso requested");
            if best.as_ref().is_none_or(|(b, _)| fid < *b) {
                best = Some((fid, m.clone()));
            }
            epochs.push(SweepEpoch {
                epoch: rec.epoch,
                train_recon: rec.recon,
                train_entropy_nats: rec.entropy_nats,
                train_kl_to_gaussian: rec.kl_to_gaussian,
                recon: metrics.recon,
                negentropy: metrics.negentropy,
                kl_to_isotropic: metrics.kl_to_isotropic,
                proxy_fid: fid,
            });
            Ok(())
        })?;
        let (best_fid, best_model) = best.expect("at least one epoch");
        let best_idx = epochs
            .iter()
            .position(|e| e.proxy_fid == best_fid)
            .expect("best epoch recorded");
        let mut csv = format!("{SWEEP_EPOCHS_HEADER}\n");
        for (i, e) in epochs.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.epoch,
                e.train_recon,
                e.train_entropy_nats,
                e.train_kl_to_gaussian,
                e.recon,
                e.negentropy,
                e.kl_to_isotropic,
                e.proxy_fid,
                u8::from(i == best_idx)
            ));
        }
        write(&dir.join(METRICS_CSV), csv)?;
        model.save(&dir.join(CHECKPOINT_FILE))?;
        best_model.save(&dir.join("checkpoint_best.json"))?;
        let row = SweepRow {
            latent_dim: d,
            beta,
            best_epoch: epochs[best_idx].epoch,
            best: epochs[best_idx].clone(),
            last: epochs.last().expect("at least one epoch").clone(),
        };
        append_line(&sweep_csv, SWEEP_HEADER, &row.csv())?;
        info!(
            "latent {d}: best epoch {} proxy FID {:.4} negentropy {:.4}",
            row.best_epoch, row.best.proxy_fid, row.best.negentropy
        );
        rows.push(row);
    }
    Ok(rows)
}

/// Dispatches a parsed command line; returns text for stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train(a) => {
            let cfg = a.common.config()?;
            let o = cmd_train(&cfg, &a.common.out)?;
            let last = o.records.last().expect("epochs >= 1");
            Ok(format!(
                "trained {} epochs: recon {:.6}, latent negentropy {:.4} nats; wrote {}",
                last.epoch,
                last.recon,
                o.gaussianity.negentropy_nats,
                a.common.out.display()
            ))
        }
        Command::Sample(a) => Ok(format!("wrote {}", cmd_sample(&a)?.display())),
        Command::FitDensity(a) => Ok(format!("wrote {}", cmd_fit_density(&a)?.display())),
        Command::Eval(a) => Ok(serde_json::to_string_pretty(&cmd_eval(&a)?)?),
        Command::Entropy(a) => Ok(serde_json::to_string_pretty(&cmd_entropy(&a)?)?),
        Command::Sweep(a) => {
            let cfg = a.common.config()?;
            let rows = cmd_sweep(&cfg, &a.latent_dims, a.beta, &a.common.out)?;
            Ok(format!(
                "swept {} latent widths; wrote {}",
                rows.len(),
                a.common.out.join(SWEEP_CSV).display()
            ))
        }
    }
}
