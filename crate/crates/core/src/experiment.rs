//! Experiment configs and the batch pipeline behind the command-line tool:
//! ingest, select `R`, fit each `q`, predict on the evaluation window, score,
//! and write a report bundle with a content-hashed manifest.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{self, BoundParams, SigmaSource};
use crate::data::{ingest_csv, Dataset};
use crate::dictionary::{build_regressors, write_coefficients_csv, VolterraStructure};
use crate::error::{Error, Result};
use crate::metrics::{default_thresholds, rmse, sparsity_curve, DEFAULT_CURVE_FLOOR, DEFAULT_CURVE_POINTS};
use crate::norms::{count_above, scaled_radius};
use crate::simulator::{simulate, BlockCascade, InputLaw, SignalSpec, SimulationMeta, Snr, TransferFunction};
use crate::solver::{CachePolicy, FitReport, QuadraticObjective, SolverOptions, SolverPath};
use crate::tuning::{fit_scaled, tune_r, TuningOptions, TuningResult, DEFAULT_RELATIVE_EPSILON};

pub const SCHEMA_VERSION: u32 = 1;
/// Threshold for the nonzero column of the comparison table.
pub const COMPARISON_THRESHOLD: f64 = 1e-6;
const DEFAULT_SIGMA_HOLDOUT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub structure: VolterraStructure,
    #[serde(default)]
    pub solver: SolverConfig,
    pub data: DataSource,
    pub split: SplitConfig,
    #[serde(default)]
    pub bounds: BoundOverrides,
    /// Not part of the experiment's identity: left out of the hash.
    #[serde(default = "default_output_dir", skip_serializing_if = "is_unset")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn is_unset(p: &Path) -> bool {
    p.as_os_str().is_empty()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QList {
    One(f64),
    Many(Vec<f64>),
}

impl QList {
    pub fn values(&self) -> Vec<f64> {
        match self {
            QList::One(q) => vec![*q],
            QList::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

/// `"auto"` runs the tuning search; a number fixes the dictionary scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RChoice {
    Fixed(f64),
    Auto(AutoTag),
}

impl Default for RChoice {
    fn default() -> Self {
        RChoice::Auto(AutoTag::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_q")]
    pub q: QList,
    #[serde(default)]
    pub r: RChoice,
    /// Tuning band width as a fraction of the target norm.
    #[serde(default)]
    pub relative_epsilon: Option<f64>,
    #[serde(default)]
    pub gap_tol: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub path: SolverPath,
    #[serde(default)]
    pub cache: CachePolicy,
    #[serde(default = "yes")]
    pub away_steps: bool,
    #[serde(default)]
    pub max_doublings: Option<usize>,
    #[serde(default)]
    pub max_bisections: Option<usize>,
}

fn default_q() -> QList {
    QList::One(1.0)
}

fn yes() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            q: default_q(),
            r: RChoice::default(),
            relative_epsilon: None,
            gap_tol: None,
            max_iters: None,
            path: SolverPath::default(),
            cache: CachePolicy::default(),
            away_steps: true,
            max_doublings: None,
            max_bisections: None,
        }
    }
}

impl SolverConfig {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            gap_tol: self.gap_tol,
            max_iters: self.max_iters,
            path: self.path,
            cache: self.cache,
            away_steps: self.away_steps,
        }
    }

    pub fn tuning_options(&self) -> TuningOptions {
        let mut t = TuningOptions {
            solver: self.solver_options(),
            ..TuningOptions::default()
        };
        if let Some(v) = self.max_doublings {
            t.max_doublings = v;
        }
        if let Some(v) = self.max_bisections {
            t.max_bisections = v;
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        /// Declared memory bound; defaults to the structure's `max L - 1`.
        #[serde(default)]
        tau: Option<usize>,
    },
    /// The signal seed is the experiment seed.
    Simulate {
        #[serde(default = "BlockCascade::wh2")]
        cascade: BlockCascade,
        /// Defaults to the end of the evaluation window.
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        input_law: InputLaw,
        #[serde(default)]
        correlate_with: Option<TransferFunction>,
        #[serde(default)]
        snr: Option<Snr>,
    },
}

/// Contiguous training and evaluation windows of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default)]
    pub train_start: usize,
    pub train_len: usize,
    /// Defaults to right after the training window.
    #[serde(default)]
    pub eval_start: Option<usize>,
    pub eval_len: usize,
    /// Leading evaluation samples used only as history; defaults to `tau`.
    #[serde(default)]
    pub eval_skip: Option<usize>,
}

impl SplitConfig {
    pub fn eval_start(&self) -> usize {
        self.eval_start.unwrap_or(self.train_start + self.train_len)
    }

    pub fn eval_end(&self) -> usize {
        self.eval_start() + self.eval_len
    }

    pub fn train_end(&self) -> usize {
        self.train_start + self.train_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundOverrides {
    #[serde(default)]
    pub m: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_holdout")]
    pub sigma_holdout: f64,
}

fn default_holdout() -> f64 {
    DEFAULT_SIGMA_HOLDOUT
}

impl Default for BoundOverrides {
    fn default() -> Self {
        Self {
            m: None,
            sigma: None,
            k: None,
            sigma_holdout: DEFAULT_SIGMA_HOLDOUT,
        }
    }
}

/// Grid of `(training length, seed)` cells, each run as its own experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub train_lens: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    /// Parses and validates; a relative CSV path is resolved against the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let DataSource::Csv { path: p, .. } = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Memory bound of the fitted series.
    pub fn tau(&self) -> usize {
        match &self.data {
            DataSource::Csv { tau: Some(t), .. } => *t,
            _ => self.structure.tau(),
        }
    }

    pub fn eval_skip(&self) -> usize {
        self.split.eval_skip.unwrap_or(self.tau())
    }

    pub fn qs(&self) -> Vec<f64> {
        self.solver.q.values()
    }

    /// Checks everything that does not need the data itself.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.structure.count_params()?;
        let qs = self.qs();
        if qs.is_empty() {
            return bad("solver.q is empty".into());
        }
        for (i, q) in qs.iter().enumerate() {
            if !(*q >= 1.0 && q.is_finite()) {
                return bad(format!("solver.q = {q} must lie in [1, inf)"));
            }
            if qs[..i].contains(q) {
                return bad(format!("solver.q lists {q} twice"));
            }
        }
        if let RChoice::Fixed(r) = self.solver.r {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("solver.r = {r} must be positive"));
            }
        }
        if let Some(e) = self.solver.relative_epsilon {
            if !(e > 0.0 && e < 1.0) {
                return bad(format!("solver.relative_epsilon = {e} must lie in (0, 1)"));
            }
        }
        if self.solver.path == SolverPath::ProjectedGradient && qs.iter().any(|&q| q != 1.0) {
            return bad("projected_gradient path requires q = 1".into());
        }
        let tau = self.tau();
        if tau < self.structure.tau() {
            return bad(format!(
                "data tau = {tau} is smaller than the model memory {}",
                self.structure.tau()
            ));
        }
        let sp = &self.split;
        if sp.train_len <= tau {
            return bad(format!("train_len = {} must exceed tau = {tau}", sp.train_len));
        }
        let skip = self.eval_skip();
        if skip < self.structure.tau() {
            return bad(format!(
                "eval_skip = {skip} leaves too little history for model memory {}",
                self.structure.tau()
            ));
        }
        if sp.eval_len <= skip {
            return bad(format!("eval_len = {} must exceed eval_skip = {skip}", sp.eval_len));
        }
        let (ts, te, es, ee) = (sp.train_start, sp.train_end(), sp.eval_start(), sp.eval_end());
        if ts < ee && es < te {
            return bad(format!("evaluation window [{es}, {ee}) overlaps training window [{ts}, {te})"));
        }
        if let DataSource::Simulate { n: Some(n), snr, .. } = &self.data {
            self.check_length(*n)?;
            if let Some(s) = snr {
                if !(s.ratio() > 0.0) {
                    return bad("snr must be positive".into());
                }
            }
        }
        if let Some(m) = self.bounds.m {
            if !(m >= 0.0) {
                return bad("bounds.m must be nonnegative".into());
            }
        }
        if let Some(s) = self.bounds.sigma {
            if !(s >= 0.0) {
                return bad("bounds.sigma must be nonnegative".into());
            }
        }
        if !(self.bounds.sigma_holdout > 0.0 && self.bounds.sigma_holdout < 1.0) {
            return bad("bounds.sigma_holdout must lie in (0, 1)".into());
        }
        if let Some(sw) = &self.sweep {
            if sw.train_lens.iter().any(|&n| n <= tau) {
                return bad(format!("every sweep train length must exceed tau = {tau}"));
            }
        }
        Ok(())
    }

    fn check_length(&self, len: usize) -> Result<()> {
        let end = self.split.train_end().max(self.split.eval_end());
        if end > len {
            return Err(Error::Config(format!(
                "windows reach sample {end} but the series has {len} samples"
            )));
        }
        Ok(())
    }

    /// The config without its output location.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c
    }

    /// Canonical JSON form, the basis of the config hash.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.canonical())?)
    }

    pub fn config_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_json()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// The series an experiment runs on.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub meta: Option<SimulationMeta>,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let tau = cfg.tau();
    let loaded = match &cfg.data {
        DataSource::Csv { path, .. } => LoadedData {
            dataset: ingest_csv(path, tau)?,
            meta: None,
        },
        DataSource::Simulate {
            cascade,
            n,
            input_law,
            correlate_with,
            snr,
        } => {
            let spec = SignalSpec {
                n: n.unwrap_or(cfg.split.train_end().max(cfg.split.eval_end())),
                input_law: input_law.clone(),
                correlate_with: correlate_with.clone(),
                snr: *snr,
                seed: cfg.seed,
                tau,
            };
            let sim = simulate(cascade, &spec)?;
            let meta = sim.meta(cascade, &spec);
            LoadedData {
                dataset: sim.dataset,
                meta: Some(meta),
            }
        }
    };
    cfg.check_length(loaded.dataset.len())?;
    Ok(loaded)
}

/// Training objective and evaluation design for a config.
pub struct Prepared {
    pub d: usize,
    pub tau: usize,
    pub objective: QuadraticObjective,
    pub eval: EvalWindow,
    eval_design: crate::dictionary::RegressorMatrix,
    eval_targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub start: usize,
    pub len: usize,
    pub skip: usize,
}

impl EvalWindow {
    /// Dataset index of the first scored sample.
    pub fn first_scored(&self) -> usize {
        self.start + self.skip
    }
}

pub fn prepare(cfg: &ExperimentConfig, data: &Dataset) -> Result<Prepared> {
    let sp = &cfg.split;
    let train = data.window(sp.train_start, sp.train_len)?;
    let design = build_regressors(&train, &cfg.structure)?;
    let objective = QuadraticObjective::with_cache(design, train.targets().to_vec(), cfg.solver.cache)?;
    let eval = EvalWindow {
        start: sp.eval_start(),
        len: sp.eval_len,
        skip: cfg.eval_skip(),
    };
    let mut ew = data.window(eval.start, eval.len)?;
    ew.set_tau(eval.skip);
    let eval_design = build_regressors(&ew, &cfg.structure)?;
    Ok(Prepared {
        d: objective.dim(),
        tau: train.tau(),
        objective,
        eval,
        eval_design,
        eval_targets: ew.targets().to_vec(),
    })
}

impl Prepared {
    pub fn eval_targets(&self) -> &[f64] {
        &self.eval_targets
    }

    pub fn predict_eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: theta.len(),
            });
        }
        Ok(self.eval_design.mul_vec(theta))
    }

    pub fn eval_rmse(&self, theta: &[f64]) -> Result<f64> {
        rmse(&self.eval_targets, &self.predict_eval(theta)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RSelection {
    Tuned,
    Fixed,
}

/// A fit at one `q`, already mapped back to the unscaled dictionary.
#[derive(Debug, Clone)]
pub struct SelectedFit {
    pub q: f64,
    pub r: f64,
    pub selection: RSelection,
    pub tuning: Option<TuningResult>,
    pub report: FitReport,
}

pub fn fit_one(cfg: &ExperimentConfig, objective: &QuadraticObjective, q: f64) -> Result<SelectedFit> {
    match cfg.solver.r {
        RChoice::Auto(_) => {
            let target = scaled_radius(objective.dim(), q, 1.0);
            let eps = cfg.solver.relative_epsilon.unwrap_or(DEFAULT_RELATIVE_EPSILON) * target;
            let tuning = tune_r(objective, q, Some(eps), &cfg.solver.tuning_options())?;
            let report = tuning
                .unscaled_fit()
                .ok_or_else(|| Error::DegenerateData("tuning produced no fit".into()))?;
            Ok(SelectedFit {
                q,
                r: tuning.r,
                selection: RSelection::Tuned,
                tuning: Some(tuning),
                report,
            })
        }
        RChoice::Fixed(r) => {
            let report = fit_scaled(objective, q, r, &cfg.solver.solver_options())?.rescaled(r);
            Ok(SelectedFit {
                q,
                r,
                selection: RSelection::Fixed,
                tuning: None,
                report,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub value: Option<f64>,
    pub method: SigmaSource,
    /// Why no estimate was produced, if none was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundContext {
    pub n: usize,
    pub tau: usize,
    pub d: usize,
    pub m: f64,
    pub m_estimated: bool,
    pub sigma: SigmaEstimate,
    pub k: Option<usize>,
}

pub fn bound_context(cfg: &ExperimentConfig, prep: &Prepared) -> BoundContext {
    let obj = &prep.objective;
    let (m, m_estimated) = match cfg.bounds.m {
        Some(m) => (m, false),
        None => (bounds::estimate_magnitude(obj.targets(), obj.design()), true),
    };
    let sigma = match cfg.bounds.sigma {
        Some(s) => SigmaEstimate {
            value: Some(s),
            method: SigmaSource::Given,
            note: None,
        },
        None => match bounds::estimate_sigma(obj.design(), obj.targets(), cfg.bounds.sigma_holdout) {
            Ok(s) => SigmaEstimate {
                value: Some(s),
                method: SigmaSource::HeldOutResiduals,
                note: None,
            },
            Err(e) => SigmaEstimate {
                value: None,
                method: SigmaSource::HeldOutResiduals,
                note: Some(e.to_string()),
            },
        },
    };
    BoundContext {
        n: cfg.split.train_len,
        tau: prep.tau,
        d: prep.d,
        m,
        m_estimated,
        sigma,
        k: cfg.bounds.k,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValues {
    pub theorem1: Option<f64>,
    pub scaled: Option<f64>,
    pub q_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn bound_values(ctx: &BoundContext, r: f64, q: f64) -> BoundValues {
    let Some(sigma) = ctx.sigma.value else {
        return BoundValues {
            theorem1: None,
            scaled: None,
            q_penalty: None,
            note: Some("no noise level available".into()),
        };
    };
    let mut p = BoundParams::new(ctx.n, ctx.tau, ctx.d, ctx.m, sigma);
    p.k = ctx.k;
    let theorem1 = bounds::bound_theorem1(&p);
    let q_penalty = bounds::bound_q_penalty(&p, q);
    p.r = r;
    let scaled = bounds::bound_scaled(&p);
    let note = [&theorem1, &scaled, &q_penalty]
        .iter()
        .find_map(|b| b.as_ref().err().map(|e| e.to_string()));
    BoundValues {
        theorem1: theorem1.ok(),
        scaled: scaled.ok(),
        q_penalty: q_penalty.ok(),
        note,
    }
}

/// Everything recorded for one `q`; written as `fit_q<q>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub q: f64,
    pub d: usize,
    pub r: f64,
    pub r_selection: RSelection,
    /// Radius of the unscaled problem, `R * D^(1/q - 1)`.
    pub radius: f64,
    pub eval: EvalWindow,
    pub rmse: f64,
    pub nonzeros: usize,
    pub bounds: BoundValues,
    pub tuning: Option<TuningResult>,
    pub report: FitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub q: f64,
    pub r: f64,
    pub rmse: f64,
    pub norm_1: f64,
    pub norm_q: f64,
    pub nonzeros: usize,
    pub gap: f64,
    pub iterations: usize,
}

/// One row per model, sorted by RMSe (ties by `q`). All models must have
/// been scored on the same window.
pub fn compare_models(models: &[ModelSummary]) -> Result<Vec<ComparisonRow>> {
    if let Some(first) = models.first() {
        if let Some(m) = models.iter().find(|m| m.eval != first.eval) {
            return Err(Error::InvalidArgument(format!(
                "evaluation windows differ: {:?} vs {:?}",
                first.eval, m.eval
            )));
        }
    }
    let mut rows: Vec<ComparisonRow> = models
        .iter()
        .map(|m| ComparisonRow {
            q: m.q,
            r: m.r,
            rmse: m.rmse,
            norm_1: m.report.norm_1,
            norm_q: m.report.norm_q,
            nonzeros: m.nonzeros,
            gap: m.report.gap,
            iterations: m.report.iterations,
        })
        .collect();
    rows.sort_by(|a, b| a.rmse.total_cmp(&b.rmse).then(a.q.total_cmp(&b.q)));
    Ok(rows)
}

pub fn write_comparison_csv<W: std::io::Write>(writer: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub d: usize,
    pub tau: usize,
    pub data_source: String,
    pub qs: Vec<f64>,
    /// `q` values whose selected fit stopped at the iteration cap.
    pub non_converged: Vec<f64>,
    pub files: Vec<ManifestEntry>,
}

/// Collects artifacts for one output directory, hashing what it writes.
pub struct BundleWriter {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl BundleWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn into_entries(self) -> Vec<ManifestEntry> {
        self.files
    }
}

pub fn q_tag(q: f64) -> String {
    format!("q{q}")
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: Manifest,
    pub models: Vec<ModelSummary>,
    pub comparison: Vec<ComparisonRow>,
}

/// Runs the full pipeline and writes the bundle into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let loaded = load_data(cfg)?;
    let prep = prepare(cfg, &loaded.dataset)?;
    let mut out = BundleWriter::create(&cfg.output_dir)?;

    if let Some(meta) = &loaded.meta {
        let mut csv = Vec::new();
        loaded.dataset.write_csv(&mut csv)?;
        out.write("dataset.csv", &csv)?;
        out.write_json("dataset_meta.json", meta)?;
    }

    let ctx = bound_context(cfg, &prep);
    out.write_json("bound_context.json", &ctx)?;

    let mut models = Vec::new();
    for q in cfg.qs() {
        let sel = fit_one(cfg, &prep.objective, q)?;
        let theta = &sel.report.coefficients.values;
        let y_hat = prep.predict_eval(theta)?;
        let err = rmse(prep.eval_targets(), &y_hat)?;
        let tag = q_tag(q);

        let mut buf = Vec::new();
        write_coefficients_csv(&mut buf, &cfg.structure, theta)?;
        out.write(&format!("coefficients_{tag}.csv"), &buf)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "y", "y_hat"])?;
        let first = prep.eval.first_scored();
        for (i, (y, yh)) in prep.eval_targets().iter().zip(&y_hat).enumerate() {
            w.write_record([(first + i).to_string(), y.to_string(), yh.to_string()])?;
        }
        out.write(&format!("predictions_{tag}.csv"), &csv_bytes(w)?)?;

        let curve = sparsity_curve(theta, &default_thresholds(theta, DEFAULT_CURVE_POINTS, DEFAULT_CURVE_FLOOR))?;
        let mut buf = Vec::new();
        curve.write_csv(&mut buf)?;
        out.write(&format!("sparsity_{tag}.csv"), &buf)?;

        let summary = ModelSummary {
            q,
            d: prep.d,
            r: sel.r,
            r_selection: sel.selection,
            radius: sel.report.coefficients.radius,
            eval: prep.eval,
            rmse: err,
            nonzeros: count_above(theta, COMPARISON_THRESHOLD),
            bounds: bound_values(&ctx, sel.r, q),
            tuning: sel.tuning,
            report: sel.report,
        };
        out.write_json(&format!("fit_{tag}.json"), &summary)?;
        models.push(summary);
    }

    let comparison = compare_models(&models)?;
    let mut buf = Vec::new();
    write_comparison_csv(&mut buf, &comparison)?;
    out.write("comparison.csv", &buf)?;
    out.write_json("comparison.json", &comparison)?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config_sha256: cfg.config_hash()?,
        config: cfg.canonical(),
        seed: cfg.seed,
        d: prep.d,
        tau: prep.tau,
        data_source: match &cfg.data {
            DataSource::Csv { path, .. } => path.display().to_string(),
            DataSource::Simulate { .. } => "simulate".into(),
        },
        qs: cfg.qs(),
        non_converged: models.iter().filter(|m| !m.report.converged).map(|m| m.q).collect(),
        files: out.into_entries(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(cfg.output_dir.join("manifest.json"), bytes)?;
    Ok(ExperimentOutcome {
        manifest,
        models,
        comparison,
    })
}

fn csv_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Tuning only: one result per `q`.
pub fn run_tuning(cfg: &ExperimentConfig) -> Result<Vec<TuningResult>> {
    cfg.validate()?;
    let loaded = load_data(cfg)?;
    let prep = prepare(cfg, &loaded.dataset)?;
    let mut out = Vec::new();
    for q in cfg.qs() {
        let target = scaled_radius(prep.d, q, 1.0);
        let eps = cfg.solver.relative_epsilon.unwrap_or(DEFAULT_RELATIVE_EPSILON) * target;
        out.push(tune_r(&prep.objective, q, Some(eps), &cfg.solver.tuning_options())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub train_len: usize,
    pub seed: u64,
    pub dir: String,
    pub manifest_sha256: String,
    pub rows: Vec<ComparisonRow>,
}

/// Expands the sweep grid into per-cell configs.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let sw = cfg.sweep.clone().unwrap_or(SweepConfig {
        train_lens: Vec::new(),
        seeds: Vec::new(),
    });
    let lens = if sw.train_lens.is_empty() {
        vec![cfg.split.train_len]
    } else {
        sw.train_lens
    };
    let seeds = if sw.seeds.is_empty() { vec![cfg.seed] } else { sw.seeds };
    let mut cells = Vec::new();
    for &n in &lens {
        for &seed in &seeds {
            let name = format!("n{n}_seed{seed}");
            let mut c = cfg.clone();
            c.sweep = None;
            c.seed = seed;
            c.split.train_len = n;
            if let DataSource::Simulate { n: len, .. } = &mut c.data {
                // The series grows with the training window.
                *len = None;
            }
            c.output_dir = cfg.output_dir.join(&name);
            cells.push((name, c));
        }
    }
    cells
}

/// Runs every sweep cell, at most `threads` at a time, and writes
/// `sweep_summary.csv` and `sweep.json` at the top of the output directory.
pub fn run_sweep(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    let cells = sweep_cells(cfg);
    for (_, c) in &cells {
        c.validate()?;
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ExperimentOutcome>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.max(1).min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((_, c)) = cells.get(i) else { break };
                let r = run_experiment(c);
                results.lock().expect("sweep result lock")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("sweep result lock");
    let mut out = Vec::new();
    for ((name, c), r) in cells.iter().zip(results) {
        let outcome = r.expect("every sweep cell runs")?;
        let manifest = std::fs::read(c.output_dir.join("manifest.json"))?;
        out.push(SweepCell {
            train_len: c.split.train_len,
            seed: c.seed,
            dir: name.clone(),
            manifest_sha256: sha256_hex(&manifest),
            rows: outcome.comparison,
        });
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["train_len", "seed", "q", "r", "rmse", "nonzeros", "gap", "iterations"])?;
    for cell in &out {
        for row in &cell.rows {
            w.write_record([
                cell.train_len.to_string(),
                cell.seed.to_string(),
                row.q.to_string(),
                row.r.to_string(),
                row.rmse.to_string(),
                row.nonzeros.to_string(),
                row.gap.to_string(),
                row.iterations.to_string(),
            ])?;
        }
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("sweep_summary.csv"), csv_bytes(w)?)?;
    let mut bytes = serde_json::to_vec_pretty(&out)?;
    bytes.push(b'\n');
    std::fs::write(cfg.output_dir.join("sweep.json"), bytes)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "structure": {"degree": 2, "memory_lengths": [3, 3]},
            "solver": {"q": [1, 2], "r": "auto"},
            "data": {"source": "simulate", "snr": {"value": 40}},
            "split": {"train_len": 200, "eval_len": 100},
            "output_dir": "unused",
            "seed": 7
        })
    }

    fn parse(v: serde_json::Value) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(&v.to_string())
    }

    #[test]
    fn parses_defaults() {
        let c = parse(base_json()).unwrap();
        assert_eq!(c.qs(), vec![1.0, 2.0]);
        assert_eq!(c.solver.r, RChoice::Auto(AutoTag::Auto));
        assert_eq!(c.split.eval_start(), 200);
        assert_eq!(c.eval_skip(), 2);
        assert!(matches!(c.data, DataSource::Simulate { .. }));
        let again = parse(serde_json::from_str(&c.canonical_json().unwrap()).unwrap()).unwrap();
        assert_eq!(again.canonical(), c.canonical());
        let mut moved = c.clone();
        moved.output_dir = PathBuf::from("elsewhere");
        assert_eq!(moved.config_hash().unwrap(), c.config_hash().unwrap());
    }

    #[test]
    fn fixed_r_and_single_q() {
        let mut v = base_json();
        v["solver"] = serde_json::json!({"q": 1.5, "r": 3.0});
        let c = parse(v).unwrap();
        assert_eq!(c.qs(), vec![1.5]);
        assert_eq!(c.solver.r, RChoice::Fixed(3.0));
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        let mut v = base_json();
        v["extra"] = serde_json::json!(1);
        assert!(matches!(parse(v), Err(Error::Config(_))));
        let mut v = base_json();
        v["solver"]["typo"] = serde_json::json!(1);
        assert!(parse(v).is_err());
        let mut v = base_json();
        v["data"]["bogus"] = serde_json::json!(1);
        assert!(parse(v).is_err());
        let mut v = base_json();
        v["schema_version"] = serde_json::json!(2);
        assert!(parse(v).is_err());
        let mut v = base_json();
        v["solver"]["r"] = serde_json::json!("manual");
        assert!(parse(v).is_err());
    }

    #[test]
    fn rejects_overlapping_windows() {
        let mut v = base_json();
        v["split"] = serde_json::json!({"train_len": 200, "eval_start": 150, "eval_len": 100});
        let err = parse(v).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("overlaps")), "{err}");
        let mut v = base_json();
        v["split"] = serde_json::json!({"train_start": 100, "train_len": 100, "eval_start": 0, "eval_len": 100});
        assert!(parse(v).is_ok());
    }

    #[test]
    fn rejects_windows_past_the_series() {
        let mut v = base_json();
        v["data"]["n"] = serde_json::json!(250);
        assert!(parse(v).is_err());
    }

    #[test]
    fn comparison_sorting_and_window_check() {
        let report = FitReport {
            coefficients: crate::dictionary::CoefficientVector::new(vec![0.0], 1.0, 1.0),
            objective: 0.0,
            gap: 0.0,
            iterations: 0,
            converged: true,
            path: SolverPath::FrankWolfe,
            norm_q: 0.0,
            norm_1: 0.0,
            trace: Vec::new(),
        };
        let eval = EvalWindow { start: 0, len: 10, skip: 1 };
        let m = |q: f64, rmse: f64| ModelSummary {
            q,
            d: 1,
            r: 1.0,
            r_selection: RSelection::Fixed,
            radius: 1.0,
            eval,
            rmse,
            nonzeros: 0,
            bounds: BoundValues {
                theorem1: None,
                scaled: None,
                q_penalty: None,
                note: None,
            },
            tuning: None,
            report: report.clone(),
        };
        let rows = compare_models(&[m(2.0, 0.5), m(1.0, 0.5), m(1.5, 0.1)]).unwrap();
        let qs: Vec<f64> = rows.iter().map(|r| r.q).collect();
        assert_eq!(qs, vec![1.5, 1.0, 2.0]);
        assert_eq!(compare_models(&[m(1.0, 0.2)]).unwrap().len(), 1);
        let mut other = m(1.0, 0.2);
        other.eval.skip = 2;
        assert!(compare_models(&[m(1.0, 0.2), other]).is_err());
    }
}
