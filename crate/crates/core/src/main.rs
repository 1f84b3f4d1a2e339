use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use volterra_lq::bounds::{self, BoundParams};
use volterra_lq::data::ingest_csv;
use volterra_lq::dictionary::{predict, read_coefficients_file, VolterraStructure};
use volterra_lq::experiment::{self, BundleWriter, ExperimentConfig};
use volterra_lq::metrics::{default_thresholds, sparsity_curve, DEFAULT_CURVE_FLOOR, DEFAULT_CURVE_POINTS};
use volterra_lq::simulator::{simulate, BlockCascade, SignalSpec, Snr, SnrUnit, TransferFunction};
use volterra_lq::{Error, Result};

const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "volterra-lq", version, about = "Volterra models fitted by l_q-constrained least squares")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `sweep`.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Exit with status 4 when a fit stops at its iteration cap.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a WH2 dataset (or the config's simulated source).
    Simulate(SimulateArgs),
    /// Run the experiment in --config and write the report bundle.
    Fit,
    /// Select R for every q in --config.
    Tune,
    /// Model output for a coefficient file on a dataset.
    Predict(PredictArgs),
    /// RMSe of a coefficient file on the config's evaluation window.
    Evaluate(CoefficientArgs),
    /// Evaluate an aggregation-error bound.
    Bound(BoundArgs),
    /// Sparsity curve of a coefficient file.
    Sparsity(SparsityArgs),
    /// Run the config's (train length, seed) grid.
    Sweep,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Signal-to-noise ratio; noiseless when omitted.
    #[arg(long)]
    snr: Option<f64>,
    /// Read --snr in decibels instead of as a power ratio.
    #[arg(long)]
    snr_db: bool,
    /// Color the input with the WH2 output filter.
    #[arg(long)]
    correlated: bool,
    #[arg(long, default_value_t = 39)]
    tau: usize,
}

#[derive(Args)]
struct StructureArgs {
    /// Kernel degree P (otherwise taken from --config).
    #[arg(long)]
    degree: Option<usize>,
    /// Memory lengths, one per order or a single value for all.
    #[arg(long, value_delimiter = ',')]
    memory: Vec<usize>,
}

#[derive(Args)]
struct CoefficientArgs {
    #[arg(long)]
    coefficients: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    coefficients: PathBuf,
    /// Dataset CSV with u and y columns.
    #[arg(long)]
    data: PathBuf,
    /// Declared memory bound; defaults to the model memory.
    #[arg(long)]
    tau: Option<usize>,
    #[command(flatten)]
    structure: StructureArgs,
}

#[derive(Args)]
struct SparsityArgs {
    #[arg(long)]
    coefficients: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CURVE_POINTS)]
    points: usize,
    #[arg(long, default_value_t = DEFAULT_CURVE_FLOOR)]
    floor: f64,
    #[command(flatten)]
    structure: StructureArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Formula {
    Theorem1,
    Scaled,
    QPenalty,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, value_enum, default_value_t = Formula::Theorem1)]
    formula: Formula,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    tau: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
}

#[derive(Serialize)]
struct BoundOutput {
    formula: Formula,
    params: BoundParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    value: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// `Ok(false)` only when `--strict` is set and some fit did not converge.
fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, a).map(|_| true),
        Command::Fit => {
            let cfg = load_config(cli)?;
            let outcome = experiment::run_experiment(&cfg)?;
            print_json(&outcome.comparison)?;
            let nc = &outcome.manifest.non_converged;
            if !nc.is_empty() {
                eprintln!("warning: fits at q = {nc:?} stopped at the iteration cap");
            }
            Ok(!(cli.strict && !nc.is_empty()))
        }
        Command::Tune => {
            let cfg = load_config(cli)?;
            let results = experiment::run_tuning(&cfg)?;
            let mut out = BundleWriter::create(&cfg.output_dir)?;
            let mut all_converged = true;
            for t in &results {
                out.write_json(&format!("tuning_{}.json", experiment::q_tag(t.q)), t)?;
                all_converged &= t.fit.as_ref().is_some_and(|f| f.converged);
            }
            print_json(&results)?;
            Ok(!(cli.strict && !all_converged))
        }
        Command::Predict(a) => cmd_predict(cli, a).map(|_| true),
        Command::Evaluate(a) => {
            let cfg = load_config(cli)?;
            let theta = read_coefficients_file(&a.coefficients, &cfg.structure)?;
            let loaded = experiment::load_data(&cfg)?;
            let prep = experiment::prepare(&cfg, &loaded.dataset)?;
            let rmse = prep.eval_rmse(&theta)?;
            print_json(&serde_json::json!({ "rmse": rmse, "eval": prep.eval }))?;
            Ok(true)
        }
        Command::Bound(a) => {
            let mut p = BoundParams::new(a.n, a.tau, a.d, a.m, a.sigma);
            p.r = a.r;
            p.k = a.k;
            let (value, q) = match a.formula {
                Formula::Theorem1 => (bounds::bound_theorem1(&p)?, None),
                Formula::Scaled => (bounds::bound_scaled(&p)?, None),
                Formula::QPenalty => (bounds::bound_q_penalty(&p, a.q)?, Some(a.q)),
            };
            print_json(&BoundOutput {
                formula: a.formula,
                params: p,
                q,
                value,
            })?;
            Ok(true)
        }
        Command::Sparsity(a) => {
            let structure = resolve_structure(cli, &a.structure)?;
            let theta = read_coefficients_file(&a.coefficients, &structure)?;
            let curve = sparsity_curve(&theta, &default_thresholds(&theta, a.points, a.floor))?;
            match &cli.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let f = std::fs::File::create(dir.join("sparsity.csv"))?;
                    curve.write_csv(f)?;
                }
                None => curve.write_csv(std::io::stdout().lock())?,
            }
            Ok(true)
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let cells = experiment::run_sweep(&cfg, cli.threads)?;
            let mut converged = true;
            for c in &cells {
                for row in &c.rows {
                    println!(
                        "n={} seed={} q={} rmse={} nonzeros={}",
                        c.train_len, c.seed, row.q, row.rmse, row.nonzeros
                    );
                }
                let m = std::fs::read(cfg.output_dir.join(&c.dir).join("manifest.json"))?;
                let m: experiment::Manifest = serde_json::from_slice(&m)?;
                converged &= m.non_converged.is_empty();
            }
            Ok(!(cli.strict && !converged))
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_structure(cli: &Cli, a: &StructureArgs) -> Result<VolterraStructure> {
    match a.degree {
        Some(p) => {
            let lengths = match a.memory.as_slice() {
                [l] => vec![*l; p],
                ls if ls.len() == p => ls.to_vec(),
                ls => {
                    return Err(Error::Config(format!(
                        "--memory needs 1 or {p} values, got {}",
                        ls.len()
                    )))
                }
            };
            VolterraStructure::new(lengths, true).map_err(|e| Error::Config(e.to_string()))
        }
        None => Ok(load_config(cli)?.structure),
    }
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let (cascade, spec, dir) = match &cli.config {
        Some(_) => {
            let cfg = load_config(cli)?;
            let experiment::DataSource::Simulate { cascade, .. } = &cfg.data else {
                return Err(Error::Config("config data source is not simulate".into()));
            };
            let loaded = experiment::load_data(&cfg)?;
            let meta = loaded.meta.expect("simulated source carries metadata");
            (cascade.clone(), meta.spec, cfg.output_dir)
        }
        None => {
            let mut spec = SignalSpec::white(a.n, cli.seed.unwrap_or(0));
            spec.tau = a.tau;
            spec.snr = a.snr.map(|value| Snr {
                value,
                unit: if a.snr_db { SnrUnit::Db } else { SnrUnit::Linear },
            });
            if a.correlated {
                spec.correlate_with = Some(TransferFunction::wh2_output());
            }
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            (BlockCascade::wh2(), spec, dir)
        }
    };
    let sim = simulate(&cascade, &spec)?;
    let mut out = BundleWriter::create(&dir)?;
    let mut csv = Vec::new();
    sim.dataset.write_csv(&mut csv)?;
    out.write("dataset.csv", &csv)?;
    out.write_json("dataset_meta.json", &sim.meta(&cascade, &spec))?;
    eprintln!("wrote {} samples to {}", sim.dataset.len(), dir.display());
    Ok(())
}

fn cmd_predict(cli: &Cli, a: &PredictArgs) -> Result<()> {
    let structure = resolve_structure(cli, &a.structure)?;
    let theta = read_coefficients_file(&a.coefficients, &structure)?;
    let data = ingest_csv(&a.data, a.tau.unwrap_or(structure.tau()))?;
    let y_hat = predict(&theta, &structure, &data)?;
    let write = |w: &mut dyn std::io::Write| -> Result<()> {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["n", "y", "y_hat"])?;
        for (i, (y, yh)) in data.targets().iter().zip(&y_hat).enumerate() {
            c.write_record([(data.tau() + i).to_string(), y.to_string(), yh.to_string()])?;
        }
        c.flush()?;
        Ok(())
    };
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(Path::new(dir).join("predictions.csv"))?);
            write(&mut f)
        }
        None => write(&mut std::io::stdout().lock()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
