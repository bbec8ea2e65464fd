use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qamtrack::classify::{self, Calibration, ProbeRecord, StatisticMode};
use qamtrack::detector::{DetectorGeometry, FieldConfig, ParticleGun};
use qamtrack::experiment::{self, ExperimentConfig};
use qamtrack::hough::{self, BankGrid, HoughBinning};
use qamtrack::library::{self, Encoding, PatternLibrary};
use qamtrack::model::{ModelKind, RecallModel};
use qamtrack::pattern::{self, BitPattern, PatternKind};
use qamtrack::recall::{SolverConfig, SolverKind};
use qamtrack::seed;

#[derive(Parser)]
#[command(name = "qamtrack", version, about = "Associative-memory track classification with Ising solvers")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for file outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a training set and save it as a library file.
    Gen(GenArgs),
    /// Apply detector inefficiency and noise to library values.
    Corrupt(CorruptArgs),
    /// Encode a library into a weight matrix (CSV).
    Train(ModelArgs),
    /// Recall one probe against a trained library.
    Recall(RecallArgs),
    /// Calibrate on a library and label probes.
    Classify(ClassifyArgs),
    /// ROC sweep over a statistics CSV (`role,statistic`).
    Roc(RocArgs),
    /// Hough transform, peak and bank of a point set or pattern.
    Hough(HoughArgs),
    /// Full experiment pipeline.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Unkeyed,
    Keyed,
    Mixed,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "v24")]
    geometry: String,
    #[arg(long, default_value_t = 4)]
    signals: usize,
    #[arg(long, value_enum, default_value = "unkeyed")]
    encoding: EncodingArg,
    /// Background count for the mixed encoding (defaults to the signal count).
    #[arg(long)]
    backgrounds: Option<usize>,
    #[arg(long, default_value_t = pattern::DEFAULT_BACKGROUND_FILL)]
    fill: f64,
    #[arg(long, default_value_t = 0.2)]
    b_tesla: f64,
    #[arg(long, default_value = "library.json")]
    output: String,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long, default_value = "qamm")]
    model: ModelKind,
    #[arg(long, default_value_t = 0.74)]
    theta: f64,
    /// Skip the 3/(4 W_max) rescale.
    #[arg(long)]
    no_rescale: bool,
    #[arg(long, default_value = "weights.csv")]
    output: String,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value = "sa")]
    solver: SolverKind,
    #[arg(long)]
    reads: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    s_star: Option<f64>,
    #[arg(long)]
    pause_sweeps: Option<usize>,
}

impl SolverArgs {
    fn apply(&self, mut cfg: SolverConfig) -> SolverConfig {
        cfg.kind = self.solver;
        if let Some(r) = self.reads {
            cfg.reads = r;
        }
        if let Some(s) = self.sweeps {
            cfg.schedule.sweeps = s;
        }
        if let Some(s) = self.s_star {
            cfg.reverse.s_star = s;
        }
        if let Some(p) = self.pause_sweeps {
            cfg.reverse.pause_sweeps = p;
        }
        cfg
    }
}

#[derive(Args)]
struct RecallArgs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long, default_value = "qamm")]
    model: ModelKind,
    #[arg(long, default_value_t = 0.74)]
    theta: f64,
    #[arg(long)]
    no_rescale: bool,
    /// Probe value as a bit string.
    #[arg(long)]
    probe: BitPattern,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long, default_value = "qamm")]
    model: ModelKind,
    #[arg(long, default_value = "energy")]
    classifier: StatisticMode,
    #[arg(long, default_value_t = 0.74)]
    theta: f64,
    #[arg(long)]
    no_rescale: bool,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Probe values as bit strings.
    #[arg(long, required = true, num_args = 1..)]
    probe: Vec<BitPattern>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct RocArgs {
    /// CSV with header `role,statistic`; roles are calibration, signal, background.
    #[arg(long)]
    stats: PathBuf,
    #[arg(long, default_value = "energy")]
    classifier: StatisticMode,
}

#[derive(Args)]
struct HoughArgs {
    /// CSV of `x,y` points.
    #[arg(long, conflicts_with = "pattern")]
    points: Option<PathBuf>,
    /// Detector pattern; hits are mapped to segment centres.
    #[arg(long)]
    pattern: Option<BitPattern>,
    #[arg(long, default_value = "v24")]
    geometry: String,
    #[arg(long, default_value_t = hough::DEFAULT_RHO_UNIT)]
    rho_unit: f64,
    #[arg(long, default_value_t = 10.0)]
    phi_bin: f64,
    #[arg(long, default_value_t = 1.0)]
    rho_bin: f64,
    #[arg(long, default_value_t = 10.0)]
    rho_max: f64,
    #[arg(long, default_value_t = 10.0)]
    bank_phi: f64,
    #[arg(long, default_value_t = 1.0)]
    bank_rho: f64,
    /// Also write the accumulator as CSV.
    #[arg(long)]
    accumulator_csv: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML or JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    reads: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    s_star: Option<f64>,
    #[arg(long)]
    pause_sweeps: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("serializable output"));
            ExitCode::SUCCESS
        }
        Err(err) => {
            let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
            eprintln!("{}", json!({ "error": err.to_string(), "causes": chain }));
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<serde_json::Value> {
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Corrupt(a) => corrupt(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Recall(a) => recall(cli, a),
        Command::Classify(a) => classify_probes(cli, a),
        Command::Roc(a) => roc(cli, a),
        Command::Hough(a) => hough_cmd(cli, a),
        Command::Run(a) => run(cli, a),
    }
}

fn out_path(cli: &Cli, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    Ok(cli.out_dir.join(name))
}

fn load(path: &Path) -> Result<PatternLibrary> {
    library::load_library(path).with_context(|| format!("loading library {}", path.display()))
}

fn gen(cli: &Cli, a: &GenArgs) -> Result<serde_json::Value> {
    let g = DetectorGeometry::preset(&a.geometry)?;
    let field = FieldConfig::new(a.b_tesla)?;
    let encoding = match a.encoding {
        EncodingArg::Unkeyed => Encoding::SignalOnlyUnkeyed,
        EncodingArg::Keyed => Encoding::SignalOnlyKeyed,
        EncodingArg::Mixed => Encoding::SignalAndBackground { backgrounds: a.backgrounds.unwrap_or(a.signals) },
    };
    let lib = library::build_signal_library(
        &g,
        &field,
        &ParticleGun::for_geometry(&g),
        a.signals,
        encoding,
        a.fill,
        &mut seed::stream(cli.seed),
        1_000_000,
    )?;
    let path = out_path(cli, &a.output)?;
    library::save_library(&lib, &path)?;
    Ok(json!({
        "library": path,
        "V": lib.value_len(),
        "K": lib.key_len(),
        "signals": lib.signal_count(),
        "backgrounds": lib.background_count(),
        "alpha_s": lib.alpha_s(),
    }))
}

fn corrupt(cli: &Cli, a: &CorruptArgs) -> Result<serde_json::Value> {
    let lib = load(&a.library)?;
    let mut rng = seed::stream(cli.seed);
    let probes = lib
        .entries()
        .iter()
        .map(|e| {
            let corrupted = pattern::corrupt(e.pattern.value(), a.eta, a.gamma, &mut rng)?;
            Ok(json!({ "kind": e.kind, "original": e.pattern.value().to_string(), "corrupted": corrupted.to_string() }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({ "eta": a.eta, "gamma": a.gamma, "probes": probes }))
}

fn train(cli: &Cli, a: &ModelArgs) -> Result<serde_json::Value> {
    let lib = load(&a.library)?;
    let m = RecallModel::train(&lib, a.model, a.theta, !a.no_rescale)?;
    let path = out_path(cli, &a.output)?;
    fs::write(&path, m.weights.to_csv())?;
    Ok(json!({
        "weights": path,
        "N": m.weights.n(),
        "theta": m.theta,
        "scale": m.scale,
        "max_entry": m.weights.max_entry(),
    }))
}

fn recall(cli: &Cli, a: &RecallArgs) -> Result<serde_json::Value> {
    let lib = load(&a.library)?;
    let m = RecallModel::train(&lib, a.model, a.theta, !a.no_rescale)?;
    let solver = a.solver.apply(SolverConfig::default());
    let result = solver.solve(&m.problem(&a.probe)?, cli.seed)?;
    let best = result.best().context("solver returned no samples")?;
    let mean_energy = classify::probe_statistic(&result, StatisticMode::Energy, None)?;
    Ok(json!({
        "samples": result.samples.len(),
        "min_energy": best.energy,
        "mean_energy": mean_energy,
        "best_key": best.state.to_bits().bits()[..m.key_len].iter().map(|&b| if b { '1' } else { '0' }).collect::<String>(),
        "best_value": BitPattern::new(best.state.to_bits().bits()[m.key_len..].to_vec())?.to_string(),
    }))
}

fn classify_probes(cli: &Cli, a: &ClassifyArgs) -> Result<serde_json::Value> {
    let lib = load(&a.library)?;
    let m = RecallModel::train(&lib, a.model, a.theta, !a.no_rescale)?;
    let solver = a.solver.apply(SolverConfig::default());
    let (cal, _) = classify::calibrate(&lib, &m, &solver, a.classifier, seed::child(cli.seed, 0))?;
    let labels = a
        .probe
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let result = solver.solve(&m.problem(p)?, seed::derive(cli.seed, &[1, i as u64]))?;
            let stat = classify::probe_statistic(&result, a.classifier, Some(0))?;
            Ok(json!({ "probe": p.to_string(), "statistic": stat, "label": classify::classify(stat, &cal, a.beta) }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({ "calibration": cal, "beta": a.beta, "probes": labels }))
}

fn roc(cli: &Cli, a: &RocArgs) -> Result<serde_json::Value> {
    let text = fs::read_to_string(&a.stats).with_context(|| format!("reading {}", a.stats.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty statistics file")?;
    if header.trim() != "role,statistic" {
        bail!("expected header `role,statistic`, found {header:?}");
    }
    let (mut calib, mut probes) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let (role, value) = line.split_once(',').with_context(|| format!("row {}: expected two columns", n + 2))?;
        let stat: f64 = value.trim().parse().with_context(|| format!("row {}: bad statistic", n + 2))?;
        match role.trim() {
            "calibration" => calib.push(stat),
            "signal" => probes.push((stat, PatternKind::Signal)),
            "background" => probes.push((stat, PatternKind::Background)),
            other => bail!("row {}: unknown role {other:?}", n + 2),
        }
    }
    let cal = Calibration::from_stats(a.classifier, &calib).context("no calibration rows")?;
    let records: Vec<ProbeRecord> =
        probes.iter().map(|&(statistic, truth)| ProbeRecord { statistic, truth, calibration: cal }).collect();
    let curve = classify::roc_sweep_pooled(&records, &classify::BetaGrid::default().values()?)?;
    let path = out_path(cli, "roc.csv")?;
    fs::write(&path, curve.to_csv())?;
    Ok(json!({ "auc": curve.auc, "calibration": cal, "roc": path }))
}

fn hough_cmd(cli: &Cli, a: &HoughArgs) -> Result<serde_json::Value> {
    let points = match (&a.points, &a.pattern) {
        (Some(path), _) => read_points(path)?,
        (None, Some(p)) => hough::pattern_points(p, &DetectorGeometry::preset(&a.geometry)?, a.rho_unit)?,
        (None, None) => bail!("either --points or --pattern is required"),
    };
    let binning = HoughBinning { phi_bin_deg: a.phi_bin, rho_bin: a.rho_bin, rho_max: a.rho_max };
    let acc = hough::accumulate(&points, &binning)?;
    let peak = hough::find_peak(&acc);
    let grid = BankGrid::covering(&acc, a.bank_phi, a.bank_rho)?;
    let bank = hough::assign_bank(&peak, &grid)?;
    let mut out = json!({ "peak": peak, "bank": bank, "grid": grid, "points": points.len() });
    if let Some(name) = &a.accumulator_csv {
        let path = out_path(cli, name)?;
        fs::write(&path, acc.to_csv())?;
        out["accumulator"] = json!(path);
    }
    Ok(out)
}

fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('x'))
        .map(|(n, l)| {
            let (x, y) = l.split_once(',').with_context(|| format!("line {}: expected x,y", n + 1))?;
            Ok((x.trim().parse()?, y.trim().parse()?))
        })
        .collect()
}

fn run(cli: &Cli, a: &RunArgs) -> Result<serde_json::Value> {
    let mut cfg = match (&a.preset, &a.config) {
        (_, Some(path)) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (Some(name), None) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    cfg.seed = cli.seed;
    if let Some(k) = a.solver {
        cfg.solver.kind = k;
    }
    if let Some(r) = a.reads {
        cfg.solver.reads = r;
    }
    if let Some(s) = a.sweeps {
        cfg.solver.schedule.sweeps = s;
    }
    if let Some(s) = a.s_star {
        cfg.solver.reverse.s_star = s;
    }
    if let Some(p) = a.pause_sweeps {
        cfg.solver.reverse.pause_sweeps = p;
    }
    let report = experiment::run_experiment(&cfg)?;
    experiment::write_report(&report, &cli.out_dir)?;
    let cells: Vec<_> = report
        .cells
        .iter()
        .map(|c| json!({ "eta": c.cell.eta, "gamma": c.cell.gamma, "auc": c.roc.auc }))
        .collect();
    Ok(json!({ "auc": report.headline_auc(), "cells": cells, "out_dir": cli.out_dir }))
}
