//! End-to-end experiment driver: simulate training sets, train, calibrate,
//! probe every (η, γ) cell and report pooled ROC curves.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, BetaGrid, Calibration, ProbeRecord, RocCurve, StatisticMode};
use crate::detector::{self, DetectorGeometry, FieldConfig, ParticleGun};
use crate::error::{Error, Result};
use crate::library::{self, Encoding, PatternLibrary};
use crate::model::{ModelKind, RecallModel};
use crate::pattern::{self, BitPattern, PatternKind};
use crate::recall::{SolverConfig, SolverKind, EXACT_CAP};
use crate::seed;

pub const PAPER_DEFAULTS: &str = "paper-defaults";

/// Rejection budget for drawing unique signal tracks.
const TRACK_TRIES: usize = 1_000_000;

// Seed hierarchy tags under the master seed.
const TAG_LIBRARY: u64 = 0;
const TAG_CALIBRATION: u64 = 1;
const TAG_CORRUPTION: u64 = 2;
const TAG_RECALL: u64 = 3;
const TAG_BACKGROUND: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: String,
    pub b_tesla: f64,
    pub alpha_s: f64,
    /// Background density for keyed runs; defaults to `alpha_s`.
    pub alpha_b: Option<f64>,
    pub model: ModelKind,
    pub classifier: StatisticMode,
    pub theta: f64,
    pub rescale: bool,
    pub etas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub solver: SolverConfig,
    pub beta_grid: BetaGrid,
    pub training_sets: usize,
    pub signal_probes: usize,
    pub background_probes: usize,
    pub background_fill: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: "v24".into(),
            b_tesla: FieldConfig::default().b_tesla,
            alpha_s: 1.0 / 6.0,
            alpha_b: None,
            model: ModelKind::Qamm,
            classifier: StatisticMode::Energy,
            theta: 0.74,
            rescale: true,
            etas: vec![1.0, 0.98, 0.96, 0.94, 0.92],
            gammas: vec![0.0, 0.02, 0.04, 0.06, 0.08],
            solver: SolverConfig::default(),
            beta_grid: BetaGrid::default(),
            training_sets: 5,
            signal_probes: 25,
            background_probes: 25,
            background_fill: pattern::DEFAULT_BACKGROUND_FILL,
            seed: 0,
        }
    }
}

/// One (η, γ) corruption setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub eta: f64,
    pub gamma: f64,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        format!("eta_{:.2}_gamma_{:.2}", self.eta, self.gamma)
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            PAPER_DEFAULTS => Ok(Self::default()),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }

    /// Parses TOML or JSON (chosen by extension, `.json` for JSON).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn geometry(&self) -> Result<DetectorGeometry> {
        DetectorGeometry::preset(&self.geometry)
    }

    pub fn signal_count(&self) -> Result<usize> {
        let v = self.geometry()?.segments();
        density_count(self.alpha_s, v, "alpha_s")
    }

    pub fn background_count(&self) -> Result<usize> {
        match self.classifier {
            StatisticMode::Energy => Ok(0),
            StatisticMode::Key => {
                let v = self.geometry()?.segments();
                density_count(self.alpha_b.unwrap_or(self.alpha_s), v, "alpha_b")
            }
        }
    }

    /// Library encoding implied by model and classifier.
    pub fn encoding(&self) -> Result<Encoding> {
        Ok(match (self.classifier, self.model) {
            (StatisticMode::Energy, ModelKind::Qamm) => Encoding::SignalOnlyUnkeyed,
            (StatisticMode::Energy, ModelKind::Qcam) => Encoding::SignalOnlyKeyed,
            (StatisticMode::Key, _) => Encoding::SignalAndBackground { backgrounds: self.background_count()? },
        })
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> = Vec::new();
        let candidates = self
            .etas
            .iter()
            .map(|&eta| Cell { eta, gamma: 0.0 })
            .chain(self.gammas.iter().map(|&gamma| Cell { eta: 1.0, gamma }));
        for c in candidates {
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        cells
    }

    /// Rejects inconsistent settings before any computation.
    pub fn validate(&self) -> Result<()> {
        let g = self.geometry()?;
        FieldConfig::new(self.b_tesla)?;
        let signals = self.signal_count()?;
        if self.classifier == StatisticMode::Energy && self.alpha_b.is_some_and(|a| a > 0.0) {
            return Err(Error::ModeMismatch(
                "energy classification uses a signal-only encoding; alpha_b must be unset".into(),
            ));
        }
        let backgrounds = self.background_count()?;
        let key_len = usize::from(self.encoding()? != Encoding::SignalOnlyUnkeyed);
        if !self.theta.is_finite() {
            return Err(Error::InvalidConfig("theta must be finite".into()));
        }
        if self.etas.is_empty() && self.gammas.is_empty() {
            return Err(Error::InvalidConfig("at least one eta or gamma value is required".into()));
        }
        for &p in self.etas.iter().chain(&self.gammas) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ProbabilityOutOfRange { name: "eta/gamma", value: p });
            }
        }
        if !(0.0..=1.0).contains(&self.background_fill) {
            return Err(Error::ProbabilityOutOfRange { name: "background_fill", value: self.background_fill });
        }
        if self.training_sets == 0 || self.signal_probes == 0 || self.background_probes == 0 {
            return Err(Error::InvalidConfig("training sets and probe counts must be positive".into()));
        }
        if self.solver.reads == 0 {
            return Err(Error::InvalidConfig("reads must be at least 1".into()));
        }
        self.solver.schedule.validate()?;
        self.solver.reverse.validate()?;
        let n = g.segments() + key_len;
        if self.solver.kind == SolverKind::Exact && n > EXACT_CAP {
            return Err(Error::TooManySpins { n, cap: EXACT_CAP });
        }
        if signals + backgrounds > 1 << g.segments().min(62) {
            return Err(Error::InvalidConfig("more patterns requested than distinct values exist".into()));
        }
        let grid = self.beta_grid.values()?;
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("beta grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

fn density_count(alpha: f64, v: usize, name: &str) -> Result<usize> {
    let exact = alpha * v as f64;
    let count = exact.round();
    if !(alpha > 0.0) || count < 1.0 || (exact - count).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "{name} = {alpha} does not give a whole positive pattern count for V = {v}"
        )));
    }
    Ok(count as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeStat {
    pub training_set: usize,
    pub index: usize,
    pub truth: PatternKind,
    pub probe: String,
    pub statistic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSetSummary {
    pub index: usize,
    pub library_seed: u64,
    pub signals: usize,
    pub backgrounds: usize,
    pub weight_scale: f64,
    pub calibration: Calibration,
    pub calibration_statistics: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetAuc {
    pub index: usize,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub roc: RocCurve,
    pub per_training_set: Vec<SetAuc>,
    pub probes: Vec<ProbeStat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub training_sets: Vec<TrainingSetSummary>,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, eta: f64, gamma: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.cell.eta == eta && c.cell.gamma == gamma)
    }

    /// AUC of the uncorrupted cell, or of the first cell if it was not run.
    pub fn headline_auc(&self) -> f64 {
        self.cell(1.0, 0.0).unwrap_or(&self.cells[0]).roc.auc
    }
}

struct TrainedSet {
    library: PatternLibrary,
    model: RecallModel,
    calibration: Calibration,
    summary: TrainingSetSummary,
    fresh_backgrounds: Vec<BitPattern>,
}

fn train_set(cfg: &ExperimentConfig, t: usize) -> Result<TrainedSet> {
    let g = cfg.geometry()?;
    let field = FieldConfig::new(cfg.b_tesla)?;
    let gun = ParticleGun::for_geometry(&g);
    let library_seed = seed::derive(cfg.seed, &[TAG_LIBRARY, t as u64]);
    let library = library::build_signal_library(
        &g,
        &field,
        &gun,
        cfg.signal_count()?,
        cfg.encoding()?,
        cfg.background_fill,
        &mut seed::stream(library_seed),
        TRACK_TRIES,
    )?;
    let model = RecallModel::train(&library, cfg.model, cfg.theta, cfg.rescale)?;
    let (calibration, calibration_statistics) = classify::calibrate(
        &library,
        &model,
        &cfg.solver,
        cfg.classifier,
        seed::derive(cfg.seed, &[TAG_CALIBRATION, t as u64]),
    )?;

    let fresh_backgrounds = if cfg.classifier == StatisticMode::Energy {
        let mut rng = seed::stream(seed::derive(cfg.seed, &[TAG_BACKGROUND, t as u64]));
        let mut out: Vec<BitPattern> = Vec::with_capacity(cfg.background_probes);
        for _ in 0..cfg.background_probes {
            let mut avoid = library.values();
            avoid.extend(out.iter());
            let b = pattern::generate_background(
                g.segments(),
                cfg.background_fill,
                &avoid,
                &mut rng,
                pattern::DEFAULT_MAX_TRIES,
            )?;
            out.push(b);
        }
        out
    } else {
        Vec::new()
    };

    let summary = TrainingSetSummary {
        index: t,
        library_seed,
        signals: library.signal_count(),
        backgrounds: library.background_count(),
        weight_scale: model.scale,
        calibration,
        calibration_statistics,
    };
    Ok(TrainedSet { library, model, calibration, summary, fresh_backgrounds })
}

fn signal_probe(cfg: &ExperimentConfig, set: &TrainedSet, cell: Cell, t: usize, c: usize, i: usize) -> Result<BitPattern> {
    let signals: Vec<_> = set.library.signals().collect();
    let entry = signals[i % signals.len()];
    let clean = match (&entry.particle, set.library.meta()) {
        (Some(p), Some(meta)) => detector::regenerate(p, &meta.field, &meta.geometry),
        _ => entry.pattern.value().clone(),
    };
    let mut rng = seed::stream(seed::derive(cfg.seed, &[TAG_CORRUPTION, t as u64, c as u64, i as u64]));
    pattern::corrupt(&clean, cell.eta, cell.gamma, &mut rng)
}

fn background_probe(set: &TrainedSet, i: usize) -> BitPattern {
    if set.fresh_backgrounds.is_empty() {
        let bgs: Vec<_> = set.library.backgrounds().collect();
        bgs[i % bgs.len()].pattern.value().clone()
    } else {
        set.fresh_backgrounds[i].clone()
    }
}

/// Runs the full pipeline. Every number in the report is a function of the
/// configuration alone, independent of thread scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let cells = cfg.cells();
    let betas = cfg.beta_grid.values()?;
    let sets = (0..cfg.training_sets)
        .into_par_iter()
        .map(|t| train_set(cfg, t))
        .collect::<Result<Vec<_>>>()?;

    // One job per (set, cell, probe); signals first, then backgrounds.
    let probes_per_set = cfg.signal_probes + cfg.background_probes;
    let jobs: Vec<(usize, usize, usize)> = (0..sets.len())
        .flat_map(|t| (0..cells.len()).flat_map(move |c| (0..probes_per_set).map(move |i| (t, c, i))))
        .collect();
    let stats = jobs
        .par_iter()
        .map(|&(t, c, i)| {
            let set = &sets[t];
            let (truth, probe) = if i < cfg.signal_probes {
                (PatternKind::Signal, signal_probe(cfg, set, cells[c], t, c, i)?)
            } else {
                (PatternKind::Background, background_probe(set, i - cfg.signal_probes))
            };
            let problem = set.model.problem(&probe)?;
            let solve_seed = seed::derive(cfg.seed, &[TAG_RECALL, t as u64, c as u64, i as u64]);
            let result = cfg.solver.solve(&problem, solve_seed)?;
            let statistic = classify::probe_statistic(&result, cfg.classifier, Some(0))?;
            Ok(ProbeStat { training_set: t, index: i, truth, probe: probe.to_string(), statistic })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(cells.len());
    for (c, &cell) in cells.iter().enumerate() {
        let probes: Vec<ProbeStat> = jobs
            .iter()
            .zip(&stats)
            .filter(|((_, jc, _), _)| *jc == c)
            .map(|(_, s)| s.clone())
            .collect();
        let records = |filter: Option<usize>| -> Vec<ProbeRecord> {
            probes
                .iter()
                .filter(|p| filter.is_none_or(|t| p.training_set == t))
                .map(|p| ProbeRecord {
                    statistic: p.statistic,
                    truth: p.truth,
                    calibration: sets[p.training_set].calibration,
                })
                .collect()
        };
        let roc = classify::roc_sweep_pooled(&records(None), &betas)?;
        let per_training_set = (0..sets.len())
            .map(|t| Ok(SetAuc { index: t, auc: classify::roc_sweep_pooled(&records(Some(t)), &betas)?.auc }))
            .collect::<Result<Vec<_>>>()?;
        reports.push(CellReport { cell, roc, per_training_set, probes });
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        training_sets: sets.into_iter().map(|s| s.summary).collect(),
        cells: reports,
    })
}

#[derive(Serialize)]
struct CellSummary<'a> {
    auc: f64,
    config: CellConfig<'a>,
    per_training_set: &'a [SetAuc],
}

#[derive(Serialize)]
struct CellConfig<'a> {
    eta: f64,
    gamma: f64,
    #[serde(flatten)]
    experiment: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct TopSummary<'a> {
    auc: f64,
    config: &'a ExperimentConfig,
    per_training_set: &'a [TrainingSetSummary],
    cells: Vec<CellEntry>,
}

#[derive(Serialize)]
struct CellEntry {
    eta: f64,
    gamma: f64,
    auc: f64,
    dir: String,
}

/// Writes `summary.json` plus one directory per cell holding `roc.csv`,
/// `roc.svg`, `probes.csv` and `summary.json`.
pub fn write_report(report: &ExperimentReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    for cell in &report.cells {
        let dir = out_dir.join(cell.cell.dir_name());
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("roc.csv"), cell.roc.to_csv())?;
        fs::write(dir.join("roc.svg"), cell.roc.to_svg())?;
        let mut probes = String::from("training_set,index,truth,probe,statistic\n");
        for p in &cell.probes {
            let truth = match p.truth {
                PatternKind::Signal => "signal",
                PatternKind::Background => "background",
            };
            probes.push_str(&format!("{},{},{},{},{}\n", p.training_set, p.index, truth, p.probe, p.statistic));
        }
        fs::write(dir.join("probes.csv"), probes)?;
        let summary = CellSummary {
            auc: cell.roc.auc,
            config: CellConfig { eta: cell.cell.eta, gamma: cell.cell.gamma, experiment: &report.config },
            per_training_set: &cell.per_training_set,
        };
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    let top = TopSummary {
        auc: report.headline_auc(),
        config: &report.config,
        per_training_set: &report.training_sets,
        cells: report
            .cells
            .iter()
            .map(|c| CellEntry { eta: c.cell.eta, gamma: c.cell.gamma, auc: c.roc.auc, dir: c.cell.dir_name() })
            .collect(),
    };
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&top)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            etas: vec![1.0],
            gammas: vec![0.0],
            solver: SolverConfig { reads: 5, ..SolverConfig::default() },
            training_sets: 2,
            signal_probes: 4,
            background_probes: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn paper_defaults_cells() {
        let cfg = ExperimentConfig::preset(PAPER_DEFAULTS).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.signal_count().unwrap(), 4);
        let cells = cfg.cells();
        assert_eq!(cells.len(), 9);
        assert_eq!(cells[0], Cell { eta: 1.0, gamma: 0.0 });
        assert_eq!(cells[5], Cell { eta: 1.0, gamma: 0.02 });
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn mode_matrix() {
        let key = ExperimentConfig { classifier: StatisticMode::Key, ..small() };
        assert_eq!(key.encoding().unwrap(), Encoding::SignalAndBackground { backgrounds: 4 });
        let energy_with_bg = ExperimentConfig { alpha_b: Some(1.0 / 6.0), ..small() };
        assert!(matches!(energy_with_bg.validate(), Err(Error::ModeMismatch(_))));
        let odd = ExperimentConfig { alpha_s: 0.3, ..small() };
        assert!(odd.validate().is_err());
        let too_big = ExperimentConfig { geometry: "v30".into(), solver: SolverConfig::exact(), ..small() };
        assert!(matches!(too_big.validate(), Err(Error::TooManySpins { .. })));
    }

    #[test]
    fn config_files() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        fs::write(&toml_path, "alpha_s = 0.3333333333333333\nclassifier = \"key\"\n[solver]\nreads = 7\n").unwrap();
        let cfg = ExperimentConfig::load(&toml_path).unwrap();
        assert_eq!((cfg.signal_count().unwrap(), cfg.solver.reads), (8, 7));
        assert_eq!(cfg.solver.schedule.sweeps, 1000);

        let json_path = dir.path().join("c.json");
        fs::write(&json_path, r#"{"classifier": "key", "alpha_b": 0.5, "model": "qcam"}"#).unwrap();
        let cfg = ExperimentConfig::load(&json_path).unwrap();
        assert_eq!(cfg.background_count().unwrap(), 12);

        fs::write(&json_path, r#"{"unknown": 1}"#).unwrap();
        assert!(ExperimentConfig::load(&json_path).is_err());
    }

    #[test]
    fn small_run_is_deterministic() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 1);
        assert_eq!(a.cells[0].probes.len(), 16);
        assert_eq!(a.cells[0].roc.points.len(), 101);
        let dir = tempfile::tempdir().unwrap();
        write_report(&a, dir.path()).unwrap();
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert!(summary["auc"].is_number());
        let cell = dir.path().join("eta_1.00_gamma_0.00");
        assert!(fs::read_to_string(cell.join("roc.csv")).unwrap().starts_with("beta,tpr,fpr\n"));
        assert!(cell.join("roc.svg").exists());
    }
}
