//! Signal/background discrimination from recall samples.
//!
//! A probe is summarized by the mean sample energy or the mean key spin.
//! Calibration runs recall on every encoded signal and records the mean and
//! population standard deviation of that statistic; a probe is labelled
//! signal when its statistic lies within `mean ± β·σ`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::PatternLibrary;
use crate::model::RecallModel;
use crate::pattern::PatternKind;
use crate::recall::{SolveResult, SolverConfig};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticMode {
    Energy,
    Key,
}

impl std::str::FromStr for StatisticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(Self::Energy),
            "key" => Ok(Self::Key),
            other => Err(Error::InvalidConfig(format!("unknown classifier {other:?}"))),
        }
    }
}

/// Mean energy or mean key spin over all samples of one recall.
pub fn probe_statistic(result: &SolveResult, mode: StatisticMode, key_index: Option<usize>) -> Result<f64> {
    if result.samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let n = result.samples.len() as f64;
    match mode {
        StatisticMode::Energy => Ok(result.samples.iter().map(|s| s.energy).sum::<f64>() / n),
        StatisticMode::Key => {
            let k = key_index.ok_or(Error::MissingKeyIndex)?;
            Ok(result.samples.iter().map(|s| f64::from(s.state.get(k))).sum::<f64>() / n)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyCalibration {
    pub mean_e: f64,
    pub sigma_e: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyCalibration {
    pub mean_k: f64,
    pub sigma_k: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Calibration {
    Energy(EnergyCalibration),
    Key(KeyCalibration),
}

impl Calibration {
    pub fn from_stats(mode: StatisticMode, stats: &[f64]) -> Result<Self> {
        let (mean, sigma) = mean_and_population_sd(stats).ok_or(Error::NoSamples)?;
        Ok(match mode {
            StatisticMode::Energy => Self::Energy(EnergyCalibration { mean_e: mean, sigma_e: sigma }),
            StatisticMode::Key => Self::Key(KeyCalibration { mean_k: mean, sigma_k: sigma }),
        })
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Energy(c) => c.mean_e,
            Self::Key(c) => c.mean_k,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Self::Energy(c) => c.sigma_e,
            Self::Key(c) => c.sigma_k,
        }
    }

    pub fn mode(&self) -> StatisticMode {
        match self {
            Self::Energy(_) => StatisticMode::Energy,
            Self::Key(_) => StatisticMode::Key,
        }
    }
}

fn mean_and_population_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Checks the classifier against the library encoding: energy needs a
/// signal-only library, keys need keyed signals and backgrounds.
pub fn check_mode(library: &PatternLibrary, mode: StatisticMode) -> Result<()> {
    if library.signal_count() == 0 {
        return Err(Error::ModeMismatch("library holds no signal patterns".into()));
    }
    match mode {
        StatisticMode::Energy if library.background_count() > 0 => Err(Error::ModeMismatch(
            "energy classification needs a signal-only encoding".into(),
        )),
        StatisticMode::Key if library.key_len() == 0 || library.background_count() == 0 => {
            Err(Error::ModeMismatch(
                "key classification needs keyed signal and background patterns".into(),
            ))
        }
        _ => Ok(()),
    }
}

/// Recalls every encoded signal value and summarizes the statistic. The
/// i-th signal uses solver seed `seed::child(seed, i)`. Returns the
/// calibration together with the per-probe statistics.
pub fn calibrate(
    library: &PatternLibrary,
    model: &RecallModel,
    solver: &SolverConfig,
    mode: StatisticMode,
    seed: u64,
) -> Result<(Calibration, Vec<f64>)> {
    check_mode(library, mode)?;
    let stats = library
        .signals()
        .enumerate()
        .map(|(i, e)| {
            let problem = model.problem(e.pattern.value())?;
            let result = solver.solve(&problem, seed::child(seed, i as u64))?;
            probe_statistic(&result, mode, Some(0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Calibration::from_stats(mode, &stats)?, stats))
}

/// Acceptance slack when the calibrated spread is zero.
pub fn epsilon_floor(mean: f64) -> f64 {
    1e-9 * mean.abs() + 1e-12
}

pub fn classify(statistic: f64, cal: &Calibration, beta: f64) -> PatternKind {
    let mean = cal.mean();
    if (statistic - mean).abs() <= beta * cal.sigma() + epsilon_floor(mean) {
        PatternKind::Signal
    } else {
        PatternKind::Background
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    fn add(&mut self, predicted: PatternKind, truth: PatternKind) {
        match (predicted, truth) {
            (PatternKind::Signal, PatternKind::Signal) => self.tp += 1,
            (PatternKind::Signal, PatternKind::Background) => self.fp += 1,
            (PatternKind::Background, PatternKind::Background) => self.tn += 1,
            (PatternKind::Background, PatternKind::Signal) => self.fn_ += 1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Signal is the positive class.
pub fn confusion(predicted: &[PatternKind], truths: &[PatternKind]) -> Result<ConfusionCounts> {
    if predicted.len() != truths.len() {
        return Err(Error::LengthMismatch { expected: truths.len(), actual: predicted.len() });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predicted.iter().zip(truths) {
        c.add(p, t);
    }
    Ok(c)
}

/// Uniform β grid, `points` values from `start` to `stop` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for BetaGrid {
    fn default() -> Self {
        Self { start: 0.0, stop: 10.0, points: 101 }
    }
}

impl BetaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 || self.start < 0.0 {
            return Err(Error::InvalidConfig("beta grid must be nonempty and nonnegative".into()));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        if !(self.stop > self.start) {
            return Err(Error::InvalidConfig("beta grid stop must exceed start".into()));
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.start + step * i as f64).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub beta: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn from_points(points: Vec<RocPoint>) -> Self {
        let auc = auc(&points);
        Self { points, auc }
    }

    /// `beta,tpr,fpr` with one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,tpr,fpr\n");
        for p in &self.points {
            writeln!(out, "{},{},{}", p.beta, p.tpr, p.fpr).unwrap();
        }
        out
    }

    /// Minimal standalone SVG plot of the curve.
    pub fn to_svg(&self) -> String {
        let size = 320.0;
        let pad = 30.0;
        let span = size - 2.0 * pad;
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let path: Vec<String> = std::iter::once((0.0, 0.0))
            .chain(pts)
            .chain(std::iter::once((1.0, 1.0)))
            .map(|(x, y)| format!("{:.2},{:.2}", pad + x * span, size - pad - y * span))
            .collect();
        format!(
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\">\n",
                "<rect x=\"{p}\" y=\"{p}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"black\"/>\n",
                "<line x1=\"{p}\" y1=\"{e}\" x2=\"{e}\" y2=\"{p}\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n",
                "<polyline fill=\"none\" stroke=\"blue\" points=\"{path}\"/>\n",
                "<text x=\"{p}\" y=\"20\" font-size=\"12\">AUC = {auc:.4}</text>\n",
                "</svg>\n"
            ),
            s = size,
            p = pad,
            w = span,
            e = size - pad,
            path = path.join(" "),
            auc = self.auc,
        )
    }
}

/// Trapezoid area under the (FPR, TPR) points. Points sharing an FPR are
/// merged into their mean TPR, then anchors (0,0) and (1,1) are added.
pub fn auc(points: &[RocPoint]) -> f64 {
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.fpr, p.tpr)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < sorted.len() {
        let fpr = sorted[i].0;
        let mut j = i;
        let mut sum = 0.0;
        while j < sorted.len() && sorted[j].0 == fpr {
            sum += sorted[j].1;
            j += 1;
        }
        merged.push((fpr, sum / (j - i) as f64));
        i = j;
    }
    merged.push((1.0, 1.0));
    merged
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// One classified probe: its statistic, true class, and the calibration of
/// the training set it was recalled against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRecord {
    pub statistic: f64,
    pub truth: PatternKind,
    pub calibration: Calibration,
}

/// ROC over probes that may come from different training sets.
pub fn roc_sweep_pooled(records: &[ProbeRecord], betas: &[f64]) -> Result<RocCurve> {
    if betas.is_empty() {
        return Err(Error::InvalidConfig("beta grid is empty".into()));
    }
    if betas.windows(2).any(|w| w[1] <= w[0]) || betas[0] < 0.0 {
        return Err(Error::InvalidConfig("beta grid must be nonnegative and strictly increasing".into()));
    }
    let truths: Vec<PatternKind> = records.iter().map(|r| r.truth).collect();
    let points = betas
        .iter()
        .map(|&beta| {
            let predicted: Vec<PatternKind> =
                records.iter().map(|r| classify(r.statistic, &r.calibration, beta)).collect();
            let c = confusion(&predicted, &truths)?;
            Ok(RocPoint { beta, tpr: c.tpr(), fpr: c.fpr() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve::from_points(points))
}

pub fn roc_sweep(
    stats: &[f64],
    truths: &[PatternKind],
    cal: &Calibration,
    betas: &[f64],
) -> Result<RocCurve> {
    if stats.len() != truths.len() {
        return Err(Error::LengthMismatch { expected: truths.len(), actual: stats.len() });
    }
    let records: Vec<ProbeRecord> = stats
        .iter()
        .zip(truths)
        .map(|(&statistic, &truth)| ProbeRecord { statistic, truth, calibration: *cal })
        .collect();
    roc_sweep_pooled(&records, betas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::BipolarPattern;
    use crate::recall::Sample;
    use PatternKind::{Background as B, Signal as S};

    fn result(samples: &[(&[i8], f64)]) -> SolveResult {
        SolveResult {
            samples: samples
                .iter()
                .map(|(s, e)| Sample { state: BipolarPattern::new(s.to_vec()).unwrap(), energy: *e })
                .collect(),
            read_seeds: vec![],
        }
    }

    fn energy_cal(mean_e: f64, sigma_e: f64) -> Calibration {
        Calibration::Energy(EnergyCalibration { mean_e, sigma_e })
    }

    #[test]
    fn statistic_examples() {
        let same: Vec<(&[i8], f64)> = vec![(&[1, -1], -3.5); 100];
        assert_eq!(probe_statistic(&result(&same), StatisticMode::Energy, None).unwrap(), -3.5);
        assert_eq!(probe_statistic(&result(&same), StatisticMode::Key, Some(0)).unwrap(), 1.0);

        let mut half: Vec<(&[i8], f64)> = vec![(&[1, -1], 0.0); 50];
        half.extend(vec![(&[-1, -1][..], 0.0); 50]);
        assert_eq!(probe_statistic(&result(&half), StatisticMode::Key, Some(0)).unwrap(), 0.0);

        let mixed = result(&[(&[1], -4.0), (&[1], -3.0), (&[1], -2.5), (&[1], 1.5)]);
        assert_eq!(probe_statistic(&mixed, StatisticMode::Energy, None).unwrap(), -2.0);

        assert!(matches!(
            probe_statistic(&mixed, StatisticMode::Key, None),
            Err(Error::MissingKeyIndex)
        ));
        assert!(matches!(
            probe_statistic(&result(&[]), StatisticMode::Energy, None),
            Err(Error::NoSamples)
        ));
    }

    #[test]
    fn population_sd() {
        let c = Calibration::from_stats(StatisticMode::Energy, &[1.0, 3.0]).unwrap();
        assert_eq!((c.mean(), c.sigma()), (2.0, 1.0));
        let single = Calibration::from_stats(StatisticMode::Key, &[0.7]).unwrap();
        assert_eq!((single.mean(), single.sigma()), (0.7, 0.0));
    }

    #[test]
    fn classify_examples() {
        let cal = energy_cal(-40.0, 2.0);
        assert_eq!(classify(-40.0, &cal, 0.0), S);
        // Acceptance window is [-46, -34].
        assert_eq!(classify(-44.0, &cal, 3.0), S);
        assert_eq!(classify(-45.0, &cal, 3.0), S);
        assert_eq!(classify(-46.0, &cal, 3.0), S);
        assert_eq!(classify(-46.5, &cal, 3.0), B);
        assert_eq!(classify(-45.0, &cal, 2.0), B);
        let flat = energy_cal(-40.0, 0.0);
        assert_eq!(classify(-39.9, &flat, 10.0), B);
        assert_eq!(classify(-40.0 + 1e-12, &flat, 0.0), S);
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[S, B], &[S, B]).unwrap();
        assert_eq!((c.tpr(), c.fpr()), (1.0, 0.0));
        let c = confusion(&[S, S, S, S], &[S, S, B, B]).unwrap();
        assert_eq!((c.tpr(), c.fpr()), (1.0, 1.0));

        let mut pred = vec![S, S, S, B];
        let mut truth = vec![S, S, S, S];
        pred.extend([S, S, B, B, B, B]);
        truth.extend([B; 6]);
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (3, 1, 2, 4));
        assert_eq!(c.tpr(), 0.75);
        assert!((c.fpr() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.total(), 10);

        let empty = confusion(&[], &[]).unwrap();
        assert_eq!((empty.tpr(), empty.fpr()), (0.0, 0.0));
        assert!(confusion(&[S], &[]).is_err());
    }

    #[test]
    fn auc_anchors() {
        for t in [0.0, 0.2, 0.5, 1.0] {
            assert!((auc(&[RocPoint { beta: 0.0, tpr: t, fpr: t }]) - 0.5).abs() < 1e-15);
        }
        assert_eq!(auc(&[RocPoint { beta: 0.0, tpr: 1.0, fpr: 0.0 }]), 1.0);
    }

    #[test]
    fn perfectly_separated_sweep() {
        let cal = energy_cal(-10.0, 1.0);
        let stats = [-10.0, -10.5, -9.8, 5.0, 8.0, 20.0];
        let truths = [S, S, S, B, B, B];
        let grid = BetaGrid::default().values().unwrap();
        let roc = roc_sweep(&stats, &truths, &cal, &grid).unwrap();
        assert_eq!(roc.points.len(), 101);
        // At β = 0 only the exact match is accepted; ties at FPR = 0 average.
        assert!(roc.auc > 0.95);
        let sep = roc_sweep(&[-10.0, 5.0], &[S, B], &energy_cal(-10.0, 0.0), &grid).unwrap();
        assert_eq!(sep.auc, 1.0);
    }

    #[test]
    fn uninformative_statistics_give_half() {
        use rand::Rng;
        let mut rng = seed::stream(77);
        let n = 10_000;
        let stats: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let truths: Vec<PatternKind> = (0..n).map(|i| if i % 2 == 0 { S } else { B }).collect();
        let cal = Calibration::from_stats(StatisticMode::Energy, &stats).unwrap();
        let grid = BetaGrid::default().values().unwrap();
        let roc = roc_sweep(&stats, &truths, &cal, &grid).unwrap();
        assert!((roc.auc - 0.5).abs() < 0.05, "auc {}", roc.auc);
    }

    #[test]
    fn grid_validation() {
        let cal = energy_cal(0.0, 1.0);
        assert!(roc_sweep(&[0.0], &[S], &cal, &[]).is_err());
        assert!(roc_sweep(&[0.0], &[S], &cal, &[1.0, 1.0]).is_err());
        assert!(BetaGrid { start: 0.0, stop: 10.0, points: 0 }.values().is_err());
        let g = BetaGrid::default().values().unwrap();
        assert_eq!((g[0], g[100]), (0.0, 10.0));
    }

    #[test]
    fn csv_and_svg() {
        let roc = RocCurve::from_points(vec![RocPoint { beta: 0.5, tpr: 0.5, fpr: 0.5 }]);
        assert_eq!(roc.to_csv(), "beta,tpr,fpr\n0.5,0.5,0.5\n");
        assert!(roc.to_svg().starts_with("<svg"));
    }
}
