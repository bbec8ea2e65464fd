//! Associative-memory recall as Ising ground-state search.
//!
//! Energies use the full quadratic form
//! `E(s) = -Σ_ij W_ij s_i s_j - Σ_i h_i s_i`, diagonal included. Because
//! `s_i² = 1` the diagonal only adds the constant `-trace(W)`, so the solvers
//! work with off-diagonal local fields and add the constant back.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::WeightMatrix;
use crate::pattern::BipolarPattern;
use crate::seed;

/// Ising instance built from a weight matrix and a probe.
#[derive(Clone, Debug, PartialEq)]
pub struct RecallProblem {
    couplings: WeightMatrix,
    biases: Vec<f64>,
    theta: f64,
    masked: Vec<usize>,
}

impl RecallProblem {
    /// Builds a problem from explicit biases (no masking).
    pub fn from_parts(couplings: WeightMatrix, biases: Vec<f64>) -> Result<Self> {
        if biases.len() != couplings.n() {
            return Err(Error::LengthMismatch { expected: couplings.n(), actual: biases.len() });
        }
        Ok(Self { couplings, biases, theta: f64::NAN, masked: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.couplings.n()
    }

    pub fn couplings(&self) -> &WeightMatrix {
        &self.couplings
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Indices that carry no probe bias (the key bits of a content-addressable recall).
    pub fn masked(&self) -> &[usize] {
        &self.masked
    }

    /// Multiplies couplings and biases by a positive factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            couplings: self.couplings.scaled(factor),
            biases: self.biases.iter().map(|h| h * factor).collect(),
            theta: self.theta * factor,
            masked: self.masked.clone(),
        }
    }

    /// Sum of absolute couplings and biases, used to set energy tolerances.
    fn energy_scale(&self) -> f64 {
        self.couplings.entries().iter().map(|w| w.abs()).sum::<f64>()
            + self.biases.iter().map(|h| h.abs()).sum::<f64>()
    }

    /// Absolute tolerance for comparing energies of this problem.
    pub fn tolerance(&self) -> f64 {
        1e-9 * (1.0 + self.energy_scale())
    }
}

/// Probe-biased recall over all N indices: `h_i = θ χ_i`.
pub fn build_qamm(w: &WeightMatrix, probe: &BipolarPattern, theta: f64) -> Result<RecallProblem> {
    if probe.len() != w.n() {
        return Err(Error::LengthMismatch { expected: w.n(), actual: probe.len() });
    }
    Ok(RecallProblem {
        couplings: w.clone(),
        biases: probe.spins().iter().map(|&s| theta * f64::from(s)).collect(),
        theta,
        masked: Vec::new(),
    })
}

/// Value-biased recall: the first `key_len` indices get zero bias and the
/// remaining V indices get `θ v_i`.
pub fn build_qcam(
    w: &WeightMatrix,
    probe_value: &BipolarPattern,
    theta: f64,
    key_len: usize,
) -> Result<RecallProblem> {
    if key_len + probe_value.len() != w.n() {
        return Err(Error::LengthMismatch { expected: w.n().saturating_sub(key_len), actual: probe_value.len() });
    }
    let biases = std::iter::repeat_n(0.0, key_len)
        .chain(probe_value.spins().iter().map(|&s| theta * f64::from(s)))
        .collect();
    Ok(RecallProblem { couplings: w.clone(), biases, theta, masked: (0..key_len).collect() })
}

pub fn energy(prob: &RecallProblem, s: &BipolarPattern) -> Result<f64> {
    if s.len() != prob.n() {
        return Err(Error::LengthMismatch { expected: prob.n(), actual: s.len() });
    }
    Ok(energy_f64(prob, &s.as_f64()))
}

fn energy_f64(prob: &RecallProblem, s: &[f64]) -> f64 {
    let bias: f64 = prob.biases.iter().zip(s).map(|(h, x)| h * x).sum();
    -prob.couplings.quadratic_form(s) - bias
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub state: BipolarPattern,
    pub energy: f64,
}

/// Solver output: one sample per read (annealers) or one per ground state (exact).
#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub samples: Vec<Sample>,
    /// Per-read stream seeds; empty for the exact solver.
    pub read_seeds: Vec<u64>,
}

impl SolveResult {
    pub fn min_energy(&self) -> f64 {
        self.samples.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min)
    }

    pub fn best(&self) -> Option<&Sample> {
        self.samples.iter().min_by(|a, b| a.energy.total_cmp(&b.energy))
    }

    /// Fraction of samples within `tol` of `target`.
    pub fn hit_rate(&self, target: f64, tol: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let hits = self.samples.iter().filter(|s| (s.energy - target).abs() <= tol).count();
        hits as f64 / self.samples.len() as f64
    }
}

/// Default spin-count cap for exhaustive enumeration.
pub const EXACT_CAP: usize = 28;
/// Default cap on the number of stored degenerate ground states.
pub const MAX_GROUND_STATES: usize = 1 << 16;
const RESYNC_PERIOD: u64 = 1 << 16;
const PREFIX_BITS: usize = 6;

/// Off-diagonal couplings and biases laid out for the sweep kernels.
struct Kernel {
    n: usize,
    off: Vec<f64>,
    h: Vec<f64>,
    trace: f64,
}

impl Kernel {
    fn new(prob: &RecallProblem) -> Self {
        let n = prob.n();
        let mut off = prob.couplings.entries().to_vec();
        for i in 0..n {
            off[i * n + i] = 0.0;
        }
        Self { n, off, h: prob.biases.clone(), trace: prob.couplings.trace() }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.off[i * self.n..(i + 1) * self.n]
    }

    fn fields(&self, s: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(s).map(|(w, x)| w * x).sum()).collect()
    }

    fn energy(&self, s: &[f64], f: &[f64]) -> f64 {
        -s.iter().zip(f).map(|(x, y)| x * y).sum::<f64>()
            - self.trace
            - self.h.iter().zip(s).map(|(h, x)| h * x).sum::<f64>()
    }

    #[inline]
    fn flip_delta(&self, s: &[f64], f: &[f64], k: usize) -> f64 {
        s[k] * (4.0 * f[k] + 2.0 * self.h[k])
    }

    #[inline]
    fn flip(&self, s: &mut [f64], f: &mut [f64], k: usize) {
        let c = -2.0 * s[k];
        for (fj, w) in f.iter_mut().zip(self.row(k)) {
            *fj += c * w;
        }
        s[k] = -s[k];
    }
}

fn mask_to_spins(mask: u64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

struct ChunkResult {
    best: f64,
    ground: Vec<u64>,
    max_drift: f64,
}

fn enumerate_chunk(
    kernel: &Kernel,
    prefix: u64,
    low_bits: usize,
    tol: f64,
    max_ground: usize,
) -> Result<ChunkResult> {
    let n = kernel.n;
    let mut mask = prefix << low_bits;
    let mut s = mask_to_spins(mask, n);
    let mut f = kernel.fields(&s);
    let mut e = kernel.energy(&s, &f);
    let mut best = e;
    let mut ground = vec![mask];
    let mut max_drift = 0.0f64;
    for step in 1..(1u64 << low_bits) {
        let k = step.trailing_zeros() as usize;
        e += kernel.flip_delta(&s, &f, k);
        kernel.flip(&mut s, &mut f, k);
        mask ^= 1 << k;
        if step % RESYNC_PERIOD == 0 {
            f = kernel.fields(&s);
            let exact = kernel.energy(&s, &f);
            max_drift = max_drift.max((exact - e).abs());
            e = exact;
        }
        if e < best - tol {
            best = e;
            ground.clear();
            ground.push(mask);
        } else if e <= best + tol {
            best = best.min(e);
            ground.push(mask);
            if ground.len() > max_ground {
                return Err(Error::GroundManifoldTooLarge(max_ground));
            }
        }
    }
    let exact = kernel.energy(&s, &kernel.fields(&s));
    max_drift = max_drift.max((exact - e).abs());
    Ok(ChunkResult { best, ground, max_drift })
}

/// Exhaustive ground-state search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactSolver {
    pub cap: usize,
    pub max_ground_states: usize,
}

impl Default for ExactSolver {
    fn default() -> Self {
        Self { cap: EXACT_CAP, max_ground_states: MAX_GROUND_STATES }
    }
}

/// Diagnostics from an exact enumeration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactStats {
    pub states_visited: u64,
    /// Largest gap between the incremental energy and a full recomputation.
    pub max_drift: f64,
}

impl ExactSolver {
    pub fn solve(&self, prob: &RecallProblem) -> Result<SolveResult> {
        self.solve_with_stats(prob).map(|(r, _)| r)
    }

    /// Enumerates all 2^N states with single-flip Gray-code updates and
    /// returns every state at the minimum energy, sorted by state mask.
    pub fn solve_with_stats(&self, prob: &RecallProblem) -> Result<(SolveResult, ExactStats)> {
        let n = prob.n();
        if n > self.cap || n > 63 {
            return Err(Error::TooManySpins { n, cap: self.cap.min(63) });
        }
        let kernel = Kernel::new(prob);
        let tol = prob.tolerance();
        let prefix_bits = PREFIX_BITS.min(n - 1);
        let low_bits = n - prefix_bits;
        let chunks: Vec<ChunkResult> = (0..1u64 << prefix_bits)
            .into_par_iter()
            .map(|prefix| enumerate_chunk(&kernel, prefix, low_bits, tol, self.max_ground_states))
            .collect::<Result<_>>()?;

        let best = chunks.iter().map(|c| c.best).fold(f64::INFINITY, f64::min);
        let max_drift = chunks.iter().map(|c| c.max_drift).fold(0.0, f64::max);
        let mut candidates: Vec<(u64, f64)> = chunks
            .iter()
            .filter(|c| c.best <= best + 2.0 * tol)
            .flat_map(|c| c.ground.iter().copied())
            .map(|m| (m, energy_f64(prob, &mask_to_spins(m, n))))
            .collect();
        let exact_min = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        candidates.retain(|c| c.1 <= exact_min + tol);
        if candidates.len() > self.max_ground_states {
            return Err(Error::GroundManifoldTooLarge(self.max_ground_states));
        }
        candidates.sort_by_key(|c| c.0);
        let samples = candidates
            .into_iter()
            .map(|(m, energy)| Sample { state: BipolarPattern::from_mask(m, n), energy })
            .collect();
        let stats = ExactStats { states_visited: 1u64 << n, max_drift };
        Ok((SolveResult { samples, read_seeds: Vec::new() }, stats))
    }
}

pub fn solve_exact(prob: &RecallProblem) -> Result<SolveResult> {
    ExactSolver::default().solve(prob)
}

/// Geometric inverse-temperature ladder for forward annealing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSchedule {
    pub sweeps: usize,
    pub beta_hot: f64,
    pub beta_cold: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { sweeps: 1000, beta_hot: 0.1, beta_cold: 10.0 }
    }
}

impl AnnealSchedule {
    pub fn new(sweeps: usize, beta_hot: f64, beta_cold: f64) -> Result<Self> {
        let s = Self { sweeps, beta_hot, beta_cold };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidSchedule("sweeps must be at least 1".into()));
        }
        if !(self.beta_hot > 0.0 && self.beta_hot < self.beta_cold && self.beta_cold.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_hot < beta_cold < inf, got [{}, {}]",
                self.beta_hot, self.beta_cold
            )));
        }
        Ok(())
    }

    /// One β per sweep, from `beta_hot` to `beta_cold` inclusive.
    pub fn betas(&self) -> Vec<f64> {
        geometric_ramp(self.beta_hot, self.beta_cold, self.sweeps, true)
    }

    /// β at normalized schedule position `s` (0 = hottest, 1 = coldest).
    pub fn beta_at(&self, s: f64) -> f64 {
        self.beta_hot * (self.beta_cold / self.beta_hot).powf(s)
    }
}

/// `steps` geometric points from `from` to `to`. With `include_start` the
/// first point is `from`; otherwise the ramp starts one step past it. The
/// last point is always `to`.
fn geometric_ramp(from: f64, to: f64, steps: usize, include_start: bool) -> Vec<f64> {
    if steps == 0 {
        return Vec::new();
    }
    let ratio = (to / from).ln();
    let (offset, denom) = if include_start {
        (0.0, (steps - 1).max(1) as f64)
    } else {
        (1.0, steps as f64)
    };
    (0..steps)
        .map(|k| {
            if include_start && steps == 1 {
                to
            } else {
                from * ((k as f64 + offset) / denom * ratio).exp()
            }
        })
        .collect()
}

/// Reverse-anneal protocol: ramp out to `s_star`, hold, ramp back.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReverseScheduleParams {
    pub s_star: f64,
    pub pause_sweeps: usize,
    pub ramp_sweeps: usize,
}

impl Default for ReverseScheduleParams {
    fn default() -> Self {
        Self { s_star: 0.5, pause_sweeps: 1000, ramp_sweeps: 100 }
    }
}

impl ReverseScheduleParams {
    pub fn new(s_star: f64, pause_sweeps: usize, ramp_sweeps: usize) -> Result<Self> {
        let p = Self { s_star, pause_sweeps, ramp_sweeps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_star > 0.0 && self.s_star < 1.0) {
            return Err(Error::InvalidSchedule(format!("s* = {} must lie in (0, 1)", self.s_star)));
        }
        Ok(())
    }

    /// β per sweep for one reverse anneal under the given β range.
    pub fn betas(&self, range: &AnnealSchedule) -> Vec<f64> {
        let turn = range.beta_at(self.s_star);
        let mut betas = geometric_ramp(range.beta_cold, turn, self.ramp_sweeps, false);
        betas.extend(std::iter::repeat_n(turn, self.pause_sweeps));
        betas.extend(geometric_ramp(turn, range.beta_cold, self.ramp_sweeps, false));
        betas
    }
}

fn metropolis<R: Rng + ?Sized>(kernel: &Kernel, s: &mut [f64], betas: &[f64], rng: &mut R) {
    let mut f = kernel.fields(s);
    for &beta in betas {
        for k in 0..kernel.n {
            let de = kernel.flip_delta(s, &f, k);
            if de <= 0.0 || rng.random::<f64>() < (-beta * de).exp() {
                kernel.flip(s, &mut f, k);
            }
        }
    }
}

fn spins_to_pattern(s: &[f64]) -> BipolarPattern {
    BipolarPattern::new(s.iter().map(|&x| if x > 0.0 { 1 } else { -1 }).collect())
        .expect("non-empty spin vector")
}

fn sample_from(prob: &RecallProblem, s: &[f64]) -> Sample {
    let state = spins_to_pattern(s);
    Sample { energy: energy_f64(prob, s), state }
}

/// Independent single-spin-flip Metropolis anneals from uniform random
/// starts. Read `r` uses the stream `seed::child(seed, r)`.
pub fn solve_sa(
    prob: &RecallProblem,
    sched: &AnnealSchedule,
    reads: usize,
    seed: u64,
) -> Result<SolveResult> {
    sched.validate()?;
    if reads == 0 {
        return Err(Error::InvalidSchedule("reads must be at least 1".into()));
    }
    let kernel = Kernel::new(prob);
    let betas = sched.betas();
    let read_seeds: Vec<u64> = (0..reads as u64).map(|r| seed::child(seed, r)).collect();
    let samples = read_seeds
        .par_iter()
        .map(|&rs| {
            let mut rng = seed::stream(rs);
            let mut s: Vec<f64> =
                (0..kernel.n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            metropolis(&kernel, &mut s, &betas, &mut rng);
            sample_from(prob, &s)
        })
        .collect();
    Ok(SolveResult { samples, read_seeds })
}

/// Chained reverse anneals: read 0 starts from `seed_state`, every later
/// read starts from the previous read's final state.
pub fn solve_reverse(
    prob: &RecallProblem,
    seed_state: &BipolarPattern,
    range: &AnnealSchedule,
    params: &ReverseScheduleParams,
    reads: usize,
    seed: u64,
) -> Result<SolveResult> {
    range.validate()?;
    params.validate()?;
    if seed_state.len() != prob.n() {
        return Err(Error::LengthMismatch { expected: prob.n(), actual: seed_state.len() });
    }
    if reads == 0 {
        return Err(Error::InvalidSchedule("reads must be at least 1".into()));
    }
    let kernel = Kernel::new(prob);
    let betas = params.betas(range);
    let mut s = seed_state.as_f64();
    let mut samples = Vec::with_capacity(reads);
    let mut read_seeds = Vec::with_capacity(reads);
    for r in 0..reads as u64 {
        let rs = seed::child(seed, r);
        metropolis(&kernel, &mut s, &betas, &mut seed::stream(rs));
        samples.push(sample_from(prob, &s));
        read_seeds.push(rs);
    }
    Ok(SolveResult { samples, read_seeds })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Sa,
    Reverse,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "sa" => Ok(Self::Sa),
            "reverse" => Ok(Self::Reverse),
            other => Err(Error::InvalidConfig(format!("unknown solver {other:?}"))),
        }
    }
}

/// Solver selection plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub reads: usize,
    pub schedule: AnnealSchedule,
    pub reverse: ReverseScheduleParams,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Sa,
            reads: 100,
            schedule: AnnealSchedule::default(),
            reverse: ReverseScheduleParams::default(),
        }
    }
}

impl SolverConfig {
    pub fn exact() -> Self {
        Self { kind: SolverKind::Exact, ..Self::default() }
    }

    /// Runs the configured solver. The reverse solver is seeded by a single
    /// forward anneal on its own stream.
    pub fn solve(&self, prob: &RecallProblem, seed: u64) -> Result<SolveResult> {
        match self.kind {
            SolverKind::Exact => solve_exact(prob),
            SolverKind::Sa => solve_sa(prob, &self.schedule, self.reads, seed),
            SolverKind::Reverse => {
                let forward = solve_sa(prob, &self.schedule, 1, seed::child(seed, u64::MAX))?;
                let start = forward.samples[0].state.clone();
                solve_reverse(prob, &start, &self.schedule, &self.reverse, self.reads, seed)
            }
        }
    }
}
