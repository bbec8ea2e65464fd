mod common;

use rand::Rng;

use qamtrack::learning::{self, WeightMatrix};
use qamtrack::pattern::BipolarPattern;
use qamtrack::recall::{
    self, AnnealSchedule, ExactSolver, RecallProblem, ReverseScheduleParams, SolverConfig, SolverKind,
};
use qamtrack::seed;

fn ground_masks(prob: &RecallProblem) -> Vec<u64> {
    recall::solve_exact(prob).unwrap().samples.iter().map(|s| s.state.to_mask()).collect()
}

fn random_problem(n: usize, rng: &mut impl Rng) -> RecallProblem {
    let p = rng.random_range(1..=n / 2);
    let pats = common::invertible_patterns(n, p, rng);
    let w = common::weights_of(&pats);
    let probe = common::random_bipolar(n, rng);
    recall::build_qamm(&w, &probe, rng.random_range(0.0..1.5)).unwrap()
}

#[test]
fn positive_scaling_keeps_ground_states() {
    let mut rng = seed::stream(31);
    for _ in 0..30 {
        let n = rng.random_range(4..=14);
        let prob = random_problem(n, &mut rng);
        let factor = rng.random_range(0.01..50.0);
        let a = recall::solve_exact(&prob).unwrap();
        let b = recall::solve_exact(&prob.scaled(factor)).unwrap();
        let masks = |r: &recall::SolveResult| r.samples.iter().map(|s| s.state.to_mask()).collect::<Vec<_>>();
        assert_eq!(masks(&a), masks(&b));
        assert!((b.min_energy() - factor * a.min_energy()).abs() <= 1e-9 * (1.0 + b.min_energy().abs()));
    }
}

#[test]
fn dominant_bias_recovers_probe() {
    let mut rng = seed::stream(32);
    for _ in 0..40 {
        let n = rng.random_range(2..=16);
        let pats = common::invertible_patterns(n, rng.random_range(1..=n / 2).max(1), &mut rng);
        let w = common::weights_of(&pats);
        let bound = (0..n).map(|i| w.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let probe = common::random_bipolar(n, &mut rng);
        let prob = recall::build_qamm(&w, &probe, 2.0 * bound * 1.001 + 1e-9).unwrap();
        assert_eq!(ground_masks(&prob), vec![probe.to_mask()]);
    }
}

#[test]
fn sample_energies_reevaluate() {
    let mut rng = seed::stream(33);
    let prob = random_problem(12, &mut rng);
    let sched = AnnealSchedule { sweeps: 50, ..AnnealSchedule::default() };
    let sa = recall::solve_sa(&prob, &sched, 20, 5).unwrap();
    let start = common::random_bipolar(12, &mut rng);
    let rev = recall::solve_reverse(&prob, &start, &sched, &ReverseScheduleParams::default(), 5, 6).unwrap();
    for s in sa.samples.iter().chain(&rev.samples) {
        assert_eq!(s.state.len(), 12);
        assert!((s.energy - recall::energy(&prob, &s.state).unwrap()).abs() <= 1e-12 * (1.0 + s.energy.abs()));
    }
}

#[test]
fn zero_bias_ground_manifold_is_flip_closed() {
    let mut rng = seed::stream(34);
    for _ in 0..10 {
        let n = rng.random_range(3..=12);
        let pats = common::invertible_patterns(n, 2.min(n / 2).max(1), &mut rng);
        let w = common::weights_of(&pats);
        let prob = recall::build_qamm(&w, &pats[0], 0.0).unwrap();
        let masks = ground_masks(&prob);
        let full = (1u64 << n) - 1;
        for m in &masks {
            assert!(masks.contains(&(!m & full)));
        }
        assert!(masks.contains(&pats[0].to_mask()));
    }
}

#[test]
fn single_pattern_probe_energy() {
    let mut rng = seed::stream(35);
    let xi = common::random_bipolar(24, &mut rng);
    let w = common::weights_of(std::slice::from_ref(&xi));
    let prob = recall::build_qamm(&w, &xi, 0.74).unwrap();
    let r = ExactSolver::default().solve(&prob).unwrap();
    assert_eq!(r.samples.len(), 1);
    assert_eq!(r.samples[0].state, xi);
    assert!((r.samples[0].energy + 24.0 * 1.74).abs() < 1e-9);
}

/// Fraction of all SA reads reaching the exact ground energy on the V = 24
/// recall suite.
#[test]
fn sa_reads_match_exact_on_v24_suite() {
    let (mut hits, mut reads) = (0usize, 0usize);
    for i in 0..20 {
        let prob = common::v24_recall_instance(i);
        let exact = recall::solve_exact(&prob).unwrap().min_energy();
        let sa = recall::solve_sa(&prob, &AnnealSchedule::default(), 100, seed::child(77, i)).unwrap();
        hits += sa.samples.iter().filter(|s| (s.energy - exact).abs() <= prob.tolerance()).count();
        reads += sa.samples.len();
    }
    let rate = hits as f64 / reads as f64;
    eprintln!("SA per-read ground-state rate {rate:.4}");
    assert!(rate >= 0.9, "rate {rate}");
}

/// Chained reverse anneals seeded one flip away from the ground state.
#[test]
fn reverse_from_one_flip_recovers_ground_state() {
    let (mut hits, mut reads) = (0usize, 0usize);
    for i in 0..20 {
        let prob = common::v24_recall_instance(100 + i);
        let exact = recall::solve_exact(&prob).unwrap();
        let ground = exact.samples[0].state.clone();
        let k = (i as usize * 7) % ground.len();
        let mut spins = ground.spins().to_vec();
        spins[k] = -spins[k];
        let start = BipolarPattern::new(spins).unwrap();
        let rev = recall::solve_reverse(
            &prob,
            &start,
            &AnnealSchedule::default(),
            &ReverseScheduleParams::default(),
            100,
            seed::child(78, i),
        )
        .unwrap();
        hits += rev.samples.iter().filter(|s| (s.energy - exact.min_energy()).abs() <= prob.tolerance()).count();
        reads += rev.samples.len();
    }
    let rate = hits as f64 / reads as f64;
    eprintln!("reverse per-read ground-state rate {rate:.4}");
    assert!(rate >= 0.95, "rate {rate}");
}

#[test]
fn cold_reverse_without_pause_keeps_stable_seed() {
    let prob = common::v24_recall_instance(3);
    let ground = recall::solve_exact(&prob).unwrap().samples[0].state.clone();
    let params = ReverseScheduleParams { s_star: 0.999_999, pause_sweeps: 0, ramp_sweeps: 1 };
    let sched = AnnealSchedule { beta_hot: 0.1, beta_cold: 1e6, sweeps: 10 };
    let rev = recall::solve_reverse(&prob, &ground, &sched, &params, 10, 1).unwrap();
    assert!(rev.samples.iter().all(|s| s.state == ground));
}

#[test]
fn dispatcher_is_deterministic() {
    let prob = common::v24_recall_instance(4);
    for kind in [SolverKind::Sa, SolverKind::Reverse] {
        let cfg = SolverConfig { kind, reads: 8, ..SolverConfig::default() };
        assert_eq!(cfg.solve(&prob, 11).unwrap(), cfg.solve(&prob, 11).unwrap());
    }
}

#[test]
fn rescale_preserves_argmin_on_projection_weights() {
    let mut rng = seed::stream(36);
    for _ in 0..20 {
        let n = rng.random_range(4..=14);
        let pats = common::invertible_patterns(n, rng.random_range(1..=n / 2), &mut rng);
        let w = common::weights_of(&pats);
        let (ws, theta) = learning::rescale(&w, 0.74).unwrap();
        assert!((ws.max_entry() - 0.75).abs() < 1e-12);
        let probe = common::random_bipolar(n, &mut rng);
        let a = recall::build_qamm(&w, &probe, 0.74).unwrap();
        let b = recall::build_qamm(&ws, &probe, theta).unwrap();
        assert_eq!(ground_masks(&a), ground_masks(&b));
    }
    assert!(learning::rescale(&WeightMatrix::zeros(3), 1.0).is_err());
}
