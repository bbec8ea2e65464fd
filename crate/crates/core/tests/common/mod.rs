#![allow(dead_code)]

use rand::Rng;

use qamtrack::detector::{DetectorGeometry, FieldConfig, ParticleGun};
use qamtrack::learning::{self, WeightMatrix};
use qamtrack::library::{self, Encoding, PatternLibrary};
use qamtrack::model::{ModelKind, RecallModel};
use qamtrack::pattern::{self, BipolarPattern, BitPattern};
use qamtrack::recall::RecallProblem;
use qamtrack::seed;

pub fn random_bipolar<R: Rng>(n: usize, rng: &mut R) -> BipolarPattern {
    BipolarPattern::new((0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect()).unwrap()
}

/// Random distinct patterns whose covariance matrix is well conditioned.
pub fn invertible_patterns<R: Rng>(n: usize, p: usize, rng: &mut R) -> Vec<BipolarPattern> {
    loop {
        let pats: Vec<BipolarPattern> = (0..p).map(|_| random_bipolar(n, rng)).collect();
        let c = learning::covariance(&pats).unwrap();
        let eig = c.0.clone().symmetric_eigen();
        if eig.eigenvalues.iter().all(|&l| l > 1e-6) {
            return pats;
        }
    }
}

/// Simulated V = 24 signal-only library with `signals` tracks.
pub fn v24_library(signals: usize, seed_value: u64) -> PatternLibrary {
    let g = DetectorGeometry::preset("v24").unwrap();
    let field = FieldConfig::default();
    library::build_signal_library(
        &g,
        &field,
        &ParticleGun::for_geometry(&g),
        signals,
        Encoding::SignalOnlyUnkeyed,
        pattern::DEFAULT_BACKGROUND_FILL,
        &mut seed::stream(seed_value),
        1_000_000,
    )
    .unwrap()
}

/// Recall problem suite on V = 24, α_s = 1/6 libraries: instance `i` probes
/// with a noisy signal, an inefficient signal, or a fresh background.
pub fn v24_recall_instance(i: u64) -> RecallProblem {
    let lib = v24_library(4, seed::derive(1000, &[i]));
    let model = RecallModel::train(&lib, ModelKind::Qamm, 0.74, true).unwrap();
    let mut rng = seed::stream(seed::derive(2000, &[i]));
    let signal = lib.entries()[(i % 4) as usize].pattern.value().clone();
    let probe: BitPattern = match i % 3 {
        0 => pattern::apply_noise(&signal, 0.08, &mut rng).unwrap(),
        1 => pattern::apply_inefficiency(&signal, 0.9, &mut rng).unwrap(),
        _ => pattern::generate_background(24, 0.15, &lib.values(), &mut rng, 10_000).unwrap(),
    };
    model.problem(&probe).unwrap()
}

pub fn weights_of(pats: &[BipolarPattern]) -> WeightMatrix {
    learning::projection_weights(pats).unwrap()
}
