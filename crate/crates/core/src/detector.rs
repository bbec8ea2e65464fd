//! Three-plane segmented detector and analytic charged-particle propagation
//! in a uniform magnetic field.
//!
//! Coordinates: the beam runs along +z, the field points along +y, so tracks
//! bend in the x–z plane and move in a straight line along y. Lengths are in
//! meters, momenta in GeV, fields in tesla.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pattern::BitPattern;

/// Curvature constant in the `p = k * q * B * r` relation (GeV, T, m).
pub const CURVATURE_CONSTANT: f64 = 0.299_792_458;

/// Three parallel detector planes, each segmented into a `rows × cols` grid.
/// Rows run along y, columns along x; segment 0 is the lowest-x, lowest-y
/// cell of the first plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorGeometry {
    pub plane_z: [f64; 3],
    pub rows: usize,
    pub cols: usize,
    /// Transverse extent along x.
    pub width: f64,
    /// Transverse extent along y.
    pub height: f64,
}

impl DetectorGeometry {
    pub fn new(plane_z: [f64; 3], rows: usize, cols: usize, width: f64, height: f64) -> Result<Self> {
        let g = Self { plane_z, rows, cols, width, height };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidGeometry("grid must have at least one cell".into()));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidGeometry("extents must be positive".into()));
        }
        if !(self.plane_z[0] < self.plane_z[1] && self.plane_z[1] < self.plane_z[2]) {
            return Err(Error::InvalidGeometry("planes must be strictly ordered in z".into()));
        }
        Ok(())
    }

    /// Named presets `v24`, `v30`, `v36`, `v42`, `v48`, `v54`.
    pub fn preset(name: &str) -> Result<Self> {
        let (rows, cols) = match name {
            "v24" => (2, 4),
            "v30" => (2, 5),
            "v36" => (2, 6),
            "v42" => (2, 7),
            "v48" => (4, 4),
            "v54" => (3, 6),
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        Self::new([0.1, 0.2, 0.3], rows, cols, 0.4, 0.2)
    }

    pub const PRESETS: [&'static str; 6] = ["v24", "v30", "v36", "v42", "v48", "v54"];

    pub fn cells_per_plane(&self) -> usize {
        self.rows * self.cols
    }

    /// Total segment count V.
    pub fn segments(&self) -> usize {
        3 * self.cells_per_plane()
    }

    pub fn segment_index(&self, plane: usize, row: usize, col: usize) -> usize {
        debug_assert!(plane < 3 && row < self.rows && col < self.cols);
        plane * self.cells_per_plane() + row * self.cols + col
    }

    /// Inverse of [`DetectorGeometry::segment_index`].
    pub fn segment_coords(&self, index: usize) -> (usize, usize, usize) {
        let per = self.cells_per_plane();
        let plane = index / per;
        let rem = index % per;
        (plane, rem / self.cols, rem % self.cols)
    }

    /// Center of a segment as (x, y, z).
    pub fn segment_center(&self, index: usize) -> [f64; 3] {
        let (plane, row, col) = self.segment_coords(index);
        let cw = self.width / self.cols as f64;
        let rh = self.height / self.rows as f64;
        [
            -self.width / 2.0 + (col as f64 + 0.5) * cw,
            -self.height / 2.0 + (row as f64 + 0.5) * rh,
            self.plane_z[plane],
        ]
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.width / 2.0 && y.abs() <= self.height / 2.0
    }
}

/// Cell index along one axis; points on an interior boundary go to the lower cell.
fn cell_index(coord: f64, extent: f64, cells: usize) -> usize {
    let t = (coord + extent / 2.0) / (extent / cells as f64);
    let idx = t.ceil() as i64 - 1;
    idx.clamp(0, cells as i64 - 1) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    /// +1 for positrons, -1 for electrons.
    pub charge: i8,
    pub momentum: [f64; 3],
    pub origin: [f64; 3],
}

impl ParticleState {
    pub fn new(charge: i8, momentum: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if charge != 1 && charge != -1 {
            return Err(Error::InvalidParticle(format!("charge {charge}")));
        }
        if norm(momentum) <= 0.0 {
            return Err(Error::InvalidParticle("zero momentum".into()));
        }
        Ok(Self { charge, momentum, origin })
    }

    pub fn momentum_magnitude(&self) -> f64 {
        norm(self.momentum)
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Uniform field along +y.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub b_tesla: f64,
}

impl FieldConfig {
    pub fn new(b_tesla: f64) -> Result<Self> {
        if !(b_tesla >= 0.0) {
            return Err(Error::InvalidGeometry(format!("field {b_tesla} T must be >= 0")));
        }
        Ok(Self { b_tesla })
    }
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { b_tesla: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub plane: usize,
    pub x: f64,
    pub y: f64,
    /// Momentum at the crossing point.
    pub momentum: [f64; 3],
}

/// Plane crossings, ordered by plane, at most one per plane.
pub type HitList = Vec<Hit>;

/// Propagates a particle through the three planes along a circular arc
/// (straight line when `B = 0`). Planes the track misses, either by leaving
/// the transverse acceptance or by curling back, are omitted.
pub fn propagate(s: &ParticleState, field: &FieldConfig, g: &DetectorGeometry) -> HitList {
    let [px, py, pz] = s.momentum;
    let pt = (px * px + pz * pz).sqrt();
    let mut hits = Vec::with_capacity(3);
    if pt == 0.0 || pz <= 0.0 {
        return hits;
    }
    // Direction angle in the x–z plane: (cos ψ, sin ψ) = (px, pz) / pt.
    let psi0 = pz.atan2(px);
    let kappa = f64::from(s.charge) * CURVATURE_CONSTANT * field.b_tesla / pt;
    let dy_dl = py / pt;

    for (plane, &zp) in g.plane_z.iter().enumerate() {
        let dz = zp - s.origin[2];
        if dz <= 0.0 {
            continue;
        }
        let (lambda, psi) = if kappa == 0.0 {
            (dz / psi0.sin(), psi0)
        } else {
            let c = psi0.cos() - kappa * dz;
            if !(-1.0..=1.0).contains(&c) {
                continue;
            }
            let psi = c.acos();
            ((psi - psi0) / kappa, psi)
        };
        let x = if kappa == 0.0 {
            s.origin[0] + lambda * psi0.cos()
        } else {
            s.origin[0] + (psi.sin() - psi0.sin()) / kappa
        };
        let y = s.origin[1] + lambda * dy_dl;
        if !g.contains(x, y) {
            continue;
        }
        hits.push(Hit { plane, x, y, momentum: [pt * psi.cos(), py, pt * psi.sin()] });
    }
    hits
}

/// Maps hits to segment bits. Returns the pattern and the number of hits
/// skipped for lying outside the plane extents.
pub fn digitize(hits: &[Hit], g: &DetectorGeometry) -> (BitPattern, usize) {
    let mut bits = vec![false; g.segments()];
    let mut skipped = 0;
    for h in hits {
        if h.plane >= 3 || !g.contains(h.x, h.y) {
            skipped += 1;
            continue;
        }
        let col = cell_index(h.x, g.width, g.cols);
        let row = cell_index(h.y, g.height, g.rows);
        bits[g.segment_index(h.plane, row, col)] = true;
    }
    if skipped > 0 {
        log::warn!("digitize skipped {skipped} out-of-acceptance hits");
    }
    (BitPattern::new(bits).expect("geometry has segments"), skipped)
}

/// Generator ranges for the particle gun.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleGun {
    /// Maximum polar angle from the +z axis, degrees.
    pub half_width_deg: f64,
    pub momentum_gev: f64,
    pub origin_z: f64,
    /// Origins are drawn uniformly from `[-origin_x, origin_x] × [-origin_y, origin_y]`.
    pub origin_x: f64,
    pub origin_y: f64,
}

impl ParticleGun {
    pub fn for_geometry(g: &DetectorGeometry) -> Self {
        Self {
            half_width_deg: 5.0,
            momentum_gev: 0.5,
            origin_z: 0.0,
            origin_x: g.width / 2.0,
            origin_y: g.height / 2.0,
        }
    }
}

/// Samples a particle: polar angle uniform in `[0, half_width]`, azimuth
/// uniform, charge ±1 with equal probability.
pub fn sample_particle<R: Rng + ?Sized>(gun: &ParticleGun, rng: &mut R) -> ParticleState {
    let theta = gun.half_width_deg.to_radians() * rng.random::<f64>();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    let charge = if rng.random_bool(0.5) { 1 } else { -1 };
    let x = gun.origin_x * (2.0 * rng.random::<f64>() - 1.0);
    let y = gun.origin_y * (2.0 * rng.random::<f64>() - 1.0);
    let p = gun.momentum_gev;
    ParticleState {
        charge,
        momentum: [p * theta.sin() * phi.cos(), p * theta.sin() * phi.sin(), p * theta.cos()],
        origin: [x, y, gun.origin_z],
    }
}

/// A perfect signal pattern together with the particle that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTrack {
    pub particle: ParticleState,
    pub pattern: BitPattern,
}

/// Re-runs the simulation for a stored particle.
pub fn regenerate(particle: &ParticleState, field: &FieldConfig, g: &DetectorGeometry) -> BitPattern {
    digitize(&propagate(particle, field, g), g).0
}

/// Samples `count` particles whose digitized patterns are pairwise distinct
/// and hit every plane exactly once.
pub fn sample_signal_tracks<R: Rng + ?Sized>(
    g: &DetectorGeometry,
    field: &FieldConfig,
    gun: &ParticleGun,
    count: usize,
    rng: &mut R,
    max_tries: usize,
) -> Result<Vec<SignalTrack>> {
    if count == 0 {
        return Err(Error::InvalidLibrary("signal count must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    let mut tracks = Vec::with_capacity(count);
    for _ in 0..max_tries {
        let particle = sample_particle(gun, rng);
        let hits = propagate(&particle, field, g);
        if hits.len() != 3 {
            continue;
        }
        let (pattern, _) = digitize(&hits, g);
        if seen.insert(pattern.clone()) {
            tracks.push(SignalTrack { particle, pattern });
            if tracks.len() == count {
                return Ok(tracks);
            }
        }
    }
    Err(Error::RejectionExhausted { tries: max_tries })
}
