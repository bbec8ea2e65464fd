//! Straight-line Hough transform, peak finding and template-bank assignment.
//!
//! φ bins are centred on multiples of the bin width starting at −90°, so
//! with 10° bins the centres are −90°, −80°, …, 80°. ρ bins are centred on
//! integer multiples of the ρ width.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::DetectorGeometry;
use crate::error::{Error, Result};
use crate::library::PatternLibrary;
use crate::pattern::BitPattern;

/// Detector metres per ρ unit.
pub const DEFAULT_RHO_UNIT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoughBinning {
    pub phi_bin_deg: f64,
    pub rho_bin: f64,
    /// Half-range of ρ; bins cover at least [−rho_max, rho_max].
    pub rho_max: f64,
}

impl Default for HoughBinning {
    fn default() -> Self {
        Self { phi_bin_deg: 10.0, rho_bin: 1.0, rho_max: 10.0 }
    }
}

impl HoughBinning {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi_bin_deg > 0.0 && self.phi_bin_deg <= 180.0) {
            return Err(Error::InvalidHough(format!("phi bin {} must lie in (0, 180]", self.phi_bin_deg)));
        }
        let n = 180.0 / self.phi_bin_deg;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidHough(format!("phi bin {} does not divide 180", self.phi_bin_deg)));
        }
        if !(self.rho_bin > 0.0 && self.rho_bin.is_finite()) {
            return Err(Error::InvalidHough(format!("rho bin {} must be positive", self.rho_bin)));
        }
        if !(self.rho_max >= 0.0 && self.rho_max.is_finite()) {
            return Err(Error::InvalidHough(format!("rho max {} must be nonnegative", self.rho_max)));
        }
        Ok(())
    }

    pub fn phi_bins(&self) -> usize {
        (180.0 / self.phi_bin_deg).round() as usize
    }

    pub fn phi_center(&self, i: usize) -> f64 {
        -90.0 + self.phi_bin_deg * i as f64
    }

    pub fn phi_centers(&self) -> Vec<f64> {
        (0..self.phi_bins()).map(|i| self.phi_center(i)).collect()
    }

    /// Number of ρ bins on each side of the zero bin.
    pub fn rho_half_bins(&self) -> usize {
        (self.rho_max / self.rho_bin + 0.5).floor() as usize
    }

    /// Signed ρ bin number of a value (0 is the bin centred on zero).
    pub fn rho_bin_of(&self, rho: f64) -> i64 {
        (rho / self.rho_bin + 0.5).floor() as i64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoughAccumulator {
    binning: HoughBinning,
    half: usize,
    counts: Vec<u32>,
}

impl HoughAccumulator {
    pub fn binning(&self) -> &HoughBinning {
        &self.binning
    }

    pub fn phi_bins(&self) -> usize {
        self.binning.phi_bins()
    }

    pub fn rho_bins(&self) -> usize {
        2 * self.half + 1
    }

    pub fn rho_center(&self, j: usize) -> f64 {
        (j as i64 - self.half as i64) as f64 * self.binning.rho_bin
    }

    pub fn count(&self, phi_index: usize, rho_index: usize) -> u32 {
        self.counts[phi_index * self.rho_bins() + rho_index]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Bin indices holding a (φ, ρ) value, if inside the grid.
    pub fn locate(&self, phi_deg: f64, rho: f64) -> Option<(usize, usize)> {
        let b = &self.binning;
        let i = ((phi_deg + 90.0) / b.phi_bin_deg + 0.5).floor();
        let j = b.rho_bin_of(rho) + self.half as i64;
        if i < 0.0 || i as usize >= self.phi_bins() || j < 0 || j as usize >= self.rho_bins() {
            return None;
        }
        Some((i as usize, j as usize))
    }

    /// `phi,rho,count` for every bin, φ-major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi,rho,count\n");
        for i in 0..self.phi_bins() {
            for j in 0..self.rho_bins() {
                writeln!(out, "{},{},{}", self.binning.phi_center(i), self.rho_center(j), self.count(i, j))
                    .unwrap();
            }
        }
        out
    }
}

/// Votes every point into each φ column. Points whose ρ falls outside the
/// configured range widen it, with a warning.
pub fn accumulate(points: &[(f64, f64)], binning: &HoughBinning) -> Result<HoughAccumulator> {
    binning.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidHough("no points to transform".into()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidHough("point coordinates must be finite".into()));
    }
    let trig: Vec<(f64, f64)> = binning
        .phi_centers()
        .iter()
        .map(|p| {
            let r = p.to_radians();
            (r.cos(), r.sin())
        })
        .collect();
    let n_phi = trig.len();
    let bins: Vec<i64> = points
        .par_iter()
        .flat_map_iter(|&(x, y)| trig.iter().map(move |&(c, s)| binning.rho_bin_of(x * c + y * s)))
        .collect();

    let configured = binning.rho_half_bins();
    let needed = bins.iter().map(|b| b.unsigned_abs() as usize).max().unwrap_or(0);
    let mut binning = *binning;
    let half = if needed > configured {
        binning.rho_max = needed as f64 * binning.rho_bin;
        log::warn!("rho range extended to ±{} to cover all points", binning.rho_max);
        needed
    } else {
        configured
    };
    let n_rho = 2 * half + 1;

    let counts = bins
        .par_chunks(n_phi)
        .fold(
            || vec![0u32; n_phi * n_rho],
            |mut grid, row| {
                for (i, &b) in row.iter().enumerate() {
                    grid[i * n_rho + (b + half as i64) as usize] += 1;
                }
                grid
            },
        )
        .reduce(
            || vec![0u32; n_phi * n_rho],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(HoughAccumulator { binning, half, counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoughPeak {
    pub phi: f64,
    pub rho: f64,
    pub votes: u32,
}

/// Highest-vote bin. Ties go to the smallest |φ|, then the smallest |ρ|,
/// then the lowest bin index.
pub fn find_peak(acc: &HoughAccumulator) -> HoughPeak {
    let n_rho = acc.rho_bins();
    let key = |idx: usize| {
        let (i, j) = (idx / n_rho, idx % n_rho);
        let phi = acc.binning.phi_center(i);
        let rho = acc.rho_center(j);
        (acc.counts[idx], phi, rho)
    };
    let best = (0..acc.counts.len())
        .min_by(|&a, &b| {
            let (ca, pa, ra) = key(a);
            let (cb, pb, rb) = key(b);
            cb.cmp(&ca)
                .then(pa.abs().total_cmp(&pb.abs()))
                .then(ra.abs().total_cmp(&rb.abs()))
                .then(a.cmp(&b))
        })
        .expect("accumulator has at least one bin");
    let (votes, phi, rho) = key(best);
    HoughPeak { phi, rho, votes }
}

/// Rectangular partition of (φ, ρ) space into template banks. Bank index
/// is `iφ · n_rho + iρ` with cells counted from the lower-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankGrid {
    pub phi_min: f64,
    pub rho_min: f64,
    pub phi_cell: f64,
    pub rho_cell: f64,
    pub n_phi: usize,
    pub n_rho: usize,
}

impl BankGrid {
    pub fn new(phi_min: f64, rho_min: f64, phi_cell: f64, rho_cell: f64, n_phi: usize, n_rho: usize) -> Result<Self> {
        if !(phi_cell > 0.0 && rho_cell > 0.0) || n_phi == 0 || n_rho == 0 {
            return Err(Error::InvalidHough("bank cells must be positive and nonempty".into()));
        }
        Ok(Self { phi_min, rho_min, phi_cell, rho_cell, n_phi, n_rho })
    }

    /// Smallest grid of the given cell sizes anchored at the accumulator's
    /// lower bin edges and covering every bin.
    pub fn covering(acc: &HoughAccumulator, phi_cell: f64, rho_cell: f64) -> Result<Self> {
        let b = acc.binning();
        let phi_min = -90.0 - b.phi_bin_deg / 2.0;
        let rho_min = -(acc.half as f64 + 0.5) * b.rho_bin;
        let phi_span = acc.phi_bins() as f64 * b.phi_bin_deg;
        let rho_span = acc.rho_bins() as f64 * b.rho_bin;
        let cells = |span: f64, cell: f64| ((span / cell) - 1e-9).ceil().max(1.0) as usize;
        Self::new(
            phi_min,
            rho_min,
            phi_cell,
            rho_cell,
            cells(phi_span, phi_cell),
            cells(rho_span, rho_cell),
        )
    }

    pub fn len(&self) -> usize {
        self.n_phi * self.n_rho
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn assign_bank(peak: &HoughPeak, grid: &BankGrid) -> Result<usize> {
    let i = ((peak.phi - grid.phi_min) / grid.phi_cell).floor();
    let j = ((peak.rho - grid.rho_min) / grid.rho_cell).floor();
    if i < 0.0 || j < 0.0 || i as usize >= grid.n_phi || j as usize >= grid.n_rho {
        return Err(Error::PeakOutsideGrid { phi: peak.phi, rho: peak.rho });
    }
    Ok(i as usize * grid.n_rho + j as usize)
}

/// Hit points of a detector pattern in the bending plane, as
/// (z, x) segment centres divided by `rho_unit`.
pub fn pattern_points(pattern: &BitPattern, g: &DetectorGeometry, rho_unit: f64) -> Result<Vec<(f64, f64)>> {
    if pattern.len() != g.segments() {
        return Err(Error::LengthMismatch { expected: g.segments(), actual: pattern.len() });
    }
    Ok((0..pattern.len())
        .filter(|&i| pattern.get(i))
        .map(|i| {
            let [x, _, z] = g.segment_center(i);
            (z / rho_unit, x / rho_unit)
        })
        .collect())
}

/// Splits a library's signal entries into banks by the Hough peak of each
/// signal's hits. Values are entry indices into the library.
pub fn bank_library(
    library: &PatternLibrary,
    g: &DetectorGeometry,
    binning: &HoughBinning,
    grid: &BankGrid,
    rho_unit: f64,
) -> Result<BTreeMap<usize, Vec<usize>>> {
    let mut banks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (idx, e) in library.entries().iter().enumerate() {
        let points = pattern_points(e.pattern.value(), g, rho_unit)?;
        if points.is_empty() {
            continue;
        }
        let peak = find_peak(&accumulate(&points, binning)?);
        banks.entry(assign_bank(&peak, grid)?).or_default().push(idx);
    }
    Ok(banks)
}
