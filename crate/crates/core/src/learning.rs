//! Projection-rule learning.
//!
//! For p bipolar patterns of length N collected as the columns of Ξ (N × p),
//! the covariance is C = ΞᵀΞ / N and the weights are W = Ξ C⁺ Ξᵀ / N, the
//! orthogonal projector onto the span of the stored patterns. The bipartite
//! variant keeps only the key↔value blocks of W.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pattern::BipolarPattern;

/// Relative eigenvalue cutoff used by [`pseudo_inverse`] in the learning rules.
pub const PINV_TOLERANCE: f64 = 1e-10;

/// Symmetric p × p pattern overlap matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix(pub DMatrix<f64>);

/// Dense symmetric N × N coupling matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    entries: Vec<f64>,
    bipartite: bool,
    key_len: usize,
}

impl WeightMatrix {
    /// Wraps a row-major matrix; fails if it is not square.
    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n || n == 0 {
            return Err(Error::LengthMismatch { expected: n * n, actual: entries.len() });
        }
        Ok(Self { n, entries, bipartite: false, key_len: 0 })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0.0; n * n], bipartite: false, key_len: 0 }
    }

    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(m[(i, j)]);
            }
        }
        Self { n, entries, bipartite: false, key_len: 0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_bipartite(&self) -> bool {
        self.bipartite
    }

    /// Number of leading key indices (only meaningful for bipartite weights).
    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { entries: self.entries.iter().map(|w| w * factor).collect(), ..self.clone() }
    }

    /// Quadratic form sᵀ W s over the full matrix, diagonal included.
    pub fn quadratic_form(&self, s: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| s[i] * self.row(i).iter().zip(s).map(|(w, x)| w * x).sum::<f64>())
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for (j, w) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{w:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn pattern_matrix(patterns: &[BipolarPattern]) -> Result<DMatrix<f64>> {
    let first = patterns.first().ok_or(Error::NoSamples)?;
    let n = first.len();
    for p in patterns {
        if p.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: p.len() });
        }
    }
    Ok(DMatrix::from_fn(n, patterns.len(), |i, mu| f64::from(patterns[mu].get(i))))
}

/// C_{μμ'} = (1/N) Σ_k ξ^μ_k ξ^μ'_k.
pub fn covariance(patterns: &[BipolarPattern]) -> Result<CovarianceMatrix> {
    let xi = pattern_matrix(patterns)?;
    let n = xi.nrows() as f64;
    Ok(CovarianceMatrix(xi.tr_mul(&xi) / n))
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix via eigendecomposition.
/// Eigenvalues below `tol * |λ_max|` are treated as zero; the second return
/// value counts them.
pub fn pseudo_inverse(c: &CovarianceMatrix, tol: f64) -> (DMatrix<f64>, usize) {
    let eig = c.0.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let cutoff = tol * lambda_max;
    let mut dropped = 0;
    let inv_vals = eig.eigenvalues.map(|l| {
        if l.abs() <= cutoff || lambda_max == 0.0 {
            dropped += 1;
            0.0
        } else {
            1.0 / l
        }
    });
    let q = &eig.eigenvectors;
    let pinv = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    if dropped > 0 {
        log::warn!("covariance is rank deficient: {dropped} eigenvalue(s) dropped");
    }
    // Symmetrize away rounding from the product.
    let sym = (&pinv + pinv.transpose()) * 0.5;
    (sym, dropped)
}

/// W_ij = (1/N) Σ_{μμ'} ξ^μ_i C⁺_{μμ'} ξ^μ'_j.
pub fn projection_weights(patterns: &[BipolarPattern]) -> Result<WeightMatrix> {
    let xi = pattern_matrix(patterns)?;
    let n = xi.nrows() as f64;
    let c = CovarianceMatrix(xi.tr_mul(&xi) / n);
    let (c_inv, _) = pseudo_inverse(&c, PINV_TOLERANCE);
    let w = &xi * c_inv * xi.transpose() / n;
    let mut weights = WeightMatrix::from_dmatrix(&w);
    weights.symmetrize();
    Ok(weights)
}

impl WeightMatrix {
    fn symmetrize(&mut self) {
        for i in 0..self.n {
            for j in 0..i {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                self.entries[i * self.n + j] = avg;
                self.entries[j * self.n + i] = avg;
            }
        }
    }
}

/// Projection weights with the key–key and value–value blocks zeroed.
/// `key_len` leading indices of every pattern are key bits.
pub fn bipartite_projection_weights(patterns: &[BipolarPattern], key_len: usize) -> Result<WeightMatrix> {
    if key_len == 0 {
        return Err(Error::NoKeyBits);
    }
    let mut w = projection_weights(patterns)?;
    if key_len >= w.n {
        return Err(Error::InvalidLibrary("bipartite weights need at least one value bit".into()));
    }
    let n = w.n;
    for i in 0..n {
        for j in 0..n {
            if (i < key_len) == (j < key_len) {
                w.entries[i * n + j] = 0.0;
            }
        }
    }
    w.bipartite = true;
    w.key_len = key_len;
    Ok(w)
}

/// Multiplies couplings and bias by 3 / (4 W_max).
pub fn rescale(w: &WeightMatrix, theta: f64) -> Result<(WeightMatrix, f64)> {
    let w_max = w.max_entry();
    if !(w_max > 0.0) {
        return Err(Error::NonPositiveWeights(w_max));
    }
    let factor = rescale_factor(w_max);
    Ok((w.scaled(factor), theta * factor))
}

pub fn rescale_factor(w_max: f64) -> f64 {
    3.0 / (4.0 * w_max)
}
