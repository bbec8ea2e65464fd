//! Trained recall models: a library encoded into (rescaled) couplings plus
//! the rule for turning a probe value into a recall problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{self, WeightMatrix};
use crate::library::PatternLibrary;
use crate::pattern::BitPattern;
use crate::recall::{self, RecallProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Full projection rule; keys, if present, are ordinary bits.
    Qamm,
    /// Bipartite projection rule; keys couple only to values.
    Qcam,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qamm" => Ok(Self::Qamm),
            "qcam" => Ok(Self::Qcam),
            other => Err(Error::InvalidConfig(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecallModel {
    pub kind: ModelKind,
    pub weights: WeightMatrix,
    /// Bias strength after any rescaling.
    pub theta: f64,
    pub key_len: usize,
    pub value_len: usize,
    /// Factor applied to the raw weights and bias (1 when not rescaled).
    pub scale: f64,
}

impl RecallModel {
    /// Encodes `library` and, when `rescale` is set, multiplies weights and
    /// bias by 3 / (4 W_max).
    pub fn train(library: &PatternLibrary, kind: ModelKind, theta: f64, rescale: bool) -> Result<Self> {
        let patterns = library.bipolar();
        let key_len = library.key_len();
        let raw = match kind {
            ModelKind::Qamm => learning::projection_weights(&patterns)?,
            ModelKind::Qcam => {
                if key_len == 0 {
                    return Err(Error::NoKeyBits);
                }
                learning::bipartite_projection_weights(&patterns, key_len)?
            }
        };
        let (weights, scaled_theta, scale) = if rescale {
            let factor = learning::rescale_factor(raw.max_entry());
            let (w, t) = learning::rescale(&raw, theta)?;
            (w, t, factor)
        } else {
            (raw, theta, 1.0)
        };
        Ok(Self {
            kind,
            weights,
            theta: scaled_theta,
            key_len,
            value_len: library.value_len(),
            scale,
        })
    }

    /// Builds the recall problem for a probe value. Un-keyed models bias
    /// every spin; keyed models leave the key spins unbiased.
    pub fn problem(&self, probe_value: &BitPattern) -> Result<RecallProblem> {
        if probe_value.len() != self.value_len {
            return Err(Error::LengthMismatch { expected: self.value_len, actual: probe_value.len() });
        }
        let probe = probe_value.to_bipolar();
        if self.key_len == 0 {
            recall::build_qamm(&self.weights, &probe, self.theta)
        } else {
            recall::build_qcam(&self.weights, &probe, self.theta, self.key_len)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::LibraryEntry;
    use crate::pattern::{assemble_keyed, PatternKind};

    fn lib(key: bool) -> PatternLibrary {
        let values = ["110000", "001100", "000011", "100001"];
        let entries = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let kind = if i < 2 { PatternKind::Signal } else { PatternKind::Background };
                let k = if key { vec![kind.key_bit()] } else { vec![] };
                LibraryEntry { kind, pattern: assemble_keyed(&k, v.parse().unwrap()), particle: None }
            })
            .collect();
        PatternLibrary::new(usize::from(key), 6, entries, None).unwrap()
    }

    #[test]
    fn rescaled_max_is_three_quarters() {
        let m = RecallModel::train(&lib(true), ModelKind::Qcam, 0.74, true).unwrap();
        assert!((m.weights.max_entry() - 0.75).abs() < 1e-12);
        assert!((m.theta - 0.74 * m.scale).abs() < 1e-12);
        assert!(m.weights.is_bipartite());
    }

    #[test]
    fn problem_masks_keys() {
        let m = RecallModel::train(&lib(true), ModelKind::Qamm, 0.5, false).unwrap();
        let p = m.problem(&"110000".parse().unwrap()).unwrap();
        assert_eq!(p.biases()[0], 0.0);
        assert_eq!(p.biases()[1], 0.5);
        assert_eq!(p.masked(), &[0]);
        let unkeyed = RecallModel::train(&lib(false), ModelKind::Qamm, 0.5, false).unwrap();
        let p = unkeyed.problem(&"110000".parse().unwrap()).unwrap();
        assert!(p.masked().is_empty());
        assert!(RecallModel::train(&lib(false), ModelKind::Qcam, 0.5, false).is_err());
        assert!(m.problem(&"11".parse().unwrap()).is_err());
    }
}
