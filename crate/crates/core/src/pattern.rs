//! Binary hit patterns, their bipolar spin encoding, and the detector
//! corruption models.
//!
//! Bits map to spins as hit = +1, no hit = -1. Keyed patterns concatenate
//! the key bits before the value bits.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-empty vector of bits, one per detector segment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitPattern {
    bits: Vec<bool>,
}

impl BitPattern {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyPattern);
        }
        Ok(Self { bits })
    }

    /// Builds a pattern from 0/1 integers.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let bits = bits
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidBit(other)),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![false; len])
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self { bits: self.bits.iter().map(|b| !b).collect() }
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn to_bipolar(&self) -> BipolarPattern {
        to_bipolar(self)
    }
}

impl fmt::Display for BitPattern {
    /// Segment 0 is the leftmost character.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidBitString(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }
}

/// A non-empty vector of ±1 spins.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BipolarPattern {
    spins: Vec<i8>,
}

impl BipolarPattern {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::EmptyPattern);
        }
        if let Some(&bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidSpin(bad));
        }
        Ok(Self { spins })
    }

    /// Decodes the low `n` bits of `mask` (bit i set means spin i is +1).
    pub fn from_mask(mask: u64, n: usize) -> Self {
        debug_assert!(n > 0 && n <= 64);
        Self { spins: (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect() }
    }

    /// Inverse of [`BipolarPattern::from_mask`]; only valid for `len() <= 64`.
    pub fn to_mask(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &s)| if s > 0 { m | 1 << i } else { m })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn get(&self, i: usize) -> i8 {
        self.spins[i]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| f64::from(s)).collect()
    }

    pub fn negated(&self) -> Self {
        Self { spins: self.spins.iter().map(|s| -s).collect() }
    }

    pub fn to_bits(&self) -> BitPattern {
        from_bipolar(self)
    }
}

pub fn to_bipolar(p: &BitPattern) -> BipolarPattern {
    BipolarPattern { spins: p.bits.iter().map(|&b| if b { 1 } else { -1 }).collect() }
}

pub fn from_bipolar(p: &BipolarPattern) -> BitPattern {
    BitPattern { bits: p.spins.iter().map(|&s| s > 0).collect() }
}

/// Number of positions where `a` and `b` differ.
pub fn hamming(a: &BitPattern, b: &BitPattern) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count())
}

fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange { name, value })
    }
}

/// Detector noise: every cleared bit fires independently with probability `gamma`.
pub fn apply_noise<R: Rng + ?Sized>(p: &BitPattern, gamma: f64, rng: &mut R) -> Result<BitPattern> {
    check_probability("gamma", gamma)?;
    let bits = p.bits.iter().map(|&b| b || rng.random_bool(gamma)).collect();
    Ok(BitPattern { bits })
}

/// Detector inefficiency: every hit bit survives independently with probability `eta`.
pub fn apply_inefficiency<R: Rng + ?Sized>(
    p: &BitPattern,
    eta: f64,
    rng: &mut R,
) -> Result<BitPattern> {
    check_probability("eta", eta)?;
    let bits = p.bits.iter().map(|&b| b && rng.random_bool(eta)).collect();
    Ok(BitPattern { bits })
}

/// Inefficiency followed by noise.
pub fn corrupt<R: Rng + ?Sized>(
    p: &BitPattern,
    eta: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<BitPattern> {
    let dropped = apply_inefficiency(p, eta, rng)?;
    apply_noise(&dropped, gamma, rng)
}

pub const DEFAULT_BACKGROUND_FILL: f64 = 0.15;
pub const DEFAULT_MAX_TRIES: usize = 10_000;

/// Draws a random background pattern with i.i.d. Bernoulli(`fill_prob`) bits,
/// rejecting candidates that coincide with any pattern in `avoid`.
pub fn generate_background<R: Rng + ?Sized>(
    len: usize,
    fill_prob: f64,
    avoid: &[&BitPattern],
    rng: &mut R,
    max_tries: usize,
) -> Result<BitPattern> {
    check_probability("fill_prob", fill_prob)?;
    if len == 0 {
        return Err(Error::EmptyPattern);
    }
    for a in avoid {
        if a.len() != len {
            return Err(Error::LengthMismatch { expected: len, actual: a.len() });
        }
    }
    for _ in 0..max_tries {
        let bits: Vec<bool> = (0..len).map(|_| rng.random_bool(fill_prob)).collect();
        let candidate = BitPattern { bits };
        if avoid.iter().all(|a| **a != candidate) {
            return Ok(candidate);
        }
    }
    Err(Error::RejectionExhausted { tries: max_tries })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Signal,
    Background,
}

impl PatternKind {
    /// Classification label stored in a one-bit key.
    pub fn key_bit(self) -> bool {
        matches!(self, PatternKind::Signal)
    }
}

/// A (key, value) pair. An empty key denotes an un-keyed pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyedPattern {
    key: Vec<bool>,
    value: BitPattern,
}

impl KeyedPattern {
    pub fn key(&self) -> &[bool] {
        &self.key
    }

    pub fn value(&self) -> &BitPattern {
        &self.value
    }

    pub fn key_len(&self) -> usize {
        self.key.len()
    }

    pub fn len(&self) -> usize {
        self.key.len() + self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Key bits then value bits, as spins.
    pub fn to_bipolar(&self) -> BipolarPattern {
        let spins = self
            .key
            .iter()
            .chain(&self.value.bits)
            .map(|&b| if b { 1 } else { -1 })
            .collect();
        BipolarPattern { spins }
    }

    pub fn key_string(&self) -> String {
        self.key.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

pub fn assemble_keyed(key: &[bool], value: BitPattern) -> KeyedPattern {
    KeyedPattern { key: key.to_vec(), value }
}

/// One-bit label key for the given kind (signal = 1, background = 0).
pub fn label_key(kind: PatternKind) -> [bool; 1] {
    [kind.key_bit()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn bp(bits: &[u8]) -> BitPattern {
        BitPattern::from_bits(bits).unwrap()
    }

    #[test]
    fn bipolar_encoding() {
        assert_eq!(bp(&[1, 0, 1]).to_bipolar().spins(), &[1, -1, 1]);
        let zeros = BitPattern::zeros(24).unwrap().to_bipolar();
        assert_eq!(zeros.len(), 24);
        assert!(zeros.spins().iter().all(|&s| s == -1));
    }

    #[test]
    fn bipolar_roundtrip_exhaustive_small() {
        for n in 1..=12usize {
            for mask in 0..(1u64 << n) {
                let p = BitPattern::new((0..n).map(|i| mask >> i & 1 == 1).collect()).unwrap();
                assert_eq!(from_bipolar(&to_bipolar(&p)), p);
                assert_eq!(BipolarPattern::from_mask(mask, n).to_mask(), mask);
            }
        }
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(BitPattern::from_bits(&[0, 2]), Err(Error::InvalidBit(2))));
        assert!(matches!(BitPattern::new(vec![]), Err(Error::EmptyPattern)));
        assert!(matches!(BipolarPattern::new(vec![1, 0]), Err(Error::InvalidSpin(0))));
        assert!("01x".parse::<BitPattern>().is_err());
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming(&bp(&[0, 1]), &bp(&[0, 1])).unwrap(), 0);
        assert_eq!(hamming(&bp(&[0, 1, 1]), &bp(&[1, 1, 0])).unwrap(), 2);
        let x = bp(&[1, 0, 0, 1, 1]);
        assert_eq!(hamming(&x, &x.complement()).unwrap(), 5);
        assert!(matches!(
            hamming(&bp(&[0]), &bp(&[0, 1])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn noise_limits() {
        let mut rng = seed::stream(1);
        let p = bp(&[1, 0, 0, 1, 0]);
        assert_eq!(apply_noise(&p, 0.0, &mut rng).unwrap(), p);
        assert_eq!(apply_noise(&p, 1.0, &mut rng).unwrap().popcount(), 5);
        assert!(apply_noise(&p, 1.5, &mut rng).is_err());
        assert!(apply_noise(&p, -0.1, &mut rng).is_err());
    }

    #[test]
    fn inefficiency_limits() {
        let mut rng = seed::stream(2);
        let p = bp(&[1, 0, 0, 1, 0]);
        assert_eq!(apply_inefficiency(&p, 1.0, &mut rng).unwrap(), p);
        assert_eq!(apply_inefficiency(&p, 0.0, &mut rng).unwrap().popcount(), 0);
        assert!(apply_inefficiency(&p, 1.01, &mut rng).is_err());
    }

    // Monte Carlo against binomial means; the band is 3 standard errors of the
    // sample mean.
    #[test]
    fn noise_mean_matches_binomial() {
        let mut bits = vec![0u8; 54];
        bits[3] = 1;
        bits[20] = 1;
        bits[40] = 1;
        let p = bp(&bits);
        let (gamma, zeros, trials) = (0.04, 51.0, 100_000);
        let mut rng = seed::stream(3);
        let total: usize = (0..trials)
            .map(|_| apply_noise(&p, gamma, &mut rng).unwrap().popcount() - 3)
            .sum();
        let mean = total as f64 / trials as f64;
        let expected = gamma * zeros;
        let se = (zeros * gamma * (1.0 - gamma) / trials as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} vs {expected}");
        assert!((expected - 2.04).abs() < 1e-12);
    }

    #[test]
    fn inefficiency_mean_matches_binomial() {
        let p = bp(&[1, 0, 0, 1, 0, 0, 1, 0]);
        let (eta, trials) = (0.92, 100_000);
        let mut rng = seed::stream(4);
        let dropped: usize = (0..trials)
            .map(|_| 3 - apply_inefficiency(&p, eta, &mut rng).unwrap().popcount())
            .sum();
        let mean = dropped as f64 / trials as f64;
        let q = 1.0 - eta;
        let se = (3.0 * q * (1.0 - q) / trials as f64).sqrt();
        assert!((mean - 0.24).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn background_generation() {
        let mut rng = seed::stream(5);
        let zero_excluded = bp(&[1, 1, 1]);
        let out = generate_background(3, 0.0, &[&zero_excluded], &mut rng, 10).unwrap();
        assert_eq!(out.popcount(), 0);

        let all: Vec<BitPattern> =
            vec![bp(&[0, 0]), bp(&[0, 1]), bp(&[1, 0]), bp(&[1, 1])];
        let refs: Vec<&BitPattern> = all.iter().collect();
        assert!(matches!(
            generate_background(2, 0.5, &refs, &mut rng, 1000),
            Err(Error::RejectionExhausted { tries: 1000 })
        ));
    }

    #[test]
    fn background_fill_mean() {
        let mut rng = seed::stream(6);
        let trials = 100_000;
        let total: usize = (0..trials)
            .map(|_| generate_background(24, 0.15, &[], &mut rng, 1).unwrap().popcount())
            .sum();
        let mean = total as f64 / trials as f64;
        let se = (24.0 * 0.15 * 0.85 / trials as f64).sqrt();
        assert!((mean - 3.6).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn keyed_layout() {
        let k = assemble_keyed(&[true], bp(&[0, 1]));
        assert_eq!(k.len(), 3);
        assert_eq!(k.to_bipolar().spins(), &[1, -1, 1]);
        let v = bp(&[1, 1, 0]);
        let u = assemble_keyed(&[], v.clone());
        assert_eq!(u.len(), 3);
        assert_eq!(u.to_bipolar(), v.to_bipolar());
        assert_eq!(label_key(PatternKind::Signal), [true]);
        assert_eq!(label_key(PatternKind::Background), [false]);
    }

    #[test]
    fn display_and_parse() {
        let p: BitPattern = "0110".parse().unwrap();
        assert_eq!(p.to_string(), "0110");
        assert_eq!(p, bp(&[0, 1, 1, 0]));
    }
}
