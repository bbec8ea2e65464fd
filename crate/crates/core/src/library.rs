//! Pattern libraries (training sets) and their JSON file format.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{self, DetectorGeometry, FieldConfig, ParticleGun, ParticleState};
use crate::error::{Error, Result};
use crate::pattern::{self, BitPattern, KeyedPattern, PatternKind};

pub const LIBRARY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    pub kind: PatternKind,
    pub pattern: KeyedPattern,
    /// Generating particle for simulated signals.
    pub particle: Option<ParticleState>,
}

/// Simulation settings a library was generated with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryMeta {
    pub geometry: DetectorGeometry,
    pub field: FieldConfig,
}

/// An encoded training set. All entries share the key and value lengths and
/// all value fields are pairwise distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternLibrary {
    key_len: usize,
    value_len: usize,
    entries: Vec<LibraryEntry>,
    meta: Option<LibraryMeta>,
}

impl PatternLibrary {
    pub fn new(
        key_len: usize,
        value_len: usize,
        entries: Vec<LibraryEntry>,
        meta: Option<LibraryMeta>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidLibrary("library needs at least one pattern".into()));
        }
        if value_len == 0 {
            return Err(Error::InvalidLibrary("value length must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.pattern.key_len() != key_len || e.pattern.value().len() != value_len {
                return Err(Error::InvalidLibrary(format!(
                    "pattern {i} has shape (K={}, V={}), expected (K={key_len}, V={value_len})",
                    e.pattern.key_len(),
                    e.pattern.value().len()
                )));
            }
            if !seen.insert(e.pattern.value().clone()) {
                return Err(Error::InvalidLibrary(format!("pattern {i} duplicates a value")));
            }
        }
        Ok(Self { key_len, value_len, entries, meta })
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn value_len(&self) -> usize {
        self.value_len
    }

    /// Total pattern length N = K + V.
    pub fn pattern_len(&self) -> usize {
        self.key_len + self.value_len
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn meta(&self) -> Option<&LibraryMeta> {
        self.meta.as_ref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn signals(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.iter().filter(|e| e.kind == PatternKind::Signal)
    }

    pub fn backgrounds(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.iter().filter(|e| e.kind == PatternKind::Background)
    }

    pub fn signal_count(&self) -> usize {
        self.signals().count()
    }

    pub fn background_count(&self) -> usize {
        self.backgrounds().count()
    }

    /// Signal pattern density p_s / V.
    pub fn alpha_s(&self) -> f64 {
        self.signal_count() as f64 / self.value_len as f64
    }

    pub fn alpha_b(&self) -> f64 {
        self.background_count() as f64 / self.value_len as f64
    }

    pub fn values(&self) -> Vec<&BitPattern> {
        self.entries.iter().map(|e| e.pattern.value()).collect()
    }

    /// Encoded patterns in bipolar form, in entry order.
    pub fn bipolar(&self) -> Vec<pattern::BipolarPattern> {
        self.entries.iter().map(|e| e.pattern.to_bipolar()).collect()
    }

    /// Returns a copy with `extra` appended, re-validating distinctness.
    pub fn with_entries(&self, extra: Vec<LibraryEntry>) -> Result<Self> {
        let mut entries = self.entries.clone();
        entries.extend(extra);
        Self::new(self.key_len, self.value_len, entries, self.meta.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LibraryFile {
            version: LIBRARY_VERSION,
            value_len: self.value_len,
            key_len: self.key_len,
            patterns: self
                .entries
                .iter()
                .map(|e| PatternRecord {
                    kind: e.kind,
                    key: e.pattern.key_string(),
                    value: e.pattern.value().to_string(),
                    particle: e.particle,
                })
                .collect(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LibraryFile = serde_json::from_str(text)?;
        if file.version != LIBRARY_VERSION {
            return Err(Error::UnsupportedVersion { found: file.version, expected: LIBRARY_VERSION });
        }
        let entries = file
            .patterns
            .into_iter()
            .map(|r| {
                let key = r
                    .key
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(Error::InvalidBitString(r.key.clone())),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let value: BitPattern = r.value.parse()?;
                Ok(LibraryEntry {
                    kind: r.kind,
                    pattern: pattern::assemble_keyed(&key, value),
                    particle: r.particle,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.key_len, file.value_len, entries, file.meta)
    }
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    version: u32,
    #[serde(rename = "V")]
    value_len: usize,
    #[serde(rename = "K")]
    key_len: usize,
    patterns: Vec<PatternRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<LibraryMeta>,
}

#[derive(Serialize, Deserialize)]
struct PatternRecord {
    kind: PatternKind,
    key: String,
    value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    particle: Option<ParticleState>,
}

pub fn save_library(lib: &PatternLibrary, path: &Path) -> Result<()> {
    fs::write(path, lib.to_json()?)?;
    Ok(())
}

pub fn load_library(path: &Path) -> Result<PatternLibrary> {
    PatternLibrary::from_json(&fs::read_to_string(path)?)
}

/// How a simulated training set is encoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    /// Signal values only, no key bits.
    SignalOnlyUnkeyed,
    /// Signal values with a one-bit signal key.
    SignalOnlyKeyed,
    /// Signals and backgrounds with one-bit class keys.
    SignalAndBackground { backgrounds: usize },
}

/// Simulates `signals` unique perfect tracks and encodes them (plus random
/// backgrounds when requested) as a library.
#[allow(clippy::too_many_arguments)]
pub fn build_signal_library<R: Rng + ?Sized>(
    g: &DetectorGeometry,
    field: &FieldConfig,
    gun: &ParticleGun,
    signals: usize,
    encoding: Encoding,
    background_fill: f64,
    rng: &mut R,
    max_tries: usize,
) -> Result<PatternLibrary> {
    let tracks = detector::sample_signal_tracks(g, field, gun, signals, rng, max_tries)?;
    let key_len = match encoding {
        Encoding::SignalOnlyUnkeyed => 0,
        _ => 1,
    };
    let key_for = |kind: PatternKind| -> Vec<bool> {
        if key_len == 0 {
            Vec::new()
        } else {
            pattern::label_key(kind).to_vec()
        }
    };
    let mut entries: Vec<LibraryEntry> = tracks
        .into_iter()
        .map(|t| LibraryEntry {
            kind: PatternKind::Signal,
            pattern: pattern::assemble_keyed(&key_for(PatternKind::Signal), t.pattern),
            particle: Some(t.particle),
        })
        .collect();
    if let Encoding::SignalAndBackground { backgrounds } = encoding {
        for _ in 0..backgrounds {
            let avoid: Vec<&BitPattern> = entries.iter().map(|e| e.pattern.value()).collect();
            let value = pattern::generate_background(
                g.segments(),
                background_fill,
                &avoid,
                rng,
                pattern::DEFAULT_MAX_TRIES,
            )?;
            entries.push(LibraryEntry {
                kind: PatternKind::Background,
                pattern: pattern::assemble_keyed(&key_for(PatternKind::Background), value),
                particle: None,
            });
        }
    }
    PatternLibrary::new(
        key_len,
        g.segments(),
        entries,
        Some(LibraryMeta { geometry: g.clone(), field: *field }),
    )
}
