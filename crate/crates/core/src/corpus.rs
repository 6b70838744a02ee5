//! Genre-labelled corpus curation.
//!
//! A file is kept when it is a single-track (format 0) file, every time
//! signature in it is 4/4, and its notes use at least `threshold` distinct
//! NoteOn velocities. Accepted files are shuffled per genre with a seeded
//! generator and split into training and validation sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::{extract_notes, parse_midi, MidiFile, NoteSpan};

pub const DEFAULT_THRESHOLD: usize = 20;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.95;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid genre label {0:?}: must be non-empty lowercase")]
    BadGenre(String),
    #[error("duplicate genre label {0:?}")]
    DuplicateGenre(String),
    #[error("cannot read directory {path}: {source}")]
    Directory { path: PathBuf, source: std::io::Error },
    #[error("genre {0:?} has no accepted files")]
    EmptyGenre(String),
    #[error("split ratio {0} must lie strictly between 0 and 1")]
    BadSplitRatio(f64),
    #[error("manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GenreLabel(String);

impl GenreLabel {
    pub fn new(name: &str) -> Result<Self, CorpusError> {
        if name.is_empty() || name.chars().any(|c| c.is_uppercase() || c.is_whitespace() || c == ',') {
            return Err(CorpusError::BadGenre(name.to_string()));
        }
        Ok(Self(name.to_string()))
    }

    pub fn classical() -> Self {
        Self("classical".into())
    }

    pub fn jazz() -> Self {
        Self("jazz".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for GenreLabel {
    type Error = CorpusError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(&s)
    }
}

impl From<GenreLabel> for String {
    fn from(g: GenreLabel) -> Self {
        g.0
    }
}

impl fmt::Display for GenreLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// First failing eligibility rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Format,
    TimeSignature,
    VelocityRange,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::Format => "format",
            Rejection::TimeSignature => "time-signature",
            Rejection::VelocityRange => "velocity-range",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub genre: GenreLabel,
    pub distinct_velocity_count: usize,
    pub is_4_4: bool,
    pub format: u16,
    pub division: u16,
    pub accepted: bool,
    pub rejection_reason: Option<String>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<CorpusEntry>,
    pub threshold: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub accepted_counts: BTreeMap<GenreLabel, usize>,
}

impl DatasetManifest {
    pub fn genres(&self) -> Vec<GenreLabel> {
        self.accepted_counts.keys().cloned().collect()
    }

    pub fn files(&self, genre: &GenreLabel, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        let genre = genre.clone();
        self.entries.iter().filter(move |e| e.accepted && e.genre == genre && e.split == Some(split))
    }

    pub fn to_json(&self) -> Result<String, CorpusError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json()?).map_err(|source| CorpusError::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let s = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
        Self::from_json(&s)
    }
}

/// Number of distinct velocities among the spans (NoteOn velocities only).
pub fn distinct_velocities(spans: &[NoteSpan]) -> usize {
    spans.iter().map(|s| s.velocity).collect::<BTreeSet<_>>().len()
}

/// Applies the three rules in order: format 0, 4/4 throughout, velocity range.
pub fn check_eligibility(file: &MidiFile, threshold: usize) -> Result<(), Rejection> {
    if file.format != 0 {
        return Err(Rejection::Format);
    }
    if !file.is_four_four() {
        return Err(Rejection::TimeSignature);
    }
    if distinct_velocities(&extract_notes(file).spans) < threshold {
        return Err(Rejection::VelocityRange);
    }
    Ok(())
}

/// `round(n · ratio)` clamped to `[1, n]`; zero when `n` is zero.
pub fn train_count(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((n as f64 * ratio).round() as usize).clamp(1, n)
}

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

fn collect_midi(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let read = std::fs::read_dir(dir).map_err(|source| CorpusError::Directory { path: dir.into(), source })?;
    for entry in read {
        let path = entry.map_err(|source| CorpusError::Directory { path: dir.into(), source })?.path();
        if path.is_dir() {
            collect_midi(&path, out)?;
        } else if is_midi(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// Builds a corpus entry for one file; `None` if it cannot be read or parsed.
pub fn inspect_file(path: &Path, genre: &GenreLabel, threshold: usize) -> Option<CorpusEntry> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("skipping {}: {e}", path.display());
            return None;
        }
    };
    let file = match parse_midi(&bytes) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("skipping {}: {e}", path.display());
            return None;
        }
    };
    let verdict = check_eligibility(&file, threshold);
    Some(CorpusEntry {
        path: path.to_path_buf(),
        genre: genre.clone(),
        distinct_velocity_count: distinct_velocities(&extract_notes(&file).spans),
        is_4_4: file.is_four_four(),
        format: file.format,
        division: file.division,
        accepted: verdict.is_ok(),
        rejection_reason: verdict.err().map(|r| r.to_string()),
        split: None,
    })
}

/// Scans each genre directory recursively for `.mid`/`.midi` files, applies
/// the eligibility rules, and splits accepted files per genre. Genres are
/// processed in label order, files in path order, so the result depends only
/// on the inputs and `seed`.
pub fn curate(
    roots: &[(GenreLabel, PathBuf)],
    threshold: usize,
    split_ratio: f64,
    seed: u64,
) -> Result<DatasetManifest, CorpusError> {
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(CorpusError::BadSplitRatio(split_ratio));
    }
    let mut by_genre: BTreeMap<GenreLabel, &Path> = BTreeMap::new();
    for (genre, dir) in roots {
        if by_genre.insert(genre.clone(), dir).is_some() {
            return Err(CorpusError::DuplicateGenre(genre.to_string()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut accepted_counts = BTreeMap::new();
    for (genre, dir) in by_genre {
        let mut paths = Vec::new();
        collect_midi(dir, &mut paths)?;
        paths.sort();
        let mut genre_entries: Vec<CorpusEntry> =
            paths.iter().filter_map(|p| inspect_file(p, &genre, threshold)).collect();
        let mut accepted: Vec<usize> = (0..genre_entries.len()).filter(|&i| genre_entries[i].accepted).collect();
        if accepted.is_empty() {
            return Err(CorpusError::EmptyGenre(genre.to_string()));
        }
        accepted.shuffle(&mut rng);
        let n_train = train_count(accepted.len(), split_ratio);
        if n_train == accepted.len() {
            log::warn!("genre {genre}: {} accepted file(s), validation split is empty", accepted.len());
        }
        for (rank, &i) in accepted.iter().enumerate() {
            genre_entries[i].split = Some(if rank < n_train { Split::Train } else { Split::Validation });
        }
        accepted_counts.insert(genre, accepted.len());
        entries.extend(genre_entries);
    }
    Ok(DatasetManifest { entries, threshold, split_ratio, seed, accepted_counts })
}
