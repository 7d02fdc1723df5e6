//! Trace data model and on-disk format.
//!
//! A trace freezes one sample's behaviour under a multi-exit backbone: the
//! embedding-layer vector used for routing, the max-softmax confidence and
//! argmax prediction at every exit, and the gold label. A trace set lives on
//! disk as a directory holding `manifest.json` (one JSON object) and
//! `records.jsonl` (one JSON object per sample, in stream order).
//!
//! Layers are 1-indexed at the API boundary (`confidence(1)` is the first
//! exit); the stored vectors are 0-indexed.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub num_layers: usize,
    pub num_classes: usize,
    pub embedding_dim: usize,
    pub dataset_name: String,
    pub split: Split,
}

impl TraceManifest {
    pub fn check(&self) -> Result<()> {
        if self.num_layers < 1 {
            return Err(Error::Data("manifest: num_layers must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Data("manifest: num_classes must be >= 2".into()));
        }
        if self.embedding_dim < 1 {
            return Err(Error::Data("manifest: embedding_dim must be >= 1".into()));
        }
        Ok(())
    }

    /// Smallest admissible confidence, `1/|C|`.
    pub fn confidence_floor(&self) -> f64 {
        1.0 / self.num_classes as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub id: String,
    pub embedding: Vec<f64>,
    pub confidences: Vec<f64>,
    pub predictions: Vec<usize>,
    pub label: usize,
}

impl SampleTrace {
    /// Confidence at 1-indexed exit `layer`.
    #[inline]
    pub fn confidence(&self, layer: usize) -> f64 {
        self.confidences[layer - 1]
    }

    /// Prediction at 1-indexed exit `layer`.
    #[inline]
    pub fn prediction(&self, layer: usize) -> usize {
        self.predictions[layer - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.confidences.len()
    }
}

/// An ordered set of traces sharing one manifest. Order is arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub manifest: TraceManifest,
    pub samples: Vec<SampleTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    ConfidenceCount { found: usize },
    ConfidenceBelowFloor { layer: usize, value: f64 },
    ConfidenceAboveOne { layer: usize, value: f64 },
    PredictionCount { found: usize },
    PredictionOutOfRange { layer: usize, value: usize },
    LabelOutOfRange { value: usize },
    EmbeddingDim { found: usize },
    NonFiniteEmbedding { index: usize },
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub sample_id: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sample {:?}: ", self.sample_id)?;
        match &self.kind {
            ViolationKind::ConfidenceCount { found } => {
                write!(f, "expected one confidence per layer, found {found}")
            }
            ViolationKind::ConfidenceBelowFloor { layer, value } => {
                write!(f, "C_{layer} below 1/|C| ({value})")
            }
            ViolationKind::ConfidenceAboveOne { layer, value } => {
                write!(f, "C_{layer} above 1 ({value})")
            }
            ViolationKind::PredictionCount { found } => {
                write!(f, "expected one prediction per layer, found {found}")
            }
            ViolationKind::PredictionOutOfRange { layer, value } => {
                write!(f, "prediction at layer {layer} out of range ({value})")
            }
            ViolationKind::LabelOutOfRange { value } => write!(f, "label out of range ({value})"),
            ViolationKind::EmbeddingDim { found } => {
                write!(f, "embedding dimension mismatch (found {found})")
            }
            ViolationKind::NonFiniteEmbedding { index } => {
                write!(f, "non-finite embedding component at {index}")
            }
            ViolationKind::DuplicateId => write!(f, "duplicate id"),
        }
    }
}

/// Invariant checks for one sample against a manifest.
fn sample_violations(manifest: &TraceManifest, s: &SampleTrace, out: &mut Vec<Violation>) {
    let mut push = |kind| {
        out.push(Violation {
            sample_id: s.id.clone(),
            kind,
        })
    };
    let floor = manifest.confidence_floor();
    if s.confidences.len() != manifest.num_layers {
        push(ViolationKind::ConfidenceCount {
            found: s.confidences.len(),
        });
    }
    for (i, &c) in s.confidences.iter().enumerate() {
        // NaN fails both comparisons, so test the accepting range instead.
        if !(c >= floor) {
            push(ViolationKind::ConfidenceBelowFloor {
                layer: i + 1,
                value: c,
            });
        } else if c > 1.0 {
            push(ViolationKind::ConfidenceAboveOne {
                layer: i + 1,
                value: c,
            });
        }
    }
    if s.predictions.len() != manifest.num_layers {
        push(ViolationKind::PredictionCount {
            found: s.predictions.len(),
        });
    }
    for (i, &p) in s.predictions.iter().enumerate() {
        if p >= manifest.num_classes {
            push(ViolationKind::PredictionOutOfRange {
                layer: i + 1,
                value: p,
            });
        }
    }
    if s.label >= manifest.num_classes {
        push(ViolationKind::LabelOutOfRange { value: s.label });
    }
    if s.embedding.len() != manifest.embedding_dim {
        push(ViolationKind::EmbeddingDim {
            found: s.embedding.len(),
        });
    }
    if let Some(index) = s.embedding.iter().position(|x| !x.is_finite()) {
        push(ViolationKind::NonFiniteEmbedding { index });
    }
}

/// Returns every invariant violation in the set; empty iff the set is valid.
pub fn validate_traces(set: &TraceSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::with_capacity(set.samples.len());
    for s in &set.samples {
        sample_violations(&set.manifest, s, &mut out);
        if !seen.insert(s.id.as_str()) {
            out.push(Violation {
                sample_id: s.id.clone(),
                kind: ViolationKind::DuplicateId,
            });
        }
    }
    out
}

impl TraceSet {
    /// Builds a set, rejecting it if any invariant fails.
    pub fn new(manifest: TraceManifest, samples: Vec<SampleTrace>) -> Result<Self> {
        manifest.check()?;
        let set = TraceSet { manifest, samples };
        if let Some(v) = validate_traces(&set).into_iter().next() {
            return Err(Error::Data(v.to_string()));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.manifest.num_layers
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SampleTrace> {
        self.samples.iter()
    }
}

/// Locates the manifest and records files for a trace set.
///
/// `path` is either the directory holding both files or the manifest file
/// itself, in which case the records file is its sibling.
pub fn trace_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(MANIFEST_FILE), path.join(RECORDS_FILE))
    } else {
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        (path.to_path_buf(), dir.join(RECORDS_FILE))
    }
}

pub fn load_traces(path: impl AsRef<Path>) -> Result<TraceSet> {
    let (manifest_path, records_path) = trace_paths(path.as_ref());
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: TraceManifest =
        serde_json::from_str(&text).map_err(|source| Error::Manifest {
            path: manifest_path.clone(),
            source,
        })?;
    manifest.check()?;

    let file = fs::File::open(&records_path).map_err(|e| Error::io(&records_path, e))?;
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    let mut violations = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(&records_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: SampleTrace =
            serde_json::from_str(&line).map_err(|source| Error::Record {
                path: records_path.clone(),
                line: lineno,
                source,
            })?;
        violations.clear();
        sample_violations(&manifest, &sample, &mut violations);
        if let Some(v) = violations.first() {
            return Err(Error::Shape {
                path: records_path.clone(),
                line: lineno,
                detail: v.to_string(),
            });
        }
        if !seen.insert(sample.id.clone()) {
            return Err(Error::DuplicateId {
                id: sample.id,
                line: lineno,
            });
        }
        samples.push(sample);
    }
    Ok(TraceSet { manifest, samples })
}

/// Writes `set` as `manifest.json` + `records.jsonl` under `dir`, creating it
/// if needed.
pub fn write_traces(set: &TraceSet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut manifest = serde_json::to_string_pretty(&set.manifest)?;
    manifest.push('\n');
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    let records_path = dir.join(RECORDS_FILE);
    let file = fs::File::create(&records_path).map_err(|e| Error::io(&records_path, e))?;
    let mut w = BufWriter::new(file);
    for s in &set.samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io(&records_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&records_path, e))?;
    Ok(())
}

/// Seeded train/validation/test partition.
///
/// Validation and test sizes are `round(fraction * N)`; train takes the
/// remainder. Each subset keeps the input's relative order so drift
/// scenarios survive splitting.
pub fn split_traces(
    set: &TraceSet,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(TraceSet, TraceSet, TraceSet)> {
    let (f_train, f_val, f_test) = fractions;
    if !(f_train > 0.0 && f_val > 0.0 && f_test > 0.0) {
        return Err(Error::Config("split fractions must be positive".into()));
    }
    if ((f_train + f_val + f_test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config("split fractions must sum to 1".into()));
    }
    let n = set.len();
    let n_val = (f_val * n as f64).round() as usize;
    let n_test = (f_test * n as f64).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::Data(format!(
            "{n} samples are too few to give every split at least one sample"
        )));
    }
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let take = |idx: &mut [usize], split: Split| {
        idx.sort_unstable();
        TraceSet {
            manifest: TraceManifest {
                split,
                ..set.manifest.clone()
            },
            samples: idx.iter().map(|&i| set.samples[i].clone()).collect(),
        }
    };
    let (train_idx, rest) = order.split_at_mut(n_train);
    let (val_idx, test_idx) = rest.split_at_mut(n_val);
    Ok((
        take(train_idx, Split::Train),
        take(val_idx, Split::Validation),
        take(test_idx, Split::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(l: usize, c: usize, d: usize) -> TraceManifest {
        TraceManifest {
            num_layers: l,
            num_classes: c,
            embedding_dim: d,
            dataset_name: "unit".into(),
            split: Split::Validation,
        }
    }

    fn sample(id: &str, l: usize, d: usize) -> SampleTrace {
        SampleTrace {
            id: id.into(),
            embedding: (0..d).map(|j| j as f64 * 0.25).collect(),
            confidences: (0..l).map(|i| 0.5 + 0.5 * (i as f64 / l as f64)).collect(),
            predictions: vec![1; l],
            label: 1,
        }
    }

    fn write_raw(dir: &Path, m: &TraceManifest, lines: &[String]) {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string(m).unwrap()).unwrap();
        fs::write(dir.join(RECORDS_FILE), lines.join("\n")).unwrap();
    }

    #[test]
    fn loads_three_valid_records() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(12, 2, 4);
        let lines: Vec<String> = ["a", "b", "c"]
            .iter()
            .map(|id| serde_json::to_string(&sample(id, 12, 4)).unwrap())
            .collect();
        write_raw(dir.path(), &m, &lines);
        let set = load_traces(dir.path()).unwrap();
        assert_eq!(set.len(), 3);
        let ids: Vec<_> = set.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        // manifest path works too
        let again = load_traces(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn short_confidence_vector_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(12, 2, 4);
        let mut bad = sample("b", 12, 4);
        bad.confidences.pop();
        let lines = vec![
            serde_json::to_string(&sample("a", 12, 4)).unwrap(),
            serde_json::to_string(&bad).unwrap(),
        ];
        write_raw(dir.path(), &m, &lines);
        match load_traces(dir.path()) {
            Err(Error::Shape { line, detail, .. }) => {
                assert_eq!(line, 2);
                assert!(detail.contains("found 11"), "{detail}");
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(3, 2, 2);
        let s = serde_json::to_string(&sample("s1", 3, 2)).unwrap();
        write_raw(dir.path(), &m, &[s.clone(), s]);
        assert!(matches!(
            load_traces(dir.path()),
            Err(Error::DuplicateId { ref id, line: 2 }) if id == "s1"
        ));
    }

    #[test]
    fn malformed_json_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(3, 2, 2);
        let s = serde_json::to_string(&sample("s1", 3, 2)).unwrap();
        write_raw(dir.path(), &m, &[s, "{not json".into()]);
        assert!(matches!(
            load_traces(dir.path()),
            Err(Error::Record { line: 2, .. })
        ));
    }

    #[test]
    fn validate_reports_floor_and_label() {
        let mut s = sample("x", 3, 2);
        s.confidences[1] = 0.3;
        s.label = 2;
        let set = TraceSet {
            manifest: manifest(3, 2, 2),
            samples: vec![s],
        };
        let v = validate_traces(&set);
        assert_eq!(v.len(), 2);
        assert!(v[0].to_string().contains("C_2 below 1/|C|"));
        assert!(v[1].to_string().contains("label out of range"));

        let ok = TraceSet {
            manifest: manifest(3, 2, 2),
            samples: vec![sample("y", 3, 2)],
        };
        assert!(validate_traces(&ok).is_empty());
    }

    #[test]
    fn nan_confidence_is_a_violation() {
        let mut s = sample("x", 3, 2);
        s.confidences[0] = f64::NAN;
        let set = TraceSet {
            manifest: manifest(3, 2, 2),
            samples: vec![s],
        };
        assert_eq!(validate_traces(&set).len(), 1);
    }

    fn numbered(n: usize) -> TraceSet {
        TraceSet {
            manifest: manifest(2, 2, 1),
            samples: (0..n).map(|i| sample(&format!("s{i}"), 2, 1)).collect(),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let set = numbered(10);
        let (a, b, c) = split_traces(&set, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert_eq!(a.manifest.split, Split::Train);
        assert_eq!(b.manifest.split, Split::Validation);
        let again = split_traces(&set, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((a, b, c), again);
    }

    #[test]
    fn split_rejects_tiny_sets_and_bad_fractions() {
        assert!(split_traces(&numbered(2), (0.8, 0.1, 0.1), 0).is_err());
        assert!(split_traces(&numbered(10), (0.8, 0.1, 0.2), 0).is_err());
        assert!(split_traces(&numbered(10), (1.0, 0.0, 0.0), 0).is_err());
    }
}
