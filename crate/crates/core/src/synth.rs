//! Synthetic trace sets with planted difficulty structure.
//!
//! Every sample draws a difficulty from the mix, an embedding from that
//! difficulty's Gaussian cluster, and a ramp layer from that difficulty's
//! range. Confidence follows a logistic ramp in the layer index that reaches
//! high values at the ramp layer, plus bounded uniform jitter, clamped to
//! `[1/|C|, 1]`. From one layer before the ramp onward the exit predicts a
//! per-sample settled class (the label with probability `1 - noise`);
//! earlier exits guess uniformly.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`. Draws happen in a fixed order per sample, so a drifted
//! scenario matches its undrifted twin sample-for-sample before the onset.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::exit::DeploymentConfig;
use crate::pooling::PoolLabel;
use crate::trace::{split_traces, write_traces, SampleTrace, Split, TraceManifest, TraceSet};

/// One value per difficulty level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerDifficulty<T> {
    pub easy: T,
    pub moderate: T,
    pub hard: T,
}

impl<T> PerDifficulty<T> {
    pub fn get(&self, d: PoolLabel) -> &T {
        match d {
            PoolLabel::Easy => &self.easy,
            PoolLabel::Moderate => &self.moderate,
            PoolLabel::Hard => &self.hard,
        }
    }

    fn iter(&self) -> impl Iterator<Item = (PoolLabel, &T)> {
        PoolLabel::ALL.into_iter().map(move |d| (d, self.get(d)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceProfile {
    /// Inclusive range `[first, last]` of the layer where confidence first
    /// gets high. Values past `l` model samples that never settle early.
    pub ramp_layers: PerDifficulty<[usize; 2]>,
    /// Logistic slope per layer.
    pub steepness: f64,
    /// Half-width of the uniform jitter added at every layer.
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    /// First sample index drawn from the shifted clusters.
    pub onset: usize,
    pub cluster_means: PerDifficulty<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_samples: usize,
    pub num_layers: usize,
    pub num_classes: usize,
    pub embedding_dim: usize,
    pub cluster_means: PerDifficulty<Vec<f64>>,
    /// Per-component standard deviation of each cluster.
    pub cluster_spread: PerDifficulty<f64>,
    pub difficulty_mix: PerDifficulty<f64>,
    pub confidence_profile: ConfidenceProfile,
    /// Probability that a sample's settled prediction is wrong.
    pub noise: PerDifficulty<f64>,
    #[serde(default)]
    pub drift: Option<DriftConfig>,
    pub seed: u64,
}

/// Ground truth the generator planted for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub id: String,
    pub difficulty: PoolLabel,
    pub ramp_layer: usize,
    pub drifted: bool,
}

// Ramp midpoint sits this many layers before the ramp layer, so with the
// default slope of 2 the ramp layer's confidence is about 0.95 of the way
// from 1/|C| to 1.
const RAMP_LEAD: f64 = 1.5;

fn check_means(name: &str, means: &PerDifficulty<Vec<f64>>, d: usize) -> Result<()> {
    for (diff, m) in means.iter() {
        if m.len() != d {
            return Err(Error::Config(format!(
                "{name}.{diff} has dimension {}, expected {d}",
                m.len()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("{name}.{diff} is not finite")));
        }
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_samples == 0 || self.num_layers == 0 || self.embedding_dim == 0 {
            return bad("scenario sizes must be positive".into());
        }
        if self.num_classes < 2 {
            return bad("scenario needs at least 2 classes".into());
        }
        check_means("cluster_means", &self.cluster_means, self.embedding_dim)?;
        let mix = &self.difficulty_mix;
        if mix.iter().any(|(_, p)| !(*p >= 0.0)) {
            return bad("difficulty_mix entries must be non-negative".into());
        }
        if (mix.easy + mix.moderate + mix.hard - 1.0).abs() > 1e-9 {
            return bad("difficulty_mix must sum to 1".into());
        }
        for (d, s) in self.cluster_spread.iter() {
            if !(*s >= 0.0) || !s.is_finite() {
                return bad(format!("cluster_spread.{d} must be non-negative"));
            }
        }
        for (d, p) in self.noise.iter() {
            if !(0.0..=1.0).contains(p) {
                return bad(format!("noise.{d} must be in [0, 1]"));
            }
        }
        let prof = &self.confidence_profile;
        for (d, [lo, hi]) in prof.ramp_layers.iter() {
            if *lo < 1 || lo > hi {
                return bad(format!("confidence_profile.ramp_layers.{d} must satisfy 1 <= first <= last"));
            }
        }
        if !(prof.steepness > 0.0) || !(prof.jitter >= 0.0) {
            return bad("confidence_profile needs steepness > 0 and jitter >= 0".into());
        }
        if let Some(drift) = &self.drift {
            if drift.onset >= self.num_samples {
                return bad(format!(
                    "drift onset {} must be below num_samples {}",
                    drift.onset, self.num_samples
                ));
            }
            check_means("drift.cluster_means", &drift.cluster_means, self.embedding_dim)?;
        }
        Ok(())
    }

    pub fn without_drift(&self) -> Self {
        ScenarioConfig {
            drift: None,
            ..self.clone()
        }
    }

    fn manifest(&self, split: Split) -> TraceManifest {
        TraceManifest {
            num_layers: self.num_layers,
            num_classes: self.num_classes,
            embedding_dim: self.embedding_dim,
            dataset_name: "synthetic".into(),
            split,
        }
    }
}

fn fill(d: usize, v: f64) -> Vec<f64> {
    vec![v; d]
}

/// 2,000 samples, 12 layers, 2 classes, 16-dimensional embeddings, mix
/// (0.5, 0.3, 0.2), seed 42. Cluster means sit ±3 per component apart with
/// unit spread; easy samples settle at layer 1, moderate at 4–5, hard at
/// 10–13 (13 never settles before the last exit).
pub fn default_scenario() -> ScenarioConfig {
    let d = 16;
    ScenarioConfig {
        num_samples: 2000,
        num_layers: 12,
        num_classes: 2,
        embedding_dim: d,
        cluster_means: PerDifficulty {
            easy: fill(d, 0.0),
            moderate: fill(d, 3.0),
            hard: fill(d, -3.0),
        },
        cluster_spread: PerDifficulty {
            easy: 1.0,
            moderate: 1.0,
            hard: 1.0,
        },
        difficulty_mix: PerDifficulty {
            easy: 0.5,
            moderate: 0.3,
            hard: 0.2,
        },
        confidence_profile: ConfidenceProfile {
            ramp_layers: PerDifficulty {
                easy: [1, 1],
                moderate: [4, 5],
                hard: [10, 13],
            },
            steepness: 2.0,
            jitter: 0.03,
        },
        noise: PerDifficulty {
            easy: 0.03,
            moderate: 0.08,
            hard: 0.15,
        },
        drift: None,
        seed: 42,
    }
}

/// The default scenario with the moderate and hard clusters pulled toward
/// the easy one from sample 500 on, far enough that static centroids
/// misroute roughly a quarter of them.
pub fn drift_scenario() -> ScenarioConfig {
    let base = default_scenario();
    let d = base.embedding_dim;
    ScenarioConfig {
        drift: Some(DriftConfig {
            onset: 500,
            cluster_means: PerDifficulty {
                easy: fill(d, 0.0),
                moderate: fill(d, 1.65),
                hard: fill(d, -1.65),
            },
        }),
        ..base
    }
}

/// Edge per-layer cost unit of the committed benchmark.
pub const BENCHMARK_LAMBDA: f64 = 0.02;
/// Cloud platform charge of the committed benchmark, in units of
/// [`BENCHMARK_LAMBDA`].
pub const BENCHMARK_CLOUD_CHARGE_UNITS: f64 = 6.0;

/// Layer split used with the default scenario: mobile 1..=3, edge 1..=6.
pub fn benchmark_deployment() -> DeploymentConfig {
    DeploymentConfig { m: 3, n: 6, l: 12 }
}

/// The standard cost ratios at [`BENCHMARK_LAMBDA`], with the cloud charge
/// raised to [`BENCHMARK_CLOUD_CHARGE_UNITS`] units.
pub fn benchmark_costs() -> CostModel {
    CostModel {
        cloud_charge: BENCHMARK_CLOUD_CHARGE_UNITS * BENCHMARK_LAMBDA,
        ..CostModel::default_costs(BENCHMARK_LAMBDA).expect("positive unit")
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn draw_class(rng: &mut ChaCha8Rng, k: usize) -> usize {
    rng.random_range(0..k)
}

fn generate_inner(config: &ScenarioConfig, id_prefix: &str, split: Split) -> Result<(TraceSet, Vec<Planted>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.num_classes;
    let l = config.num_layers;
    let floor = 1.0 / k as f64;
    let prof = &config.confidence_profile;
    let mix = &config.difficulty_mix;
    let width = ((config.num_samples - 1).max(1) as f64).log10().floor() as usize + 1;

    let mut samples = Vec::with_capacity(config.num_samples);
    let mut planted = Vec::with_capacity(config.num_samples);
    for idx in 0..config.num_samples {
        let u: f64 = rng.random();
        let difficulty = if u < mix.easy {
            PoolLabel::Easy
        } else if u < mix.easy + mix.moderate {
            PoolLabel::Moderate
        } else {
            PoolLabel::Hard
        };

        let drifted = config.drift.as_ref().is_some_and(|d| idx >= d.onset);
        let means = match &config.drift {
            Some(d) if drifted => &d.cluster_means,
            _ => &config.cluster_means,
        };
        let mean = means.get(difficulty);
        let spread = *config.cluster_spread.get(difficulty);
        let embedding: Vec<f64> = mean
            .iter()
            .map(|&mu| {
                let z: f64 = rng.sample(StandardNormal);
                mu + spread * z
            })
            .collect();

        let [lo, hi] = *prof.ramp_layers.get(difficulty);
        let ramp = rng.random_range(lo..=hi);
        let label = draw_class(&mut rng, k);
        let wrong: f64 = rng.random();
        let settled = if wrong < *config.noise.get(difficulty) {
            // uniform over the other classes
            (label + 1 + draw_class(&mut rng, k - 1)) % k
        } else {
            label
        };

        let mid = ramp as f64 - RAMP_LEAD;
        let mut confidences = Vec::with_capacity(l);
        let mut predictions = Vec::with_capacity(l);
        for layer in 1..=l {
            let base = floor + (1.0 - floor) * logistic(prof.steepness * (layer as f64 - mid));
            let jitter = prof.jitter * (2.0 * rng.random::<f64>() - 1.0);
            confidences.push((base + jitter).clamp(floor, 1.0));
            let guess = draw_class(&mut rng, k);
            predictions.push(if layer + 1 >= ramp { settled } else { guess });
        }

        let id = format!("{id_prefix}{idx:0width$}");
        planted.push(Planted {
            id: id.clone(),
            difficulty,
            ramp_layer: ramp,
            drifted,
        });
        samples.push(SampleTrace {
            id,
            embedding,
            confidences,
            predictions,
            label,
        });
    }
    let set = TraceSet {
        manifest: config.manifest(split),
        samples,
    };
    Ok((set, planted))
}

/// The scenario's sample stream in generation order, labelled as a test split.
pub fn generate(config: &ScenarioConfig) -> Result<TraceSet> {
    generate_with_truth(config).map(|(set, _)| set)
}

pub fn generate_with_truth(config: &ScenarioConfig) -> Result<(TraceSet, Vec<Planted>)> {
    generate_inner(config, "s", Split::Test)
}

/// SplitMix64 finalizer over `seed` and a stream tag; used to derive
/// independent sub-seeds from one user seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SPLIT_TAG: u64 = 1;
const DRIFT_TAG: u64 = 2;

pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// A generated scenario laid out for the pipeline.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub train: TraceSet,
    pub validation: TraceSet,
    pub test: TraceSet,
    /// Planted truth for the train/validation/test samples, by id.
    pub planted: BTreeMap<String, Planted>,
    /// With drift configured: a separate stream of `num_samples` samples that
    /// shifts at the onset, plus its planted truth.
    pub drift_stream: Option<(TraceSet, Vec<Planted>)>,
}

/// Generates the drift-free stream and splits it 80/10/10; with drift
/// configured, also generates the shifting test stream from a derived seed.
pub fn materialize(config: &ScenarioConfig) -> Result<ScenarioData> {
    config.validate()?;
    let (base, planted) = generate_with_truth(&config.without_drift())?;
    let (train, validation, test) = split_traces(&base, SPLIT_FRACTIONS, derive_seed(config.seed, SPLIT_TAG))?;
    let drift_stream = match &config.drift {
        Some(_) => {
            let cfg = ScenarioConfig {
                seed: derive_seed(config.seed, DRIFT_TAG),
                ..config.clone()
            };
            Some(generate_inner(&cfg, "d", Split::Test)?)
        }
        None => None,
    };
    Ok(ScenarioData {
        train,
        validation,
        test,
        planted: planted.into_iter().map(|p| (p.id.clone(), p)).collect(),
        drift_stream,
    })
}

pub fn write_planted<'a, W: Write>(planted: impl IntoIterator<Item = &'a Planted>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "difficulty", "ramp_layer", "drifted"])?;
    for p in planted {
        w.write_record([
            p.id.as_str(),
            &p.difficulty.to_string(),
            &p.ramp_layer.to_string(),
            if p.drifted { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

impl ScenarioData {
    /// Writes `train/`, `validation/`, `test/` (and `stream/` with drift),
    /// each in the trace format plus a `planted.csv`.
    pub fn write(&self, out: &Path) -> Result<()> {
        for (name, set) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            let dir = out.join(name);
            write_traces(set, &dir)?;
            let rows = set.iter().map(|s| &self.planted[&s.id]);
            write_planted(rows, create(&dir.join("planted.csv"))?)?;
        }
        if let Some((stream, planted)) = &self.drift_stream {
            let dir = out.join("stream");
            write_traces(stream, &dir)?;
            write_planted(planted, create(&dir.join("planted.csv"))?)?;
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}
