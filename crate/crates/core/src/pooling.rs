//! Easy / moderate / hard pools built from exit behaviour on a calibration
//! set, and their centroid statistics.
//!
//! A sample's pool is the tier where the cascade concludes it at the
//! operating threshold: mobile exits are easy, edge exits moderate, the rest
//! hard. Each pool is summarised by the mean of its members' embeddings.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::Device;
use crate::error::{Error, Result};
use crate::exit::{cascade_outcome, DeploymentConfig};
use crate::trace::TraceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolLabel {
    Easy,
    Moderate,
    Hard,
}

impl PoolLabel {
    /// In tie-break priority order.
    pub const ALL: [PoolLabel; 3] = [PoolLabel::Easy, PoolLabel::Moderate, PoolLabel::Hard];

    pub fn device(self) -> Device {
        match self {
            PoolLabel::Easy => Device::Mobile,
            PoolLabel::Moderate => Device::Edge,
            PoolLabel::Hard => Device::Cloud,
        }
    }

    pub fn from_device(device: Device) -> Self {
        match device {
            Device::Mobile => PoolLabel::Easy,
            Device::Edge => PoolLabel::Moderate,
            Device::Cloud => PoolLabel::Hard,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PoolLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolLabel::Easy => "easy",
            PoolLabel::Moderate => "moderate",
            PoolLabel::Hard => "hard",
        })
    }
}

impl FromStr for PoolLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(PoolLabel::Easy),
            "moderate" => Ok(PoolLabel::Moderate),
            "hard" => Ok(PoolLabel::Hard),
            other => Err(Error::Data(format!("unknown pool label {other:?}"))),
        }
    }
}

/// One pool's running mean. `centroid` is `None` exactly when `count == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub count: u64,
    pub centroid: Option<Vec<f64>>,
}

impl Pool {
    pub fn empty() -> Self {
        Pool {
            count: 0,
            centroid: None,
        }
    }

    /// `P ← (n·P + x) / (n + 1)`, `n ← n + 1`.
    pub fn absorb(&mut self, x: &[f64]) {
        let n = self.count as f64;
        match &mut self.centroid {
            Some(c) => {
                for (ci, &xi) in c.iter_mut().zip(x) {
                    *ci = (n * *ci + xi) / (n + 1.0);
                }
            }
            None => self.centroid = Some(x.to_vec()),
        }
        self.count += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pools {
    pub easy: Pool,
    pub moderate: Pool,
    pub hard: Pool,
}

/// The three pool centroids with their member counts. Serializes as the
/// pool file: `{"d": .., "pools": {"easy": {"count": .., "centroid": [..] | null}, ..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub d: usize,
    pub pools: Pools,
}

impl PoolState {
    pub fn empty(d: usize) -> Self {
        PoolState {
            d,
            pools: Pools {
                easy: Pool::empty(),
                moderate: Pool::empty(),
                hard: Pool::empty(),
            },
        }
    }

    pub fn get(&self, label: PoolLabel) -> &Pool {
        match label {
            PoolLabel::Easy => &self.pools.easy,
            PoolLabel::Moderate => &self.pools.moderate,
            PoolLabel::Hard => &self.pools.hard,
        }
    }

    pub fn get_mut(&mut self, label: PoolLabel) -> &mut Pool {
        match label {
            PoolLabel::Easy => &mut self.pools.easy,
            PoolLabel::Moderate => &mut self.pools.moderate,
            PoolLabel::Hard => &mut self.pools.hard,
        }
    }

    pub fn centroid(&self, label: PoolLabel) -> Option<&[f64]> {
        self.get(label).centroid.as_deref()
    }

    pub fn counts(&self) -> [u64; 3] {
        PoolLabel::ALL.map(|p| self.get(p).count)
    }

    pub fn total(&self) -> u64 {
        self.counts().iter().sum()
    }

    /// Checks the defined-iff-nonempty and dimension invariants.
    pub fn validate(&self) -> Result<()> {
        for label in PoolLabel::ALL {
            let pool = self.get(label);
            match (&pool.centroid, pool.count) {
                (None, 0) => {}
                (Some(c), n) if n > 0 => {
                    if c.len() != self.d {
                        return Err(Error::Data(format!(
                            "{label} centroid has dimension {}, expected {}",
                            c.len(),
                            self.d
                        )));
                    }
                    if c.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Data(format!("{label} centroid is not finite")));
                    }
                }
                (None, n) => {
                    return Err(Error::Data(format!(
                        "{label} pool has count {n} but no centroid"
                    )))
                }
                (Some(_), _) => {
                    return Err(Error::Data(format!(
                        "{label} pool is empty but has a centroid"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Output of pool construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolBuild {
    pub state: PoolState,
    pub membership: BTreeMap<String, PoolLabel>,
    /// Mean exit confidence of each pool's members at assignment time.
    pub mean_exit_confidence: [Option<f64>; 3],
}

pub fn build_pools(traces: &TraceSet, alpha: f64, cfg: &DeploymentConfig) -> Result<PoolBuild> {
    if traces.is_empty() {
        return Err(Error::Empty("trace set"));
    }
    cfg.check_traces(traces)?;
    let d = traces.manifest.embedding_dim;
    let mut sums = [vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut counts = [0u64; 3];
    let mut conf = [0.0f64; 3];
    let mut membership = BTreeMap::new();

    for t in traces.iter() {
        let outcome = cascade_outcome(t, alpha, cfg);
        let label = PoolLabel::from_device(outcome.device);
        let k = label.index();
        for (s, &x) in sums[k].iter_mut().zip(&t.embedding) {
            *s += x;
        }
        counts[k] += 1;
        conf[k] += outcome.confidence;
        membership.insert(t.id.clone(), label);
    }

    let mut state = PoolState::empty(d);
    let mut mean_exit_confidence = [None; 3];
    for label in PoolLabel::ALL {
        let k = label.index();
        if counts[k] == 0 {
            continue;
        }
        let n = counts[k] as f64;
        let pool = state.get_mut(label);
        pool.count = counts[k];
        pool.centroid = Some(sums[k].iter().map(|s| s / n).collect());
        mean_exit_confidence[k] = Some(conf[k] / n);
    }
    Ok(PoolBuild {
        state,
        membership,
        mean_exit_confidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummaryEntry {
    pub pool: PoolLabel,
    pub count: u64,
    pub fraction: f64,
    pub mean_exit_confidence: Option<f64>,
    /// `None` when the pool is empty.
    pub centroid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub total: u64,
    pub pools: Vec<PoolSummaryEntry>,
}

pub fn pool_summary(state: &PoolState, mean_exit_confidence: Option<&[Option<f64>; 3]>) -> PoolSummary {
    let total = state.total();
    let pools = PoolLabel::ALL
        .iter()
        .map(|&label| {
            let pool = state.get(label);
            PoolSummaryEntry {
                pool: label,
                count: pool.count,
                fraction: if total == 0 {
                    0.0
                } else {
                    pool.count as f64 / total as f64
                },
                mean_exit_confidence: mean_exit_confidence.and_then(|m| m[label.index()]),
                centroid: pool.centroid.clone(),
            }
        })
        .collect();
    PoolSummary { total, pools }
}

impl PoolBuild {
    pub fn summary(&self) -> PoolSummary {
        pool_summary(&self.state, Some(&self.mean_exit_confidence))
    }
}

/// Writes one CSV row per sample: `id,pool,e0,..,e{d-1}`.
pub fn export_embeddings<W: Write>(
    traces: &TraceSet,
    membership: &BTreeMap<String, PoolLabel>,
    out: W,
) -> Result<()> {
    let d = traces.manifest.embedding_dim;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "pool".to_string()];
    header.extend((0..d).map(|j| format!("e{j}")));
    w.write_record(&header)?;
    for t in traces.iter() {
        let label = membership
            .get(&t.id)
            .ok_or_else(|| Error::Data(format!("sample {:?} has no pool membership", t.id)))?;
        let mut row = Vec::with_capacity(d + 2);
        row.push(t.id.clone());
        row.push(label.to_string());
        row.extend(t.embedding.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// Writes `id,pool` rows in trace order.
pub fn write_membership<W: Write>(
    traces: &TraceSet,
    membership: &BTreeMap<String, PoolLabel>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "pool"])?;
    for t in traces.iter() {
        let label = membership
            .get(&t.id)
            .ok_or_else(|| Error::Data(format!("sample {:?} has no pool membership", t.id)))?;
        w.write_record([t.id.as_str(), &label.to_string()])?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}
