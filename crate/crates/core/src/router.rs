//! Nearest-centroid device routing over embeddings.
//!
//! Fixed routing compares each incoming embedding with static pool means.
//! Adaptive routing does the same, then folds the embedding into the chosen
//! pool's running mean. Updates use only the embedding; no label feedback.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::Device;
use crate::error::{Error, Result};
use crate::pooling::{PoolLabel, PoolState};
use crate::trace::SampleTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    #[default]
    Fixed,
    Adaptive,
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingMode::Fixed => "fixed",
            RoutingMode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(RoutingMode::Fixed),
            "adaptive" => Ok(RoutingMode::Adaptive),
            other => Err(Error::Config(format!("unknown routing mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceMetric {
    #[default]
    #[serde(rename = "sq_euclidean")]
    SqEuclidean,
    #[serde(rename = "cosine")]
    Cosine,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            DistanceMetric::SqEuclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum(),
            DistanceMetric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                // A zero vector has no direction; treat it as orthogonal.
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na.sqrt() * nb.sqrt())
                }
            }
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::SqEuclidean => "sq_euclidean",
            DistanceMetric::Cosine => "cosine",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sq_euclidean" | "euclidean" => Ok(DistanceMetric::SqEuclidean),
            "cosine" => Ok(DistanceMetric::Cosine),
            other => Err(Error::Config(format!("unknown distance metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub sample_id: String,
    pub pool: PoolLabel,
    pub device: Device,
    /// Distance to the easy, moderate and hard centroids; `None` for
    /// undefined centroids.
    pub distances: [Option<f64>; 3],
}

/// Picks the nearest defined centroid; ties go Easy, then Moderate, then Hard.
pub fn classify_embedding(
    x: &[f64],
    state: &PoolState,
    metric: DistanceMetric,
) -> Result<(PoolLabel, [Option<f64>; 3])> {
    if x.len() != state.d {
        return Err(Error::Data(format!(
            "embedding has dimension {}, pools have {}",
            x.len(),
            state.d
        )));
    }
    let distances = PoolLabel::ALL.map(|p| state.centroid(p).map(|c| metric.distance(x, c)));
    let mut best: Option<(PoolLabel, f64)> = None;
    for (label, d) in PoolLabel::ALL.iter().zip(&distances) {
        if let Some(d) = *d {
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((*label, d));
            }
        }
    }
    let (label, _) = best.ok_or(Error::NoCentroids)?;
    Ok((label, distances))
}

fn assignment(trace: &SampleTrace, state: &PoolState, metric: DistanceMetric) -> Result<Assignment> {
    let (pool, distances) = classify_embedding(&trace.embedding, state, metric)?;
    Ok(Assignment {
        sample_id: trace.id.clone(),
        pool,
        device: pool.device(),
        distances,
    })
}

pub fn route_fixed(trace: &SampleTrace, state: &PoolState, metric: DistanceMetric) -> Result<Assignment> {
    assignment(trace, state, metric)
}

/// Classifies against `state`, then returns the state with the chosen pool's
/// mean and count updated.
pub fn route_adaptive(
    trace: &SampleTrace,
    state: &PoolState,
    metric: DistanceMetric,
) -> Result<(Assignment, PoolState)> {
    let a = assignment(trace, state, metric)?;
    let mut next = state.clone();
    next.get_mut(a.pool).absorb(&trace.embedding);
    Ok((a, next))
}

/// Router state: current centroids and counts plus the routing mode.
///
/// Serializes as the pool file extended with `mode` and `distance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Router {
    #[serde(flatten)]
    state: PoolState,
    mode: RoutingMode,
    distance: DistanceMetric,
}

impl Router {
    /// Counts start at the calibration pool sizes.
    pub fn new(pools: PoolState, mode: RoutingMode, distance: DistanceMetric) -> Result<Self> {
        pools.validate()?;
        if pools.total() == 0 {
            return Err(Error::NoCentroids);
        }
        Ok(Router {
            state: pools,
            mode,
            distance,
        })
    }

    pub fn mode(&self) -> RoutingMode {
        self.mode
    }

    pub fn distance(&self) -> DistanceMetric {
        self.distance
    }

    pub fn state(&self) -> &PoolState {
        &self.state
    }

    /// Routes one sample; in adaptive mode this must be called in stream order.
    pub fn route(&mut self, trace: &SampleTrace) -> Result<Assignment> {
        let a = assignment(trace, &self.state, self.distance)?;
        if self.mode == RoutingMode::Adaptive {
            self.state.get_mut(a.pool).absorb(&trace.embedding);
        }
        Ok(a)
    }
}

pub fn initialize_router(pools: PoolState, mode: RoutingMode) -> Result<Router> {
    Router::new(pools, mode, DistanceMetric::default())
}
