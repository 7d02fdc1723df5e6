//! Straight-line reference implementations used to check the library.
//!
//! Nothing here calls into the library's computation paths; only its data
//! types are read. Each function evaluates every sample's branch by hand.
#![allow(dead_code, clippy::needless_range_loop)]

use dimee::{CostModel, SampleTrace, TraceManifest, TraceSet};

/// 0 = mobile, 1 = edge, 2 = cloud.
pub type Tier = usize;

pub fn grid(num_classes: usize) -> Vec<f64> {
    let lo = 1.0 / num_classes as f64;
    let mut g = Vec::new();
    for k in 0..10 {
        g.push(lo + (1.0 - lo) * k as f64 / 9.0);
    }
    g[9] = 1.0;
    g
}

/// Walks the layers one at a time and stops at the first that qualifies.
pub fn cascade(t: &SampleTrace, alpha: f64, m: usize, n: usize) -> (Tier, usize) {
    let l = t.confidences.len();
    for i in 1..=l {
        let c = t.confidences[i - 1];
        if i <= m && c >= alpha {
            return (0, i);
        }
        if i > m && i <= n && c >= alpha {
            return (1, i);
        }
    }
    (2, l)
}

pub fn cost_of(tier: Tier, layer: usize, costs: &CostModel) -> f64 {
    match tier {
        0 => costs.lambda_mobile * layer as f64,
        1 => costs.lambda_edge * layer as f64 + costs.offload_edge,
        _ => costs.offload_cloud + costs.cloud_charge,
    }
}

pub fn reward_of(t: &SampleTrace, tier: Tier, layer: usize, costs: &CostModel) -> f64 {
    t.confidences[layer - 1] - cost_of(tier, layer, costs)
}

pub fn expected_reward(set: &TraceSet, alpha: f64, m: usize, n: usize, costs: &CostModel) -> f64 {
    let mut total = 0.0;
    for t in &set.samples {
        let (tier, layer) = cascade(t, alpha, m, n);
        total += reward_of(t, tier, layer, costs);
    }
    total / set.samples.len() as f64
}

pub fn calibrate(set: &TraceSet, m: usize, n: usize, costs: &CostModel) -> (f64, Vec<f64>) {
    let g = grid(set.manifest.num_classes);
    let rewards: Vec<f64> = g.iter().map(|&a| expected_reward(set, a, m, n, costs)).collect();
    let mut best = 0;
    for k in 1..g.len() {
        if rewards[k] > rewards[best] {
            best = k;
        }
    }
    (g[best], rewards)
}

pub struct NaivePools {
    pub tiers: Vec<Tier>,
    pub counts: [usize; 3],
    pub sums: [Vec<f64>; 3],
}

impl NaivePools {
    pub fn centroid(&self, k: Tier) -> Option<Vec<f64>> {
        if self.counts[k] == 0 {
            return None;
        }
        Some(self.sums[k].iter().map(|s| s / self.counts[k] as f64).collect())
    }

    pub fn centroids(&self) -> [Option<Vec<f64>>; 3] {
        [self.centroid(0), self.centroid(1), self.centroid(2)]
    }
}

pub fn pools(set: &TraceSet, alpha: f64, m: usize, n: usize) -> NaivePools {
    let d = set.manifest.embedding_dim;
    let mut p = NaivePools {
        tiers: Vec::new(),
        counts: [0; 3],
        sums: [vec![0.0; d], vec![0.0; d], vec![0.0; d]],
    };
    for t in &set.samples {
        let (tier, _) = cascade(t, alpha, m, n);
        p.tiers.push(tier);
        p.counts[tier] += 1;
        for j in 0..d {
            p.sums[tier][j] += t.embedding[j];
        }
    }
    p
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        s += (a[j] - b[j]) * (a[j] - b[j]);
    }
    s
}

pub fn nearest(x: &[f64], centroids: &[Option<Vec<f64>>; 3]) -> Tier {
    let mut best: Option<(Tier, f64)> = None;
    for k in 0..3 {
        if let Some(c) = &centroids[k] {
            let d = sq_dist(x, c);
            match best {
                Some((_, bd)) if d >= bd => {}
                _ => best = Some((k, d)),
            }
        }
    }
    best.expect("some centroid").0
}

/// Inference on an assigned tier: exit at the first confident layer within
/// the tier's deployed layers, else at its last one.
pub fn infer(t: &SampleTrace, tier: Tier, alpha: f64, m: usize, n: usize) -> usize {
    let l = t.confidences.len();
    let last = [m, n, l][tier];
    if tier == 2 {
        return l;
    }
    for i in 1..=last {
        if t.confidences[i - 1] >= alpha {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone)]
pub struct Totals {
    pub tiers: Vec<Tier>,
    pub correct: usize,
    pub total_cost: f64,
    pub total_reward: f64,
}

impl Totals {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.tiers.len() as f64
    }

    pub fn mean_cost(&self) -> f64 {
        self.total_cost / self.tiers.len() as f64
    }

    pub fn mean_reward(&self) -> f64 {
        self.total_reward / self.tiers.len() as f64
    }

    pub fn fraction(&self, k: Tier) -> f64 {
        self.tiers.iter().filter(|&&t| t == k).count() as f64 / self.tiers.len() as f64
    }
}

/// Routes the stream by nearest centroid and prices every sample. In
/// adaptive mode the routing state is kept as running sums and counts, so
/// every centroid is a fresh batch mean.
pub fn run(
    stream: &TraceSet,
    initial: &NaivePools,
    adaptive: bool,
    alpha: f64,
    m: usize,
    n: usize,
    costs: &CostModel,
) -> Totals {
    let mut counts = initial.counts;
    let mut sums = initial.sums.clone();
    let mut out = Totals {
        tiers: Vec::new(),
        correct: 0,
        total_cost: 0.0,
        total_reward: 0.0,
    };
    for t in &stream.samples {
        let centroids: [Option<Vec<f64>>; 3] = std::array::from_fn(|k| {
            (counts[k] > 0).then(|| sums[k].iter().map(|s| s / counts[k] as f64).collect())
        });
        let tier = nearest(&t.embedding, &centroids);
        if adaptive {
            counts[tier] += 1;
            for j in 0..t.embedding.len() {
                sums[tier][j] += t.embedding[j];
            }
        }
        let layer = infer(t, tier, alpha, m, n);
        out.tiers.push(tier);
        if t.predictions[layer - 1] == t.label {
            out.correct += 1;
        }
        out.total_cost += cost_of(tier, layer, costs);
        out.total_reward += reward_of(t, tier, layer, costs);
    }
    out
}

pub fn cloud_only(stream: &TraceSet, costs: &CostModel) -> Totals {
    let mut out = Totals {
        tiers: Vec::new(),
        correct: 0,
        total_cost: 0.0,
        total_reward: 0.0,
    };
    for t in &stream.samples {
        let l = t.confidences.len();
        out.tiers.push(2);
        if t.predictions[l - 1] == t.label {
            out.correct += 1;
        }
        out.total_cost += costs.offload_cloud + costs.cloud_charge;
        out.total_reward += t.confidences[l - 1] - costs.offload_cloud - costs.cloud_charge;
    }
    out
}

pub fn manifest(num_layers: usize, num_classes: usize, embedding_dim: usize) -> TraceManifest {
    TraceManifest {
        num_layers,
        num_classes,
        embedding_dim,
        dataset_name: "fixture".into(),
        split: dimee::Split::Validation,
    }
}

pub fn sample(id: &str, embedding: Vec<f64>, confidences: Vec<f64>, predictions: Vec<usize>, label: usize) -> SampleTrace {
    SampleTrace {
        id: id.into(),
        embedding,
        confidences,
        predictions,
        label,
    }
}
