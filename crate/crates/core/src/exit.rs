//! Confidence-threshold exits, the three-tier cascade, and threshold
//! calibration against the expected cost-aware reward.

use serde::{Deserialize, Serialize};

use crate::cost::{reward, CostModel, Device, InferenceOutcome};
use crate::error::{Error, Result};
use crate::trace::{SampleTrace, TraceSet};

/// Layer split across tiers: mobile holds layers `1..=m`, edge `1..=n`, and
/// the cloud the full backbone of `l` layers.
///
/// `m == n` leaves no distinct edge tier; `n == l` leaves nothing for the
/// cloud beyond the last exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    pub m: usize,
    pub n: usize,
    pub l: usize,
}

impl DeploymentConfig {
    pub fn new(m: usize, n: usize, l: usize) -> Result<Self> {
        if !(1 <= m && m <= n && n <= l) {
            return Err(Error::Config(format!(
                "deployment requires 1 ≤ m ≤ n ≤ l, got m={m}, n={n}, l={l}"
            )));
        }
        Ok(DeploymentConfig { m, n, l })
    }

    /// The whole backbone on one device (`m = n = l`).
    pub fn single_device(l: usize) -> Result<Self> {
        Self::new(l, l, l)
    }

    pub fn check_traces(&self, set: &TraceSet) -> Result<()> {
        if set.num_layers() != self.l {
            return Err(Error::Config(format!(
                "deployment has l={} but traces have {} layers",
                self.l,
                set.num_layers()
            )));
        }
        Ok(())
    }
}

/// Number of candidate thresholds in a grid.
pub const GRID_SIZE: usize = 10;

/// Candidate thresholds, equidistant from `1/|C|` to `1.0` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    values: Vec<f64>,
}

impl ThresholdGrid {
    pub fn for_classes(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "threshold grid needs at least 2 classes, got {num_classes}"
            )));
        }
        let lo = 1.0 / num_classes as f64;
        let steps = (GRID_SIZE - 1) as f64;
        let mut values: Vec<f64> = (0..GRID_SIZE)
            .map(|k| lo + (1.0 - lo) * k as f64 / steps)
            .collect();
        values[GRID_SIZE - 1] = 1.0;
        Ok(ThresholdGrid { values })
    }

    /// An arbitrary non-empty candidate list, for experiments off the
    /// standard grid.
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("threshold grid"));
        }
        Ok(ThresholdGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn threshold_grid(num_classes: usize) -> Result<ThresholdGrid> {
    ThresholdGrid::for_classes(num_classes)
}

/// Smallest 1-indexed layer in `from..=to` whose confidence reaches `alpha`.
pub fn first_exit(confidences: &[f64], alpha: f64, from: usize, to: usize) -> Option<usize> {
    debug_assert!(1 <= from && from <= to && to <= confidences.len());
    (from..=to).find(|&i| confidences[i - 1] >= alpha)
}

fn outcome_at(trace: &SampleTrace, device: Device, layer: usize) -> InferenceOutcome {
    let prediction = trace.prediction(layer);
    InferenceOutcome {
        device,
        exit_layer: layer,
        confidence: trace.confidence(layer),
        prediction,
        correct: prediction == trace.label,
    }
}

/// Where the full cascade concludes a sample: the first confident exit on
/// mobile, else on edge, else the final cloud classifier.
pub fn cascade_outcome(trace: &SampleTrace, alpha: f64, cfg: &DeploymentConfig) -> InferenceOutcome {
    let c = &trace.confidences;
    if let Some(i) = first_exit(c, alpha, 1, cfg.m) {
        return outcome_at(trace, Device::Mobile, i);
    }
    if cfg.m < cfg.n {
        if let Some(i) = first_exit(c, alpha, cfg.m + 1, cfg.n) {
            return outcome_at(trace, Device::Edge, i);
        }
    }
    outcome_at(trace, Device::Cloud, cfg.l)
}

/// Sample mean of the per-sample reward under the cascade, summed in
/// stream order.
pub fn empirical_expected_reward(
    traces: &TraceSet,
    alpha: f64,
    cfg: &DeploymentConfig,
    costs: &CostModel,
) -> Result<f64> {
    if traces.is_empty() {
        return Err(Error::Empty("trace set"));
    }
    let total: f64 = traces
        .iter()
        .map(|t| reward(&cascade_outcome(t, alpha, cfg), costs))
        .sum();
    Ok(total / traces.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub alpha_star: f64,
    pub grid: Vec<f64>,
    pub expected_reward: Vec<f64>,
}

/// Picks the grid threshold with the highest empirical expected reward.
/// Ties go to the smallest threshold.
pub fn calibrate_threshold(
    traces: &TraceSet,
    grid: &ThresholdGrid,
    cfg: &DeploymentConfig,
    costs: &CostModel,
) -> Result<CalibrationReport> {
    if traces.is_empty() {
        return Err(Error::Empty("trace set"));
    }
    cfg.check_traces(traces)?;
    let rewards = grid
        .values()
        .iter()
        .map(|&a| empirical_expected_reward(traces, a, cfg, costs))
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (k, &r) in rewards.iter().enumerate().skip(1) {
        if r > rewards[best] {
            best = k;
        }
    }
    Ok(CalibrationReport {
        alpha_star: grid.values()[best],
        grid: grid.values().to_vec(),
        expected_reward: rewards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Split, TraceManifest};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn trace(conf: &[f64]) -> SampleTrace {
        SampleTrace {
            id: "t".into(),
            embedding: vec![0.0],
            confidences: conf.to_vec(),
            predictions: (0..conf.len()).collect(),
            label: 1,
        }
    }

    fn set(samples: Vec<SampleTrace>, classes: usize) -> TraceSet {
        let l = samples[0].confidences.len();
        TraceSet {
            manifest: TraceManifest {
                num_layers: l,
                num_classes: classes.max(l),
                embedding_dim: 1,
                dataset_name: "unit".into(),
                split: Split::Validation,
            },
            samples,
        }
    }

    #[test]
    fn deployment_bounds() {
        assert!(DeploymentConfig::new(3, 6, 12).is_ok());
        assert!(DeploymentConfig::new(6, 6, 12).is_ok());
        assert!(DeploymentConfig::new(3, 12, 12).is_ok());
        let err = DeploymentConfig::new(7, 6, 12).unwrap_err();
        assert!(err.to_string().contains("1 ≤ m ≤ n ≤ l"));
        assert!(DeploymentConfig::new(0, 6, 12).is_err());
        assert!(DeploymentConfig::new(3, 13, 12).is_err());
    }

    #[test]
    fn grid_binary() {
        let g = threshold_grid(2).unwrap();
        let v = g.values();
        assert_eq!(v.len(), 10);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[9], 1.0);
        assert_abs_diff_eq!(v[1], 0.5 + 1.0 / 18.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.5556, epsilon = 1e-4);
        assert_abs_diff_eq!(v[2], 0.6111, epsilon = 1e-4);
        for w in v.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 1.0 / 18.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_four_and_one_classes() {
        let g = threshold_grid(4).unwrap();
        let v = g.values();
        assert_eq!(v[0], 0.25);
        assert_eq!(v[9], 1.0);
        for w in v.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 0.75 / 9.0, epsilon = 1e-12);
        }
        assert!(threshold_grid(1).unwrap_err().is_config());
        for c in 2..50 {
            let g = threshold_grid(c).unwrap();
            let v = g.values();
            let step = (1.0 - 1.0 / c as f64) / 9.0;
            for w in v.windows(2) {
                assert!((w[1] - w[0] - step).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn first_exit_cases() {
        assert_eq!(first_exit(&[0.6, 0.95, 0.97], 0.9, 1, 3), Some(2));
        assert_eq!(first_exit(&[0.6, 0.7, 0.8], 0.9, 1, 3), None);
        assert_eq!(first_exit(&[0.6, 0.7, 0.8], 0.0, 1, 3), Some(1));
        // exactly at threshold exits
        assert_eq!(first_exit(&[0.6, 0.9, 0.8], 0.9, 1, 3), Some(2));
        assert_eq!(first_exit(&[0.95, 0.7, 0.99], 0.9, 2, 3), Some(3));
    }

    #[test]
    fn cascade_branches() {
        let cfg = DeploymentConfig::new(3, 6, 12).unwrap();
        let mut c = vec![0.5, 0.95];
        c.resize(12, 0.99);
        let o = cascade_outcome(&trace(&c), 0.9, &cfg);
        assert_eq!((o.device, o.exit_layer, o.prediction), (Device::Mobile, 2, 1));
        assert!(o.correct);

        let mut c = vec![0.5, 0.6, 0.7, 0.8, 0.92];
        c.resize(12, 0.99);
        let o = cascade_outcome(&trace(&c), 0.9, &cfg);
        assert_eq!((o.device, o.exit_layer), (Device::Edge, 5));
        assert_eq!(o.confidence, 0.92);

        let mut c = vec![0.6; 6];
        c.resize(12, 0.85);
        let o = cascade_outcome(&trace(&c), 0.9, &cfg);
        assert_eq!((o.device, o.exit_layer, o.prediction), (Device::Cloud, 12, 11));
        assert_eq!(o.confidence, 0.85);
    }

    #[test]
    fn degenerate_configs() {
        // m == n: confident at layer 4 but no edge tier, so cloud
        let cfg = DeploymentConfig::new(3, 3, 6).unwrap();
        let o = cascade_outcome(&trace(&[0.5, 0.5, 0.5, 0.99, 0.99, 0.99]), 0.9, &cfg);
        assert_eq!(o.device, Device::Cloud);
        // n == l: an exit at l itself lands on the edge
        let cfg = DeploymentConfig::new(2, 6, 6).unwrap();
        let o = cascade_outcome(&trace(&[0.5, 0.5, 0.5, 0.5, 0.5, 0.95]), 0.9, &cfg);
        assert_eq!((o.device, o.exit_layer), (Device::Edge, 6));
        let o = cascade_outcome(&trace(&[0.5; 6]), 0.9, &cfg);
        assert_eq!((o.device, o.exit_layer), (Device::Cloud, 6));
    }

    fn unit_costs() -> CostModel {
        CostModel {
            lambda_mobile: 0.15,
            lambda_edge: 0.10,
            offload_edge: 0.25,
            offload_cloud: 0.30,
            cloud_charge: 0.10,
        }
    }

    #[test]
    fn expected_reward_small_cases() {
        let cfg = DeploymentConfig::new(3, 6, 12).unwrap();
        let mut a = vec![0.5, 0.95];
        a.resize(12, 0.99);
        let mut b = vec![0.5, 0.6, 0.7, 0.8, 0.92];
        b.resize(12, 0.99);
        let one = set(vec![trace(&a)], 12);
        let r = empirical_expected_reward(&one, 0.9, &cfg, &unit_costs()).unwrap();
        assert_abs_diff_eq!(r, 0.65, epsilon = 1e-12);
        let two = set(vec![trace(&a), trace(&b)], 12);
        let r = empirical_expected_reward(&two, 0.9, &cfg, &unit_costs()).unwrap();
        assert_abs_diff_eq!(r, 0.41, epsilon = 1e-12);

        let empty = TraceSet {
            manifest: one.manifest.clone(),
            samples: vec![],
        };
        assert!(empirical_expected_reward(&empty, 0.9, &cfg, &unit_costs()).is_err());
    }

    #[test]
    fn calibration_tie_breaks_to_smallest() {
        let cfg = DeploymentConfig::new(3, 6, 12).unwrap();
        let tiny = CostModel::default_costs(1e-4).unwrap();
        let samples = (0..5).map(|_| trace(&[0.99; 12])).collect();
        let s = set(samples, 12);
        let grid = threshold_grid(2).unwrap();
        let rep = calibrate_threshold(&s, &grid, &cfg, &tiny).unwrap();
        assert_eq!(rep.alpha_star, 0.5);
        assert_eq!(rep.grid.len(), 10);
        assert_eq!(rep.expected_reward.len(), 10);
    }

    #[test]
    fn calibration_rejects_layer_mismatch() {
        let cfg = DeploymentConfig::new(3, 6, 12).unwrap();
        let s = set(vec![trace(&[0.9; 8])], 8);
        let grid = threshold_grid(2).unwrap();
        assert!(calibrate_threshold(&s, &grid, &cfg, &unit_costs()).unwrap_err().is_config());
    }

    proptest! {
        #[test]
        fn exit_monotone_in_alpha(
            c in prop::collection::vec(0.5f64..=1.0, 12),
            a1 in 0.0f64..=1.0,
            a2 in 0.0f64..=1.0,
            from in 1usize..=12,
            span in 0usize..12,
        ) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let to = (from + span).min(12);
            let e_lo = first_exit(&c, lo, from, to);
            let e_hi = first_exit(&c, hi, from, to);
            if let Some(h) = e_hi {
                let l = e_lo.expect("exit at higher alpha implies exit at lower");
                prop_assert!(l <= h);
            }
        }

        #[test]
        fn cascade_respects_tier_bounds(
            c in prop::collection::vec(0.5f64..=1.0, 12),
            alpha in 0.5f64..=1.0,
            m in 1usize..=12,
            dn in 0usize..12,
        ) {
            let n = (m + dn).min(12);
            let cfg = DeploymentConfig::new(m, n, 12).unwrap();
            let o = cascade_outcome(&trace(&c), alpha, &cfg);
            match o.device {
                Device::Mobile => prop_assert!(o.exit_layer <= m),
                Device::Edge => prop_assert!(o.exit_layer > m && o.exit_layer <= n),
                Device::Cloud => prop_assert_eq!(o.exit_layer, 12),
            }
        }
    }
}
