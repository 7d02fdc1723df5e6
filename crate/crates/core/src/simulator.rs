//! Streaming simulation of routing policies over a trace set.
//!
//! Samples are processed one at a time in arrival order. Each policy picks a
//! device per sample, the device runs its deployed layers with early exit,
//! and the outcome is priced with the cost model.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{monetary_cost, reward, CostField, CostModel, Device, InferenceOutcome};
use crate::error::{Error, Result};
use crate::exit::{calibrate_threshold, first_exit, threshold_grid, DeploymentConfig};
use crate::pooling::{build_pools, PoolState};
use crate::router::{Assignment, DistanceMetric, Router, RoutingMode};
use crate::trace::{SampleTrace, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    DimeeFixed,
    DimeeAdaptive,
    CloudOnly,
    MobileFullEarlyExit,
    RandomAssign { seed: u64 },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::DimeeFixed => "dimee_fixed",
            Policy::DimeeAdaptive => "dimee_adaptive",
            Policy::CloudOnly => "cloud_only",
            Policy::MobileFullEarlyExit => "mobile_full_early_exit",
            Policy::RandomAssign { .. } => "random_assign",
        }
    }

    /// The five policies of the baseline suite, in report order.
    pub fn suite(seed: u64) -> [Policy; 5] {
        [
            Policy::CloudOnly,
            Policy::MobileFullEarlyExit,
            Policy::RandomAssign { seed },
            Policy::DimeeFixed,
            Policy::DimeeAdaptive,
        ]
    }

    fn routing_mode(&self) -> Option<RoutingMode> {
        match self {
            Policy::DimeeFixed => Some(RoutingMode::Fixed),
            Policy::DimeeAdaptive => Some(RoutingMode::Adaptive),
            _ => None,
        }
    }

    /// Parses a policy name; `random_assign` takes `seed`.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        Ok(match name {
            "dimee_fixed" | "fixed" => Policy::DimeeFixed,
            "dimee_adaptive" | "adaptive" => Policy::DimeeAdaptive,
            "cloud_only" | "cloud" => Policy::CloudOnly,
            "mobile_full_early_exit" | "early_exit" => Policy::MobileFullEarlyExit,
            "random_assign" | "random" => Policy::RandomAssign { seed },
            other => return Err(Error::Config(format!("unknown policy {other:?}"))),
        })
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Baseline the percentage cost change is reported against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizeAgainst {
    /// Every sample offloaded to the cloud: `o_c + γ` each.
    #[default]
    Cloud,
    /// The full backbone on mobile without exits: `λ_m·l` each.
    MobileFull,
}

impl FromStr for NormalizeAgainst {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cloud" => Ok(NormalizeAgainst::Cloud),
            "mobile-full" => Ok(NormalizeAgainst::MobileFull),
            other => Err(Error::Config(format!("unknown normalization baseline {other:?}"))),
        }
    }
}

/// Everything a run needs besides the stream and the policy.
#[derive(Debug, Clone, Copy)]
pub struct SimContext<'a> {
    pub alpha: f64,
    pub deployment: DeploymentConfig,
    pub costs: CostModel,
    /// Required by the pool-routing policies.
    pub pools: Option<&'a PoolState>,
    pub distance: DistanceMetric,
    pub normalize: NormalizeAgainst,
}

impl<'a> SimContext<'a> {
    pub fn new(alpha: f64, deployment: DeploymentConfig, costs: CostModel, pools: Option<&'a PoolState>) -> Self {
        SimContext {
            alpha,
            deployment,
            costs,
            pools,
            distance: DistanceMetric::default(),
            normalize: NormalizeAgainst::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceFractions {
    pub mobile: f64,
    pub edge: f64,
    pub cloud: f64,
}

impl DeviceFractions {
    pub fn get(&self, d: Device) -> f64 {
        match d {
            Device::Mobile => self.mobile,
            Device::Edge => self.edge,
            Device::Cloud => self.cloud,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    /// Present for pool-routing policies only.
    pub assignment: Option<Assignment>,
    pub outcome: InferenceOutcome,
    pub cost: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub alpha: f64,
    pub num_samples: usize,
    pub accuracy: f64,
    pub total_cost: f64,
    pub mean_cost: f64,
    /// Percent change of mean cost against the all-cloud baseline; `None`
    /// when that baseline costs nothing.
    pub normalized_cost_delta: Option<f64>,
    /// Percent change against the full-backbone-on-mobile baseline, only
    /// filled when that normalization is selected.
    pub mobile_full_cost_delta: Option<f64>,
    pub device_fractions: DeviceFractions,
    pub mean_reward: f64,
    pub per_sample: Vec<SampleRecord>,
    /// Router state after the last sample, for pool-routing policies.
    pub final_router: Option<Router>,
}

impl RunReport {
    /// The delta selected by `normalize`.
    pub fn cost_delta(&self, normalize: NormalizeAgainst) -> Option<f64> {
        match normalize {
            NormalizeAgainst::Cloud => self.normalized_cost_delta,
            NormalizeAgainst::MobileFull => self.mobile_full_cost_delta,
        }
    }
}

/// `(mean / baseline - 1) * 100`, accumulated as per-sample differences so
/// a run that costs exactly the baseline on every sample reports exactly 0.
fn pct_delta(per_sample: &[SampleRecord], baseline: f64) -> Option<f64> {
    if !(baseline > 0.0) {
        return None;
    }
    let excess: f64 = per_sample.iter().map(|r| r.cost - baseline).sum();
    Some(excess / (per_sample.len() as f64 * baseline) * 100.0)
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

/// Inference on the device a sample was routed to.
///
/// Mobile runs layers `1..=m` and edge `1..=n`, each exiting at the first
/// confident layer or at its last deployed layer otherwise; there is no
/// second offload. The cloud answers with the final classifier.
pub fn device_inference(
    trace: &SampleTrace,
    device: Device,
    alpha: f64,
    cfg: &DeploymentConfig,
) -> InferenceOutcome {
    let last = match device {
        Device::Mobile => cfg.m,
        Device::Edge => cfg.n,
        Device::Cloud => return outcome_at(trace, Device::Cloud, cfg.l),
    };
    let layer = first_exit(&trace.confidences, alpha, 1, last).unwrap_or(last);
    outcome_at(trace, device, layer)
}

pub fn run_stream(traces: &TraceSet, policy: Policy, ctx: &SimContext<'_>) -> Result<RunReport> {
    if traces.is_empty() {
        return Err(Error::Empty("trace set"));
    }
    ctx.deployment.check_traces(traces)?;
    ctx.costs.validate()?;

    let mut router = match policy.routing_mode() {
        Some(mode) => {
            let pools = ctx
                .pools
                .ok_or_else(|| Error::Config(format!("policy {policy} requires pools")))?;
            Some(Router::new(pools.clone(), mode, ctx.distance)?)
        }
        None => None,
    };
    let full_mobile = DeploymentConfig::single_device(ctx.deployment.l)?;
    let mut rng = match policy {
        Policy::RandomAssign { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };

    let mut per_sample = Vec::with_capacity(traces.len());
    for t in traces.iter() {
        let (assignment, outcome) = match policy {
            Policy::DimeeFixed | Policy::DimeeAdaptive => {
                let a = router.as_mut().expect("router built above").route(t)?;
                let o = device_inference(t, a.device, ctx.alpha, &ctx.deployment);
                (Some(a), o)
            }
            Policy::CloudOnly => (None, device_inference(t, Device::Cloud, ctx.alpha, &ctx.deployment)),
            Policy::MobileFullEarlyExit => {
                (None, device_inference(t, Device::Mobile, ctx.alpha, &full_mobile))
            }
            Policy::RandomAssign { .. } => {
                let k = rng.as_mut().expect("rng seeded above").random_range(0..3);
                (None, device_inference(t, Device::ALL[k], ctx.alpha, &ctx.deployment))
            }
        };
        per_sample.push(SampleRecord {
            id: t.id.clone(),
            assignment,
            cost: monetary_cost(&outcome, &ctx.costs),
            reward: reward(&outcome, &ctx.costs),
            outcome,
        });
    }
    Ok(summarize(policy, ctx, per_sample, router))
}

fn summarize(policy: Policy, ctx: &SimContext<'_>, per_sample: Vec<SampleRecord>, router: Option<Router>) -> RunReport {
    let n = per_sample.len();
    let nf = n as f64;
    let mut correct = 0usize;
    let mut total_cost = 0.0;
    let mut total_reward = 0.0;
    let mut per_device = [0usize; 3];
    for r in &per_sample {
        correct += usize::from(r.outcome.correct);
        total_cost += r.cost;
        total_reward += r.reward;
        per_device[r.outcome.device.index()] += 1;
    }
    let mean_cost = total_cost / nf;
    let mobile_full = ctx.costs.lambda_mobile * ctx.deployment.l as f64;
    RunReport {
        policy: policy.name().to_string(),
        alpha: ctx.alpha,
        num_samples: n,
        accuracy: correct as f64 / nf,
        total_cost,
        mean_cost,
        normalized_cost_delta: pct_delta(&per_sample, ctx.costs.cloud_cost()),
        mobile_full_cost_delta: match ctx.normalize {
            NormalizeAgainst::MobileFull => pct_delta(&per_sample, mobile_full),
            NormalizeAgainst::Cloud => None,
        },
        device_fractions: DeviceFractions {
            mobile: per_device[0] as f64 / nf,
            edge: per_device[1] as f64 / nf,
            cloud: per_device[2] as f64 / nf,
        },
        mean_reward: total_reward / nf,
        per_sample,
        final_router: router,
    }
}

/// Runs every baseline plus both pool-routing variants on the same stream.
pub fn run_baseline_suite(traces: &TraceSet, ctx: &SimContext<'_>, seed: u64) -> Result<Vec<RunReport>> {
    Policy::suite(seed)
        .into_iter()
        .map(|p| run_stream(traces, p, ctx))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub field: CostField,
    pub value: f64,
    pub alpha_star: f64,
    pub report: RunReport,
}

/// Trajectory of one cost field: for every value, recalibrate the threshold
/// on `calibration`, rebuild pools at the new threshold, and stream `stream`
/// through adaptive routing.
pub fn sweep_cost(
    calibration: &TraceSet,
    stream: &TraceSet,
    cfg: &DeploymentConfig,
    costs_base: &CostModel,
    field: CostField,
    values: &[f64],
    distance: DistanceMetric,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Config(format!("sweep value {v} for {field} is negative")));
    }
    let grid = threshold_grid(calibration.manifest.num_classes)?;
    values
        .iter()
        .map(|&value| {
            let costs = costs_base.with(field, value);
            let cal = calibrate_threshold(calibration, &grid, cfg, &costs)?;
            let pools = build_pools(calibration, cal.alpha_star, cfg)?;
            let ctx = SimContext {
                distance,
                ..SimContext::new(cal.alpha_star, *cfg, costs, Some(&pools.state))
            };
            let report = run_stream(stream, Policy::DimeeAdaptive, &ctx)?;
            Ok(SweepPoint {
                field,
                value,
                alpha_star: cal.alpha_star,
                report,
            })
        })
        .collect()
}

const CSV_COLUMNS: [&str; 9] = [
    "policy",
    "alpha",
    "accuracy",
    "mean_cost",
    "cost_delta_pct",
    "frac_mobile",
    "frac_edge",
    "frac_cloud",
    "mean_reward",
];

fn report_row(r: &RunReport, normalize: NormalizeAgainst) -> Vec<String> {
    vec![
        r.policy.clone(),
        r.alpha.to_string(),
        r.accuracy.to_string(),
        r.mean_cost.to_string(),
        r.cost_delta(normalize).map(|d| d.to_string()).unwrap_or_default(),
        r.device_fractions.mobile.to_string(),
        r.device_fractions.edge.to_string(),
        r.device_fractions.cloud.to_string(),
        r.mean_reward.to_string(),
    ]
}

/// One row per report.
pub fn write_reports_csv<W: Write>(reports: &[RunReport], normalize: NormalizeAgainst, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.write_record(report_row(r, normalize))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// One row per sweep point, prefixed by the swept field and its value.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], normalize: NormalizeAgainst, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["dimension", "value"];
    header.extend(CSV_COLUMNS);
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.field.to_string(), p.value.to_string()];
        row.extend(report_row(&p.report, normalize));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}
