//! Cost parameters and the per-sample reward.
//!
//! All quantities are dimensionless cost units. With exit layer `i`:
//!
//! | device | reward                  | monetary cost   |
//! |--------|-------------------------|-----------------|
//! | mobile | `C_i - λ_m·i`           | `λ_m·i`         |
//! | edge   | `C_i - λ_e·i - o_e`     | `λ_e·i + o_e`   |
//! | cloud  | `C_l - o_c - γ`         | `o_c + γ`       |
//!
//! so `reward + monetary_cost` is always the exit confidence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    Mobile,
    Edge,
    Cloud,
}

impl Device {
    pub const ALL: [Device; 3] = [Device::Mobile, Device::Edge, Device::Cloud];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Device::Mobile => "mobile",
            Device::Edge => "edge",
            Device::Cloud => "cloud",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Per-layer processing cost on the mobile device.
    pub lambda_mobile: f64,
    /// Per-layer processing cost on the edge server.
    pub lambda_edge: f64,
    /// One-time mobile to edge transfer cost.
    pub offload_edge: f64,
    /// One-time mobile to cloud transfer cost.
    pub offload_cloud: f64,
    /// Flat per-sample charge of the cloud platform.
    pub cloud_charge: f64,
}

/// One field of [`CostModel`], used by cost sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostField {
    #[serde(rename = "lambda_m")]
    LambdaMobile,
    #[serde(rename = "lambda_e")]
    LambdaEdge,
    #[serde(rename = "o_e")]
    OffloadEdge,
    #[serde(rename = "o_c")]
    OffloadCloud,
    #[serde(rename = "gamma")]
    CloudCharge,
}

impl fmt::Display for CostField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostField::LambdaMobile => "lambda_m",
            CostField::LambdaEdge => "lambda_e",
            CostField::OffloadEdge => "o_e",
            CostField::OffloadCloud => "o_c",
            CostField::CloudCharge => "gamma",
        })
    }
}

impl FromStr for CostField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lambda_m" | "lambda_mobile" => CostField::LambdaMobile,
            "lambda_e" | "lambda_edge" => CostField::LambdaEdge,
            "o_e" | "offload_edge" => CostField::OffloadEdge,
            "o_c" | "offload_cloud" => CostField::OffloadCloud,
            "gamma" | "cloud_charge" => CostField::CloudCharge,
            other => return Err(Error::Config(format!("unknown cost field {other:?}"))),
        })
    }
}

impl CostModel {
    /// Base cost structure expressed in multiples of the edge per-layer cost
    /// `unit`: `λ_e = unit`, `λ_m = 1.5·unit`, `o_e = 2.5·unit`,
    /// `o_c = 3·unit`, and the cloud charge defaults to `unit`.
    pub fn default_costs(unit: f64) -> Result<Self> {
        if !(unit > 0.0) || !unit.is_finite() {
            return Err(Error::Config(format!(
                "lambda unit must be positive, got {unit}"
            )));
        }
        Ok(CostModel {
            lambda_mobile: 1.5 * unit,
            lambda_edge: unit,
            offload_edge: 2.5 * unit,
            offload_cloud: 3.0 * unit,
            cloud_charge: unit,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_mobile", self.lambda_mobile),
            ("lambda_edge", self.lambda_edge),
            ("offload_edge", self.offload_edge),
            ("offload_cloud", self.offload_cloud),
            ("cloud_charge", self.cloud_charge),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "cost {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, field: CostField) -> f64 {
        match field {
            CostField::LambdaMobile => self.lambda_mobile,
            CostField::LambdaEdge => self.lambda_edge,
            CostField::OffloadEdge => self.offload_edge,
            CostField::OffloadCloud => self.offload_cloud,
            CostField::CloudCharge => self.cloud_charge,
        }
    }

    pub fn with(mut self, field: CostField, value: f64) -> Self {
        match field {
            CostField::LambdaMobile => self.lambda_mobile = value,
            CostField::LambdaEdge => self.lambda_edge = value,
            CostField::OffloadEdge => self.offload_edge = value,
            CostField::OffloadCloud => self.offload_cloud = value,
            CostField::CloudCharge => self.cloud_charge = value,
        }
        self
    }

    pub fn scaled(self, t: f64) -> Self {
        CostModel {
            lambda_mobile: self.lambda_mobile * t,
            lambda_edge: self.lambda_edge * t,
            offload_edge: self.offload_edge * t,
            offload_cloud: self.offload_cloud * t,
            cloud_charge: self.cloud_charge * t,
        }
    }

    /// Cost of running every sample on the cloud.
    pub fn cloud_cost(&self) -> f64 {
        self.offload_cloud + self.cloud_charge
    }
}

/// Result of inferring one sample on one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutcome {
    pub device: Device,
    /// 1-indexed layer whose classifier produced the prediction.
    pub exit_layer: usize,
    pub confidence: f64,
    pub prediction: usize,
    pub correct: bool,
}

// Callers guarantee the device/layer invariant (mobile exits by m, edge by n,
// cloud at l); the arithmetic below does not re-check it.

pub fn reward(outcome: &InferenceOutcome, costs: &CostModel) -> f64 {
    let i = outcome.exit_layer as f64;
    match outcome.device {
        Device::Mobile => outcome.confidence - costs.lambda_mobile * i,
        Device::Edge => outcome.confidence - costs.lambda_edge * i - costs.offload_edge,
        Device::Cloud => outcome.confidence - costs.offload_cloud - costs.cloud_charge,
    }
}

pub fn monetary_cost(outcome: &InferenceOutcome, costs: &CostModel) -> f64 {
    let i = outcome.exit_layer as f64;
    match outcome.device {
        Device::Mobile => costs.lambda_mobile * i,
        Device::Edge => costs.lambda_edge * i + costs.offload_edge,
        Device::Cloud => costs.offload_cloud + costs.cloud_charge,
    }
}
