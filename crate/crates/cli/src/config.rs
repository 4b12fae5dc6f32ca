//! Run configuration read from a TOML file. Every section is optional and
//! falls back to the defaults documented on each field.

use std::path::Path;

use anyhow::{Context, Result};
use perifit::estimator::EstimationConfig;
use perifit::fundamental::PhiConfig;
use perifit::morris_lecar::{DataConfig, MorrisLecarParams, K_LAMBDA};
use perifit::predictor::DEFAULT_CONDITION_LIMIT;
use perifit::signal::Interpolation;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model parameters; also the truth for `simulate` and the default start
    /// for `estimate`.
    pub model: MorrisLecarParams,
    /// Data generation: `dt_int = 0.0002`, `sample_dt = 0.04`.
    pub simulate: DataConfig,
    pub signal: SignalConfig,
    /// Fundamental matrix: `dt_int = 0.0002`, 40 quadrature nodes per sample.
    pub phi: PhiConfig,
    pub gain: GainConfig,
    pub predictor: PredictorConfig,
    /// Optimizer: `max_iters = 12000`; `lambda0` defaults to the model values.
    pub estimate: EstimationConfig,
    pub diagnose: DiagnoseConfig,
    pub scan: ScanConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    /// `cubic` (default), `linear` or `trigonometric`.
    pub interpolation: Interpolation,
}

/// Observer gain. Without `l` the gain is certified with `Q = 2`, giving
/// `l = -1`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainConfig {
    pub l: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// Largest admissible condition number of `I - M`.
    pub condition_limit: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            condition_limit: DEFAULT_CONDITION_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// PE threshold; defaults to `1e-6 T mean(y^2)`.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Centre in model coordinates; defaults to `estimate.lambda0`, then the model.
    pub base: Vec<f64>,
    pub axis1: AxisConfig,
    pub axis2: AxisConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            base: Vec::new(),
            axis1: AxisConfig {
                index: 0,
                ..AxisConfig::default()
            },
            axis2: AxisConfig {
                index: 5,
                ..AxisConfig::default()
            },
        }
    }
}

/// One scan axis in optimizer coordinates `(1/V2, V1/V2, V3, V4, T0, gCa, gK)`.
/// The range is `[lo, hi]` when both are given, otherwise `centre (1 -+ rel)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxisConfig {
    pub index: usize,
    pub count: usize,
    pub rel: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Default for AxisConfig {
    fn default() -> Self {
        Self {
            index: 0,
            count: 21,
            rel: 0.05,
            lo: None,
            hi: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.model.validate()?;
        Ok(cfg)
    }

    /// `estimate.lambda0`, or the model's gating and conductance values.
    pub fn lambda0(&self) -> Result<Vec<f64>> {
        if self.estimate.lambda0.is_empty() {
            return Ok(self.model.lambda().to_vec());
        }
        if self.estimate.lambda0.len() != K_LAMBDA {
            anyhow::bail!(perifit::Error::Invalid(format!(
                "estimate.lambda0 needs {K_LAMBDA} values, got {}",
                self.estimate.lambda0.len()
            )));
        }
        Ok(self.estimate.lambda0.clone())
    }
}
