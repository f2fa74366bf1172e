use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vic_core::estimation::{LoadUnloadProtocol, PalpationProtocol, SurveyOptions};
use vic_core::{Disturbance, GprSettings, GridSettings, ScanPlan, StrategyConfig};

use crate::InputError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbKind {
    None,
    Lift,
}

impl DisturbKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DisturbKind::None => "none",
            DisturbKind::Lift => "lift",
        }
    }

    /// The lift is centred on the middle of the scan.
    pub fn build(self, plan: &ScanPlan) -> Disturbance {
        match self {
            DisturbKind::None => Disturbance::none(),
            DisturbKind::Lift => Disturbance::lift(0.5 * plan.duration()),
        }
    }
}

/// Effective settings of one command. Loaded from `--config`, then
/// overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Survey node spacing, m.
    pub spacing: f64,
    /// Contact exponent of the phantom and the map; 1.35 when absent.
    pub beta: Option<f64>,
    pub seed: u64,
    pub disturb: DisturbKind,
    /// Exponents swept by `estimate`.
    pub betas: Vec<f64>,
    pub protocol: PalpationProtocol,
    pub survey: SurveyOptions,
    pub load_unload: LoadUnloadProtocol,
    pub grid: GridSettings,
    pub gpr: GprSettings,
    pub strategy: StrategyConfig,
    pub plan: ScanPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spacing: 0.01,
            beta: None,
            seed: 0,
            disturb: DisturbKind::None,
            betas: vec![1.1, 1.35, 1.5],
            protocol: PalpationProtocol {
                noise_sigma: 0.05,
                ..Default::default()
            },
            survey: SurveyOptions::default(),
            load_unload: LoadUnloadProtocol {
                noise_sigma: 0.01,
                ..Default::default()
            },
            grid: GridSettings::default(),
            gpr: GprSettings::default(),
            strategy: StrategyConfig::default(),
            plan: ScanPlan::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text)
            .map_err(|e| InputError(format!("config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, why: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(InputError(format!("invalid config field `{field}`: {why}")).into())
            }
        };
        check(self.spacing.is_finite() && self.spacing > 0.0, "spacing", "must be > 0")?;
        if let Some(b) = self.beta {
            check(b.is_finite() && b > 0.0, "beta", "must be > 0")?;
        }
        check(
            !self.betas.is_empty() && self.betas.iter().all(|b| b.is_finite() && *b > 0.0),
            "betas",
            "need at least one exponent, all > 0",
        )?;
        self.protocol.validate().map_err(|e| InputError(format!("protocol: {e}")))?;
        self.strategy.validate().map_err(|e| InputError(format!("strategy: {e}")))?;
        Ok(())
    }

    /// SHA-256 of the compact JSON of the config with sorted keys.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_value(self).expect("config serialises").to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
