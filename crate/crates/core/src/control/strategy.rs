use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gains::Vec3;
use super::tank::TankConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Variable stiffness, constant force.
    VsCf,
    /// Variable stiffness, variable force.
    VsVf,
    /// Constant stiffness impedance.
    Cs,
    /// Force control on z.
    Cf,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::VsCf, Mode::VsVf, Mode::Cs, Mode::Cf];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::VsCf => "vs-cf",
            Mode::VsVf => "vs-vf",
            Mode::Cs => "cs",
            Mode::Cf => "cf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(&s.replace('_', "-")))
            .ok_or_else(|| Error::invalid("mode", format!("unknown mode `{s}`")))
    }

    pub fn is_variable(self) -> bool {
        matches!(self, Mode::VsCf | Mode::VsVf)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which terms of the impedance model enter the QP force prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceModel {
    /// `Λẍ̃ + Dẋ̃ + Kx̃`.
    Full,
    /// `Kx̃` only.
    QuasiStatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceGains {
    /// Proportional gain, cm/s per N.
    pub kp: f64,
    /// Derivative gain, cm per N.
    pub kd: f64,
}

impl Default for ForceGains {
    fn default() -> Self {
        Self { kp: 0.3, kd: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub mode: Mode,
    /// Desired force for VS-CF and CF, N.
    pub f_ref: f64,
    /// Maximum penetration for VS-CF, m.
    pub eps_max: f64,
    /// Desired penetration for VS-VF, m.
    pub eps_d: f64,
    pub f_min_const: f64,
    pub f_max: f64,
    pub q: Vec3,
    pub r: Vec3,
    pub k_min: Vec3,
    pub k_max: Vec3,
    /// Control period, s.
    pub dt: f64,
    /// Desired inertia, kg.
    pub lambda: Vec3,
    pub zeta: f64,
    /// Stiffness of the CS baseline, also the lateral stiffness of CF.
    pub k_const: Vec3,
    pub force_model: ForceModel,
    pub tank: TankConfig,
    pub cf: ForceGains,
    /// Recompute the map posterior variance every this many cycles.
    pub variance_every: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            mode: Mode::VsCf,
            f_ref: 3.5,
            eps_max: 0.012,
            eps_d: 0.008,
            f_min_const: 8.0,
            f_max: 15.0,
            q: [1.0; 3],
            r: [1e-6; 3],
            k_min: [100.0; 3],
            k_max: [1000.0; 3],
            dt: 0.002,
            lambda: [1.0; 3],
            zeta: 0.707,
            k_const: [1000.0; 3],
            force_model: ForceModel::QuasiStatic,
            tank: TankConfig::default(),
            cf: ForceGains::default(),
            variance_every: 10,
        }
    }
}

impl StrategyConfig {
    pub fn for_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.eps_d) && self.eps_d <= self.eps_max && self.eps_max.is_finite()) {
            return Err(Error::invalid("eps_d", "need 0 < eps_d <= eps_max"));
        }
        if !(self.f_min_const.is_finite() && self.f_max.is_finite() && self.f_min_const <= self.f_max) {
            return Err(Error::invalid("f_min_const", "need f_min_const <= f_max"));
        }
        if !(self.f_ref.is_finite() && self.f_ref >= 0.0) {
            return Err(Error::invalid("f_ref", "must be >= 0"));
        }
        for i in 0..3 {
            if !(pos(self.q[i]) && pos(self.r[i])) {
                return Err(Error::invalid("q", "Q and R diagonals must be > 0"));
            }
            if !(pos(self.k_min[i]) && self.k_max[i].is_finite() && self.k_min[i] <= self.k_max[i]) {
                return Err(Error::invalid("k_min", "need 0 < k_min <= k_max"));
            }
            if !pos(self.lambda[i]) {
                return Err(Error::invalid("lambda", "inertia must be > 0"));
            }
            if !pos(self.k_const[i]) {
                return Err(Error::invalid("k_const", "must be > 0"));
            }
        }
        if !pos(self.dt) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if !(self.zeta.is_finite() && self.zeta >= 0.0) {
            return Err(Error::invalid("zeta", "must be >= 0"));
        }
        if !(self.cf.kp.is_finite() && self.cf.kd.is_finite() && self.cf.kp >= 0.0 && self.cf.kd >= 0.0) {
            return Err(Error::invalid("cf", "gains must be >= 0"));
        }
        if self.variance_every == 0 {
            return Err(Error::invalid("variance_every", "must be >= 1"));
        }
        self.tank.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        for m in Mode::ALL {
            let c = StrategyConfig::for_mode(m);
            c.validate().unwrap();
            assert_eq!(StrategyConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
            assert_eq!(Mode::parse(m.as_str()).unwrap(), m);
        }
        assert_eq!(Mode::parse("VS_CF").unwrap(), Mode::VsCf);
        assert!(Mode::parse("pid").is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = StrategyConfig::from_json(r#"{"mode": "vs-vf", "eps_d": 0.006}"#).unwrap();
        assert_eq!(c.mode, Mode::VsVf);
        assert_eq!(c.eps_d, 0.006);
        assert_eq!(c.f_max, 15.0);
        assert!(StrategyConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            StrategyConfig { eps_d: 0.02, ..Default::default() },
            StrategyConfig { eps_d: 0.0, ..Default::default() },
            StrategyConfig { f_min_const: 20.0, ..Default::default() },
            StrategyConfig { r: [0.0; 3], ..Default::default() },
            StrategyConfig { k_min: [2000.0; 3], ..Default::default() },
            StrategyConfig { dt: 0.0, ..Default::default() },
            StrategyConfig {
                tank: TankConfig { eta: 0.5, ..Default::default() },
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
