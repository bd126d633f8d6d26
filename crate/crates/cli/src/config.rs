//! Run configuration file (JSON).
//!
//! Lengths are in km and attenuation in dB/km. `t_b` may be omitted, in
//! which case it is derived from the source constraint.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qcka_core::optimizer::{DistanceGrid, Objective, OptimizationSpec, ParamBox, Protocol};
use qcka_core::{ChannelParams, SecurityParams, SourceParams};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Protocol for `rate` and `simulate`; a scan runs both unless set.
    #[serde(default)]
    pub protocol: Option<Protocol>,
    #[serde(default = "default_regime")]
    pub regime: Objective,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub source: Option<SourceConfig>,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub security: Option<SecurityParams>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

fn default_regime() -> Objective {
    Objective::Finite
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub mu_a: f64,
    pub mu_b: f64,
    pub nu_a: f64,
    pub nu_b: f64,
    pub t_a: f64,
    #[serde(default)]
    pub t_b: Option<f64>,
    pub p_za: f64,
    pub p_zb: f64,
    pub p_0a: f64,
    pub p_0b: f64,
    pub p_nua: f64,
    pub p_nub: f64,
    pub delta: f64,
    pub q_z: f64,
}

impl SourceConfig {
    /// True when the source emits no light at all.
    pub fn is_vacuum(&self) -> bool {
        [self.mu_a, self.mu_b, self.nu_a, self.nu_b].iter().all(|&v| v == 0.0)
    }

    pub fn resolve(&self) -> qcka_core::Result<SourceParams> {
        let src = SourceParams {
            mu_a: self.mu_a,
            mu_b: self.mu_b,
            nu_a: self.nu_a,
            nu_b: self.nu_b,
            t_a: self.t_a,
            t_b: self.t_b.unwrap_or(0.5),
            p_za: self.p_za,
            p_zb: self.p_zb,
            p_0a: self.p_0a,
            p_0b: self.p_0b,
            p_nua: self.p_nua,
            p_nub: self.p_nub,
            delta: self.delta,
            q_z: self.q_z,
        };
        let src = match self.t_b {
            Some(_) => src,
            None => src.with_constraint()?,
        };
        src.validate()?;
        Ok(src)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub l_a_km: f64,
    #[serde(default)]
    pub l_b_km: f64,
    pub alpha_db_per_km: f64,
    pub eta_d: f64,
    pub p_d: f64,
    pub e_dx: f64,
    pub f: f64,
    #[serde(default)]
    pub phi_ab: f64,
}

impl ChannelConfig {
    pub fn params(&self) -> ChannelParams {
        ChannelParams {
            l_a: self.l_a_km,
            l_b: self.l_b_km,
            alpha: self.alpha_db_per_km,
            eta_d: self.eta_d,
            p_d: self.p_d,
            e_dx: self.e_dx,
            f: self.f,
            phi_ab: self.phi_ab,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub multistart: usize,
    pub max_evals: usize,
    #[serde(default)]
    pub bounds: ParamBox,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            multistart: 8,
            max_evals: 2000,
            bounds: ParamBox::default(),
        }
    }
}

/// Total distances, either listed or evenly spaced, at a fixed
/// `L_b - L_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub delta_l_km: f64,
    #[serde(default)]
    pub totals_km: Option<Vec<f64>>,
    #[serde(default)]
    pub start_km: Option<f64>,
    #[serde(default)]
    pub stop_km: Option<f64>,
    #[serde(default)]
    pub count: Option<usize>,
}

impl GridConfig {
    pub fn grid(&self) -> Result<DistanceGrid, CliError> {
        match (&self.totals_km, self.start_km, self.stop_km, self.count) {
            (Some(t), None, None, None) => Ok(DistanceGrid {
                totals: t.clone(),
                delta_l: self.delta_l_km,
            }),
            (None, Some(a), Some(b), Some(n)) => Ok(DistanceGrid::linspace(a, b, n, self.delta_l_km)),
            _ => Err(CliError::Config(
                "grid needs either totals_km or all of start_km, stop_km, count".into(),
            )),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn source(&self) -> Result<SourceConfig, CliError> {
        self.source
            .ok_or_else(|| CliError::Config("missing `source` section".into()))
    }

    pub fn security(&self) -> Result<SecurityParams, CliError> {
        self.security
            .ok_or_else(|| CliError::Config("missing `security` section".into()))
    }

    pub fn grid(&self) -> Result<DistanceGrid, CliError> {
        self.grid
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `grid` section".into()))?
            .grid()
    }

    pub fn optimization_spec(&self, protocol: Protocol) -> OptimizationSpec {
        OptimizationSpec {
            objective: self.regime,
            protocol,
            multistart: self.optimizer.multistart,
            max_evals: self.optimizer.max_evals,
            seed: self.seed,
            bounds: self.optimizer.bounds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "channel": {"alpha_db_per_km": 0.167, "eta_d": 0.56, "p_d": 1e-8, "e_dx": 0.035, "f": 1.1}
    }"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.regime, Objective::Finite);
        assert_eq!(c.protocol, None);
        assert_eq!(c.optimizer.multistart, 8);
        assert_eq!(c.channel.params(), ChannelParams::reference(0.0, 0.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"f\": 1.1", "\"f\": 1.1, \"gain\": 2");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 1, \"extra\": 0");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn wrong_schema_version() {
        let text = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn grid_forms() {
        let g = GridConfig {
            delta_l_km: 50.0,
            totals_km: None,
            start_km: Some(50.0),
            stop_km: Some(150.0),
            count: Some(3),
        };
        assert_eq!(g.grid().unwrap().totals, vec![50.0, 100.0, 150.0]);
        let both = GridConfig {
            totals_km: Some(vec![1.0]),
            ..g.clone()
        };
        assert!(both.grid().is_err());
    }

    #[test]
    fn omitted_tb_is_derived() {
        let s = SourceConfig {
            mu_a: 0.12,
            mu_b: 0.7,
            nu_a: 0.002,
            nu_b: 0.03,
            t_a: 0.01,
            t_b: None,
            p_za: 0.9,
            p_zb: 0.9,
            p_0a: 0.3,
            p_0b: 0.3,
            p_nua: 0.5,
            p_nub: 0.5,
            delta: 0.2,
            q_z: 0.9,
        };
        let src = s.resolve().unwrap();
        src.check_constraint().unwrap();
        let bad = SourceConfig { t_b: Some(0.5), ..s };
        assert!(bad.resolve().is_err());
    }
}
