//! Run configuration shared by every command. Files are TOML, or JSON when
//! the extension is `.json`. Times in s, angles in rad, frequencies in Hz
//! under `_hz` keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion_chain::ChainConfig;
use crate::pulse_solver::{GateSpec, Quadrature};
use crate::scan::{ChainFamily, GridSpec, ScanPoint};
use crate::tdse::{HamiltonianKind, Integrator, DEFAULT_DIM_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub chain: ChainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateSpec>,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ChainFamily>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spin_flip_points: Vec<ScanPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Free spline parameters; `2 n_ions + 1` when absent.
    #[serde(default)]
    pub n_seg: Option<usize>,
    #[serde(default = "yes")]
    pub transform: bool,
    /// Rate of the sampled pulse CSV.
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
}

fn yes() -> bool {
    true
}

fn default_sample_rate() -> f64 {
    100e6
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            n_seg: None,
            transform: true,
            sample_rate_hz: default_sample_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_hamiltonian")]
    pub hamiltonian: HamiltonianKind,
    #[serde(default = "default_state")]
    pub state: String,
    /// Per mode in ascending frequency order; chosen from the pulse when
    /// absent.
    #[serde(default)]
    pub cutoffs: Option<Vec<usize>>,
    #[serde(default = "default_steps")]
    pub steps_per_period: f64,
    #[serde(default = "yes")]
    pub step_check: bool,
    #[serde(default = "default_step_tolerance")]
    pub step_tolerance: f64,
    #[serde(default = "default_dim_cap")]
    pub dim_cap: usize,
}

fn default_hamiltonian() -> HamiltonianKind {
    HamiltonianKind::Full
}

fn default_state() -> String {
    "11z".into()
}

fn default_steps() -> f64 {
    Integrator::default().steps_per_period
}

fn default_step_tolerance() -> f64 {
    Integrator::default().step_tolerance
}

fn default_dim_cap() -> usize {
    DEFAULT_DIM_CAP
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            hamiltonian: default_hamiltonian(),
            state: default_state(),
            cutoffs: None,
            steps_per_period: default_steps(),
            step_check: true,
            step_tolerance: default_step_tolerance(),
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

impl SimulateConfig {
    pub fn integrator(&self) -> Integrator {
        Integrator {
            steps_per_period: self.steps_per_period,
            step_check: self.step_check,
            step_tolerance: self.step_tolerance,
            dim_cap: self.dim_cap,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: RunConfig = if json {
            serde_json::from_str(text).map_err(|e| Error::config(json_field(&e), e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::config(toml_field(&e), e.message().to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, json)
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if let Some(g) = &self.gate {
            g.validate()?;
        }
        if self.design.n_seg == Some(0) {
            return Err(Error::config("design.n_seg", "must be at least 1"));
        }
        if !(self.design.sample_rate_hz > 0.0) {
            return Err(Error::config("design.sample_rate_hz", "must be positive"));
        }
        if !(self.quadrature.panels_per_period > 0.0) || self.quadrature.order == 0 {
            return Err(Error::config("quadrature", "panels_per_period and order must be positive"));
        }
        if let Some(c) = &self.simulate.cutoffs {
            if c.iter().any(|&x| x < 2) {
                return Err(Error::config("simulate.cutoffs", "every cutoff must be at least 2"));
            }
        }
        if let Some(s) = &self.scan {
            s.validate()?;
        }
        Ok(())
    }

    pub fn gate(&self) -> Result<GateSpec> {
        self.gate
            .ok_or_else(|| Error::config("gate", "missing [gate] section"))
    }

    pub fn n_seg(&self) -> usize {
        self.design.n_seg.unwrap_or(2 * self.chain.n_ions + 1)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Best-effort field name from a TOML error message.
fn toml_field(e: &toml::de::Error) -> String {
    field_from_message(e.message()).unwrap_or_else(|| "config".into())
}

fn json_field(e: &serde_json::Error) -> String {
    field_from_message(&e.to_string()).unwrap_or_else(|| "config".into())
}

fn field_from_message(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE_ION: &str = r#"
[chain]
n_ions = 5
axial_freq_hz = 264.8e3
radial_freq_hz = 1.0e6
wavevector_radial = 8618900.0
illuminated_pair = [1, 2]

[gate]
mu_hz = 1.034e6
tf = 41.74e-6
"#;

    #[test]
    fn parses_minimal_toml() {
        let cfg = RunConfig::parse(FIVE_ION, false).unwrap();
        assert_eq!(cfg.chain.n_ions, 5);
        assert_eq!(cfg.n_seg(), 11);
        let g = cfg.gate().unwrap();
        assert!((g.mu - 2.0 * std::f64::consts::PI * 1.034e6).abs() < 1e-6);
        assert!((g.phi_target - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!(cfg.design.transform);
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let cfg = RunConfig::parse(FIVE_ION, false).unwrap();
        let again = RunConfig::parse(&cfg.to_toml(), false).unwrap();
        assert_eq!(cfg, again);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&json, true).unwrap(), cfg);
    }

    #[test]
    fn missing_field_is_named() {
        let text = FIVE_ION.replace("radial_freq_hz = 1.0e6\n", "");
        match RunConfig::parse(&text, false) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "radial_freq_hz"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_named() {
        let text = FIVE_ION.replace("tf = 41.74e-6", "tf = 41.74e-6\nt_final = 1.0");
        match RunConfig::parse(&text, false) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "t_final"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        let text = FIVE_ION.replace("illuminated_pair = [1, 2]", "illuminated_pair = [1, 7]");
        assert!(matches!(RunConfig::parse(&text, false), Err(Error::Config { .. })));
    }
}
