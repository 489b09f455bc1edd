//! TOML configuration files.
//!
//! Scenario keys live at the top level; `[estimator]` and `[sweep]` tables are
//! optional. Missing scenario keys fall back to the nominal 28 GHz setup.
//!
//! ```toml
//! ue_x_m = 1.0
//! ue_y_m = 8.0
//! bias_m = 20.0
//! spacing_over_lambda = 0.5
//! scatterers = [{ x_m = -2.0, y_m = 5.0, rcs_m2 = 10.0 }]
//!
//! [estimator]
//! pad_spatial = 10
//! weights_mode = "crb"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimate::EstimatorConfig;
use crate::scenario::{Point2, Scatterer, Scenario, SPEED_OF_LIGHT};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScattererConfig {
    pub x_m: f64,
    pub y_m: f64,
    pub rcs_m2: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub ue_x_m: f64,
    pub ue_y_m: f64,
    pub bias_m: f64,
    pub fc_hz: f64,
    pub bw_hz: f64,
    pub n_subcarriers: usize,
    pub n_antennas: usize,
    pub spacing_over_lambda: f64,
    pub pt_mw: f64,
    pub n0_mw_per_ghz: f64,
    pub scatterers: Vec<ScattererConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = Scenario::nominal(1.0, 8.0);
        Self {
            ue_x_m: s.ue_position.x,
            ue_y_m: s.ue_position.y,
            bias_m: s.clock_bias,
            fc_hz: s.carrier_hz,
            bw_hz: s.bandwidth_hz,
            n_subcarriers: s.num_subcarriers,
            n_antennas: s.num_antennas,
            spacing_over_lambda: 0.5,
            pt_mw: s.tx_power_mw,
            n0_mw_per_ghz: s.noise_psd,
            scatterers: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn to_scenario(&self) -> Result<Scenario> {
        if !(self.fc_hz > 0.0) {
            return Err(Error::Config("fc_hz must be positive".into()));
        }
        let s = Scenario {
            ue_position: Point2::new(self.ue_x_m, self.ue_y_m),
            clock_bias: self.bias_m,
            carrier_hz: self.fc_hz,
            bandwidth_hz: self.bw_hz,
            num_subcarriers: self.n_subcarriers,
            num_antennas: self.n_antennas,
            spacing: self.spacing_over_lambda * (SPEED_OF_LIGHT / self.fc_hz),
            tx_power_mw: self.pt_mw,
            noise_psd: self.n0_mw_per_ghz,
            scatterers: self
                .scatterers
                .iter()
                .map(|c| Scatterer::new(c.x_m, c.y_m, c.rcs_m2))
                .collect(),
        };
        s.validate()?;
        Ok(s)
    }
}

/// Sweep overrides used by the experiment driver.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Sweep axis values (distances in m, or Δ/λ for the spacing sweep).
    pub values: Option<Vec<f64>>,
    /// Bearing for distance sweeps, radians.
    pub theta_rad: Option<f64>,
    /// Distances for the phase plot.
    pub phase_distances_m: Option<Vec<f64>>,
    /// Antenna indices for the phase-vs-subcarrier slice.
    pub phase_antennas: Option<Vec<i64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    pub estimator: EstimatorConfig,
    pub sweep: SweepConfig,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        ConfigFile::parse(text)?.scenario.to_scenario()
    }
}
