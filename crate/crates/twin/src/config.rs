//! TOML configuration shared by the command-line entry points.
//!
//! ```toml
//! [bus]
//! addr = "127.0.0.1:7878"
//!
//! [plant]
//! t_room = 21.0
//! sigma = 0.5
//!
//! [controller]
//! ll = 35.0
//! ul = 40.0
//! h = 30.0
//! c = 20.0
//!
//! [estimator]
//! r = 0.25
//!
//! [orchestrator]
//! propose = false
//!
//! [datalog]
//! runs_dir = "runs"
//!
//! [gateway]
//! bind = "127.0.0.1:8080"
//! ```
//!
//! Every section and key is optional. `INCUBATOR_BUS_ADDR`,
//! `INCUBATOR_RUNS_DIR` and `INCUBATOR_GATEWAY_BIND` override the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use incubator_core::controller::ControllerConfig;
use incubator_core::estimator::KalmanConfig;
use serde::{Deserialize, Serialize};

use crate::gateway::DEFAULT_BIND;
use crate::orchestrator::OrchestratorConfig;
use crate::plant::PlantConfig;

pub const RUNS_DIR_ENV: &str = "INCUBATOR_RUNS_DIR";
pub const GATEWAY_BIND_ENV: &str = "INCUBATOR_GATEWAY_BIND";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BusSection {
    pub addr: String,
}

impl Default for BusSection {
    fn default() -> Self {
        BusSection { addr: format!("127.0.0.1:{}", incubator_bus::DEFAULT_PORT) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatalogSection {
    pub runs_dir: PathBuf,
}

impl Default for DatalogSection {
    fn default() -> Self {
        DatalogSection { runs_dir: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySection {
    pub bind: String,
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection { bind: DEFAULT_BIND.to_owned() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinConfig {
    pub bus: BusSection,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub estimator: KalmanConfig,
    pub orchestrator: OrchestratorConfig,
    pub datalog: DatalogSection,
    pub gateway: GatewaySection,
}

impl TwinConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` if given, then applies environment overrides.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => TwinConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(incubator_bus::ADDR_ENV) {
            self.bus.addr = v;
        }
        if let Some(v) = get(RUNS_DIR_ENV) {
            self.datalog.runs_dir = PathBuf::from(v);
        }
        if let Some(v) = get(GATEWAY_BIND_ENV) {
            self.gateway.bind = v;
        }
    }
}
