//! Bang-bang heater controller with a mandatory wait after each heating burst.
//!
//! ```text
//!            temp < ll                 elapsed >= h || temp >= ul
//!  Cooling ------------> Heating(t0) -----------------------------> Waiting(t0)
//!     ^                      ^                                          |
//!     |                      +---------- elapsed >= c && temp < ul -----+
//!     +------------------------------- elapsed >= c && temp >= ul ------+
//! ```
//!
//! The heater is on exactly while in `Heating`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Lower temperature limit, °C.
    pub ll: f64,
    /// Upper temperature limit, °C.
    pub ul: f64,
    /// Maximum heating duration, s.
    pub h: f64,
    /// Waiting duration after heating, s.
    pub c: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { ll: 35.0, ul: 40.0, h: 30.0, c: 20.0 }
    }
}

impl ControllerConfig {
    pub fn new(ll: f64, ul: f64, h: f64, c: f64) -> Result<Self> {
        let cfg = ControllerConfig { ll, ul, h, c };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.ll, self.ul, self.h, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("controller parameters must be finite".into()));
        }
        if self.ll >= self.ul {
            return Err(Error::InvalidArgument(format!("ll ({}) must be below ul ({})", self.ll, self.ul)));
        }
        if self.h <= 0.0 {
            return Err(Error::InvalidArgument(format!("h must be positive, got {}", self.h)));
        }
        if self.c < 0.0 {
            return Err(Error::InvalidArgument(format!("c must be non-negative, got {}", self.c)));
        }
        Ok(())
    }

    /// Lexicographic key used for deterministic tie-breaking.
    pub fn key(&self) -> [f64; 4] {
        [self.ll, self.ul, self.h, self.c]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ControllerMode {
    #[default]
    Cooling,
    Heating { entered_at: f64 },
    Waiting { entered_at: f64 },
}

impl ControllerMode {
    pub fn heater_on(&self) -> bool {
        matches!(self, ControllerMode::Heating { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerMode::Cooling => "cooling",
            ControllerMode::Heating { .. } => "heating",
            ControllerMode::Waiting { .. } => "waiting",
        }
    }
}

/// One controller evaluation on a fresh temperature reading taken at `now`.
/// Returns the next mode and the heater command. A non-finite reading holds
/// the mode and switches the heater off.
pub fn step(mode: ControllerMode, config: &ControllerConfig, temp: f64, now: f64) -> (ControllerMode, bool) {
    if !temp.is_finite() || !now.is_finite() {
        return (mode, false);
    }
    let next = match mode {
        ControllerMode::Cooling if temp < config.ll => ControllerMode::Heating { entered_at: now },
        ControllerMode::Cooling => mode,
        ControllerMode::Heating { entered_at } if now - entered_at >= config.h || temp >= config.ul => {
            ControllerMode::Waiting { entered_at: now }
        }
        ControllerMode::Heating { .. } => mode,
        ControllerMode::Waiting { entered_at } if now - entered_at >= config.c => {
            if temp >= config.ul {
                ControllerMode::Cooling
            } else {
                ControllerMode::Heating { entered_at: now }
            }
        }
        ControllerMode::Waiting { .. } => mode,
    };
    (next, next.heater_on())
}

/// Stateful wrapper around [`step`].
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    mode: ControllerMode,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Controller { config, mode: ControllerMode::Cooling })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    /// Swaps in a new configuration; an invalid one is rejected and the
    /// current configuration kept.
    pub fn reconfigure(&mut self, config: ControllerConfig) -> Result<()> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    pub fn update(&mut self, temp: f64, now: f64) -> bool {
        let (mode, heater) = step(self.mode, &self.config, temp, now);
        self.mode = mode;
        heater
    }
}
