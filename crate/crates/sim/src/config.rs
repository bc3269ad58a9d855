//! Scenario configuration, read from a TOML key-value file.
//!
//! Every key is optional; missing keys take the defaults below (the
//! full-size setup: 100 APs and 100 users on a 1 km square, 14 pilots).
//!
//! ```toml
//! scenario_id = "k140"
//! n_aps = 100
//! m_users = 100
//! area_side_m = 1000.0
//! lambda = 0.5
//! subcarrier_khz = 15.0
//! nf_db = 5.0
//! temperature_k = 293.15
//! shadowing_std_db = 4.0
//! k_total = 140
//! k_pilot = 14
//! tx_power_dbm = [-20.0, -10.0, 0.0, 10.0, 16.0]
//! t_max = 32
//! eta = 0.5
//! amp_iterations = 50
//! receivers = ["bigabp", "zf_mmvamp", "gabp_mmvamp", "genie_gabp"]
//! trials = 10
//! master_seed = 1
//! pilot_seed = 0
//! pilot_outer_iterations = 20
//! # pilot_file = "pilots.gfrm"   # load instead of designing
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Highest transmit power a user may be configured with.
pub const MAX_TX_POWER_DBM: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Receiver {
    /// Bilinear belief propagation initialized by MMV-AMP.
    Bigabp,
    /// Zero forcing on the MMV-AMP channel and activity estimate.
    ZfMmvamp,
    /// Symbol-only belief propagation on the MMV-AMP channel and activity estimate.
    GabpMmvamp,
    /// Symbol-only belief propagation with the true channel and activity.
    GenieGabp,
    /// Pilot-only minimum-norm least-squares channel estimate (NMSE only).
    Mns,
    /// Per-AP LMMSE with known activity and symbols (NMSE only).
    MmseGenie,
}

impl Receiver {
    pub const ALL: [Receiver; 6] = [
        Receiver::Bigabp,
        Receiver::ZfMmvamp,
        Receiver::GabpMmvamp,
        Receiver::GenieGabp,
        Receiver::Mns,
        Receiver::MmseGenie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Receiver::Bigabp => "bigabp",
            Receiver::ZfMmvamp => "zf_mmvamp",
            Receiver::GabpMmvamp => "gabp_mmvamp",
            Receiver::GenieGabp => "genie_gabp",
            Receiver::Mns => "mns",
            Receiver::MmseGenie => "mmse_genie",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }

    /// Receivers that only estimate the channel.
    pub fn channel_only(self) -> bool {
        matches!(self, Receiver::Mns | Receiver::MmseGenie)
    }
}

impl fmt::Display for Receiver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub scenario_id: String,
    pub n_aps: usize,
    pub m_users: usize,
    pub area_side_m: f64,
    pub lambda: f64,
    pub subcarrier_khz: f64,
    pub nf_db: f64,
    pub temperature_k: f64,
    pub shadowing_std_db: f64,
    pub k_total: usize,
    pub k_pilot: usize,
    pub tx_power_dbm: Vec<f64>,
    pub t_max: usize,
    pub eta: f64,
    pub amp_iterations: usize,
    pub receivers: Vec<Receiver>,
    pub trials: usize,
    pub master_seed: u64,
    pub pilot_seed: u64,
    pub pilot_outer_iterations: usize,
    pub pilot_file: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            scenario_id: "default".into(),
            n_aps: 100,
            m_users: 100,
            area_side_m: 1000.0,
            lambda: 0.5,
            subcarrier_khz: 15.0,
            nf_db: 5.0,
            temperature_k: 293.15,
            shadowing_std_db: 4.0,
            k_total: 140,
            k_pilot: 14,
            tx_power_dbm: vec![-20.0, -10.0, 0.0, 10.0, 16.0],
            t_max: 32,
            eta: 0.5,
            amp_iterations: 50,
            receivers: vec![Receiver::Bigabp, Receiver::ZfMmvamp, Receiver::GabpMmvamp, Receiver::GenieGabp],
            trials: 10,
            master_seed: 1,
            pilot_seed: 0,
            pilot_outer_iterations: 20,
            pilot_file: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Reads and validates a config file. A relative `pilot_file` is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut s = Self::from_toml(&text)?;
        if let (Some(p), Some(dir)) = (&s.pilot_file, path.parent()) {
            if p.is_relative() {
                s.pilot_file = Some(dir.join(p));
            }
        }
        Ok(s)
    }

    pub fn k_data(&self) -> usize {
        self.k_total - self.k_pilot
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.subcarrier_khz * 1e3
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.scenario_id.is_empty() || self.scenario_id.contains([',', '"', '\n']) {
            return Err(invalid("scenario_id must be non-empty and free of commas, quotes and newlines"));
        }
        if self.n_aps == 0 || self.m_users == 0 {
            return Err(invalid("n_aps and m_users must be positive"));
        }
        if !(self.area_side_m > 0.0 && self.area_side_m.is_finite()) {
            return Err(invalid("area_side_m must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(invalid("lambda must lie in (0, 1]"));
        }
        if !(self.subcarrier_khz > 0.0 && self.temperature_k > 0.0) || !self.nf_db.is_finite() {
            return Err(invalid("subcarrier_khz and temperature_k must be positive, nf_db finite"));
        }
        if !(self.shadowing_std_db >= 0.0 && self.shadowing_std_db.is_finite()) {
            return Err(invalid("shadowing_std_db must be non-negative"));
        }
        if self.k_pilot == 0 || self.k_pilot >= self.k_total {
            return Err(invalid("need 0 < k_pilot < k_total"));
        }
        if self.m_users <= self.k_pilot || self.m_users > self.k_pilot * self.k_pilot {
            return Err(invalid("pilot design needs k_pilot < m_users <= k_pilot^2"));
        }
        if self.tx_power_dbm.is_empty() {
            return Err(invalid("tx_power_dbm must list at least one power"));
        }
        if let Some(p) = self.tx_power_dbm.iter().find(|p| !p.is_finite() || **p > MAX_TX_POWER_DBM) {
            return Err(invalid(format!("transmit power {p} dBm exceeds the {MAX_TX_POWER_DBM} dBm limit")));
        }
        if self.t_max == 0 || !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid("need t_max >= 1 and 0 < eta <= 1"));
        }
        if self.amp_iterations == 0 {
            return Err(invalid("amp_iterations must be positive"));
        }
        if self.receivers.is_empty() {
            return Err(invalid("receivers must list at least one receiver"));
        }
        let mut seen = self.receivers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.receivers.len() {
            return Err(invalid("receivers must not repeat"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        Ok(())
    }
}
