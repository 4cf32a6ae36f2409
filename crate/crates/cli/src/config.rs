//! Run configuration: JSON file ingestion, command-line overrides, and
//! validation. Precedence, lowest to highest: built-in defaults, the link
//! preset, the config file, command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use qkd_core::channel::{BenchKind, ChannelError, ChannelParams, LinkPreset};
use qkd_core::distill::LeakModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config file {path} is not valid JSON: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown preset {0:?} (expected \"10km\", \"20km\", or \"custom\")")]
    UnknownPreset(String),
    #[error(
        "unknown leak model {0:?} (expected \"bb84\", \"tagged-multi\", \
         \"tagged-2ph\", or \"tagged-2ph-hidden\")"
    )]
    UnknownLeakModel(String),
    #[error("mu_values must be a nonempty list")]
    EmptyMuValues,
    #[error("mu value {0} out of range: each must be finite and positive")]
    BadMuValue(f64),
    #[error("n_slots = {0} is too small: at least 1000 slots per sweep point")]
    TooFewSlots(usize),
    #[error("safety parameter s must be at least 1")]
    BadSafetyParameter,
    #[error("channel parameters rejected at mu = {mu}: {source}")]
    Channel {
        mu: f64,
        #[source]
        source: ChannelError,
    },
}

/// Which link preset a run starts from. `Custom` starts from the 10-km
/// parameter set and expects the config to override what differs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetChoice {
    Named(LinkPreset),
    Custom,
}

impl FromStr for PresetChoice {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "custom" {
            return Ok(Self::Custom);
        }
        LinkPreset::from_str(s)
            .map(Self::Named)
            .map_err(|_| ConfigError::UnknownPreset(s.to_string()))
    }
}

impl PresetChoice {
    /// The channel parameter set this choice starts from, before overrides.
    pub fn base_params(self) -> ChannelParams {
        let preset = match self {
            Self::Named(p) => p,
            Self::Custom => LinkPreset::TenKm,
        };
        qkd_core::channel::link_preset(preset)
    }
}

/// Per-field channel overrides as they appear in the config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelOverrides {
    pub mu: Option<f64>,
    pub eta: Option<f64>,
    pub t_link: Option<f64>,
    pub f_pulse: Option<f64>,
    pub dark: Option<f64>,
    pub backscatter_ber: Option<f64>,
    pub bench: Option<BenchKind>,
}

impl ChannelOverrides {
    fn apply(&self, params: &mut ChannelParams) {
        if let Some(v) = self.mu {
            params.mu = v;
        }
        if let Some(v) = self.eta {
            params.eta = v;
        }
        if let Some(v) = self.t_link {
            params.t_link = v;
        }
        if let Some(v) = self.f_pulse {
            params.f_pulse = v;
        }
        if let Some(v) = self.dark {
            params.dark = v;
        }
        if let Some(v) = self.backscatter_ber {
            params.backscatter_ber = v;
        }
        if let Some(v) = self.bench {
            params.bench = v;
        }
    }
}

/// The config file: a single JSON document mirroring [`RunConfig`]'s field
/// names, every field optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub channel: Option<ChannelOverrides>,
    pub mu_values: Option<Vec<f64>>,
    pub n_slots: Option<usize>,
    pub leak_model: Option<String>,
    pub s: Option<u32>,
    pub seed: Option<u64>,
    pub backscatter_mitigation: Option<bool>,
    pub hidden_basis: Option<bool>,
    pub output_path: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Command-line overrides; each `Some` wins over the config file.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub mu: Option<Vec<f64>>,
    pub preset: Option<String>,
    pub leak: Option<String>,
    pub slots: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A fully resolved, validated run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Channel parameters shared by every sweep point; `mu` is replaced per
    /// point by each entry of `mu_values`.
    pub channel: ChannelParams,
    pub mu_values: Vec<f64>,
    pub n_slots: usize,
    pub leak_model: LeakModel,
    /// Privacy-amplification safety parameter, in bits.
    pub s: u32,
    pub seed: u64,
    /// Zeroes the backscatter error term (a delay-line fix at the source).
    pub backscatter_mitigation: bool,
    /// Derive both parties' bases from a shared seed instead of announcing.
    pub hidden_basis: bool,
    pub output_path: Option<PathBuf>,
}

impl RunConfig {
    /// Merges defaults ← preset ← file ← flags, then validates everything.
    pub fn resolve(file: FileConfig, flags: CliOverrides) -> Result<Self, ConfigError> {
        let preset_name = flags.preset.or(file.preset);
        let preset = match preset_name.as_deref() {
            None => PresetChoice::Named(LinkPreset::TenKm),
            Some(name) => name.parse()?,
        };
        let mut channel = preset.base_params();
        if let Some(overrides) = &file.channel {
            overrides.apply(&mut channel);
        }

        let backscatter_mitigation = file.backscatter_mitigation.unwrap_or(false);
        if backscatter_mitigation {
            channel.backscatter_ber = 0.0;
        }

        let mu_values = flags
            .mu
            .or(file.mu_values)
            .unwrap_or_else(|| vec![channel.mu]);
        if mu_values.is_empty() {
            return Err(ConfigError::EmptyMuValues);
        }
        if let Some(&bad) = mu_values.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(ConfigError::BadMuValue(bad));
        }

        let n_slots = flags.slots.or(file.n_slots).unwrap_or(100_000);
        if n_slots < 1_000 {
            return Err(ConfigError::TooFewSlots(n_slots));
        }

        let leak_name = flags.leak.or(file.leak_model);
        let leak_model = match leak_name.as_deref() {
            None => LeakModel::Bb84Simple,
            Some(name) => name
                .parse()
                .map_err(|_| ConfigError::UnknownLeakModel(name.to_string()))?,
        };

        let s = file.s.unwrap_or(30);
        if s < 1 {
            return Err(ConfigError::BadSafetyParameter);
        }

        let config = Self {
            channel,
            mu_values,
            n_slots,
            leak_model,
            s,
            seed: flags.seed.or(file.seed).unwrap_or(1),
            backscatter_mitigation,
            hidden_basis: file.hidden_basis.unwrap_or(false),
            output_path: flags.out.or(file.output_path),
        };

        // Every sweep point must describe a channel the simulator accepts.
        for &mu in &config.mu_values {
            let mut point = config.channel;
            point.mu = mu;
            point.validate().map_err(|source| ConfigError::Channel { mu, source })?;
        }
        Ok(config)
    }
}
