//! Settings resolution: flags, then environment, then config file, then
//! built-in defaults.
//!
//! The config file is JSON holding any [`FeedbackConfig`] field plus the
//! server settings; unknown keys are rejected.
//!
//! ```json
//! {"delta_deg": 5, "stability_frames": 4, "endpoint": "0.0.0.0:7878", "heartbeat_ms": 5000}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rehabloop_core::feedback::FeedbackConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_ENDPOINT: &str = "REHAB_ENDPOINT";
pub const ENV_CONFIG: &str = "REHAB_CONFIG";
pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:7878";
pub const DEFAULT_HEARTBEAT_MS: u64 = 5000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub delta_deg: Option<f64>,
    pub optimal_band_deg: Option<f64>,
    pub under_band_deg: Option<f64>,
    pub stability_frames: Option<u32>,
    pub min_message_interval_ms: Option<u64>,
    pub critical_bypasses_debounce: Option<bool>,
    pub endpoint: Option<String>,
    pub heartbeat_ms: Option<u64>,
    pub log_dir: Option<PathBuf>,
}

impl FileConfig {
    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: FileConfig) -> FileConfig {
        FileConfig {
            delta_deg: over.delta_deg.or(self.delta_deg),
            optimal_band_deg: over.optimal_band_deg.or(self.optimal_band_deg),
            under_band_deg: over.under_band_deg.or(self.under_band_deg),
            stability_frames: over.stability_frames.or(self.stability_frames),
            min_message_interval_ms: over.min_message_interval_ms.or(self.min_message_interval_ms),
            critical_bypasses_debounce: over
                .critical_bypasses_debounce
                .or(self.critical_bypasses_debounce),
            endpoint: over.endpoint.or(self.endpoint),
            heartbeat_ms: over.heartbeat_ms.or(self.heartbeat_ms),
            log_dir: over.log_dir.or(self.log_dir),
        }
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub feedback: FeedbackConfig,
    pub endpoint: String,
    pub heartbeat_ms: u64,
    pub log_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Feedback(#[from] rehabloop_core::feedback::ConfigError),
}

pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Resolves settings from the given layers. `env_endpoint` and
/// `env_config` are the values of `REHAB_ENDPOINT` and `REHAB_CONFIG`;
/// `config_flag` wins over `env_config` when choosing the file.
pub fn resolve(
    flags: FileConfig,
    config_flag: Option<&Path>,
    env_endpoint: Option<String>,
    env_config: Option<PathBuf>,
) -> Result<Settings, ConfigError> {
    let file = match config_flag.map(Path::to_path_buf).or(env_config) {
        Some(path) => load_file(&path)?,
        None => FileConfig::default(),
    };
    let env = FileConfig {
        endpoint: env_endpoint.filter(|e| !e.is_empty()),
        ..FileConfig::default()
    };
    let merged = file.overlay(env).overlay(flags);
    let d = FeedbackConfig::default();
    let feedback = FeedbackConfig {
        delta_deg: merged.delta_deg.unwrap_or(d.delta_deg),
        optimal_band_deg: merged.optimal_band_deg.unwrap_or(d.optimal_band_deg),
        under_band_deg: merged.under_band_deg.unwrap_or(d.under_band_deg),
        stability_frames: merged.stability_frames.unwrap_or(d.stability_frames),
        min_message_interval_ms: merged.min_message_interval_ms.unwrap_or(d.min_message_interval_ms),
        critical_bypasses_debounce: merged
            .critical_bypasses_debounce
            .unwrap_or(d.critical_bypasses_debounce),
    };
    feedback.validate()?;
    Ok(Settings {
        feedback,
        endpoint: merged.endpoint.unwrap_or_else(|| DEFAULT_ENDPOINT.into()),
        heartbeat_ms: merged.heartbeat_ms.unwrap_or(DEFAULT_HEARTBEAT_MS),
        log_dir: merged.log_dir,
    })
}
