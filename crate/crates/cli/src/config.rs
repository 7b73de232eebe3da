use std::fmt;
use std::path::{Path, PathBuf};

use ohtlab::array::{PixelGrid, SpectralConfig, SpectralSignal};
use ohtlab::multimode::PhotonNumberLaw;
use ohtlab::radon::RadonConfig;
use ohtlab::temporal::{GateKind, SamplingMethod};
use ohtlab::{Axis, DetectorModel, PhaseSchedule, StateSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Malformed or inconsistent configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(ConfigError(msg.into()).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Radon,
    Pattern,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Inverse-CDF draws from the exact quadrature distribution.
    #[default]
    Direct,
    /// Poisson photocounts of both diodes (classical states only).
    Counts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub state: Option<StateSpec>,
    #[serde(default)]
    pub detector: DetectorModel,
    pub schedule: Option<PhaseSchedule>,
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub sampler: Sampler,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    pub twomode: Option<TwoModeConfig>,
    pub array: Option<ArrayConfig>,
    pub temporal: Option<TemporalConfig>,
    pub calibration: Option<CalibrationConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub radon: RadonConfig,
    #[serde(default)]
    pub pattern: PatternParams,
    /// Bootstrap resamples for FBP error bars; 0 disables.
    #[serde(default)]
    pub bootstrap: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternParams {
    /// Highest photon number reconstructed; defaults to min(7, d−1).
    pub n_max: Option<usize>,
    /// Distinct phases on [0, π); inferred from the record when absent.
    pub d_phases: Option<usize>,
    #[serde(default = "unit")]
    pub l: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for PatternParams {
    fn default() -> Self {
        Self { n_max: None, d_phases: None, l: 1.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoModeConfig {
    pub law: PhotonNumberLaw,
    pub n_pulses: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    Uniform,
    HermiteGauss { order: usize, width: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySignalConfig {
    pub mode: ModeSpec,
    pub state: StateSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    #[serde(default)]
    pub grid: PixelGrid,
    #[serde(default)]
    pub signals: Vec<ArraySignalConfig>,
    pub n_frames: usize,
    pub spectral: Option<SpectralSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub config: SpectralConfig,
    pub signal: SpectralSignal,
    /// Modes (l, l′) of the joint Q′ histogram.
    pub pair: Option<[usize; 2]>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_half_range")]
    pub half_range: f64,
}

fn default_bins() -> usize {
    40
}

fn default_half_range() -> f64 {
    8.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    ChirpedPulse { nu: f64, width: f64, chirp: f64, #[serde(default)] t_c: f64 },
    Tone { omega: f64 },
    Csv { path: PathBuf, nu: f64, bandwidth: Option<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSampling {
    pub gate: GateKind,
    #[serde(default)]
    pub omega_l: f64,
    pub taus: Axis,
    #[serde(default)]
    pub method: SamplingMethod,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recovery {
    pub bandwidth: f64,
    pub nu: f64,
    pub taus: Axis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfMapConfig {
    pub gate: GateKind,
    pub omega: Axis,
    pub t: Axis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    pub axis: Axis,
    pub signal: SignalSpec,
    pub sampling: Option<GateSampling>,
    pub recovery: Option<Recovery>,
    pub tfmap: Option<TfMapConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Balancing {
    pub n_tot: u64,
    pub n_diff1: u64,
    pub n_diff2: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub lo_levels: Vec<f64>,
    pub pulses_per_level: usize,
    pub balancing: Option<Balancing>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let raw: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let typed = serde_json::to_value(&cfg).map_err(|e| e.to_string())?;
        if let Some(path) = unknown_key(&raw, &typed, String::new()) {
            return Err(format!("unknown key `{path}`"));
        }
        Ok(cfg)
    }
}

/// First key present in `raw` but dropped by the typed round trip; catches
/// fields swallowed by flattened structs.
fn unknown_key(raw: &Value, typed: &Value, at: String) -> Option<String> {
    match (raw, typed) {
        (Value::Object(r), Value::Object(t)) => r.iter().find_map(|(k, v)| {
            let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
            match t.get(k) {
                None => Some(path),
                Some(tv) => unknown_key(v, tv, path),
            }
        }),
        (Value::Array(r), Value::Array(t)) => {
            r.iter().zip(t).enumerate().find_map(|(i, (a, b))| unknown_key(a, b, format!("{at}[{i}]")))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys_everywhere() {
        assert!(PipelineConfig::parse(r#"{"seed": 1}"#).is_ok());
        let top = PipelineConfig::parse("{\n  \"seed\": 1,\n  \"bogus\": 2\n}").unwrap_err();
        assert!(top.contains("bogus") && top.contains("line 3"), "{top}");
        let nested = PipelineConfig::parse(r#"{"state": {"kind": "thermal", "nbar": 1.0, "colour": "red"}}"#).unwrap_err();
        assert!(nested.contains("state.colour"), "{nested}");
    }
}
