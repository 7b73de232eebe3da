use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::detector::{DetectorModel, PhaseSchedule};
use crate::error::{OhtError, Result};
use crate::fock::StateSpec;

pub const QUAD_FORMAT: &str = "ohtlab-quad-v1";

/// One pulse: LO phase θ ∈ [0, 2π) and the scaled quadrature value.
/// Dual-LO records also carry the relative phase ζ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSample {
    pub theta: f64,
    pub q: f64,
    pub zeta: Option<f64>,
}

impl QuadratureSample {
    pub fn new(theta: f64, q: f64) -> Self {
        Self { theta, q, zeta: None }
    }
}

/// Extra header fields of dual-LO records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualMeta {
    pub alpha: f64,
    pub zeta_schedule: PhaseSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub detector: DetectorModel,
    pub schedule: PhaseSchedule,
    pub seed: u64,
    pub source: Option<StateSpec>,
    pub dual: Option<DualMeta>,
    /// Free-form provenance for records not produced from a single StateSpec.
    pub label: Option<String>,
}

impl DatasetMeta {
    pub fn new(detector: DetectorModel, schedule: PhaseSchedule, seed: u64) -> Self {
        Self { detector, schedule, seed, source: None, dual: None, label: None }
    }
}

/// Ordered measurement record plus detector metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset {
    pub samples: Vec<QuadratureSample>,
    pub meta: DatasetMeta,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    eta_q: f64,
    eta_ls: f64,
    lo_mean_photons: f64,
    sigma_e: f64,
    #[serde(default = "default_gain")]
    gain: f64,
    #[serde(default)]
    balance_imbalance: f64,
    schedule: PhaseSchedule,
    n_phases: Option<usize>,
    seed: u64,
    source: Option<StateSpec>,
    n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zeta_schedule: Option<PhaseSchedule>,
}

fn default_gain() -> f64 {
    1e6
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SingleRecord {
    theta: f64,
    q: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DualRecord {
    theta: f64,
    zeta: f64,
    #[serde(rename = "Q")]
    q: f64,
}

impl QuadratureDataset {
    pub fn new(samples: Vec<QuadratureSample>, meta: DatasetMeta) -> Self {
        Self { samples, meta }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.theta)
    }

    pub fn qs(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.q)
    }

    pub fn eta_eff(&self) -> f64 {
        self.meta.detector.eta_eff()
    }

    /// Concatenation of two records (used for mixtures); metadata from `self`.
    pub fn concat(&self, other: &Self) -> Self {
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        Self { samples, meta: self.meta.clone() }
    }

    /// Subset of samples by index (bootstrap, jackknife).
    pub fn select(&self, idx: &[usize]) -> Self {
        Self { samples: idx.iter().map(|&i| self.samples[i]).collect(), meta: self.meta.clone() }
    }

    /// Writes the JSON Lines form: header line, then one record per pulse.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let d = &self.meta.detector;
        let header = Header {
            format: QUAD_FORMAT.into(),
            eta_q: d.eta_q,
            eta_ls: d.eta_ls,
            lo_mean_photons: d.lo_mean_photons,
            sigma_e: d.sigma_e,
            gain: d.gain,
            balance_imbalance: d.balance_imbalance,
            schedule: self.meta.schedule,
            n_phases: self.meta.schedule.n_phases(),
            seed: self.meta.seed,
            source: self.meta.source,
            n_samples: self.samples.len(),
            label: self.meta.label.clone(),
            mode: self.meta.dual.map(|_| "dual".to_string()),
            alpha: self.meta.dual.map(|x| x.alpha),
            zeta_schedule: self.meta.dual.map(|x| x.zeta_schedule),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            match (self.meta.dual, s.zeta) {
                (Some(_), Some(zeta)) => {
                    serde_json::to_writer(&mut out, &DualRecord { theta: s.theta, zeta, q: s.q })?
                }
                (None, _) => serde_json::to_writer(&mut out, &SingleRecord { theta: s.theta, q: s.q })?,
                (Some(_), None) => {
                    return Err(OhtError::Format("dual-mode dataset sample without zeta".into()))
                }
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parses the JSON Lines form, rejecting unknown formats, malformed
    /// records and sample-count mismatches (truncated files).
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines
            .next()
            .transpose()?
            .ok_or_else(|| OhtError::Format("empty dataset file".into()))?;
        let raw: serde_json::Value = serde_json::from_str(&first)
            .map_err(|e| OhtError::Format(format!("line 1: header is not JSON: {e}")))?;
        match raw.get("format").and_then(|f| f.as_str()) {
            Some(QUAD_FORMAT) => {}
            Some(other) => return Err(OhtError::Format(format!("line 1: unknown format {other:?}"))),
            None => return Err(OhtError::Format("line 1: missing format field".into())),
        }
        let h: Header = serde_json::from_value(raw).map_err(|e| OhtError::Format(format!("line 1: {e}")))?;
        let dual = match (h.mode.as_deref(), h.alpha, h.zeta_schedule) {
            (None, _, _) => None,
            (Some("dual"), Some(alpha), Some(zeta_schedule)) => Some(DualMeta { alpha, zeta_schedule }),
            (Some("dual"), _, _) => {
                return Err(OhtError::Format("line 1: dual mode needs alpha and zeta_schedule".into()))
            }
            (Some(m), _, _) => return Err(OhtError::Format(format!("line 1: unknown mode {m:?}"))),
        };
        let detector = DetectorModel {
            eta_q: h.eta_q,
            eta_ls: h.eta_ls,
            lo_mean_photons: h.lo_mean_photons,
            sigma_e: h.sigma_e,
            gain: h.gain,
            balance_imbalance: h.balance_imbalance,
        };
        detector.validate().map_err(|e| OhtError::Format(format!("line 1: {e}")))?;
        let mut samples = Vec::with_capacity(h.n_samples);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = k + 2;
            let s = if dual.is_some() {
                let r: DualRecord = serde_json::from_str(&line)
                    .map_err(|e| OhtError::Format(format!("line {lineno}: {e}")))?;
                QuadratureSample { theta: r.theta, q: r.q, zeta: Some(r.zeta) }
            } else {
                let r: SingleRecord = serde_json::from_str(&line)
                    .map_err(|e| OhtError::Format(format!("line {lineno}: {e}")))?;
                QuadratureSample::new(r.theta, r.q)
            };
            if !(s.theta >= 0.0 && s.theta < 2.0 * std::f64::consts::PI) || !s.q.is_finite() {
                return Err(OhtError::Format(format!("line {lineno}: theta outside [0,2π) or non-finite q")));
            }
            samples.push(s);
        }
        if samples.len() != h.n_samples {
            return Err(OhtError::Format(format!(
                "header announces {} samples, file holds {} (truncated?)",
                h.n_samples,
                samples.len()
            )));
        }
        let meta = DatasetMeta {
            detector,
            schedule: h.schedule,
            seed: h.seed,
            source: h.source,
            dual,
            label: h.label,
        };
        Ok(Self { samples, meta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> QuadratureDataset {
        let meta = DatasetMeta {
            source: Some(StateSpec::vacuum()),
            ..DatasetMeta::new(DetectorModel::default(), PhaseSchedule::grid(2), 5)
        };
        QuadratureDataset::new(
            vec![QuadratureSample::new(0.0, 0.25), QuadratureSample::new(std::f64::consts::PI, -1.5e-3)],
            meta,
        )
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let ds = tiny();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let back = QuadratureDataset::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, ds);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(r#"{"format":"ohtlab-quad-v1""#));
    }

    #[test]
    fn dual_records_use_capital_q() {
        let mut ds = tiny();
        ds.meta.dual = Some(DualMeta { alpha: 0.5, zeta_schedule: PhaseSchedule::UniformRandom });
        ds.samples.iter_mut().for_each(|s| s.zeta = Some(1.0));
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(r#""mode":"dual""#));
        assert!(text.lines().nth(1).unwrap().contains(r#""Q":"#));
        assert_eq!(QuadratureDataset::read_jsonl(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn unknown_format_and_truncation_are_rejected() {
        let ds = tiny();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let bad = text.replace("ohtlab-quad-v1", "ohtlab-quad-v9");
        assert!(matches!(QuadratureDataset::read_jsonl(bad.as_bytes()), Err(OhtError::Format(_))));
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(QuadratureDataset::read_jsonl(cut.as_bytes()).is_err());
    }
}
