use std::path::Path;

use ohtlab::array::{ArrayFrameSet, SpectralRecords, ARRAY_FORMAT};
use ohtlab::homodyne::QUAD_FORMAT;
use ohtlab::{PhaseSchedule, QuadratureDataset};
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{sha256_hex, Manifest, MANIFEST_FORMAT, MANIFEST_NAME};

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub file: String,
    pub format: Option<String>,
    pub ok: bool,
    pub checks: Vec<Check>,
    pub stats: Value,
}

impl Diagnostics {
    fn push(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), ok, detail: detail.into() });
    }
}

fn mean_var(xs: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for x in xs {
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
    }
    (n, mean, if n > 1 { m2 / (n - 1) as f64 } else { f64::NAN })
}

fn quad_stats(ds: &QuadratureDataset, diag: &mut Diagnostics) {
    let finite = ds.samples.iter().all(|s| s.q.is_finite() && s.theta.is_finite());
    diag.push("finite", finite, if finite { "all records finite" } else { "non-finite theta or q" });
    let (n, mean, var) = mean_var(ds.qs());
    let (_, m2, v2) = mean_var(ds.qs().map(|q| q * q));
    diag.stats = json!({ "n_samples": n, "mean": mean, "variance": var, "second_moment": m2 });
    if !matches!(ds.meta.schedule, PhaseSchedule::Fixed { .. }) && n > 1 {
        // Phase-averaged ⟨q²⟩ = ⟨n⟩ + 1/2 cannot fall below the vacuum value.
        let se = (v2 / n as f64).sqrt();
        let ok = m2 >= 0.5 - 5.0 * se;
        diag.push("variance_bound", ok, format!("phase-averaged <q^2> = {m2:.5} (vacuum floor 0.5, se {se:.2e})"));
    }
}

fn array_stats(frames: &ArrayFrameSet, diag: &mut Diagnostics) {
    let n = frames.len();
    let pix = frames.grid.n_pixels;
    let mean_var_per_pixel = (0..pix).map(|j| mean_var(frames.frames.iter().map(|f| f.d[j] as f64)).2).sum::<f64>() / pix as f64;
    diag.stats = json!({ "n_frames": n, "n_pixels": pix, "mean_pixel_variance": mean_var_per_pixel });
    diag.push("frames", n > 0, format!("{n} frames of {pix} pixels"));
}

fn spectral_stats(rec: &SpectralRecords, diag: &mut Diagnostics) {
    let finite = rec.k.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite());
    diag.push("finite", finite, if finite { "all K records finite" } else { "non-finite K record" });
    diag.stats = json!({ "n_pulses": rec.n_pulses(), "l_values": rec.l_values });
}

fn check_manifest(path: &Path, diag: &mut Diagnostics) {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return diag.push("schema", false, e.to_string()),
    };
    let m: Manifest = match serde_json::from_str(&text) {
        Ok(m) => m,
        Err(e) => return diag.push("schema", false, e.to_string()),
    };
    diag.push("schema", m.format == MANIFEST_FORMAT, format!("format {}", m.format));
    let dir = path.parent().unwrap_or(Path::new("."));
    for f in &m.files {
        match std::fs::read(dir.join(&f.path)) {
            Ok(bytes) => {
                let sum = sha256_hex(&bytes);
                let ok = sum == f.sha256 && bytes.len() as u64 == f.bytes;
                diag.push(&format!("checksum:{}", f.path), ok, if ok { "match".into() } else { format!("mismatch: manifest {} file {sum}", f.sha256) });
            }
            Err(e) => diag.push(&format!("checksum:{}", f.path), false, e.to_string()),
        }
    }
    diag.stats = json!({ "command": m.command, "seed": m.seed, "files": m.files.len() });
}

/// Checksum against a manifest listing this file, if one is available.
fn check_listed(path: &Path, bytes: &[u8], manifest: Option<&Path>, diag: &mut Diagnostics) {
    let sibling = path.parent().unwrap_or(Path::new(".")).join(MANIFEST_NAME);
    let mpath = manifest.map(Path::to_path_buf).unwrap_or(sibling);
    let Ok(text) = std::fs::read_to_string(&mpath) else {
        if manifest.is_some() {
            diag.push("checksum", false, format!("cannot read manifest {}", mpath.display()));
        }
        return;
    };
    let m: Manifest = match serde_json::from_str(&text) {
        Ok(m) => m,
        Err(e) => return diag.push("checksum", false, format!("manifest {}: {e}", mpath.display())),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    match m.files.iter().find(|f| f.path == name) {
        Some(f) => {
            let sum = sha256_hex(bytes);
            let ok = sum == f.sha256;
            diag.push("checksum", ok, if ok { "matches manifest".into() } else { format!("mismatch: manifest {} file {sum}", f.sha256) });
        }
        None if manifest.is_some() => diag.push("checksum", false, format!("{name} not listed in {}", mpath.display())),
        None => {}
    }
}

pub fn validate(path: &Path, manifest: Option<&Path>) -> Diagnostics {
    let mut diag = Diagnostics { file: path.display().to_string(), format: None, ok: false, checks: Vec::new(), stats: Value::Null };
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            diag.push("read", false, e.to_string());
            return diag;
        }
    };
    if let Ok(v) = serde_json::from_slice::<Value>(&bytes) {
        if v.get("format").and_then(Value::as_str) == Some(MANIFEST_FORMAT) {
            diag.format = Some(MANIFEST_FORMAT.into());
            check_manifest(path, &mut diag);
            diag.ok = diag.checks.iter().all(|c| c.ok);
            return diag;
        }
    }
    let first = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let format = serde_json::from_slice::<Value>(first).ok().and_then(|v| v.get("format").and_then(Value::as_str).map(String::from));
    diag.format = format.clone();
    match format.as_deref() {
        Some(QUAD_FORMAT) => match QuadratureDataset::read_jsonl(&bytes[..]) {
            Ok(ds) => {
                diag.push("schema", true, "valid ohtlab-quad-v1");
                quad_stats(&ds, &mut diag);
            }
            Err(e) => diag.push("schema", false, e.to_string()),
        },
        Some(ARRAY_FORMAT) => match ArrayFrameSet::read_jsonl(&bytes[..]) {
            Ok(f) => {
                diag.push("schema", true, "valid ohtlab-array-v1");
                array_stats(&f, &mut diag);
            }
            Err(e) => diag.push("schema", false, e.to_string()),
        },
        Some("ohtlab-spectral-v1") => match SpectralRecords::read_jsonl(&bytes[..]) {
            Ok(r) => {
                diag.push("schema", true, "valid ohtlab-spectral-v1");
                spectral_stats(&r, &mut diag);
            }
            Err(e) => diag.push("schema", false, e.to_string()),
        },
        Some(other) => diag.push("schema", false, format!("unknown format {other:?}")),
        None => diag.push("schema", false, "first line is not a JSON header with a format field"),
    }
    check_listed(path, &bytes, manifest, &mut diag);
    diag.ok = diag.checks.iter().all(|c| c.ok);
    diag
}
