use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use num_complex::Complex64;
use ohtlab::array::{
    difference_correlation_matrix, joint_q_histogram, optimal_mode, project_mode_quadrature, simulate_array_frames,
    unbalanced_spectral_sim, ArraySignal, ModeVector, PixelGrid,
};
use ohtlab::homodyne::{calibration_curve, gain_balancing_sim, sample_state, sample_via_counts};
use ohtlab::moments::moment_report;
use ohtlab::multimode::{two_time_g2, ThreeAlphaRuns, TwoModeState};
use ohtlab::pattern::{build_pattern_functions, default_pattern_axis, infer_phase_count, rho_from_quadratures};
use ohtlab::radon::{fbp_bootstrap, filtered_backprojection};
use ohtlab::temporal::{
    bandlimited_exact_recovery, linear_optical_sampling, relative_rms, time_frequency_map, GateFunction, TemporalSignal,
};
use ohtlab::{Axis, PhaseSchedule, QuadratureDataset, WignerGrid};
use serde_json::{json, Value};

use crate::artifacts::Artifacts;
use crate::config::{config_err, Format, Method, ModeSpec, PipelineConfig, Sampler, SignalSpec};

/// Resolved settings shared by every subcommand.
pub struct Ctx {
    pub cfg: PipelineConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub formats: Vec<Format>,
}

impl Ctx {
    fn artifacts(&self) -> anyhow::Result<Artifacts> {
        Artifacts::create(&self.out, &self.formats)
    }

    fn effective_config(&self) -> anyhow::Result<Value> {
        let mut cfg = self.cfg.clone();
        cfg.seed = self.seed;
        Ok(serde_json::to_value(cfg)?)
    }

    fn finish(&self, art: Artifacts, command: &str) -> anyhow::Result<PathBuf> {
        let state = self.cfg.state.map(serde_json::to_value).transpose()?;
        art.finish(command, self.seed, state, self.effective_config()?)
    }
}

pub fn read_dataset(path: &Path) -> anyhow::Result<QuadratureDataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    QuadratureDataset::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn complex_csv(header: &str, rows: impl Iterator<Item = (f64, Complex64)>) -> String {
    let mut s = format!("{header}\n");
    for (x, z) in rows {
        let _ = writeln!(s, "{x},{},{}", z.re, z.im);
    }
    s
}

fn grid_csv(w: &WignerGrid) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    w.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn simulate(ctx: &Ctx) -> anyhow::Result<PathBuf> {
    let cfg = &ctx.cfg;
    let Some(state) = cfg.state else { return config_err("simulate needs a `state` section") };
    let Some(n) = cfg.n_samples else { return config_err("simulate needs `n_samples`") };
    let sched = cfg.schedule.unwrap_or(PhaseSchedule::UniformRandom);
    let ds = match cfg.sampler {
        Sampler::Direct => sample_state(&state, &sched, &cfg.detector, n, ctx.seed)?,
        Sampler::Counts => sample_via_counts(&state, &sched, &cfg.detector, n, ctx.seed)?,
    };
    let mut art = ctx.artifacts()?;
    art.write_with("dataset.jsonl", |b| ds.write_jsonl(b))?;
    ctx.finish(art, "simulate")
}

pub fn reconstruct(ctx: &Ctx, dataset: &Path, method: Option<Method>, n_max: Option<usize>, bootstrap: Option<usize>) -> anyhow::Result<PathBuf> {
    let ds = read_dataset(dataset)?;
    let rc = &ctx.cfg.reconstruction;
    let method = method.unwrap_or(rc.method);
    let bootstrap = bootstrap.unwrap_or(rc.bootstrap);
    let mut art = ctx.artifacts()?;
    let mut report = json!({ "dataset": dataset.display().to_string(), "n_samples": ds.len() });

    if matches!(method, Method::Radon | Method::Both) {
        let fbp = filtered_backprojection(&ds, &rc.radon)?;
        if art.wants(Format::Csv) {
            art.write("wigner.csv", &grid_csv(&fbp.wigner)?)?;
        }
        let w00 = fbp.wigner.nearest(0.0, 0.0);
        // Tr(ρ|0⟩⟨0|) = 2π ∫ W W_vac.
        let g = fbp.wigner.grid;
        let rho00 = 2.0
            * g.cell_area()
            * g.q.points().iter().zip(&fbp.wigner.values).map(|(q, row)| {
                g.p.points().iter().zip(row).map(|(p, w)| w * (-q * q - p * p).exp()).sum::<f64>()
            }).sum::<f64>();
        let mut radon = json!({ "report": fbp.report, "w00": w00, "w_min": fbp.wigner.min(), "rho00": rho00 });
        if bootstrap > 0 {
            let se = fbp_bootstrap(&ds, &rc.radon, bootstrap, ctx.seed)?;
            let se00 = se.nearest(0.0, 0.0);
            let z = w00 / se00;
            radon["bootstrap_resamples"] = json!(bootstrap);
            radon["w00_std_err"] = json!(se00);
            radon["w00_significance"] = json!(z);
            radon["w00_negative_at_3sigma"] = json!(z <= -3.0);
            if art.wants(Format::Csv) {
                art.write("wigner_stderr.csv", &grid_csv(&se)?)?;
            }
        }
        report["radon"] = radon;
    }

    if matches!(method, Method::Pattern | Method::Both) {
        let d = match rc.pattern.d_phases.or_else(|| infer_phase_count(&ds)) {
            Some(d) => d,
            None => {
                return Err(ohtlab::OhtError::NonUniformPhases(
                    "pattern reconstruction needs phases on an equally spaced grid over [0, π); set reconstruction.pattern.d_phases".into(),
                )
                .into())
            }
        };
        let n_max = n_max.or(rc.pattern.n_max).unwrap_or_else(|| 7.min(d.saturating_sub(1)));
        let pf = build_pattern_functions(n_max + 1, &default_pattern_axis(), rc.pattern.l)?;
        let est = rho_from_quadratures(&ds, &pf, d)?;
        let dim = est.rho.dim();
        if art.wants(Format::Json) {
            let mut rho = serde_json::to_value(est.rho.to_json())?;
            rho["errors"] = json!((0..dim).map(|n| (0..dim).map(|m| est.std_err[(n, m)]).collect::<Vec<_>>()).collect::<Vec<_>>());
            art.write_json("rho.json", &rho)?;
        }
        if art.wants(Format::Csv) {
            let mut s = String::from("n,p,stderr\n");
            for (n, p) in est.rho.populations().iter().enumerate() {
                let _ = writeln!(s, "{n},{p},{}", est.std_err[(n, n)]);
            }
            art.write("pn.csv", s.as_bytes())?;
        }
        report["pattern"] = json!({
            "d_phases": d,
            "n_max": n_max,
            "rho00": est.rho.get(0, 0).re,
            "rho00_std_err": est.std_err[(0, 0)],
            "trace": est.rho.trace(),
            "purity": est.rho.purity(),
            "mean_photons": est.rho.mean_photons(),
            "samples_per_phase": est.samples_per_phase,
        });
    }
    art.write_json("report.json", &report)?;
    ctx.finish(art, "reconstruct")
}

pub fn moments(ctx: &Ctx, dataset: &Path) -> anyhow::Result<PathBuf> {
    let ds = read_dataset(dataset)?;
    let rep = moment_report(&ds)?;
    let mut art = ctx.artifacts()?;
    if art.wants(Format::Json) {
        art.write_json("moments.json", &rep)?;
    }
    if art.wants(Format::Csv) {
        let mut s = String::from("quantity,value,std_err\n");
        let _ = writeln!(s, "mean_n,{},{}", rep.mean_n.value, rep.mean_n.std_err);
        for (r, e) in rep.factorial_moments.iter().enumerate() {
            let _ = writeln!(s, "factorial_{},{},{}", r + 1, e.value, e.std_err);
        }
        if let Some(g) = rep.g2 {
            let _ = writeln!(s, "g2,{},{}", g.value, g.std_err);
        }
        art.write("moments.csv", s.as_bytes())?;
    }
    ctx.finish(art, "moments")
}

pub fn twomode(ctx: &Ctx) -> anyhow::Result<PathBuf> {
    let Some(tm) = &ctx.cfg.twomode else { return config_err("twomode needs a `twomode` section") };
    let runs = ThreeAlphaRuns::simulate(&TwoModeState::Planted(tm.law), &ctx.cfg.detector, tm.n_pulses, ctx.seed)?;
    let g = two_time_g2(&runs)?;
    let mut art = ctx.artifacts()?;
    for (name, ds) in [("run_a0.jsonl", &runs.a0), ("run_a45.jsonl", &runs.a45), ("run_a90.jsonl", &runs.a90)] {
        art.write_with(name, |b| ds.write_jsonl(b))?;
    }
    if art.wants(Format::Json) {
        art.write_json("twomode.json", &json!({ "law": tm.law, "planted_g2_cross": tm.law.g2_cross(), "result": g }))?;
    }
    if art.wants(Format::Csv) {
        let mut s = String::from("quantity,value,std_err\n");
        for (k, e) in [("g2_cross", g.g2), ("mean_n1", g.mean_n1), ("mean_n2", g.mean_n2), ("q1sq_q2sq", g.cross_q2q2)] {
            let _ = writeln!(s, "{k},{},{}", e.value, e.std_err);
        }
        art.write("twomode.csv", s.as_bytes())?;
    }
    ctx.finish(art, "twomode")
}

fn mode_vector(grid: &PixelGrid, m: ModeSpec) -> ohtlab::Result<ModeVector> {
    match m {
        ModeSpec::Uniform => Ok(ModeVector::uniform(grid)),
        ModeSpec::HermiteGauss { order, width } => ModeVector::hermite_gauss(grid, order, width),
    }
}

pub fn array(ctx: &Ctx) -> anyhow::Result<PathBuf> {
    let Some(ac) = &ctx.cfg.array else { return config_err("array needs an `array` section") };
    let planted = ac.signals.iter().map(|s| mode_vector(&ac.grid, s.mode)).collect::<ohtlab::Result<Vec<_>>>()?;
    let signals: Vec<ArraySignal> = planted.iter().zip(&ac.signals).map(|(m, s)| ArraySignal::real(m, s.state)).collect();
    let sched = ctx.cfg.schedule.unwrap_or(PhaseSchedule::UniformRandom);
    let frames = simulate_array_frames(&signals, &ctx.cfg.detector, &ac.grid, &sched, ac.n_frames, ctx.seed)?;
    let mut art = ctx.artifacts()?;
    art.write_with("frames.jsonl", |b| frames.write_jsonl(b))?;
    let mut report = json!({ "n_frames": frames.len(), "warnings": frames.warnings });
    if !matches!(sched, PhaseSchedule::Fixed { .. }) {
        let om = optimal_mode(&difference_correlation_matrix(&frames)?, &frames)?;
        if art.wants(Format::Csv) {
            let mut s = String::from("pixel,x,w\n");
            for (j, (x, w)) in ac.grid.coords().iter().zip(om.mode.values()).enumerate() {
                let _ = writeln!(s, "{j},{x},{w}");
            }
            art.write("optimal_mode.csv", s.as_bytes())?;
        }
        let quads = project_mode_quadrature(&frames, &om.mode)?;
        art.write_with("optimal_mode_quadratures.jsonl", |b| quads.write_jsonl(b))?;
        report["optimal_mode"] = json!({
            "eigenvalue": om.eigenvalue,
            "mean_photons": om.mean_photons,
            "overlap_with_planted": planted.iter().map(|m| om.mode.overlap(m, &ac.grid)).collect::<Vec<_>>(),
        });
    }
    if let Some(sec) = &ac.spectral {
        let mut cfg = sec.config.clone();
        cfg.seed = ctx.seed;
        let rec = unbalanced_spectral_sim(&sec.signal, &cfg)?;
        art.write_with("k_records.jsonl", |b| rec.write_jsonl(b))?;
        if let Some([l, l2]) = sec.pair {
            let jq = joint_q_histogram(&rec, l, l2, sec.bins, sec.half_range)?;
            if art.wants(Format::Csv) {
                art.write("q_single.csv", &grid_csv(&jq.single)?)?;
                art.write("q_pair.csv", &grid_csv(&jq.pair)?)?;
            }
            report["spectral"] = json!({
                "l": l, "l2": l2,
                "correlation": jq.correlation,
                "variances": [jq.variances.0, jq.variances.1],
                "warnings": jq.warnings,
            });
        }
    }
    art.write_json("array_report.json", &report)?;
    ctx.finish(art, "array")
}

/// Grid indices of `taus`, or None when any delay is off the time grid.
fn on_grid(axis: &Axis, taus: &[f64]) -> Option<Vec<usize>> {
    taus.iter()
        .map(|&t| {
            let k = axis.locate(t).round();
            (k >= 0.0 && (k as usize) < axis.n && (axis.at(k as usize) - t).abs() <= 1e-9 * axis.step()).then_some(k as usize)
        })
        .collect()
}

pub fn sample(ctx: &Ctx) -> anyhow::Result<PathBuf> {
    let Some(tc) = &ctx.cfg.temporal else { return config_err("sample needs a `temporal` section") };
    let sig = match &tc.signal {
        SignalSpec::ChirpedPulse { nu, width, chirp, t_c } => TemporalSignal::chirped_pulse(tc.axis, *nu, *width, *chirp, *t_c)?,
        SignalSpec::Tone { omega } => TemporalSignal::tone(tc.axis, *omega)?,
        SignalSpec::Csv { path, nu, bandwidth } => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            TemporalSignal::read_csv(BufReader::new(f), *nu, *bandwidth)?
        }
    };
    let mut art = ctx.artifacts()?;
    let mut report = json!({ "n_points": sig.t_axis.n, "dt": sig.dt() });
    art.write_with("signal.csv", |b| sig.write_csv(b))?;
    if let Some(s) = &tc.sampling {
        let gate = GateFunction::new(s.gate, s.omega_l, 0.0)?;
        let taus = s.taus.points();
        let out = linear_optical_sampling(&sig, &gate, &taus, s.method)?;
        art.write("sampled.csv", complex_csv("tau,re,im", taus.iter().copied().zip(out)).as_bytes())?;
    }
    if let Some(r) = &tc.recovery {
        let taus = r.taus.points();
        let rec = bandlimited_exact_recovery(&sig, r.bandwidth, r.nu, &taus)?;
        if let Some(idx) = on_grid(&sig.t_axis, &taus) {
            let truth: Vec<Complex64> = idx.iter().map(|&i| sig.phi[i]).collect();
            report["recovery_relative_rms"] = json!(relative_rms(&rec, &truth));
        }
        art.write("recovered.csv", complex_csv("tau,re,im", taus.iter().copied().zip(rec)).as_bytes())?;
    }
    if let Some(m) = &tc.tfmap {
        let map = time_frequency_map(std::slice::from_ref(&sig), m.gate, &m.omega, &m.t)?;
        art.write_with("tfmap.csv", |b| map.write_csv(b))?;
        report["ridge_frequency"] = json!((0..m.t.n).map(|j| map.ridge_frequency(j)).collect::<Vec<_>>());
    }
    art.write_json("temporal_report.json", &report)?;
    ctx.finish(art, "sample")
}

pub fn calibrate(ctx: &Ctx) -> anyhow::Result<PathBuf> {
    let Some(cc) = &ctx.cfg.calibration else { return config_err("calibrate needs a `calibration` section") };
    let fit = calibration_curve(&ctx.cfg.detector, &cc.lo_levels, cc.pulses_per_level, ctx.seed)?;
    let mut art = ctx.artifacts()?;
    if art.wants(Format::Json) {
        let precision = cc.balancing.as_ref().map(|b| gain_balancing_sim(b.n_tot, b.n_diff1, b.n_diff2)).transpose()?;
        art.write_json("calibration.json", &json!({ "fit": fit, "balancing_precision": precision }))?;
    }
    if art.wants(Format::Csv) {
        let mut s = String::from("lo_mean_photons,mean_v_plus,var_v_minus,n_pulses\n");
        for p in &fit.table {
            let _ = writeln!(s, "{},{},{},{}", p.lo_mean_photons, p.mean_v_plus, p.var_v_minus, p.n_pulses);
        }
        art.write("calibration.csv", s.as_bytes())?;
    }
    ctx.finish(art, "calibrate")
}
