//! The four batch commands. Each writes its data files plus
//! `manifest.json` into the output directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use resetdf::approx;
use resetdf::hosidf;
use resetdf::reset_elements::{hz_to_rad, rad_to_hz, Element};
use resetdf::simulator::{self, SimConfig, SimError, SimResult};
use resetdf::tuner::{self, CandidateResult, InfeasibleCandidate, TunerError, TuningTable};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, AnalyzeConfig, ElementConfig, PlantConfig, SimulateConfig, TuneConfig};
use crate::error::CliError;
use crate::output::{db, ensure_dir, num, write_json, RunManifest};
use crate::suite;

/// Command-line overrides of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub orders: Option<Vec<u32>>,
    /// `(f_min_hz, f_max_hz, points)`
    pub grid: Option<(f64, f64, usize)>,
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    Ok(serde_json::to_value(v)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    Ok(csv::Writer::from_path(path)?)
}

pub fn cmd_analyze(config_path: &Path, out: &Path, ov: &Overrides) -> Result<RunManifest, CliError> {
    let cfg: AnalyzeConfig = config::load(config_path)?;
    let bad = |m: String| CliError::config(config_path, m);
    let element = cfg.element.resolve().map_err(bad)?;
    let mut sweep = cfg.sweep.resolve();
    if let Some((lo, hi, n)) = ov.grid {
        sweep.f_min_hz = lo;
        sweep.f_max_hz = hi;
        sweep.points = Some(n);
    }
    if let Some(o) = &ov.orders {
        sweep.orders = Some(o.clone());
    }
    let orders = sweep.orders.clone().unwrap_or_default();
    if orders.is_empty() || orders.contains(&0) {
        return Err(bad("orders must be a nonempty list of positive integers".into()));
    }
    let plant = match (cfg.include_plant, &cfg.plant) {
        (true, p) => Some(p.clone().unwrap_or_else(PlantConfig::stage)),
        (false, Some(_)) => return Err(bad("[plant] given but include_plant is false".into())),
        (false, None) => None,
    };
    let (chain, kp) = config::build_loop(&element, cfg.pid.as_ref(), plant.as_ref()).map_err(bad)?;
    let freqs = hosidf::log_grid(sweep.f_min_hz, sweep.f_max_hz, sweep.points.unwrap_or(0))
        .map_err(|e| bad(e.to_string()))?;
    let grid: Vec<f64> = freqs.iter().map(|f| hz_to_rad(*f)).collect();
    let resp = hosidf::sweep(&chain, &grid, &orders).map_err(|e| bad(e.to_string()))?;

    let pid = cfg.pid.clone().map(|mut p| {
        p.kp = kp;
        p
    });
    let params = json!({
        "element": to_value(&element)?,
        "pid": to_value(&pid)?,
        "include_plant": cfg.include_plant,
        "plant": to_value(&plant)?,
        "sweep": to_value(&sweep)?,
    });
    let mut manifest = RunManifest::new("analyze", Some(config_path), params);
    ensure_dir(out)?;
    let path = out.join("analyze.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["freq_hz", "order", "mag_db", "phase_deg"])?;
    let mut undefined = 0;
    for (i, f) in freqs.iter().enumerate() {
        for (k, &n) in orders.iter().enumerate() {
            let (mag, phase) = match &resp.values[i][k] {
                Ok(g) if g.norm() > 0.0 => (db(g.norm()), num(g.arg().to_degrees())),
                Ok(_) => (String::new(), String::new()),
                Err(e) => {
                    undefined += 1;
                    if undefined <= 20 {
                        manifest.warnings.push(e.to_string());
                    }
                    (String::new(), String::new())
                }
            };
            w.write_record([num(*f), n.to_string(), mag, phase])?;
        }
    }
    w.flush()?;
    if undefined > 0 {
        manifest
            .warnings
            .push(format!("{undefined} grid points undefined (empty fields)"));
    }
    manifest.add_output(&path);
    manifest.write(out)?;
    Ok(manifest)
}

/// Row label in the order the reset gains were listed (`f1`, `f2`, ... or
/// `s1`, ...); refinement results are `r1`, `r2`, ... by ascending gamma.
pub fn candidate_labels(order: u8, listed: &[f64], table: &TuningTable) -> Vec<(String, CandidateResult)> {
    let prefix = if order == 1 { "f" } else { "s" };
    let mut rows: Vec<(usize, String, CandidateResult)> = Vec::new();
    let mut extra: Vec<&CandidateResult> = Vec::new();
    for c in &table.candidates {
        match listed.iter().position(|g| *g == c.gamma) {
            Some(i) => rows.push((i, format!("{prefix}{}", i + 1), c.clone())),
            None => extra.push(c),
        }
    }
    extra.sort_by(|a, b| a.gamma.total_cmp(&b.gamma));
    for (k, c) in extra.into_iter().enumerate() {
        rows.push((listed.len() + k, format!("r{}", k + 1), c.clone()));
    }
    rows.sort_by_key(|r| r.0);
    rows.into_iter().map(|(_, l, c)| (l, c)).collect()
}

fn write_infeasible(path: &Path, rows: &[InfeasibleCandidate]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["gamma", "max_lead_deg", "reason"])?;
    for r in rows {
        w.write_record([num(r.gamma), num(r.max_lead_deg), r.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

fn infeasible_report(rows: &[InfeasibleCandidate]) -> String {
    rows.iter()
        .map(|r| format!("  gamma = {}: {} (max lead {:.3} deg)", r.gamma, r.reason, r.max_lead_deg))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn cmd_tune(config_path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let cfg: TuneConfig = config::load(config_path)?;
    let mut problem = cfg.problem;
    problem
        .validate()
        .map_err(|e| CliError::config(config_path, e.to_string()))?;
    problem.gain_law = Some(problem.gain_law());
    if problem.order == 2 && problem.zeta.is_none() {
        problem.zeta_candidates = Some(problem.zeta_candidates());
    }
    let mut manifest = RunManifest::new("tune", Some(config_path), json!({ "problem": to_value(&problem)? }));
    ensure_dir(out)?;
    let infeasible_path = out.join("infeasible.csv");
    let table = match tuner::enumerate(&problem) {
        Ok(t) => tuner::refine(&problem, &t).map_err(|e| CliError::Failed(e.to_string()))?,
        Err(TunerError::AllInfeasible(rows)) => {
            write_infeasible(&infeasible_path, &rows)?;
            manifest.add_output(&infeasible_path);
            manifest.write(out)?;
            return Err(CliError::Infeasible(infeasible_report(&rows)));
        }
        Err(e) => return Err(CliError::Failed(e.to_string())),
    };

    let labelled = candidate_labels(problem.order, &problem.gamma_candidates, &table);
    let path = out.join("candidates.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "ctrl",
        "gamma",
        "a",
        "sigma",
        "achieved_phase_deg",
        "omega_r_hz",
        "gain_corr",
        "beta",
        "zeta",
        "sigma_rank",
    ])?;
    for (label, c) in &labelled {
        let rank = table.candidates.iter().position(|x| x == c).map_or(0, |p| p + 1);
        w.write_record([
            label.clone(),
            num(c.gamma),
            num(c.a),
            num(c.sigma),
            num(c.achieved_phase_deg),
            num(rad_to_hz(c.omega_r)),
            num(c.gain_corr),
            c.beta.map(num).unwrap_or_default(),
            c.zeta.map(num).unwrap_or_default(),
            rank.to_string(),
        ])?;
    }
    w.flush()?;
    manifest.add_output(&path);
    write_infeasible(&infeasible_path, &table.infeasible)?;
    manifest.add_output(&infeasible_path);
    if !table.infeasible.is_empty() {
        manifest.warnings.push(format!(
            "rejected reset gains:\n{}",
            infeasible_report(&table.infeasible)
        ));
    }
    let best = table.best().expect("enumerate returns at least one candidate");
    let label = labelled
        .iter()
        .find(|(_, c)| c == best)
        .map(|(l, _)| l.clone())
        .unwrap_or_default();
    let best_path = out.join("best.json");
    write_json(
        &best_path,
        &json!({
            "ctrl": label,
            "omega_r_hz": rad_to_hz(best.omega_r),
            "candidate": to_value(best)?,
        }),
    )?;
    manifest.add_output(&best_path);
    manifest.write(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub kp: f64,
    pub dt: f64,
    pub rms_measured: f64,
    pub rms_expected: f64,
    /// Absent when the prediction is zero.
    pub deviation_ratio: Option<f64>,
    pub reset_count: usize,
    /// Harmonic proxy of CgLp designs.
    pub sigma: Option<f64>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

struct Prepared {
    name: String,
    element: ElementConfig,
    kp: f64,
    controller: resetdf::reset_elements::SeriesChain,
}

pub fn cmd_simulate(config_path: &Path, out: &Path) -> Result<RunManifest, CliError> {
    let cfg: SimulateConfig = config::load(config_path)?;
    let bad = |m: String| CliError::config(config_path, m);
    if cfg.run.is_empty() {
        return Err(bad("at least one [[run]] is required".into()));
    }
    let mut names = BTreeSet::new();
    for r in &cfg.run {
        if !valid_name(&r.name) {
            return Err(bad(format!("run name '{}' must use only letters, digits, '-' and '_'", r.name)));
        }
        if !names.insert(r.name.clone()) {
            return Err(bad(format!("duplicate run name '{}'", r.name)));
        }
    }
    let rf = &cfg.reference;
    let mut sim_cfg = SimConfig::new(rf.frequency_hz, rf.amplitude, rf.settle_periods, rf.analysis_periods);
    sim_cfg.dt = rf.dt;
    sim_cfg.quantizer = rf.quantizer;
    sim_cfg.record_stride = rf.record_stride;
    if rf.analysis_periods < simulator::MIN_ANALYSIS_PERIODS as u32 {
        return Err(bad(format!(
            "analysis_periods must be at least {}",
            simulator::MIN_ANALYSIS_PERIODS
        )));
    }
    sim_cfg.validate().map_err(|e| bad(e.to_string()))?;
    let plant_cfg = cfg.plant.clone().unwrap_or_else(PlantConfig::stage);
    let plant = plant_cfg.element().map_err(bad)?;

    let mut prepared = Vec::new();
    for r in &cfg.run {
        let element = r.element.resolve().map_err(bad)?;
        let (_, kp) = config::build_loop(&element, Some(&cfg.pid), Some(&plant_cfg)).map_err(bad)?;
        let kp = kp.expect("pid present");
        let controller = element
            .chain()
            .and_then(|c| c.then([Element::Linear(cfg.pid.element(kp)?)]).map_err(|e| e.to_string()))
            .map_err(bad)?;
        prepared.push(Prepared {
            name: r.name.clone(),
            element,
            kp,
            controller,
        });
    }

    let results: Vec<Result<SimResult, SimError>> = prepared
        .par_iter()
        .map(|p| simulator::simulate_closed_loop(&p.controller, &plant, &sim_cfg))
        .collect();

    let params = json!({
        "reference": to_value(rf)?,
        "pid": to_value(&cfg.pid)?,
        "plant": to_value(&plant_cfg)?,
        "run": prepared.iter().map(|p| json!({
            "name": p.name,
            "element": p.element,
            "kp": p.kp,
        })).collect::<Vec<_>>(),
    });
    let mut manifest = RunManifest::new("simulate", Some(config_path), params);
    ensure_dir(out)?;
    let mut summaries = Vec::new();
    let mut diverged: Option<CliError> = None;
    for (p, r) in prepared.iter().zip(results) {
        let res = match r {
            Ok(res) => res,
            Err(SimError::Diverged { time, last_stable_time }) => {
                manifest.warnings.push(format!(
                    "run '{}' diverged at t = {time} s, last stable time {last_stable_time} s",
                    p.name
                ));
                diverged.get_or_insert(CliError::Divergence {
                    name: p.name.clone(),
                    time,
                    last_stable_time,
                });
                continue;
            }
            Err(e) => return Err(CliError::Failed(format!("run '{}': {e}", p.name))),
        };
        let expected = simulator::expected_rms_error(&p.controller, &plant, rf.amplitude, rf.frequency_hz)
            .map_err(|e| CliError::Failed(format!("run '{}': {e}", p.name)))?;
        let ts = out.join(format!("timeseries_{}.csv", p.name));
        let mut w = csv_writer(&ts)?;
        w.write_record(["time", "reference", "error", "control", "output"])?;
        for i in 0..res.time.len() {
            w.write_record([
                num(res.time[i]),
                num(res.reference[i]),
                num(res.error[i]),
                num(res.control[i]),
                num(res.output[i]),
            ])?;
        }
        w.flush()?;
        manifest.add_output(&ts);
        summaries.push(RunSummary {
            name: p.name.clone(),
            kp: p.kp,
            dt: res.dt,
            rms_measured: res.rms_error,
            rms_expected: expected,
            deviation_ratio: simulator::deviation_ratio(res.rms_error, expected).ok(),
            reset_count: res.reset_count(),
            sigma: p.element.design().and_then(|d| approx::sigma(&d).ok()),
        });
    }
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summaries)?;
    manifest.add_output(&summary_path);
    manifest.write(out)?;
    match diverged {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub total: usize,
    pub checked: usize,
    pub failed: usize,
    pub worst_mag_err: f64,
    pub worst_phase_err_deg: f64,
}

pub fn summarize(rows: &[suite::OracleRow]) -> ValidationSummary {
    let odd = rows.iter().filter(|r| r.checked && r.order % 2 == 1);
    let (mut wm, mut wp) = (0.0f64, 0.0f64);
    for r in odd {
        wm = wm.max(r.mag_err);
        wp = wp.max(r.phase_err_deg.abs());
    }
    ValidationSummary {
        total: rows.len(),
        checked: rows.iter().filter(|r| r.checked).count(),
        failed: rows.iter().filter(|r| !r.pass).count(),
        worst_mag_err: wm,
        worst_phase_err_deg: wp,
    }
}

/// `theta_scale` other than 1 deliberately corrupts the analytic side.
pub fn cmd_validate(out: &Path, ov: &Overrides, theta_scale: f64) -> Result<RunManifest, CliError> {
    let orders = ov.orders.clone().unwrap_or_else(suite::default_orders);
    if orders.is_empty() || orders.contains(&0) {
        return Err(CliError::Config {
            path: "--orders".into(),
            message: "orders must be a nonempty list of positive integers".into(),
        });
    }
    let rows = suite::run(&orders, theta_scale);
    let summary = summarize(&rows);
    let params = json!({
        "elements": suite::elements().iter().map(|e| e.name).collect::<Vec<_>>(),
        "points_per_element": suite::POINTS,
        "orders": orders,
        "mag_tol": suite::MAG_TOL,
        "phase_tol_deg": suite::PHASE_TOL_DEG,
        "mag_floor": suite::MAG_FLOOR,
        "even_tol": suite::EVEN_TOL,
        "theta_scale": theta_scale,
    });
    let mut manifest = RunManifest::new("validate", None, params);
    ensure_dir(out)?;
    let path = out.join("validation.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "element",
        "omega_rad_s",
        "order",
        "analytic_mag",
        "analytic_phase_deg",
        "sim_mag",
        "sim_phase_deg",
        "mag_err",
        "phase_err_deg",
        "checked",
        "pass",
        "note",
    ])?;
    for r in &rows {
        w.write_record([
            r.element.clone(),
            num(r.omega),
            r.order.to_string(),
            num(r.analytic.norm()),
            num(r.analytic.arg().to_degrees()),
            num(r.simulated.norm()),
            num(r.simulated.arg().to_degrees()),
            num(r.mag_err),
            num(r.phase_err_deg),
            r.checked.to_string(),
            r.pass.to_string(),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    manifest.add_output(&path);
    let summary_path = out.join("validation_summary.json");
    write_json(&summary_path, &summary)?;
    manifest.add_output(&summary_path);
    manifest.write(out)?;
    if summary.failed > 0 {
        return Err(CliError::Validation {
            failed: summary.failed,
            total: summary.total,
        });
    }
    Ok(manifest)
}

/// Parses `--grid fmin,fmax,points` (Hz).
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lo, hi, n] = parts[..] else {
        return Err(format!("expected fmin,fmax,points, got '{s}'"));
    };
    let f = |t: &str| t.parse::<f64>().map_err(|e| format!("bad frequency '{t}': {e}"));
    let n = n.parse::<usize>().map_err(|e| format!("bad point count '{n}': {e}"))?;
    Ok((f(lo)?, f(hi)?, n))
}

/// Default output directory for a command.
pub fn default_out(command: &str) -> PathBuf {
    PathBuf::from(format!("resetdf-{command}"))
}
