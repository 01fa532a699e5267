//! Artifacts written by the commands.

use std::fs;
use std::path::{Path, PathBuf};

use regret_sls::io::{write_json, CertificateDoc, ControllerDoc, SynthesisDoc, SystemDoc};
use regret_sls::lifted::Trajectory;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{improvement_factors, Outcome};
use crate::svg::{self, Series};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn mkdir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn json<S: Serialize>(path: &Path, doc: &S) -> CliResult<()> {
    write_json(path, doc).map_err(|e| io_err(path, e))
}

fn text(path: &Path, body: &str) -> CliResult<()> {
    fs::write(path, body).map_err(|e| io_err(path, e))
}

/// CSV with a fixed header; every field is preformatted.
fn csv_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn horizon_dir(root: &Path, horizon: usize) -> PathBuf {
    root.join(format!("T{horizon}"))
}

pub fn job_dir(root: &Path, o: &Outcome) -> PathBuf {
    horizon_dir(root, o.horizon).join(o.strategy.name())
}

/// Plant, controller, certificate and synthesis record of each job, and the
/// summary tables.
pub fn write_synthesis(root: &Path, cfg: &ExperimentConfig, outcomes: &[Outcome], wallclock: bool) -> CliResult<()> {
    mkdir(root)?;
    let mut summary = Vec::new();
    let mut validation = Vec::new();
    let mut timing = Vec::new();
    for t in cfg.horizon_list() {
        let hdir = horizon_dir(root, t);
        mkdir(&hdir)?;
        if let Some(o) = outcomes.iter().find(|o| o.horizon == t) {
            json(&hdir.join("plant.json"), &SystemDoc::from_system(&o.system))?;
        }
    }
    for o in outcomes {
        let dir = job_dir(root, o);
        mkdir(&dir)?;
        let r = &o.result;
        json(&dir.join("controller.json"), &ControllerDoc::new(&r.omega, &r.gain, Some(o.strategy.name())))?;
        json(&dir.join("certificate.json"), &CertificateDoc::new(&r.certificate))?;
        json(&dir.join("synthesis.json"), &SynthesisDoc::new(r))?;
        let wall = if wallclock { r.wallclock_s } else { 0.0 };
        summary.push(vec![
            o.strategy.name().to_owned(),
            o.horizon.to_string(),
            num(cfg.alpha),
            num(r.certificate.lambda),
            num(r.certificate.mu),
            num(r.shor_lower_bound),
            num(wall),
        ]);
        validation.push(vec![
            o.strategy.name().to_owned(),
            o.horizon.to_string(),
            o.validation.samples.to_string(),
            num(o.validation.max_regret),
            num(r.certificate.mu),
            o.validation.bound_holds.to_string(),
        ]);
        timing.push(vec![o.strategy.name().to_owned(), o.horizon.to_string(), num(r.wallclock_s)]);
    }
    csv_file(
        &root.join("summary.csv"),
        &["strategy", "T", "alpha", "lambda", "mu", "shor_bound", "wallclock_s"],
        &summary,
    )?;
    csv_file(
        &root.join("validation.csv"),
        &["strategy", "T", "samples", "max_sampled_regret", "mu", "bound_holds"],
        &validation,
    )?;
    if wallclock {
        csv_file(&root.join("timing.csv"), &["strategy", "T", "wallclock_s"], &timing)?;
    }
    Ok(())
}

/// Comparison table, worst-case regret bars, and per-horizon stealth and
/// regulated-output plots.
pub fn write_comparison(root: &Path, cfg: &ExperimentConfig, outcomes: &[Outcome]) -> CliResult<()> {
    let mut cmp = Vec::new();
    let mut regret_rows = Vec::new();
    let mut groups = Vec::new();
    for t in cfg.horizon_list() {
        let at: Vec<&Outcome> = outcomes.iter().filter(|o| o.horizon == t).collect();
        for o in &at {
            cmp.push(vec!["mu".into(), o.strategy.name().into(), t.to_string(), num(o.mu())]);
        }
        for (s, f) in improvement_factors(outcomes, t) {
            cmp.push(vec!["improvement_factor".into(), s.name().into(), t.to_string(), num(f)]);
        }

        let trajectories: Vec<(&Outcome, Trajectory<f64>)> = at
            .iter()
            .map(|o| o.worst_case_trajectory().map(|tr| (*o, tr)))
            .collect::<CliResult<_>>()?;
        let mut bars = Vec::new();
        let mut stealth_rows = Vec::new();
        let mut stealth_series = Vec::new();
        let mut z_rows = Vec::new();
        let mut z_series = Vec::new();
        for (o, tr) in &trajectories {
            let name = o.strategy.name();
            let c = &o.result.certificate;
            regret_rows.push(vec![
                name.to_owned(),
                t.to_string(),
                num(c.mu),
                num(c.achieved_regret),
                num(c.stealth),
            ]);
            bars.push((name.to_owned(), c.mu));
            let cum = tr.cumulative_deviation();
            for (k, v) in cum.iter().enumerate() {
                stealth_rows.push(vec![name.to_owned(), k.to_string(), num(*v), num(cfg.alpha)]);
            }
            stealth_series.push(Series {
                name: name.to_owned(),
                points: cum.iter().enumerate().map(|(k, v)| (k as f64, *v)).collect(),
                dashed: false,
            });
            let pz = tr.z.first().map_or(0, |z| z.len());
            for comp in 0..pz {
                for (k, z) in tr.z.iter().enumerate() {
                    z_rows.push(vec![name.to_owned(), k.to_string(), comp.to_string(), num(z[comp])]);
                }
                z_series.push(Series {
                    name: format!("{name} z[{comp}]"),
                    points: tr.z.iter().enumerate().map(|(k, z)| (k as f64, z[comp])).collect(),
                    dashed: comp > 0,
                });
            }
        }
        groups.push((format!("T = {t}"), bars));

        let hdir = horizon_dir(root, t);
        mkdir(&hdir)?;
        csv_file(
            &hdir.join("stealth.csv"),
            &["strategy", "k", "cumulative_deviation", "alpha"],
            &stealth_rows,
        )?;
        text(
            &hdir.join("stealth.svg"),
            &svg::line_chart(
                &format!("Cumulative output deviation under worst-case attacks, T = {t}"),
                "time step k",
                "sum of |y - y_n|^2",
                &stealth_series,
                &[(format!("alpha = {}", cfg.alpha), cfg.alpha)],
            ),
        )?;
        csv_file(&hdir.join("regulated.csv"), &["strategy", "k", "component", "z"], &z_rows)?;
        text(
            &hdir.join("regulated.svg"),
            &svg::line_chart(
                &format!("Regulated output under worst-case attacks, T = {t}"),
                "time step k",
                "z",
                &z_series,
                &[],
            ),
        )?;
    }
    csv_file(&root.join("comparison.csv"), &["quantity", "strategy", "T", "value"], &cmp)?;
    csv_file(
        &root.join("regret.csv"),
        &["strategy", "T", "mu", "achieved_regret", "stealth"],
        &regret_rows,
    )?;
    text(
        &root.join("regret.svg"),
        &svg::bar_chart("Worst-case regret under stealthy attacks", "regret", &groups),
    )?;
    Ok(())
}

/// Worst-case attack record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackDoc {
    pub horizon: usize,
    pub strategy: Option<String>,
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    pub achieved_regret: f64,
    /// aᵀΦᵀΦa of the attack.
    pub stealth: f64,
    /// Final cumulative ‖y − y_n‖² of the simulated run.
    pub simulated_stealth: f64,
    /// Stacked [x0; a_0; …; a_{T−1}].
    pub a_star: Vec<f64>,
    pub x0: Vec<f64>,
    pub steps: Vec<Vec<f64>>,
}

pub fn write_attack(root: &Path, doc: &AttackDoc, tr: &Trajectory<f64>) -> CliResult<()> {
    mkdir(root)?;
    json(&root.join("attack.json"), doc)?;
    let mut rows = Vec::new();
    let mut push = |k: usize, signal: &str, v: &nalgebra::DVector<f64>| {
        for (i, x) in v.iter().enumerate() {
            rows.push(vec![k.to_string(), signal.to_owned(), i.to_string(), num(*x)]);
        }
    };
    let cum = tr.cumulative_deviation();
    for k in 0..tr.y.len() {
        push(k, "x", &tr.x[k]);
        push(k, "u", &tr.u[k]);
        push(k, "y", &tr.y[k]);
        push(k, "y_nominal", &tr.y_nominal[k]);
        push(k, "z", &tr.z[k]);
        if let Some(a) = doc.steps.get(k) {
            push(k, "a", &nalgebra::DVector::from_column_slice(a));
        }
        push(k, "cumulative_deviation", &nalgebra::DVector::from_element(1, cum[k]));
    }
    csv_file(&root.join("trajectory.csv"), &["k", "signal", "index", "value"], &rows)
}
