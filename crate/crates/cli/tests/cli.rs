use std::path::Path;
use std::process::Command;

use regret_sls::io::{read_json, CertificateDoc, ControllerDoc, SystemDoc};
use regret_sls::lifted::{lift, LtvSystem};
use regret_sls::regret::{regret_metric, StealthSpec};
use regret_sls_cli::{cmd_attack, cmd_synthesize, CliError, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regret-sls"))
}

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn config_requires_seed_and_known_fields() {
    assert!(matches!(ExperimentConfig::from_json(r#"{"alpha": 0.1}"#), Err(CliError::Config(_))));
    assert!(matches!(
        ExperimentConfig::from_json(r#"{"seed": 1, "colour": "red"}"#),
        Err(CliError::Config(_))
    ));
    assert!(ExperimentConfig::from_json(r#"{"seed": 1, "alpha": 0}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"seed": 1, "horizons": [0]}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"seed": 1, "strategies": []}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"seed": 1, "strategies": ["Hinf", "Hinf"]}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"seed": 1, "plant": {"demo": {"masses": [1, -1]}}}"#).is_err());
    let c = config(r#"{"seed": 3}"#);
    assert_eq!(c.alpha, 0.1);
    assert_eq!(c.horizon_list(), vec![2]);
    assert_eq!(c.strategies.len(), 2);
}

#[test]
fn search_overrides_reach_the_options() {
    let c = config(r#"{"seed": 1, "search": {"grid_points": 4, "lifting": "Full"}, "solver": {"max_iter": 77}}"#);
    let o = c.synthesis_options();
    assert_eq!(o.grid_points, 4);
    assert_eq!(o.lifting, regret_sls::synthesis::LiftingMode::Full);
    assert_eq!(o.sdp.max_iter, 77);
}

#[test]
fn hinf_certificate_is_reproducible_from_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"seed": 5, "strategies": ["Hinf"], "horizons": [2]}"#);
    let outcomes = cmd_synthesize(&cfg, dir.path(), false).unwrap();
    assert_eq!(outcomes.len(), 1);
    let plant: SystemDoc = read_json(&dir.path().join("T2/plant.json")).unwrap();
    let sys: LtvSystem<f64> = plant.to_system().unwrap();
    let lifted = lift(&sys);
    let ctrl: ControllerDoc = read_json(&dir.path().join("T2/Hinf/controller.json")).unwrap();
    let (omega, _) = ctrl.to_response(&lifted).unwrap();
    let cert: CertificateDoc = read_json(&dir.path().join("T2/Hinf/certificate.json")).unwrap();
    let again = regret_metric(&omega, &lifted, &StealthSpec::new(0.1).unwrap()).unwrap();
    assert!((again.mu - cert.mu).abs() <= 1e-6 * cert.mu.max(1.0), "{} vs {}", again.mu, cert.mu);

    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("strategy,T,alpha,lambda,mu,shor_bound,wallclock_s"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "Hinf");
    assert_eq!(row[6], "0");
    assert!(!dir.path().join("timing.csv").exists());

    // Worst-case attack against the stored controller.
    let attack = cmd_attack(&cfg, &dir.path().join("T2/Hinf/controller.json"), dir.path()).unwrap();
    assert!((attack.achieved_regret - cert.mu).abs() <= 1e-4 * cert.mu);
    assert!(attack.stealth <= 0.1 + 1e-6);
    assert!(attack.simulated_stealth <= 0.1 + 1e-6);
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("k,signal,index,value\n"));
}

const NO_REGULATION: &str = r#"{
    "horizon": 2,
    "a": [[0.9, 0.2], [0.0, 0.8]],
    "bu": [[0.0], [1.0]],
    "ba": [[1.0], [0.0]],
    "cy": [[1.0, 0.0], [0.0, 1.0]],
    "cz": [[0.0, 0.0]],
    "dya": [[0.5], [0.0]]
}"#;

#[test]
fn plant_without_regulation_yields_zero_attack() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!(r#"{{"seed": 1, "strategies": ["Hinf"], "plant": {{"explicit": {NO_REGULATION}}}}}"#));
    cmd_synthesize(&cfg, dir.path(), false).unwrap();
    let attack = cmd_attack(&cfg, &dir.path().join("T2/Hinf/controller.json"), dir.path()).unwrap();
    assert_eq!(attack.lambda, 0.0);
    assert!(attack.a_star.iter().all(|&v| v == 0.0));
    assert_eq!(attack.simulated_stealth, 0.0);
}

#[test]
fn attack_rejects_mismatched_controller() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"seed": 1, "strategies": ["Hinf"]}"#);
    cmd_synthesize(&cfg, dir.path(), false).unwrap();
    let other = config(&format!(r#"{{"seed": 1, "strategies": ["Hinf"], "plant": {{"explicit": {NO_REGULATION}}}}}"#));
    let err = cmd_attack(&other, &dir.path().join("T2/Hinf/controller.json"), dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn exit_codes_and_error_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let run = |cfg: &Path, sub: &str| {
        bin()
            .args([sub, "--config"])
            .arg(cfg)
            .env("SLS_REGRET_OUT_DIR", &out)
            .output()
            .unwrap()
    };

    let missing_seed = write(dir.path(), "a.json", r#"{"alpha": 0.1}"#);
    let o = run(&missing_seed, "synthesize");
    assert_eq!(o.status.code(), Some(4));
    let rec: serde_json::Value = read_json(&out.join("error.json")).unwrap();
    assert_eq!(rec["status"], "config_error");

    let single = write(dir.path(), "b.json", r#"{"seed": 1, "strategies": ["Hinf"]}"#);
    assert_eq!(run(&single, "compare").status.code(), Some(4));

    // Closed-loop maps cannot satisfy an R pattern without the plant's coupling.
    let mask = r#"{"seed": 1, "strategies": ["Hinf"],
        "mask": {"r": {"rows": 4, "cols": 4, "allowed":
            [true, false, false, false, false, true, false, false,
             false, false, true, false, false, false, false, true]}}}"#;
    let infeasible = write(dir.path(), "c.json", mask);
    let o = run(&infeasible, "synthesize");
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value = read_json(&out.join("error.json")).unwrap();
    assert_eq!(rec["exit_code"], 2);

    let starved = write(dir.path(), "d.json", r#"{"seed": 1, "strategies": ["Hinf"], "solver": {"max_iter": 1}}"#);
    let o = run(&starved, "synthesize");
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let ok = write(dir.path(), "e.json", r#"{"seed": 1, "strategies": ["Hinf"], "output_dir": "ignored"}"#);
    let o = run(&ok, "synthesize");
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("summary.csv").exists());
}

#[test]
fn identical_runs_write_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", r#"{"seed": 9, "strategies": ["Hinf"], "horizons": [1, 2]}"#);
    let mut bodies = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        let o = bin()
            .args(["synthesize", "--config"])
            .arg(&cfg)
            .env("SLS_REGRET_OUT_DIR", &out)
            .output()
            .unwrap();
        assert!(o.status.success());
        bodies.push(std::fs::read(out.join("summary.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn svg_helpers_emit_complete_documents() {
    use regret_sls_cli::svg::{bar_chart, line_chart, Series};
    let s = line_chart(
        "t",
        "x",
        "y",
        &[Series {
            name: "a<b".into(),
            points: vec![(0.0, 0.0), (1.0, 2.0)],
            dashed: false,
        }],
        &[("alpha".into(), 1.0)],
    );
    assert!(s.starts_with("<?xml"));
    assert!(s.trim_end().ends_with("</svg>"));
    assert!(s.contains("a&lt;b"));
    assert_eq!(s.matches("<polyline").count(), 1);
    let b = bar_chart("r", "y", &[("T = 2".into(), vec![("A".into(), 1.0), ("B".into(), 2.0)])]);
    assert_eq!(b.matches("<rect").count(), 3);
}
