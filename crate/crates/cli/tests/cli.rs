use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TIGHT: &str = r#"
[problem]
family = "supervised"
name = "tight"
theta0 = "zeros"
[problem.dataset.inline]
inputs = [[1.0, 1.0]]
targets = [[4.0]]
[problem.model]
kind = "linear"
[problem.integrand]
kind = "least_squares"
[certificates]
mode = "analytic"
[descent]
alpha = 0.5
"#;

const EIGHT_POINTS: &str = r#"
[problem]
family = "supervised"
seed = 3
[problem.dataset.synthetic]
kind = "gaussian"
points = 8
input_dim = 4
[problem.model]
kind = "random_features"
width = 8
[problem.integrand]
kind = "least_squares"
[certificates]
mode = "analytic"
[descent]
max_iter = 3000
"#;

fn plgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plgd")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(dir: &Path, cfg: &str, out: &str) -> Output {
    let p = write(dir, &format!("{out}.toml"), cfg);
    plgd(&["run", p.to_str().unwrap(), "--out", dir.join(out).to_str().unwrap()])
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn tight_config_writes_all_outputs() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), TIGHT, "out");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = d.path().join("out");
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(
        lines[0],
        "iter,loss,gap,q_bound,grad_norm,step_norm,step_bound,dist_init,dist_bound"
    );
    assert_eq!(lines.len(), 3);
    // Full-precision fields round-trip.
    let dist: f64 = lines[2].split(',').nth(7).unwrap().parse().unwrap();
    assert!((dist - 8f64.sqrt()).abs() < 1e-15);
    let bounds = fs::read_to_string(out.join("bounds.csv")).unwrap();
    assert!(bounds.starts_with("inequality,iter,measured,bound,outcome"));
    assert!(bounds.lines().skip(1).all(|l| l.ends_with(",pass")));
    let r = report(&out);
    assert_eq!(r["ledger"]["q"], 0.0);
    assert_eq!(r["ledger"]["k_map"]["provenance"], "analytic");
    assert_eq!(r["iterations"]["actual"], 1);
    assert_eq!(r["iterations"]["predicted"], 1);
    assert_eq!(r["outcome"], "pass");
    assert_eq!(r["exit_code"], 0);
    assert!(r["ledger"]["formula_defect"].as_f64().unwrap() <= 1e-15);
    assert!(out.join("timings.json").is_file());
}

#[test]
fn step_at_two_over_l_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &TIGHT.replace("alpha = 0.5", "alpha = 1.0"), "out");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("(0, 2/L)"), "{}", stderr(&o));
}

#[test]
fn planted_jacobian_fails_the_fd_gate() {
    let d = tempfile::tempdir().unwrap();
    let cfg = EIGHT_POINTS.replace("width = 8", "width = 8\njacobian_factor = 1.001");
    let o = run(d.path(), &cfg, "out");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("finite-difference"));
    let out = d.path().join("out");
    let r = report(&out);
    assert_eq!(r["finite_differences"]["passed"], false);
    assert_eq!(r["outcome"], "fd-failed");
    assert!(r["ledger"].is_null());
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn schema_errors_name_the_line() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        d.path(),
        &TIGHT.replace("kind = \"linear\"", "kind = \"linear\"\nwidht = 3"),
        "out",
    );
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("line") && e.contains("widht"), "{e}");
}

#[test]
fn missing_files_are_reported() {
    let d = tempfile::tempdir().unwrap();
    let cfg = TIGHT.replace(
        "[problem.dataset.inline]\ninputs = [[1.0, 1.0]]\ntargets = [[4.0]]",
        "[problem.dataset]\npath = \"nowhere.json\"",
    );
    let o = run(d.path(), &cfg, "out");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.json"));
    let o = plgd(&["run", d.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dataset_and_parameter_files() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "data.json",
        r#"{"inputs": [[1.0, 0.0], [0.0, 1.0]], "targets": [[1.0], [-1.0]], "weights": [0.25, 0.75]}"#,
    );
    write(d.path(), "theta.json", r#"{"shape": [2], "data": [0.5, 0.5]}"#);
    let cfg = TIGHT
        .replace(
            "[problem.dataset.inline]\ninputs = [[1.0, 1.0]]\ntargets = [[4.0]]",
            "[problem.dataset]\npath = \"data.json\"",
        )
        .replace("theta0 = \"zeros\"", "theta0 = { path = \"theta.json\" }")
        .replace("alpha = 0.5", "alpha = \"auto\"");
    let o = run(d.path(), &cfg, "out");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&d.path().join("out"));
    assert_eq!(r["problem"]["samples"], 2);
    assert_eq!(r["outcome"], "pass");
    // Non-uniform weights: K_F² = 0.75, λ_F = 0.25.
    assert!((r["ledger"]["lambda_map"]["value"].as_f64().unwrap() - 0.25).abs() < 1e-12);

    write(
        d.path(),
        "bad.json",
        r#"{"inputs": [[1.0, 0.0]], "targets": [[1.0]], "weights": [0.5]}"#,
    );
    let o = run(d.path(), &cfg.replace("data.json", "bad.json"), "bad");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sum"), "{}", stderr(&o));
}

#[test]
fn check_stops_before_descent() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "c.toml", EIGHT_POINTS);
    let out = d.path().join("out");
    let o = plgd(&["check", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["command"], "check");
    assert!(r["ledger"]["q"].is_number());
    assert!(r["iterations"].is_null());
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn seed_flag_changes_the_experiment() {
    let d = tempfile::tempdir().unwrap();
    let p = write(
        d.path(),
        "s.toml",
        &EIGHT_POINTS.replace("max_iter = 3000", "max_iter = 20"),
    );
    let mut reports = Vec::new();
    for (dir, seed) in [("a", "3"), ("b", "4"), ("c", "3")] {
        let out = d.path().join(dir);
        let o = plgd(&[
            "run",
            p.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        reports.push(fs::read(out.join("report.json")).unwrap());
    }
    assert_ne!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

fn summary(dir: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["value", "lambda_n", "q", "iterations", "dist_from_init", "exit_code"]
    );
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn single_value_sweep_matches_run() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "w.toml", EIGHT_POINTS);
    let sweep_out = d.path().join("sweep");
    let o = plgd(&[
        "sweep",
        p.to_str().unwrap(),
        "--axis",
        "width",
        "--values",
        "8",
        "--out",
        sweep_out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(d.path(), EIGHT_POINTS, "single");
    assert_eq!(o.status.code(), Some(0));
    let a = fs::read(sweep_out.join("width_8").join("report.json")).unwrap();
    let b = fs::read(d.path().join("single").join("report.json")).unwrap();
    assert_eq!(a, b);
    let rows = summary(&sweep_out);
    let r = report(&d.path().join("single"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3], r["iterations"]["actual"].to_string());
}

#[test]
fn alpha_sweep_minimizes_q_at_one_over_l() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "a.toml", TIGHT);
    let out = d.path().join("sweep");
    // L = 2 for the tight case, so 2/L = 1.
    let o = plgd(&[
        "sweep",
        p.to_str().unwrap(),
        "--axis",
        "alpha",
        "--values",
        "0.125,0.25,0.5,0.75,0.95",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = summary(&out);
    let q: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let best = (0..q.len()).min_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap();
    assert_eq!(rows[best][0].parse::<f64>().unwrap(), 0.5);
    for (r, q) in rows.iter().zip(&q) {
        let a: f64 = r[0].parse().unwrap();
        assert!((q - (1.0 - 2.0 * a).powi(2)).abs() < 1e-12);
    }
}

#[test]
fn width_sweep_reports_lambda_n() {
    let d = tempfile::tempdir().unwrap();
    let p = write(
        d.path(),
        "w.toml",
        &EIGHT_POINTS.replace("max_iter = 3000", "max_iter = 50"),
    );
    let out = d.path().join("sweep");
    let o = plgd(&[
        "sweep",
        p.to_str().unwrap(),
        "--axis",
        "width",
        "--values",
        "2,8,32,128",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = summary(&out);
    assert_eq!(rows.len(), 4);
    let lambda: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    println!("λ_N by width: {lambda:?}");
    // Below 8 features the Gram on 8 points is singular.
    assert!(lambda[0] <= 1e-10);
    assert!(lambda[3] > lambda[0]);
    for w in ["2", "8", "32", "128"] {
        assert!(out.join(format!("width_{w}")).join("report.json").is_file());
    }
}

#[test]
fn sweep_rejects_axes_that_do_not_apply() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "t.toml", TIGHT);
    let o = plgd(&["sweep", p.to_str().unwrap(), "--axis", "width", "--values", "4"]);
    assert_eq!(o.status.code(), Some(1));
    let o = plgd(&["sweep", p.to_str().unwrap(), "--axis", "datasize", "--values", "4"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gan_and_vae_configs_run_uncertified() {
    let d = tempfile::tempdir().unwrap();
    let gan = r#"
[problem]
family = "gan"
[problem.dataset.synthetic]
kind = "gaussian"
points = 6
input_dim = 2
[problem.gan]
discriminator = "shallow"
width = 4
sigmoid = true
[problem.integrand]
kind = "r1"
beta = 0.5
direction = "ascend"
[descent]
alpha = 0.05
max_iter = 30
"#;
    let o = run(d.path(), gan, "gan");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&d.path().join("gan"));
    assert_eq!(r["certificates"]["certified"], false);
    assert_eq!(r["problem"]["family"], "gan_discriminator");
    assert_eq!(r["problem"]["output_dim"], 3);
    let o = run(d.path(), &gan.replace("alpha = 0.05", "alpha = \"auto\""), "gan_auto");
    assert_eq!(o.status.code(), Some(1));

    let vae = r#"
[problem]
family = "vae"
[problem.dataset.synthetic]
kind = "gaussian"
points = 3
input_dim = 2
[problem.vae]
latent = 1
encoder_width = 3
decoder_width = 3
[descent]
alpha = 0.05
max_iter = 20
"#;
    let o = run(d.path(), vae, "vae");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = report(&d.path().join("vae"));
    assert_eq!(r["problem"]["samples"], 6);
}

#[test]
fn underparameterized_run_exits_zero() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"
[problem]
family = "supervised"
theta0 = "zeros"
[problem.dataset.inline]
inputs = [[1.0], [2.0]]
targets = [[1.0], [3.0]]
[problem.model]
kind = "linear"
[problem.integrand]
kind = "least_squares"
[certificates]
mode = "analytic"
[descent]
max_iter = 50
"#;
    let o = run(d.path(), cfg, "out");
    assert_eq!(o.status.code(), Some(0));
    let r = report(&d.path().join("out"));
    assert!(r["ledger"]["lambda_map"].is_null());
    assert!(r["ledger"]["q"].is_null());
    assert_eq!(r["outcome"], "hypothesis-unmet");
}
