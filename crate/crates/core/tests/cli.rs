use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SHOCK: &str = r#"
problem = "advection-shock"
boundary = "outflow"
x_start = 0.0
x_end = 1.0
final_time = 0.01
nx = 40
nxi = 4
kx = 1
kxi = 2
delta = 1e-2
tol = 1e-2
alpha_init = 0.5
prior = [-1.0, 1.0]
reference = [-1.0, 1.0]
start = [-0.5, 0.5]
"#;

fn dsgid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsgid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs `generate` into `dir/data` and returns the observation file.
fn generate(dir: &Path, cfg: &Path) -> PathBuf {
    let out = dir.join("data");
    let o = dsgid(&["generate", "--config", s(cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("observations.obs")
}

#[test]
fn generate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHOCK);
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = dsgid(&["generate", "--config", s(&cfg), "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push((
            fs::read(out.join("observations.obs")).unwrap(),
            fs::read(out.join("config.toml")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn missing_field_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SHOCK.replace("kxi = 2\n", ""));
    let o = dsgid(&["generate", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[E_CONFIG]"), "{err}");
    assert!(err.contains("kxi"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn usage_errors_exit_with_config_code() {
    assert_eq!(dsgid(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        dsgid(&["identify", "--config", "x.toml"]).status.code(),
        Some(2)
    );
    let o = dsgid(&["table1", "--study", "Nq", "--out", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[E_CONFIG]"));
    assert!(dsgid(&["--help"]).status.success());
}

#[test]
fn identify_writes_outputs_and_converges() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHOCK);
    let data = generate(tmp.path(), &cfg);
    let mut traces = Vec::new();
    for run in ["r1", "r2"] {
        let out = tmp.path().join(run);
        let o = dsgid(&[
            "identify",
            "--config",
            s(&cfg),
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--adjoint-grid",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        for f in [
            "trace.csv",
            "timing.csv",
            "summary.json",
            "adjoint_grid.csv",
        ] {
            assert!(out.join(f).is_file(), "{f} missing");
        }
        let summary: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["status"], "converged");
        assert!((summary["xi_left"].as_f64().unwrap() + 1.0).abs() < 0.05);
        assert!((summary["xi_right"].as_f64().unwrap() - 1.0).abs() < 0.05);
        traces.push(fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    let text = String::from_utf8(traces.remove(0)).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "iteration,xi_left,xi_right,J,j,state_distance,gradient_norm,armijo_steps,alpha"
    );
}

#[test]
fn forward_at_zero_time_writes_initial_state_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &SHOCK.replace("final_time = 0.01", "final_time = 0.0"),
    );
    let out = tmp.path().join("f");
    let o = dsgid(&["forward", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["coefficients.csv", "grid.csv"] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        let mut rows = text.lines().skip(1).peekable();
        assert!(rows.peek().is_some());
        assert!(rows.all(|r| r.starts_with("0,")), "{f}");
    }
    // 40 cells × 4 elements × 2 × 3 coefficients
    let rows = fs::read_to_string(out.join("coefficients.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    assert_eq!(rows, 40 * 4 * 2 * 3);
}

#[test]
fn mismatched_data_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHOCK);
    let data = generate(tmp.path(), &cfg);
    let other = write_config(tmp.path(), "d.toml", &SHOCK.replace("nxi = 4", "nxi = 5"));
    let o = dsgid(&[
        "identify",
        "--config",
        s(&other),
        "--data",
        s(&data),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(5));
    let err = stderr(&o);
    assert!(
        err.starts_with("error[E_DATA]") && err.contains("expected 5, found 4"),
        "{err}"
    );

    let mut bytes = fs::read(&data).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&data, bytes).unwrap();
    let o = dsgid(&[
        "identify",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn blow_up_is_a_solver_error() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
problem = "burgers"
boundary = "periodic"
x_start = 0.0
x_end = 1.0
final_time = 20.0
nx = 20
nxi = 2
kx = 1
kxi = 1
delta = 1e-2
tol = 1e-2
alpha_init = 0.5
prior = [-1.0, 1.0]
reference = [-1.0, 1.0]
cfl_safety = 40.0
limiter = false
"#;
    let cfg = write_config(tmp.path(), "c.toml", text);
    let o = dsgid(&["generate", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[E_SOLVER]"), "{}", stderr(&o));
}

#[test]
fn unconverged_run_is_an_optimizer_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SHOCK);
    let data = generate(tmp.path(), &cfg);
    let capped = write_config(
        tmp.path(),
        "capped.toml",
        &format!("{SHOCK}max_iterations = 1\n"),
    );
    let out = tmp.path().join("r");
    let o = dsgid(&[
        "identify",
        "--config",
        s(&capped),
        "--data",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[E_OPTIMIZER]"));
    // Outputs are still written.
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "max_iterations");
}
