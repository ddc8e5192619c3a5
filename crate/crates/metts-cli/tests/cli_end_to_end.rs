//! End-to-end runs of the compiled binary: every mode, the exit-code
//! contract, and the determinism of sample files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_metts-cli")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(binary())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Data rows of a CSV artifact: everything after the `#` metadata line and
/// the column header.
fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# {"), "metadata header missing: {meta}");
    let columns = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (columns, rows)
}

const ED_CONFIG: &str = r#"
mode = "ed-thermal"
[model]
l = 6
u = 1.0
n_max = 6
n_total = 6
[thermal]
beta = 0.25
"#;

#[test]
fn ed_thermal_reports_the_reference_energy() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "run.toml", ED_CONFIG);
    let out = run(&["run", "run.toml"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("-0.9373"), "stdout: {}", stdout(&out));

    let (columns, rows) = csv_rows(&dir.path().join("ed-thermal.csv"));
    assert_eq!(columns, "l,n_total,n_max,u,mu,beta,energy,energy_per_site");
    assert_eq!(rows.len(), 1);
    let energy: f64 = rows[0][6].parse().unwrap();
    assert!((energy - (-0.9373)).abs() < 5e-4, "energy {energy}");
}

#[test]
fn config_mistakes_exit_with_code_one() {
    let dir = TempDir::new().unwrap();

    write_config(dir.path(), "typo.toml", &ED_CONFIG.replace("n_max", "n_mxa"));
    let out = run(&["run", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("n_mxa"), "stderr: {}", stderr(&out));

    write_config(
        dir.path(),
        "beta.toml",
        &ED_CONFIG.replace("beta = 0.25", "beta = -0.25"),
    );
    let out = run(&["run", "beta.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("thermal.beta"), "stderr: {}", stderr(&out));
}

#[test]
fn missing_files_exit_with_code_three() {
    let dir = TempDir::new().unwrap();
    let out = run(&["run", "absent.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3));

    write_config(
        dir.path(),
        "stats.toml",
        "mode = \"stats\"\ninput = \"no-such.jsonl\"\n",
    );
    let out = run(&["run", "stats.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
}

const CANONICAL_CONFIG: &str = r#"
mode = "metts-canonical"
[model]
l = 4
u = 1.0
n_max = 2
[thermal]
beta = 0.25
dtau = 0.125
[sampling]
n_samples = 48
burn_in = 8
seed = 3
initial = [1, 1, 1, 1]
[truncation]
max_bond = 32
"#;

/// JSONL body lines with the timing field stripped, since wall clocks are
/// the one thing a reproducible run cannot pin down.
fn sample_lines_without_wall(path: &Path) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_seconds").unwrap();
            v
        })
        .collect()
}

#[test]
fn equal_configs_produce_identical_sample_streams() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "run.toml", CANONICAL_CONFIG);

    let out = run(&["run", "run.toml", "--output", "a.jsonl"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let out = run(&["run", "run.toml", "--output", "b.jsonl"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let a = sample_lines_without_wall(&dir.path().join("a.jsonl"));
    let b = sample_lines_without_wall(&dir.path().join("b.jsonl"));
    assert_eq!(a.len(), 56, "burn-in plus samples");
    assert_eq!(a, b);

    // A different seed must explore a different trajectory.
    let out = run(
        &["run", "run.toml", "--seed", "4", "--output", "c.jsonl"],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let c = sample_lines_without_wall(&dir.path().join("c.jsonl"));
    assert_ne!(a, c);

    // The header echoes the effective seed.
    let text = std::fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["seed"], 4);
    assert_eq!(header["config"]["sampling"]["seed"], 4);
    assert_eq!(header["config"]["thermal"]["schedule"], "second-order");
}

#[test]
fn stats_mode_summarizes_a_sample_file() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "run.toml", CANONICAL_CONFIG);
    let out = run(&["run", "run.toml", "--output", "run.jsonl"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    write_config(
        dir.path(),
        "stats.toml",
        "mode = \"stats\"\ninput = \"run.jsonl\"\n",
    );
    let out = run(&["run", "stats.toml"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let (columns, rows) = csv_rows(&dir.path().join("stats.csv"));
    assert_eq!(columns, "estimator,mean,sigma,R,t_samp,t_unc");
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "energy");
    assert_eq!(rows[1][0], "n_total");
    for row in &rows {
        let mean: f64 = row[1].parse().unwrap();
        let sigma: f64 = row[2].parse().unwrap();
        let r: f64 = row[3].parse().unwrap();
        let t_samp: f64 = row[4].parse().unwrap();
        let t_unc: f64 = row[5].parse().unwrap();
        assert!(mean.is_finite() && sigma >= 0.0 && r > 0.0 && t_samp > 0.0);
        assert!((t_unc - r * t_samp).abs() < 1e-12 * t_unc.abs().max(1.0));
    }
    // A canonical chain at fixed N has zero number fluctuation.
    let n_mean: f64 = rows[1][1].parse().unwrap();
    assert!((n_mean - 4.0).abs() < 1e-9, "n_mean {n_mean}");
}

#[test]
fn grand_run_feeds_kappa_through_stats() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "run.toml",
        r#"
mode = "metts-grand"
[model]
l = 6
mu = -1.0
hardcore = true
[thermal]
beta = 0.5
dtau = 0.125
[gates]
tau = 1.0
n = 2
[sampling]
n_samples = 40
burn_in = 8
seed = 1
[truncation]
max_bond = 16
"#,
    );
    let out = run(&["run", "run.toml", "--output", "grand.jsonl"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    write_config(
        dir.path(),
        "stats.toml",
        "mode = \"stats\"\ninput = \"grand.jsonl\"\n",
    );
    let out = run(&["run", "stats.toml"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("kappa"), "stdout: {}", stdout(&out));

    let (_, rows) = csv_rows(&dir.path().join("stats.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][0], "kappa");
    let kappa: f64 = rows[2][1].parse().unwrap();
    assert!(kappa.is_finite() && kappa > 0.0, "kappa {kappa}");
}

#[test]
fn oracle_ff_prints_the_compressibility() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "run.toml",
        r#"
mode = "oracle-ff"
[model]
l = 50
mu = -2.0
hardcore = true
[thermal]
beta = 5.0
"#,
    );
    let out = run(&["run", "run.toml"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("11.866"), "stdout: {}", stdout(&out));

    let (columns, rows) = csv_rows(&dir.path().join("oracle-ff.csv"));
    assert_eq!(columns, "mu,nu,energy_per_site,kappa");
    // mu = -2.0 sits on the default grid, so no extra row is added.
    assert_eq!(rows.len(), 9);
    let at_mu = rows
        .iter()
        .find(|r| r[0].parse::<f64>().unwrap() == -2.0)
        .expect("configured mu present");
    let kappa: f64 = at_mu[3].parse().unwrap();
    assert!((kappa - 11.866).abs() < 1e-3, "kappa {kappa}");
}

#[test]
fn slme_sweep_reports_the_mixing_bound() {
    let dir = TempDir::new().unwrap();
    write_config(
        dir.path(),
        "run.toml",
        r#"
mode = "slme-sweep"
[model]
l = 6
u = 1.0
n_max = 6
n_total = 6
[thermal]
beta = 0.25
[gates]
tau = 1.0
n = 2
"#,
    );
    let out = run(&["run", "run.toml"], dir.path());
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let (columns, rows) = csv_rows(&dir.path().join("slme-sweep.csv"));
    assert_eq!(columns, "tau,n,u_prime,lambda2_mag,bound");
    assert_eq!(rows.len(), 1);
    let bound: f64 = rows[0][4].parse().unwrap();
    assert!((bound - 2.376).abs() < 0.05, "bound {bound}");
}
