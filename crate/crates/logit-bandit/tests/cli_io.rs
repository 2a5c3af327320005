//! End-to-end checks of the command-line interface: flag handling, file
//! formats, exit codes, and cross-process determinism.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logit-bandit"))
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// CSV text with the final (wall-clock) column removed from every line.
fn strip_wall(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn run_writes_the_documented_files_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "run",
            "--T",
            "6",
            "--seeds",
            "2",
            "--arms",
            "4",
            "--algo",
            "eps_greedy",
            "--eps",
            "0.3",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    for seed in 0..2 {
        let csv = read(dir.path(), &format!("run_{seed}.csv"));
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "seed,t,arm,instant_regret,cum_regret,in_confidence_set,mle_iters,wall_ms"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 6);
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<&str> = row.split(',').collect();
            assert_eq!(cells.len(), 8);
            assert_eq!(cells[0], seed.to_string());
            assert_eq!(cells[1], (i + 1).to_string());
            // Float cells round-trip exactly through their printed form.
            for cell in &cells[3..5] {
                let parsed: f64 = cell.parse().unwrap();
                assert_eq!(&format!("{parsed:.16e}"), cell);
            }
            assert!(cells[5] == "0" || cells[5] == "1");
        }
    }
    let agg = read(dir.path(), "aggregate.csv");
    assert_eq!(
        agg.lines().next().unwrap(),
        "t,mean_cum_regret,stderr_cum_regret,coverage_rate"
    );
    assert_eq!(agg.lines().count(), 7);
    // The dumped config reloads to an equivalent configuration.
    let dumped = read(dir.path(), "config_used.txt");
    assert!(dumped.contains("algo=eps_greedy"));
    assert!(dumped.contains("T=6"));
    assert!(dumped.contains("eps=0.3"));
}

#[test]
fn config_file_loads_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("experiment.conf");
    fs::write(
        &config_path,
        "# tiny smoke experiment\nmodel=logistic\nalgo=eps_greedy\nT=4\nseeds=1\narms=3\neps=1\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config_path)
        .args(["--T", "9", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = read(&out, "run_0.csv");
    assert_eq!(csv.lines().count(), 10, "flag --T 9 should override T=4");
    let dumped = read(&out, "config_used.txt");
    assert!(dumped.contains("T=9"));
    assert!(dumped.contains("arms=3"));
}

#[test]
fn reruns_are_byte_identical_apart_from_wall_clock() {
    let args = |out: &Path| {
        let mut c = bin();
        c.args([
            "run",
            "--T",
            "8",
            "--seeds",
            "2",
            "--arms",
            "5",
            "--snapshot-rounds",
            "1,8",
            "--out",
        ])
        .arg(out);
        c
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    assert!(args(dir_a.path()).status().unwrap().success());
    assert!(args(dir_b.path()).status().unwrap().success());
    for seed in 0..2 {
        let a = read(dir_a.path(), &format!("run_{seed}.csv"));
        let b = read(dir_b.path(), &format!("run_{seed}.csv"));
        assert_eq!(strip_wall(&a), strip_wall(&b));
    }
    assert_eq!(
        read(dir_a.path(), "aggregate.csv"),
        read(dir_b.path(), "aggregate.csv")
    );
    for round in [1, 8] {
        let name = format!("snapshot_t{round}.json");
        assert_eq!(read(dir_a.path(), &name), read(dir_b.path(), &name));
    }
}

#[test]
fn mnl_run_works_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "run", "--model", "mnl", "--algo", "mnl_ucb_plus", "--K", "3", "--S", "3", "--T", "5",
            "--seeds", "1", "--arms", "4", "--kappa", "15", "--out",
        ])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read(dir.path(), "run_0.csv").lines().count(), 6);
}

#[test]
fn invalid_model_algo_combination_fails_fast() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["run", "--model", "logistic", "--algo", "mnl_ucb_plus", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("mnl"), "unhelpful error: {stderr}");
    assert!(!dir.path().join("aggregate.csv").exists());
}

#[test]
fn verify_writes_a_parseable_report_and_honors_check_selection() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let output = bin()
        .args([
            "verify",
            "--check",
            "decomposition_logistic",
            "--trials",
            "300",
            "--seed",
            "1",
            "--report",
        ])
        .arg(&report)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("PASS decomposition_logistic"));
    let parsed: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let arr = parsed.as_array().unwrap();
    assert_eq!(arr.len(), 1);
    assert_eq!(arr[0]["name"], "decomposition_logistic");
    assert_eq!(arr[0]["pass"], true);
}

#[test]
fn verify_rejects_unknown_check_names() {
    let output = bin()
        .args(["verify", "--check", "nonexistent_check"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown check"));
    assert!(stderr.contains("poly_inequality"), "should list the catalog: {stderr}");
}
