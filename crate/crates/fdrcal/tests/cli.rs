//! End-to-end tests of the command-line binary: dispatch, file outputs,
//! exit codes, and byte determinism across thread counts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fdrcal"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn gen_panel(dir: &Path, seed: u64) -> PathBuf {
    let cfg = dir.join("gen.toml");
    write(
        &cfg,
        r#"
            [synthetic]
            d = 48
            n = 16
            correlation = 0.0
            signal_fraction = 0.25
            signal_mean = 0.012
            noise_sd = 0.02
        "#,
    );
    let out = dir.join(format!("gen_out_{seed}"));
    run_ok(&[
        "gen-synthetic",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    out.join("synthetic_panel.csv")
}

#[test]
fn gen_synthetic_writes_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = gen_panel(dir.path(), 7);
    let dir2 = tempfile::tempdir().unwrap();
    let p2 = gen_panel(dir2.path(), 7);
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert!(p1.with_file_name("synthetic_truth.csv").exists());
    assert!(p1.with_file_name("manifest.json").exists());
}

#[test]
fn calibrate_writes_reports_and_manifest_and_is_thread_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let panel = gen_panel(dir.path(), 11);
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        &format!(
            r#"
                command = "calibrate"
                seed = 5
                [input]
                panel = "{}"
                [bootstrap]
                outer = 3
                inner = 20
                [calibrate]
                p0_grid = [0.0, 0.1]
                alpha_grid = [0.1]
                cutoff_grid = [2.0, 3.0]
                min_obs = 4
            "#,
            panel.display()
        ),
    );
    let out1 = dir.path().join("run1");
    run_ok(&[
        "calibrate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out1.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    for file in ["report.json", "report.csv", "manifest.json"] {
        assert!(out1.join(file).exists(), "missing {file}");
    }
    let manifest = std::fs::read_to_string(out1.join("manifest.json")).unwrap();
    assert!(manifest.contains("config_sha256"));
    assert!(manifest.contains("\"seed\": 5"));

    let out2 = dir.path().join("run2");
    run_ok(&[
        "calibrate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out2.to_str().unwrap(),
        "--threads",
        "4",
    ]);
    assert_eq!(
        std::fs::read(out1.join("report.json")).unwrap(),
        std::fs::read(out2.join("report.json")).unwrap(),
        "reports must be byte-identical across thread counts"
    );
    assert_eq!(
        std::fs::read(out1.join("report.csv")).unwrap(),
        std::fs::read(out2.join("report.csv")).unwrap()
    );
}

#[test]
fn solve_cutoff_and_compare_run() {
    let dir = tempfile::tempdir().unwrap();
    let panel = gen_panel(dir.path(), 13);
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        &format!(
            r#"
                seed = 9
                [input]
                panel = "{}"
                [bootstrap]
                outer = 3
                inner = 15
                [calibrate]
                p0_grid = [0.05, 0.1]
                alpha_grid = [0.1]
                cutoff_grid = [1.5, 2.0, 2.5, 3.0]
                min_obs = 4
                [solve]
                p0 = 0.1
                alpha_target = 0.1
            "#,
            panel.display()
        ),
    );
    let out = dir.path().join("solve_out");
    run_ok(&[
        "solve-cutoff",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(out.join("solution.json").exists());
    assert!(out.join("plot_cutoff_vs_p0.csv").exists());
    let solution = std::fs::read_to_string(out.join("solution.json")).unwrap();
    assert!(solution.contains("t_star"));

    let out = dir.path().join("compare_out");
    run_ok(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.contains("calibrated_cutoff"));
    assert!(csv.contains("bh"));
}

#[test]
fn roc_emits_curve_with_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let panel = gen_panel(dir.path(), 17);
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        &format!(
            "seed = 3\n[input]\npanel = \"{}\"\n[calibrate]\nmin_obs = 4\n[roc]\np0 = 0.25\ndraws = 30\n",
            panel.display()
        ),
    );
    let out = dir.path().join("roc_out");
    run_ok(&[
        "roc",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let plot = std::fs::read_to_string(out.join("plot_roc.csv")).unwrap();
    let lines: Vec<&str> = plot.lines().collect();
    assert_eq!(lines[0], "cutoff,fpr,tpr");
    assert!(
        lines[1].starts_with("-inf,1,1"),
        "low endpoint: {}",
        lines[1]
    );
    assert_eq!(lines.last().unwrap(), &"inf,0,0");
}

fn fund_files(dir: &Path) -> (PathBuf, PathBuf) {
    // Deterministic complete fund panel + one-factor file, written inline.
    let d = 60;
    let n = 12;
    let mut panel = String::from("period");
    for j in 0..n {
        panel.push_str(&format!(",f{j:02}"));
    }
    panel.push('\n');
    let mut factors = String::from("period,mkt\n");
    let mut state = 0x12345678u64;
    let mut unit = move || {
        // xorshift, mapped to (-1, 1); plenty for a smoke test.
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for r in 0..d {
        let mkt = 0.01 * unit();
        panel.push_str(&format!("{:04}", r + 1));
        for _ in 0..n {
            let ret = 0.4 * mkt + 0.01 * unit();
            panel.push_str(&format!(",{ret}"));
        }
        panel.push('\n');
        factors.push_str(&format!("{:04},{mkt}\n", r + 1));
    }
    let panel_path = dir.join("funds.csv");
    let factors_path = dir.join("factors.csv");
    write(&panel_path, &panel);
    write(&factors_path, &factors);
    (panel_path, factors_path)
}

#[test]
fn ffjoint_and_frac_run_with_factors() {
    let dir = tempfile::tempdir().unwrap();
    let (panel, factors) = fund_files(dir.path());
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        &format!(
            r#"
                seed = 21
                [input]
                panel = "{}"
                factors = "{}"
                [joint]
                statistics = ["max", "p95"]
                b = 80
                min_obs_t = 4
                [frac]
                level = 0.05
                upper_bound = 0.2
            "#,
            panel.display(),
            factors.display()
        ),
    );
    let out = dir.path().join("joint_out");
    run_ok(&[
        "ffjoint",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(out.join("joint_test.csv")).unwrap();
    assert!(csv.contains("max"));
    assert!(csv.contains("p95"));

    let out = dir.path().join("frac_out");
    run_ok(&[
        "frac",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let frac = std::fs::read_to_string(out.join("frac.json")).unwrap();
    assert!(frac.contains("\"frac\""));
}

#[test]
fn simstudy_checkpoint_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let panel = gen_panel(dir.path(), 23);
    let cfg = dir.path().join("run.toml");
    write(
        &cfg,
        &format!(
            r#"
                seed = 31
                [input]
                panel = "{}"
                [simstudy]
                m = 2
                k = 2
                delta_grid = [0.1]
                p0_grid = [0.1]
                est_outer = 2
                est_inner = 8
                min_obs = 4
                procedures = [{{ kind = "bh" }}]
                gamma = {{ mu0 = 0.01, sigma0 = 0.005 }}
            "#,
            panel.display()
        ),
    );
    let ck = dir.path().join("study.jsonl");
    let out1 = dir.path().join("study1");
    run_ok(&[
        "simstudy",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out1.to_str().unwrap(),
        "--checkpoint",
        ck.to_str().unwrap(),
    ]);
    let lines = std::fs::read_to_string(&ck).unwrap().lines().count();
    assert_eq!(lines, 4, "one checkpoint record per (m, k)");

    // Second run resumes entirely from the checkpoint and must reproduce
    // the same report without appending anything.
    let out2 = dir.path().join("study2");
    let output = run_ok(&[
        "simstudy",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out2.to_str().unwrap(),
        "--checkpoint",
        ck.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&output.stdout).contains("resuming from 4"));
    assert_eq!(
        std::fs::read(out1.join("sim_study.json")).unwrap(),
        std::fs::read(out2.join("sim_study.json")).unwrap()
    );
    let lines = std::fs::read_to_string(&ck).unwrap().lines().count();
    assert_eq!(lines, 4, "resume must not duplicate records");
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    // 2: config errors (unknown key).
    let bad_cfg = dir.path().join("bad.toml");
    write(&bad_cfg, "unknown_key = true\n");
    let out = bin()
        .args(["calibrate", "--config", bad_cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "unknown key must exit 2");

    // 2: command pinned to a different subcommand.
    let pinned = dir.path().join("pinned.toml");
    write(
        &pinned,
        "command = \"compare\"\n[input]\npanel = \"x.csv\"\n",
    );
    let out = bin()
        .args(["calibrate", "--config", pinned.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 2: usage errors from the argument parser itself.
    let out = bin().args(["no-such-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 3: data errors (missing panel file).
    let missing = dir.path().join("missing.toml");
    write(&missing, "[input]\npanel = \"does_not_exist.csv\"\n");
    let out = bin()
        .args(["calibrate", "--config", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "missing data must exit 3");

    // 3: malformed panel contents, with coordinates on stderr.
    let broken = dir.path().join("broken.csv");
    write(&broken, "period,a\n2001-01,zero point one\n");
    let cfg = dir.path().join("broken.toml");
    write(
        &cfg,
        &format!("[input]\npanel = \"{}\"\n", broken.display()),
    );
    let out = bin()
        .args(["calibrate", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains(":2:2:"),
        "stderr lacks coordinates: {stderr}"
    );

    // 4: budget exceeded.
    let panel = gen_panel(dir.path(), 29);
    let budget = dir.path().join("budget.toml");
    write(
        &budget,
        &format!(
            "[input]\npanel = \"{}\"\n[simstudy]\nmax_budget_units = 1.0\n",
            panel.display()
        ),
    );
    let out = bin()
        .args(["simstudy", "--config", budget.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "budget breach must exit 4");
}
