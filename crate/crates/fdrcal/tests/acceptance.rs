//! Acceptance suite: ten go/no-go checks covering the oracle equivalences,
//! calibration statistics, joint-test behavior, determinism, and the Frac
//! bias demonstration.  Each check prints exactly one `PASS`/`FAIL` line
//! (visible with `cargo test --test acceptance -- --nocapture`) and panics
//! with details on failure.  Checks with a runtime budget assert it.

use std::time::{Duration, Instant};

use fdrcal::{
    bh, by, count_outcomes, default_cutoff_grid, double_bootstrap, ff_error_rates, ff_joint_test,
    frac_statistic, realized_rates, run_sim_study, solve_cutoff, storey, BootstrapPlan,
    CalibrationRequest, ContingencyCounts, FactorPanel, GammaSpec, JointStat, JointTestConfig,
    PValueSource, PValueVector, ProcedureSpec, ReturnPanel, SimStudyConfig,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn verdict(num: u32, name: &str, started: Instant, limit: Option<Duration>, failures: Vec<String>) {
    let elapsed = started.elapsed();
    let mut failures = failures;
    if let Some(limit) = limit {
        if elapsed > limit {
            failures.push(format!(
                "runtime {elapsed:.1?} exceeded the {limit:.0?} budget"
            ));
        }
    }
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {num:02} {name}: {status} ({elapsed:.1?})");
    assert!(
        failures.is_empty(),
        "criterion {num:02} {name} failed:\n{}",
        failures.join("\n")
    );
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i:04}")).collect()
}

/// Complete i.i.d. Gaussian panel with per-period standard deviation `sd`.
fn null_panel(d: usize, n: usize, sd: f64, seed: u64) -> ReturnPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((d, n), |_| sd * normal(&mut rng));
    ReturnPanel::from_complete(values, labels("m", d), labels("s", n)).expect("valid panel")
}

/// Complete one-factor fund panel with zero alphas: returns are beta times a
/// market factor plus idiosyncratic noise, betas ramping over [0.5, 1.5].
fn fund_panel(d: usize, n: usize, seed: u64) -> (ReturnPanel, FactorPanel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let market: Vec<f64> = (0..d).map(|_| 0.005 + 0.04 * normal(&mut rng)).collect();
    let values = Array2::from_shape_fn((d, n), |(t, j)| {
        let beta = 0.5 + j as f64 / (n - 1) as f64;
        beta * market[t] + 0.02 * normal(&mut rng)
    });
    let panel =
        ReturnPanel::from_complete(values, labels("m", d), labels("f", n)).expect("valid panel");
    let factors = FactorPanel::new(
        Array2::from_shape_fn((d, 1), |(t, _)| market[t]),
        labels("m", d),
        vec!["mkt".into()],
    )
    .expect("valid factors");
    (panel, factors)
}

// ---------------------------------------------------------------------------
// Criterion 1: step-up rejection sets match exhaustive index enumeration
// ---------------------------------------------------------------------------

/// Independent step-up reference: scan ranks from the top for the largest
/// order statistic at or below its threshold, then reject every p-value at
/// or below that cutoff.
fn step_up_reference(p: &[f64], threshold_at: impl Fn(usize) -> f64) -> Vec<bool> {
    let n = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cutoff = None;
    for k in (1..=n).rev() {
        if sorted[k - 1] <= threshold_at(k) {
            cutoff = Some(sorted[k - 1]);
            break;
        }
    }
    match cutoff {
        Some(c) => p.iter().map(|&v| v <= c).collect(),
        None => vec![false; n],
    }
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

#[test]
fn criterion_01_step_up_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let alphas = [0.01, 0.05, 0.10, 0.20];
    let thetas = [0.4, 0.6, 0.8];
    let mut failures = Vec::new();
    let mut mismatches = 0usize;

    for case in 0..1000usize {
        let n = rng.random_range(1..=12usize);
        let mut p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        // A third of the cases use coarse p-values so exact ties across
        // columns (and with thresholds) are exercised.
        if case % 3 == 0 {
            for v in &mut p {
                *v = (*v * 10.0).round() / 10.0;
            }
        }
        let alpha = alphas[case % alphas.len()];
        let theta = thetas[case % thetas.len()];
        let pv = PValueVector::new(p.clone(), PValueSource::OneSidedNormal).unwrap();

        let nf = n as f64;
        let got_bh = bh(&pv, alpha).unwrap().reject;
        let want_bh = step_up_reference(&p, |k| k as f64 * alpha / nf);
        if got_bh != want_bh {
            mismatches += 1;
        }

        let c = harmonic(n);
        let got_by = by(&pv, alpha).unwrap().reject;
        let want_by = step_up_reference(&p, |k| k as f64 * alpha / (nf * c));
        if got_by != want_by {
            mismatches += 1;
        }

        let tail = p.iter().filter(|&&v| v > theta).count() as f64;
        let pi0 = (tail / (nf * (1.0 - theta))).clamp(1.0 / nf, 1.0);
        let got_st = storey(&pv, alpha, theta).unwrap().reject;
        let want_st = step_up_reference(&p, |k| k as f64 * alpha / (nf * pi0));
        if got_st != want_st {
            mismatches += 1;
        }
    }

    if mismatches > 0 {
        failures.push(format!(
            "{mismatches} rejection-set mismatches against the step-up reference"
        ));
    }
    verdict(
        1,
        "step-up oracle equivalence",
        started,
        Some(Duration::from_secs(10)),
        failures,
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: BY ⊆ BH ⊆ Storey containment
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_containment_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut violations = 0usize;

    for _ in 0..1000usize {
        let n = rng.random_range(1..=64usize);
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let alpha = rng.random_range(0.02..0.30);
        let pv = PValueVector::new(p, PValueSource::OneSidedNormal).unwrap();

        let set_by = by(&pv, alpha).unwrap().reject;
        let set_bh = bh(&pv, alpha).unwrap().reject;
        for (a, b) in set_by.iter().zip(&set_bh) {
            if *a && !*b {
                violations += 1;
            }
        }
        for theta in [0.4, 0.6, 0.8] {
            let set_st = storey(&pv, alpha, theta).unwrap().reject;
            for (a, b) in set_bh.iter().zip(&set_st) {
                if *a && !*b {
                    violations += 1;
                }
            }
        }
    }

    let failures = if violations > 0 {
        vec![format!("{violations} containment violations")]
    } else {
        Vec::new()
    };
    verdict(2, "containment suite", started, None, failures);
}

// ---------------------------------------------------------------------------
// Criterion 3: realized error-rate formulas are exact on every table
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_error_rate_formula_exactness() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut tables = 0usize;

    for total in 1..=6u64 {
        for fp in 0..=total {
            for tp in 0..=total - fp {
                for fnn in 0..=total - fp - tp {
                    let tn = total - fp - tp - fnn;
                    tables += 1;

                    // Build decision/truth vectors realizing the table and
                    // check the counting round-trips.
                    let mut decisions = Vec::new();
                    let mut truth = Vec::new();
                    for _ in 0..fp {
                        decisions.push(true);
                        truth.push(false);
                    }
                    for _ in 0..tp {
                        decisions.push(true);
                        truth.push(true);
                    }
                    for _ in 0..fnn {
                        decisions.push(false);
                        truth.push(true);
                    }
                    for _ in 0..tn {
                        decisions.push(false);
                        truth.push(false);
                    }
                    let counts = count_outcomes(&decisions, &truth).unwrap();
                    let expected = ContingencyCounts {
                        false_pos: fp,
                        true_pos: tp,
                        false_neg: fnn,
                        true_neg: tn,
                    };
                    if counts != expected {
                        failures.push(format!(
                            "count_outcomes mismatch at table ({fp},{tp},{fnn},{tn})"
                        ));
                        continue;
                    }

                    let rates = realized_rates(&counts);
                    let (fpf, tpf, fnf, tnf) = (fp as f64, tp as f64, fnn as f64, tn as f64);
                    let want_rfdr = if fp + tp > 0 { fpf / (fpf + tpf) } else { 0.0 };
                    let want_rmiss = if fnn + tn > 0 { fnf / (fnf + tnf) } else { 0.0 };
                    let want_rratio = if fnn > 0 { fpf / fnf } else { 0.0 };
                    let want_tpr = if tp + fnn > 0 { tpf / (tpf + fnf) } else { 0.0 };
                    let want_fpr = if fp + tn > 0 { fpf / (fpf + tnf) } else { 0.0 };
                    let exact = rates.rfdr == want_rfdr
                        && rates.rmiss == want_rmiss
                        && rates.rratio == want_rratio
                        && rates.tpr == want_tpr
                        && rates.fpr == want_fpr;
                    if !exact {
                        failures.push(format!(
                            "rate mismatch at table ({fp},{tp},{fnn},{tn}): got {rates:?}"
                        ));
                    }
                }
            }
        }
    }

    if tables != 209 {
        failures.push(format!("enumerated {tables} tables, expected 209"));
    }
    verdict(3, "error-rate formula exactness", started, None, failures);
}

// ---------------------------------------------------------------------------
// Criterion 4: BH Type I on a pure-noise panel stays at or below its level
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_null_calibration() {
    let started = Instant::now();
    let panel = null_panel(240, 200, 0.02, 404);
    let mut req = CalibrationRequest::new(&panel, BootstrapPlan::new(41, 20, 200, 240));
    req.p0_grid = vec![0.0];
    req.alpha_grid = vec![0.01, 0.05, 0.10];
    req.procedures = vec![ProcedureSpec::Bh];

    let report = double_bootstrap(&req).expect("calibration runs");
    let mut failures = Vec::new();
    for alpha in [0.01, 0.05, 0.10] {
        let cell = report
            .cell(0.0, "bh", Some(alpha))
            .unwrap_or_else(|| panic!("missing bh cell at alpha {alpha}"));
        let (t1, se) = (cell.type1.unwrap(), cell.se_type1.unwrap());
        if t1 > alpha + 3.0 * se {
            failures.push(format!(
                "alpha {alpha}: TYPE1 {t1:.4} exceeds {alpha} + 3×{se:.4}"
            ));
        }
    }
    verdict(
        4,
        "null calibration",
        started,
        Some(Duration::from_secs(300)),
        failures,
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: the solved cutoff is the most powerful admissible grid point
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_cutoff_solver_admissibility() {
    let started = Instant::now();
    let panel = null_panel(240, 200, 0.02, 404);
    let target = 0.05;
    let grid = default_cutoff_grid();

    let mut req = CalibrationRequest::new(&panel, BootstrapPlan::new(41, 20, 200, 240));
    req.p0_grid = vec![0.05, 0.10];
    req.cutoff_grid = grid.clone();
    let report = double_bootstrap(&req).expect("grid calibration runs");

    let mut failures = Vec::new();
    for p0 in [0.05, 0.10] {
        let sol = solve_cutoff(&req, p0, target).expect("solver runs");
        if sol.unattained {
            failures.push(format!("p0 {p0}: solver reported the target unattained"));
            continue;
        }
        let cell = report
            .fixed_cell(p0, sol.t_star)
            .expect("solved cell exists");
        let (t1, se) = (cell.type1.unwrap(), cell.se_type1.unwrap());
        if sol.achieved_type1 != t1 {
            failures.push(format!(
                "p0 {p0}: solver TYPE1 {:.6} disagrees with the grid report {t1:.6} \
                 under common random numbers",
                sol.achieved_type1
            ));
        }
        if t1 > target + 3.0 * se {
            failures.push(format!(
                "p0 {p0}: achieved TYPE1 {t1:.4} exceeds {target} + 3×{se:.4}"
            ));
        }
        match grid.iter().position(|&t| t == sol.t_star) {
            None => failures.push(format!("p0 {p0}: t_star {} not on the grid", sol.t_star)),
            Some(0) => failures.push(format!(
                "p0 {p0}: t_star sits at the grid minimum; no lower point to check"
            )),
            Some(idx) => {
                let lower = report.fixed_cell(p0, grid[idx - 1]).expect("lower cell");
                let lower_t1 = lower.type1.unwrap();
                if lower_t1 <= target {
                    failures.push(format!(
                        "p0 {p0}: next-lower cutoff {} has TYPE1 {lower_t1:.4}, \
                         which does not violate the target",
                        grid[idx - 1]
                    ));
                }
            }
        }
    }
    verdict(
        5,
        "cutoff solver admissibility",
        started,
        Some(Duration::from_secs(300)),
        failures,
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: the double-bootstrap estimate beats the nominal level as a
// predictor of the realized FDR (simulation study, BH and BY)
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_simulation_study_wins() {
    let started = Instant::now();
    let base = null_panel(240, 200, 0.02, 606);
    let mut cfg = SimStudyConfig::new(&base, 61);
    cfg.true_fraction = 0.10;
    // Monthly-scale means: 5% / 2.5% per year over twelve months.
    cfg.gamma = GammaSpec {
        mu0: 0.05 / 12.0,
        sigma0: 0.025 / 12.0,
    };
    cfg.m = 50;
    cfg.k = 20;
    cfg.procedures = vec![ProcedureSpec::Bh, ProcedureSpec::By];
    cfg.cutoffs = Vec::new();
    cfg.delta_grid = vec![0.01, 0.05, 0.10];
    cfg.p0_grid = vec![0.10];
    cfg.est_outer = 10;
    cfg.est_inner = 100;

    let report = run_sim_study(&cfg, &[], &mut |_| {}).expect("study runs");
    let scored: Vec<_> = report.rows.iter().filter(|r| r.win.is_some()).collect();
    let wins = scored.iter().filter(|r| r.win == Some(true)).count();

    let mut failures = Vec::new();
    if scored.len() != 6 {
        failures.push(format!("expected 6 scored cells, found {}", scored.len()));
    }
    if wins < 4 {
        let detail: Vec<String> = scored
            .iter()
            .map(|r| {
                format!(
                    "{} delta {:?}: actual {:?} est {:?} win {:?}",
                    r.procedure, r.delta, r.actual, r.est, r.win
                )
            })
            .collect();
        failures.push(format!(
            "only {wins} of 6 cells won:\n{}",
            detail.join("\n")
        ));
    }
    verdict(
        6,
        "simulation study wins",
        started,
        Some(Duration::from_secs(1800)),
        failures,
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: joint-test size on a complete zero-alpha fund panel
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_joint_test_size() {
    let started = Instant::now();
    let (panel, factors) = fund_panel(120, 300, 707);
    let cfg = JointTestConfig {
        b: 500,
        ..JointTestConfig::default()
    };
    let rates = ff_error_rates(&panel, &factors, 0.0, 200, &cfg, 71).expect("size run");

    let mut failures = Vec::new();
    if rates.m_used < 150 {
        failures.push(format!("only {} of 200 perturbations usable", rates.m_used));
    }
    for &stat in &rates.statistics {
        let tally = rates.tally(stat, 0.05).expect("5% tally present");
        let rate = tally.rejection_rate();
        let m = tally.perturbations as f64;
        let se = (rate * (1.0 - rate) / m).sqrt();
        if rate > 0.05 + 3.0 * se {
            failures.push(format!(
                "{}: Type I {rate:.3} exceeds 0.05 + 3×{se:.3}",
                stat.label()
            ));
        }
    }
    verdict(
        7,
        "joint-test size",
        started,
        Some(Duration::from_secs(1200)),
        failures,
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: with short-history funds added, percentile statistics beat
// the max statistic on injected alternatives (ordering only)
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_joint_test_power_direction() {
    let started = Instant::now();
    let (full, factors) = fund_panel(120, 300, 707);
    let d = full.n_periods();
    let n_short = 100usize;
    let window = 15usize;

    // Append null funds observed for only `window` consecutive months each;
    // bootstrap draws undersample them further, fattening the null tail of
    // the max statistic.
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let n_total = full.n_strategies() + n_short;
    let mut values = Array2::from_elem((d, n_total), f64::NAN);
    let mut mask = Array2::from_elem((d, n_total), false);
    for t in 0..d {
        for j in 0..full.n_strategies() {
            values[(t, j)] = full.values()[(t, j)];
            mask[(t, j)] = true;
        }
    }
    let market = factors.values().column(0).to_owned();
    for s in 0..n_short {
        let col = full.n_strategies() + s;
        let start = (s * 7) % (d - window);
        let beta = 0.5 + (s as f64 / (n_short - 1) as f64);
        for t in start..start + window {
            values[(t, col)] = beta * market[t] + 0.02 * normal(&mut rng);
            mask[(t, col)] = true;
        }
    }
    let mut names = full.names().to_vec();
    names.extend((1..=n_short).map(|i| format!("sh{i:04}")));
    let panel =
        ReturnPanel::new(values, mask, full.periods().to_vec(), names).expect("valid panel");

    let cfg = JointTestConfig {
        b: 500,
        ..JointTestConfig::default()
    };
    let rates = ff_error_rates(&panel, &factors, 0.05, 200, &cfg, 81).expect("power run");

    let rej = |stat: JointStat| rates.tally(stat, 0.05).expect("tally").rejection_rate();
    let (r_max, r_p99, r_p98) = (
        rej(JointStat::Max),
        rej(JointStat::Percentile(99.0)),
        rej(JointStat::Percentile(98.0)),
    );

    let mut failures = Vec::new();
    if r_p99 <= r_max {
        failures.push(format!(
            "p99 power {r_p99:.3} not above max power {r_max:.3}"
        ));
    }
    if r_p98 <= r_max {
        failures.push(format!(
            "p98 power {r_p98:.3} not above max power {r_max:.3}"
        ));
    }
    verdict(8, "joint-test power direction", started, None, failures);
}

// ---------------------------------------------------------------------------
// Criterion 9: identical seeds give byte-identical reports at any thread
// count
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_thread_count_determinism() {
    let started = Instant::now();
    let panel = null_panel(120, 60, 0.02, 909);
    let (funds, factors) = fund_panel(120, 40, 919);
    let study_base = null_panel(120, 40, 0.02, 929);

    let run_all = |threads: usize| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("pool builds");
        pool.install(|| {
            let mut req = CalibrationRequest::new(&panel, BootstrapPlan::new(91, 5, 60, 120));
            req.p0_grid = vec![0.0, 0.10];
            req.alpha_grid = vec![0.05, 0.10];
            req.cutoff_grid = vec![2.0, 2.5];
            req.procedures = vec![
                ProcedureSpec::Bh,
                ProcedureSpec::Storey { theta: 0.6 },
                ProcedureSpec::Rsw {
                    b: 60,
                    subsample_size: 500,
                    subsample_count: 100,
                },
            ];
            let report = double_bootstrap(&req).expect("calibration runs");

            let cfg = JointTestConfig {
                b: 150,
                ..JointTestConfig::default()
            };
            let joint = ff_joint_test(&funds, &factors, &cfg, 93).expect("joint runs");

            let mut study = SimStudyConfig::new(&study_base, 95);
            study.m = 4;
            study.k = 3;
            study.delta_grid = vec![0.05];
            study.p0_grid = vec![0.10];
            study.est_outer = 4;
            study.est_inner = 40;
            let sim = run_sim_study(&study, &[], &mut |_| {}).expect("study runs");

            (
                serde_json::to_vec(&report).unwrap(),
                serde_json::to_vec(&joint).unwrap(),
                serde_json::to_vec(&sim).unwrap(),
            )
        })
    };

    let (cal1, joint1, sim1) = run_all(1);
    let (cal4, joint4, sim4) = run_all(4);

    let mut failures = Vec::new();
    if cal1 != cal4 {
        failures.push("calibration report differs between 1 and 4 threads".into());
    }
    if joint1 != joint4 {
        failures.push("joint-test result differs between 1 and 4 threads".into());
    }
    if sim1 != sim4 {
        failures.push("simulation-study report differs between 1 and 4 threads".into());
    }
    verdict(9, "thread-count determinism", started, None, failures);
}

// ---------------------------------------------------------------------------
// Criterion 10: the Frac statistic overstates a 1% true share on average
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_frac_bias_direction() {
    let started = Instant::now();
    let (d, n, n_true) = (120, 600, 6);
    let cfg = JointTestConfig {
        b: 250,
        ..JointTestConfig::default()
    };

    let mut fracs = Vec::new();
    for rep in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + rep);
        let market: Vec<f64> = (0..d).map(|_| 0.04 * normal(&mut rng)).collect();
        let values = Array2::from_shape_fn((d, n), |(t, j)| {
            let alpha = if j < n_true { 0.012 } else { 0.0 };
            alpha + 0.8 * market[t] + 0.012 * normal(&mut rng)
        });
        let panel =
            ReturnPanel::from_complete(values, labels("m", d), labels("a", n)).expect("panel");
        let factors = FactorPanel::new(
            Array2::from_shape_fn((d, 1), |(t, _)| market[t]),
            labels("m", d),
            vec!["mkt".into()],
        )
        .expect("factors");
        let frac =
            frac_statistic(&panel, &factors, &cfg, 0.05, 0.40, 6000 + rep).expect("frac runs");
        fracs.push(frac);
    }
    let mean = fracs.iter().sum::<f64>() / fracs.len() as f64;

    let failures = if mean > 0.01 {
        Vec::new()
    } else {
        vec![format!(
            "mean Frac {:.3}% does not exceed the 1% true share (reps: {fracs:?})",
            mean * 100.0
        )]
    };
    verdict(10, "frac bias direction", started, None, failures);
}
