//! Benchmarks the classical multiple-testing corrections against the
//! data-calibrated cutoff on one panel: Benjamini–Hochberg (1995),
//! Benjamini–Yekutieli (2001), Storey (2002), and the Romano–Shaikh–Wolf
//! (2008) bootstrap stepdown, all at the same nominal levels.
//!
//! The calibrated-cutoff rows solve for the fixed t-threshold whose
//! bootstrap Type I rate meets each level, then report that cutoff's
//! calibrated rates beside the procedures — an apples-to-apples view of
//! how conservative each correction really is on this data.
//!
//! Run with: `cargo run --release --example compare_procedures`

use fdrcal::{compare_methods, BootstrapPlan, CalibrationRequest, ProcedureSpec, ReturnPanel};
use ndarray::Array2;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    // 5% of columns carry a real 1%-per-period mean; the rest are noise.
    let (d, n) = (180, 60);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5150);
    let values = Array2::from_shape_fn((d, n), |(_, j)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        let signal = if j < 3 { 0.010 } else { 0.0 };
        signal + 0.02 * z
    });
    let panel = ReturnPanel::from_complete(
        values,
        (1..=d).map(|r| format!("{r:04}")).collect(),
        (0..n).map(|j| format!("strat_{j:03}")).collect(),
    )
    .expect("valid panel");

    let mut req = CalibrationRequest::new(&panel, BootstrapPlan::new(404, 8, 120, d));
    req.p0_grid = vec![0.05];
    req.alpha_grid = vec![0.05, 0.10];
    req.procedures = vec![
        ProcedureSpec::Bh,
        ProcedureSpec::By,
        ProcedureSpec::Storey { theta: 0.6 },
        ProcedureSpec::Rsw {
            b: 120,
            subsample_size: 500,
            subsample_count: 100,
        },
    ];

    let report = compare_methods(&req).expect("comparison runs");

    println!(
        "{:<24} {:>6} {:>9} {:>9} {:>8} {:>8}",
        "rule", "alpha", "TYPE1", "TYPE2", "TPR", "FPR"
    );
    for cell in report.cells.iter().filter(|c| c.p0 == 0.05) {
        let fmt = |v: Option<f64>| v.map_or("--".into(), |x| format!("{x:.4}"));
        println!(
            "{:<24} {:>6} {:>9} {:>9} {:>8} {:>8}",
            match cell.t_cutoff {
                Some(t) if cell.procedure == "calibrated_cutoff" =>
                    format!("calibrated (t*={t:.1})"),
                _ => cell.procedure.clone(),
            },
            cell.alpha.map_or("--".into(), |a| format!("{a:.2}")),
            fmt(cell.type1),
            fmt(cell.type2),
            fmt(cell.tpr),
            fmt(cell.fpr),
        );
    }
    println!(
        "\nExpected pattern: BY is the most conservative (its extra\n\
         log-factor penalty buys worst-case dependence control), Storey\n\
         the most aggressive (its null-fraction estimate recovers power),\n\
         BH sits between, and the calibrated cutoff tracks the target\n\
         Type I rate by construction."
    );
}
