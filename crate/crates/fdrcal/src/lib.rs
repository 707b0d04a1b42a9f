//! Bootstrap calibration of error rates for multiple hypothesis testing on
//! return panels.
//!
//! When hundreds of trading strategies or funds are tested at once, the usual
//! single-test cutoff (|t| > 2) no longer controls the chance of calling a
//! lucky strategy "significant".  Classical multiple-testing adjustments such
//! as Benjamini–Hochberg trade one error against another in ways that depend
//! on the data at hand.  This crate estimates both error rates — the realized
//! false-discovery rate among strategies declared significant (Type I) and the
//! realized miss rate among strategies declared insignificant (Type II) — for
//! any decision rule, directly from the panel, via a double bootstrap:
//!
//! * an **outer** bootstrap re-ranks strategies and injects a chosen fraction
//!   `p0` of true effects into the original panel, producing truth-labeled
//!   panels ([`inject`]);
//! * an **inner** bootstrap resamples each truth-labeled panel, applies the
//!   decision rule, and tallies false discoveries and misses against the known
//!   labels ([`rates`], [`calibrate`]).
//!
//! On top of that core the crate solves for data-specific t-statistic cutoffs
//! that hit a target Type I rate, benchmarks step-up procedures
//! (Benjamini–Hochberg, Benjamini–Yekutieli, Storey, and a bootstrap stepdown
//! in the spirit of Romano–Shaikh–Wolf 2008) against the calibrated cutoff,
//! runs the Fama–French (2010) joint bootstrap test with its cross-sectional
//! percentile statistics ([`joint`]), and measures estimator accuracy on
//! synthetic populations with known truth ([`simstudy`]).
//!
//! # Where to start
//!
//! The `examples/` directory is the primary interface; each file is a
//! runnable, self-contained walkthrough of one capability:
//!
//! * `calibrate_report` — double-bootstrap Type I/II table for step-up rules;
//! * `solve_cutoff` — data-specific t-cutoffs for target error rates;
//! * `compare_procedures` — procedure benchmark incl. the calibrated cutoff;
//! * `roc_curve` — bootstrap ROC curve for a truth-labeled panel;
//! * `joint_test` — Fama–French joint test on a synthetic fund panel;
//! * `frac_bias` — the Frac diagnostic and its upward bias under sparse truth;
//! * `sim_study_small` — known-truth accuracy study (actual vs. estimated FDR);
//! * `subsample_windows` — period-window splits and per-window joint tests;
//! * `deterministic_parallel` — byte-identical results across thread counts.
//!
//! Run one with `cargo run --release --example calibrate_report`.
//!
//! A thin CLI (`fdrcal`) exposes the same drivers for batch use; see the
//! README for subcommands and the config file format.
//!
//! # Determinism
//!
//! Every random draw is keyed by `(master_seed, stage, i, j)` coordinates
//! rather than by call order ([`resample`]), so results are byte-identical
//! across thread counts and across runs with the same seed.

pub mod calibrate;
pub mod config;
pub mod inject;
pub mod io;
pub mod joint;
pub mod panel;
pub mod procedures;
pub mod rates;
pub mod resample;
pub mod simstudy;

pub use calibrate::{
    compare_methods, default_cutoff_grid, double_bootstrap, solve_cutoff, CalibrationRequest,
    CutoffSolution, ErrorRateReport, ProcedureSpec, ReportCell,
};
pub use config::{Command, ConfigError, RunConfig};
pub use inject::{
    build_alternative_panel, build_null_panel, selection_stats, InjectionConfig, TruthLabeledPanel,
};
pub use io::{
    gen_synthetic, load_factors, load_panel, read_checkpoint, write_factors, write_manifest,
    write_panel, CheckpointWriter, IoError, Manifest, ReportFormat,
};
pub use joint::{
    default_statistics, default_subsample_windows, ff_error_rates, ff_joint_test, frac_statistic,
    percentile_stat, subsample_split, JointErrorRates, JointStat, JointTestConfig, JointTestResult,
    SubsampleWindow,
};
pub use panel::{panel_stats, EffectKind, FactorPanel, ReturnPanel, Sidedness, StrategyStat};
pub use procedures::{
    bh, by, fixed_cutoff, p_from_t, rsw, rsw_subsets, storey, storey_pi0, PValueSource,
    PValueVector, ProcedureTag, RejectionSet, RswConfig,
};
pub use rates::{
    aggregate, count_outcomes, realized_rates, roc_curve, AggregateRates, ContingencyCounts,
    RealizedRates, RocCurve,
};
pub use resample::{apply_draw, draw_indices, BootstrapPlan, IndexDraw, Stage};
pub use simstudy::{
    build_population, gamma_sample, run_sim_study, CellEntry, CellRecord, EstSlot, GammaSpec,
    SimRow, SimStudyConfig, SimStudyMeta, SimStudyReport,
};

use thiserror::Error;

/// Umbrella error for drivers that cross module boundaries (CLI, studies).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Panel(#[from] panel::PanelError),
    #[error(transparent)]
    Stat(#[from] panel::StatError),
    #[error(transparent)]
    Resample(#[from] resample::ResampleError),
    #[error(transparent)]
    Inject(#[from] inject::InjectError),
    #[error(transparent)]
    Rates(#[from] rates::RatesError),
    #[error(transparent)]
    Procedure(#[from] procedures::ProcedureError),
    #[error(transparent)]
    Calibrate(#[from] calibrate::CalibrateError),
    #[error(transparent)]
    Joint(#[from] joint::JointError),
    #[error(transparent)]
    SimStudy(#[from] simstudy::SimStudyError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Configures the global rayon thread pool once, honoring an explicit thread
/// count, the `FDRCAL_THREADS` environment variable, or rayon's default (in
/// that order).  Safe to call more than once; later calls are no-ops.
pub fn configure_threads(threads: Option<usize>) {
    let n = threads.or_else(|| {
        std::env::var("FDRCAL_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // Ignore the error if a global pool already exists: determinism does
        // not depend on the pool size, only throughput does.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}
