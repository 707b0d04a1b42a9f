//! Thin command-line front end over the `fdrcal` library.
//!
//! Exit codes: 0 success, 2 configuration error (including usage errors),
//! 3 data error, 4 budget exceeded.

use clap::{Args, Parser, Subcommand};
use fdrcal::calibrate::{
    compare_methods, default_cutoff_grid, double_bootstrap, solve_cutoff, CalibrateError,
    CalibrationRequest, CutoffSolution,
};
use fdrcal::config::{Command as ConfigCommand, JointSection, RunConfig, SimStudySection};
use fdrcal::inject::{build_alternative_panel, InjectionConfig};
use fdrcal::io::{
    emit_cutoff_curve, emit_frac, emit_joint_rates, emit_joint_result, emit_report, emit_roc,
    emit_sim_report, emit_solution, gen_synthetic, load_factors, load_panel, read_checkpoint,
    write_manifest, CheckpointWriter, FracOutcome, Manifest, ALL_FORMATS,
};
use fdrcal::joint::{ff_error_rates, ff_joint_test, frac_statistic, JointTestConfig};
use fdrcal::panel::{FactorPanel, ReturnPanel};
use fdrcal::procedures::ProcedureError;
use fdrcal::rates::roc_curve;
use fdrcal::resample::{draw_indices, BootstrapPlan, IndexDraw, Stage};
use fdrcal::simstudy::{run_sim_study, SimStudyConfig, SimStudyError};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "fdrcal",
    version,
    about = "Bootstrap calibration of multiple-testing error rates for return panels"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (FDRCAL_THREADS also works; flag wins).
    #[arg(long)]
    threads: Option<usize>,
    /// JSONL checkpoint for resumable commands (simstudy).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Calibrate Type I/II error rates over the configured grids.
    Calibrate(Common),
    /// Solve for the t-cutoff meeting a Type I target.
    SolveCutoff(Common),
    /// Calibrate the p-value procedures and the data-calibrated cutoff side by side.
    Compare(Common),
    /// Sweep cutoffs into a bootstrap ROC curve.
    Roc(Common),
    /// Joint cross-sectional test (max / upper-percentile statistics).
    Ffjoint(Common),
    /// Widest jointly-significant top fraction.
    Frac(Common),
    /// Actual-vs-estimated FDR simulation study.
    Simstudy(Common),
    /// Generate a synthetic panel plus truth sidecar.
    GenSynthetic(Common),
}

impl CliCommand {
    fn split(&self) -> (ConfigCommand, &Common) {
        match self {
            CliCommand::Calibrate(c) => (ConfigCommand::Calibrate, c),
            CliCommand::SolveCutoff(c) => (ConfigCommand::SolveCutoff, c),
            CliCommand::Compare(c) => (ConfigCommand::Compare, c),
            CliCommand::Roc(c) => (ConfigCommand::Roc, c),
            CliCommand::Ffjoint(c) => (ConfigCommand::Ffjoint, c),
            CliCommand::Frac(c) => (ConfigCommand::Frac, c),
            CliCommand::Simstudy(c) => (ConfigCommand::Simstudy, c),
            CliCommand::GenSynthetic(c) => (ConfigCommand::GenSynthetic, c),
        }
    }
}

fn exit_code(err: &fdrcal::Error) -> i32 {
    use fdrcal::Error as E;
    fn calibrate_budget(c: &CalibrateError) -> bool {
        matches!(
            c,
            CalibrateError::Procedure(ProcedureError::BudgetExceeded { .. })
        )
    }
    match err {
        E::Config(_) => 2,
        E::Procedure(ProcedureError::BudgetExceeded { .. }) => 4,
        E::Calibrate(c) if calibrate_budget(c) => 4,
        E::SimStudy(SimStudyError::BudgetExceeded { .. }) => 4,
        E::SimStudy(SimStudyError::Calibrate(c)) if calibrate_budget(c) => 4,
        _ => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

/// Everything a command needs after config resolution.
struct Ctx {
    cfg: RunConfig,
    config_text: String,
    seed: u64,
    out_dir: PathBuf,
    threads: Option<usize>,
    checkpoint: Option<PathBuf>,
    command: ConfigCommand,
}

fn run(cli: Cli) -> Result<(), fdrcal::Error> {
    let (command, common) = cli.command.split();
    let (cfg, config_text) = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => (RunConfig::default(), String::new()),
    };
    cfg.validate_for(command)?;
    let threads = common.threads;
    fdrcal::configure_threads(threads);
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    let out_dir = common
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fdrcal_out"));
    let ctx = Ctx {
        cfg,
        config_text,
        seed,
        out_dir,
        threads,
        checkpoint: common.checkpoint.clone(),
        command,
    };
    match command {
        ConfigCommand::Calibrate => cmd_calibrate(&ctx),
        ConfigCommand::SolveCutoff => cmd_solve_cutoff(&ctx),
        ConfigCommand::Compare => cmd_compare(&ctx),
        ConfigCommand::Roc => cmd_roc(&ctx),
        ConfigCommand::Ffjoint => cmd_ffjoint(&ctx),
        ConfigCommand::Frac => cmd_frac(&ctx),
        ConfigCommand::Simstudy => cmd_simstudy(&ctx),
        ConfigCommand::GenSynthetic => cmd_gen_synthetic(&ctx),
    }
}

/// Loads the panel (and factors when configured), returning them with the
/// manifest carrying their fingerprints.
fn load_inputs(ctx: &Ctx) -> Result<(ReturnPanel, Option<FactorPanel>, Manifest), fdrcal::Error> {
    let input = ctx.cfg.input.clone().unwrap_or_default();
    let panel_path = PathBuf::from(input.panel.expect("validated: input.panel present"));
    let panel = load_panel(&panel_path)?;
    let mut manifest = Manifest::new(
        &ctx.command.to_string(),
        ctx.seed,
        ctx.threads,
        &ctx.config_text,
    )
    .with_input("panel", &panel_path, panel.fingerprint());
    let factors = match input.factors {
        Some(path) => {
            let path = PathBuf::from(path);
            let factors = load_factors(&path)?;
            manifest = manifest.with_input("factors", &path, factors.fingerprint());
            Some(factors)
        }
        None => None,
    };
    Ok((panel, factors, manifest))
}

fn build_request<'a>(
    ctx: &Ctx,
    panel: &'a ReturnPanel,
    factors: Option<&'a FactorPanel>,
) -> CalibrationRequest<'a> {
    let cal = ctx.cfg.calibrate.clone().unwrap_or_default();
    let boot = ctx.cfg.bootstrap.clone().unwrap_or_default();
    let mut req = CalibrationRequest::new(
        panel,
        BootstrapPlan::new(ctx.seed, boot.outer, boot.inner, panel.n_periods()),
    );
    req.factors = factors;
    req.p0_grid = cal.p0_grid;
    req.alpha_grid = cal.alpha_grid;
    req.cutoff_grid = cal.cutoff_grid;
    req.procedures = cal.procedures;
    req.mode = cal.mode;
    req.sidedness = cal.sidedness;
    req.min_obs = cal.min_obs;
    req.p_values = cal.p_values;
    req
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn finish(manifest: Manifest, out_dir: &Path) -> Result<(), fdrcal::Error> {
    let path = write_manifest(&manifest, out_dir)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_calibrate(ctx: &Ctx) -> Result<(), fdrcal::Error> {
    let (panel, factors, manifest) = load_inputs(ctx)?;
    let req = build_request(ctx, &panel, factors.as_ref());
    let report = double_bootstrap(&req)?;
    report_written(&emit_report(&report, &ctx.out_dir, &ALL_FORMATS)?);
    finish(manifest, &ctx.out_dir)
}

fn cmd_solve_cutoff(ctx: &Ctx) -> Result<(), fdrcal::Error> {
    let (panel, factors, manifest) = load_inputs(ctx)?;
    let req = build_request(ctx, &panel, factors.as_ref());
    let solve = ctx.cfg.solve.clone().expect("validated: solve present");
    let solution = solve_cutoff(&req, solve.p0, solve.alpha_target)?;
    if solution.unattained {
        eprintln!(
            "warning: no grid cutoff attains Type I <= {}; reporting the grid maximum {}",
            solve.alpha_target, solution.t_star
        );
    }
    report_written(&emit_solution(&solution, &ctx.out_dir)?);
    // A cutoff-vs-p0 series when the calibration grid spans several priors.
    let p0_grid = req.p0_grid.clone();
    if p0_grid.len() >= 2 {
        let solutions: Vec<CutoffSolution> = p0_grid
            .iter()
            .map(|&p0| solve_cutoff(&req, p0, solve.alpha_target))
            .collect::<Result<_, _>>()?;
        report_written(&emit_cutoff_curve(&solutions, &ctx.out_dir)?);
    }
    finish(manifest, &ctx.out_dir)
}

fn cmd_compare(ctx: &Ctx) -> Result<(), fdrcal::Error> {
    let (panel, factors, manifest) = load_inputs(ctx)?;
    let req = build_request(ctx, &panel, factors.as_ref());
    let report = compare_methods(&req)?;
    report_written(&emit_report(&report, &ctx.out_dir, &ALL_FORMATS)?);
    finish(manifest, &ctx.out_dir)
}

fn cmd_roc(ctx: &Ctx) -> Result<(), fdrcal::Error> {
    let (panel, factors, manifest) = load_inputs(ctx)?;
    let cal = ctx.cfg.calibrate.clone().unwrap_or_default();
    let roc = ctx.cfg.roc.clone().unwrap_or_default();
    let plan = BootstrapPlan::new(ctx.seed, 1, roc.draws, panel.n_periods());
    let outer = draw_indices(&plan, Stage::Outer, 0, 0);
    let labeled = build_alternative_panel(
        &panel,
        factors.as_ref(),
        &InjectionConfig {
            p0: roc.p0,
            kind: cal.mode,
            sidedness: cal.sidedness,
            min_obs: cal.min_obs,
        },
        &outer,
    )?;
    let draws: Vec<IndexDraw> = (0..roc.draws as u64)
        .map(|j| draw_indices(&plan, Stage::Inner, 0, j))
        .collect();
    let cutoffs = if cal.cutoff_grid.is_empty() {
        default_cutoff_grid()
    } else {
        cal.cutoff_grid.clone()
    };
    let curve = roc_curve(&labeled, &draws, &cutoffs, cal.sidedness, cal.min_obs)?;
    report_written(&emit_roc(&curve, &ctx.out_dir)?);
    finish(manifest, &ctx.out_dir)
}

fn joint_config(ctx: &Ctx) -> Result<(JointTestConfig, JointSection), fdrcal::Error> {
    let section = ctx.cfg.joint.clone().unwrap_or_default();
    let cfg = JointTestConfig {
        statistics: section.parsed_statistics()?,
        b: section.b,
        min_obs_t: section.min_obs_t,
        alpha_levels: section.alpha_levels.clone(),
        sidedness: section.sidedness,
    };
    Ok((cfg, section))
}

fn cmd_ffjoint(ctx: &Ctx) -> Result<(), fdrcal::Error> {
    let (panel, factors, manifest) = load_inputs(ctx)?;
    let factors = factors.expect("validated: input.factors present");
    let (cfg, section) = joint_config(ctx)?;
    if section.m == 0 {
        let result = ff_joint_test(&panel, &factors, &cfg, ctx.seed)?;
        report_written(&emit_joint_result(&result, &ctx.out_dir)?);
    } else {
        let rates = ff_error_rates(&panel, &factors, section.p0, section.m, &cfg, ctx.seed)?;
        report_written(&emit_joint_rates(&rates, &ctx.out_dir)?);
    }
    finish(manifest, &ctx.out_dir)
}

fn cmd_frac(ctx: &Ctx) -> Result<(), fdrcal::Error> {
    let (panel, factors, manifest) = load_inputs(ctx)?;
    let factors = factors.expect("validated: input.factors present");
    let (cfg, _) = joint_config(ctx)?;
    let frac_section = ctx.cfg.frac.clone().unwrap_or_default();
    let frac = frac_statistic(
        &panel,
        &factors,
        &cfg,
        frac_section.level,
        frac_section.upper_bound,
        ctx.seed,
    )?;
    let outcome = FracOutcome {
        level: frac_section.level,
        upper_bound: frac_section.upper_bound,
        frac,
    };
    report_written(&emit_frac(&outcome, &ctx.out_dir)?);
    finish(manifest, &ctx.out_dir)
}

fn cmd_simstudy(ctx: &Ctx) -> Result<(), fdrcal::Error> {
    let (panel, _factors, manifest) = load_inputs(ctx)?;
    let s: SimStudySection = ctx.cfg.simstudy.clone().unwrap_or_default();
    let cfg = SimStudyConfig {
        base_panel: &panel,
        true_fraction: s.true_fraction,
        gamma: s.gamma,
        m: s.m,
        k: s.k,
        procedures: s.procedures,
        cutoffs: s.cutoffs,
        delta_grid: s.delta_grid,
        p0_grid: s.p0_grid,
        est_outer: s.est_outer,
        est_inner: s.est_inner,
        sidedness: s.sidedness,
        min_obs: s.min_obs,
        p_values: s.p_values,
        seed: ctx.seed,
        max_budget_units: s.max_budget_units,
    };
    let resume = match &ctx.checkpoint {
        Some(path) => read_checkpoint(path)?,
        None => Vec::new(),
    };
    if !resume.is_empty() {
        println!("resuming from {} checkpointed cells", resume.len());
    }
    let mut writer = match &ctx.checkpoint {
        Some(path) => Some(CheckpointWriter::open(path)?),
        None => None,
    };
    let mut sink_err = None;
    let report = run_sim_study(&cfg, &resume, &mut |rec| {
        if sink_err.is_none() {
            if let Some(w) = writer.as_mut() {
                if let Err(e) = w.append(rec) {
                    sink_err = Some(e);
                }
            }
        }
    })?;
    if let Some(e) = sink_err {
        return Err(e.into());
    }
    report_written(&emit_sim_report(&report, &ctx.out_dir)?);
    finish(manifest, &ctx.out_dir)
}

fn cmd_gen_synthetic(ctx: &Ctx) -> Result<(), fdrcal::Error> {
    let spec = ctx
        .cfg
        .synthetic
        .clone()
        .expect("validated: synthetic present");
    let (panel_path, truth_path) = gen_synthetic(&spec, ctx.seed, &ctx.out_dir)?;
    println!("wrote {}", panel_path.display());
    println!("wrote {}", truth_path.display());
    let manifest = Manifest::new(
        &ctx.command.to_string(),
        ctx.seed,
        ctx.threads,
        &ctx.config_text,
    );
    finish(manifest, &ctx.out_dir)
}
