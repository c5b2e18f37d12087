//! `strata`: hierarchical evaluation statistics from the command line.
//!
//! Subcommands cover ingestion and validation, suite and per-app bootstrap
//! intervals, axis-sensitivity decomposition, performance profiles,
//! split-half regret with significance gating, the simulation studies, and
//! environment-integrity checks. Stochastic commands honor `--seed`; without
//! one a seed is generated and reported in the output.

mod output;
mod settings;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use strata_core::analysis::{
    bootstrap_significance, gated_regret, performance_profile, split_half_regret,
    wald_significance, DecisionMethod, SignificanceFlag,
};
use strata_core::bootstrap::{
    hierarchical_bootstrap, per_app_bootstrap, AxisMechanics, BootstrapConfig, ResampleLadder,
    SuiteStatistic,
};
use strata_core::estimators::{
    suite_mean_pooled, trimmed_suite_mean, ConfidenceLevel, IntervalMethod, PoolingMode,
};
use strata_core::ingest::{ingest_path, IngestOutput};
use strata_core::integrity::{feasibility_matrix, triviality_filter, InstanceSpec, ProfileStore};
use strata_core::model::BenchmarkTree;
use strata_core::rng::derive_seed;
use strata_core::simlab::{
    bootstrap_b_sensitivity, build_calibration, coverage_study_base, coverage_study_suite,
    random_task_rates, replay_study, BaseCalibration, Estimand, LadderVariant, ReplayEnv,
    ReplaySpec, SuiteCalibration, SuiteParams,
};
use strata_core::variability::{
    exceedance_curve, sensitivity_grid, sensitivity_profile, VariabilityError,
};

use output::{emit, num, num4, Envelope, OutputFormat, Table};

#[derive(Parser)]
#[command(
    name = "strata",
    version,
    about = "Statistics for hierarchically structured agent-benchmark results"
)]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Globals {
    /// Master seed for stochastic commands (env STRATA_SEED as fallback).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-thread cap; never affects results (env STRATA_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat key=value settings file; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Stdout rendering.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Directory receiving a `<command>.json` envelope.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an outcome file and summarize its hierarchy.
    Ingest(IngestArgs),
    /// Suite and per-app success rates per model.
    Report(ReportArgs),
    /// Hierarchical bootstrap interval for each model's suite mean.
    Ci(CiArgs),
    /// Per-app bootstrap intervals from the same resampling engine.
    PerAppCi(CiArgs),
    /// Axis sensitivity: matched-pair deltas, MAD/q90, exceedance curves.
    Decompose(DecomposeArgs),
    /// Fraction of apps at or above each threshold, per model.
    Profile(ProfileArgs),
    /// Split-half decision regret with Wald and bootstrap gating.
    Regret(RegretArgs),
    /// Coverage of Wilson and Wald intervals on a calibrated leaf mixture.
    SimulateCoverageBase(SimBaseArgs),
    /// Coverage of bootstrap ladders on calibrated synthetic suites.
    SimulateCoverageSuite(SimSuiteArgs),
    /// Interval stability across bootstrap replicate counts.
    SimulateBSensitivity(SimBArgs),
    /// Attempt-level replay of best-of-k selection vs the analytic rate.
    SimulateReplay(SimReplayArgs),
    /// Instance x profile feasibility matrix and pre-solved exclusions.
    IntegrityCheck(IntegrityArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Report(_) => "report",
            Command::Ci(_) => "ci",
            Command::PerAppCi(_) => "per-app-ci",
            Command::Decompose(_) => "decompose",
            Command::Profile(_) => "profile",
            Command::Regret(_) => "regret",
            Command::SimulateCoverageBase(_) => "simulate-coverage-base",
            Command::SimulateCoverageSuite(_) => "simulate-coverage-suite",
            Command::SimulateBSensitivity(_) => "simulate-b-sensitivity",
            Command::SimulateReplay(_) => "simulate-replay",
            Command::IntegrityCheck(_) => "integrity-check",
        }
    }

    fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Command::Ci(_)
                | Command::PerAppCi(_)
                | Command::Regret(_)
                | Command::SimulateCoverageBase(_)
                | Command::SimulateCoverageSuite(_)
                | Command::SimulateBSensitivity(_)
                | Command::SimulateReplay(_)
        )
    }
}

// ---------------------------------------------------------------------------
// Flag enums mirroring core types, with stable CLI names.

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PoolingArg {
    RolloutWeighted,
    LeafWeighted,
}

impl PoolingArg {
    fn label(self) -> &'static str {
        match self {
            PoolingArg::RolloutWeighted => "rollout-weighted",
            PoolingArg::LeafWeighted => "leaf-weighted",
        }
    }
}

impl From<PoolingArg> for PoolingMode {
    fn from(arg: PoolingArg) -> PoolingMode {
        match arg {
            PoolingArg::RolloutWeighted => PoolingMode::RolloutWeighted,
            PoolingArg::LeafWeighted => PoolingMode::LeafWeighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanicsArg {
    ValueProduct,
    FlatCells,
}

impl MechanicsArg {
    fn label(self) -> &'static str {
        match self {
            MechanicsArg::ValueProduct => "value-product",
            MechanicsArg::FlatCells => "flat-cells",
        }
    }
}

impl From<MechanicsArg> for AxisMechanics {
    fn from(arg: MechanicsArg) -> AxisMechanics {
        match arg {
            MechanicsArg::ValueProduct => AxisMechanics::ValueProduct,
            MechanicsArg::FlatCells => AxisMechanics::FlatCells,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConditionArg {
    Corrected,
    Homogeneous,
    LowHeterogeneity,
    MainHeterogeneous,
}

impl ConditionArg {
    fn label(self) -> &'static str {
        match self {
            ConditionArg::Corrected => "corrected",
            ConditionArg::Homogeneous => "homogeneous",
            ConditionArg::LowHeterogeneity => "low-heterogeneity",
            ConditionArg::MainHeterogeneous => "main-heterogeneous",
        }
    }

    fn params(self) -> SuiteParams {
        match self {
            ConditionArg::Corrected => SuiteParams::corrected(),
            ConditionArg::Homogeneous => SuiteParams::homogeneous(),
            ConditionArg::LowHeterogeneity => SuiteParams::low_heterogeneity(),
            ConditionArg::MainHeterogeneous => SuiteParams::main_heterogeneous(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimandArg {
    SuperPopulation,
    RealizedSample,
}

impl EstimandArg {
    fn label(self) -> &'static str {
        match self {
            EstimandArg::SuperPopulation => "super-population",
            EstimandArg::RealizedSample => "realized-sample",
        }
    }
}

impl From<EstimandArg> for Estimand {
    fn from(arg: EstimandArg) -> Estimand {
        match arg {
            EstimandArg::SuperPopulation => Estimand::SuperPopulation,
            EstimandArg::RealizedSample => Estimand::RealizedSample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LadderArg {
    Rollouts,
    RolloutsAxes,
    ScenariosRollouts,
    Full,
}

impl LadderArg {
    fn label(self) -> &'static str {
        match self {
            LadderArg::Rollouts => "rollouts",
            LadderArg::RolloutsAxes => "rollouts-axes",
            LadderArg::ScenariosRollouts => "scenarios-rollouts",
            LadderArg::Full => "full",
        }
    }

    fn ladder(self) -> ResampleLadder {
        match self {
            LadderArg::Rollouts => ResampleLadder::rollouts_only(),
            LadderArg::RolloutsAxes => ResampleLadder::rollouts_and_axes(),
            LadderArg::ScenariosRollouts => ResampleLadder::scenarios_and_rollouts(),
            LadderArg::Full => ResampleLadder::full(),
        }
    }
}

impl fmt::Display for LadderArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

// ---------------------------------------------------------------------------
// Per-command argument structs.

#[derive(Args)]
struct IngestArgs {
    /// Outcome records, JSONL or CSV (sniffed from the first byte).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Restrict to one model (default: every model in the input).
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum, default_value = "rollout-weighted")]
    pooling: PoolingArg,
    /// Per-tail trim fraction for an extra trimmed suite mean (0 = off).
    #[arg(long, default_value_t = 0.0)]
    trim: f64,
}

#[derive(Args)]
struct CiArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Restrict to one model (default: every model in the input).
    #[arg(long)]
    model: Option<String>,
    /// Resample the scenario rung. With no rung flags the full ladder runs.
    #[arg(long)]
    resample_scenarios: bool,
    /// Resample the configuration-axis rung.
    #[arg(long)]
    resample_axes: bool,
    /// Resample the rollout rung.
    #[arg(long)]
    resample_rollouts: bool,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// Two-sided miscoverage; the interval level is 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "value-product")]
    mechanics: MechanicsArg,
    #[arg(long, value_enum, default_value = "rollout-weighted")]
    pooling: PoolingArg,
    /// Per-tail trim fraction for a trimmed-mean suite statistic (0 = mean).
    #[arg(long, default_value_t = 0.0)]
    trim: f64,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    model: Option<String>,
    /// Exceedance thresholds on |delta|.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.1, 0.2, 0.3])]
    thresholds: Vec<f64>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Success-rate thresholds of the profile grid.
    #[arg(long, value_delimiter = ',', default_values_t = default_profile_grid())]
    thresholds: Vec<f64>,
}

fn default_profile_grid() -> Vec<f64> {
    (0..=20).map(|i| f64::from(i) / 20.0).collect()
}

#[derive(Args)]
struct RegretArgs {
    /// Outcome records holding at least the two compared models.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// First model (default: lexicographically first in the input).
    #[arg(long)]
    model_a: Option<String>,
    /// Second model (default: lexicographically second).
    #[arg(long)]
    model_b: Option<String>,
    /// Split-half simulations per app.
    #[arg(long, default_value_t = 1000)]
    sims: usize,
    /// Bootstrap replicates behind the bootstrap gate.
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct SimBaseArgs {
    /// Monte Carlo trials.
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Rollout depths to score.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u32, 3, 5, 10])]
    rollouts: Vec<u32>,
    /// Mixture mass on the all-fail arm of the leaf calibration.
    #[arg(long, default_value_t = 0.68)]
    mass_at_zero: f64,
    /// Reference rollout depth of the mixture.
    #[arg(long, default_value_t = 3)]
    reference_rollouts: u32,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct SimSuiteArgs {
    /// Generative condition of the synthetic suites.
    #[arg(long, value_enum, default_value = "corrected")]
    condition: ConditionArg,
    /// Ladder variants to score.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = vec![LadderArg::Rollouts, LadderArg::RolloutsAxes, LadderArg::Full]
    )]
    ladders: Vec<LadderArg>,
    /// Fresh synthetic suites to draw.
    #[arg(long, default_value_t = 200)]
    experiments: usize,
    /// Bootstrap replicates per suite.
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Truth the intervals are scored against.
    #[arg(long, value_enum, default_value = "super-population")]
    estimand: EstimandArg,
    /// Monte Carlo draws per app behind the population estimand.
    #[arg(long, default_value_t = 200_000)]
    estimand_draws: u64,
    #[arg(long, value_enum, default_value = "value-product")]
    mechanics: MechanicsArg,
}

#[derive(Args)]
struct SimBArgs {
    #[arg(long, value_enum, default_value = "homogeneous")]
    condition: ConditionArg,
    #[arg(long, value_enum, default_value = "full")]
    ladder: LadderArg,
    /// Replicate counts to score on nested prefixes of one stream.
    #[arg(
        long = "b-grid",
        value_delimiter = ',',
        default_values_t = vec![100usize, 150, 200, 300, 400, 500, 600]
    )]
    b_grid: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    experiments: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo draws per app behind the population estimand.
    #[arg(long, default_value_t = 200_000)]
    estimand_draws: u64,
}

#[derive(Args)]
struct SimReplayArgs {
    /// Explicit per-task success rates; suppresses the random vectors.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    p: Option<Vec<f64>>,
    /// Attempts per task (a grid; success = any attempt succeeds).
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u32, 2, 5, 20])]
    k: Vec<u32>,
    /// Monte Carlo trials per study.
    #[arg(long, default_value_t = 100_000)]
    mc: usize,
    /// Random task-rate vectors drawn when --p is absent.
    #[arg(long, default_value_t = 20)]
    vectors: usize,
    /// Tasks per random vector.
    #[arg(long, default_value_t = 5)]
    tasks: usize,
    /// Lower bound of the random rates.
    #[arg(long, default_value_t = 0.02)]
    rate_min: f64,
    /// Upper bound of the random rates.
    #[arg(long, default_value_t = 0.98)]
    rate_max: f64,
    /// Environment-match probability; 1 replays the recording environment.
    #[arg(long, default_value_t = 1.0)]
    match_prob: f64,
}

#[derive(Args)]
struct IntegrityArgs {
    /// Instance definitions (single JSON object or array).
    #[arg(long, value_name = "PATH")]
    instances: PathBuf,
    /// Profile store file, or a directory of *.json stores.
    #[arg(long, value_name = "PATH")]
    profiles: PathBuf,
}

// ---------------------------------------------------------------------------
// Dispatch.

struct CommandOutput {
    params: Value,
    metrics: Value,
    tables: Vec<Table>,
    /// Data-level failure: the envelope is still emitted, the exit code is 1.
    failed: bool,
}

impl CommandOutput {
    fn ok(params: Value, metrics: Value, tables: Vec<Table>) -> CommandOutput {
        CommandOutput {
            params,
            metrics,
            tables,
            failed: false,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let settings = settings::resolve(
        cli.globals.seed,
        cli.globals.threads,
        cli.globals.format,
        cli.globals.config.as_deref(),
    )?;
    if let Some(threads) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let seed = cli
        .command
        .is_stochastic()
        .then(|| settings.seed.unwrap_or_else(settings::generate_seed));
    let outcome = match &cli.command {
        Command::Ingest(args) => cmd_ingest(args)?,
        Command::Report(args) => cmd_report(args)?,
        Command::Ci(args) => cmd_ci(args, seed.expect("stochastic"), false)?,
        Command::PerAppCi(args) => cmd_ci(args, seed.expect("stochastic"), true)?,
        Command::Decompose(args) => cmd_decompose(args)?,
        Command::Profile(args) => cmd_profile(args)?,
        Command::Regret(args) => cmd_regret(args, seed.expect("stochastic"))?,
        Command::SimulateCoverageBase(args) => cmd_sim_base(args, seed.expect("stochastic"))?,
        Command::SimulateCoverageSuite(args) => cmd_sim_suite(args, seed.expect("stochastic"))?,
        Command::SimulateBSensitivity(args) => cmd_sim_b(args, seed.expect("stochastic"))?,
        Command::SimulateReplay(args) => cmd_sim_replay(args, seed.expect("stochastic"))?,
        Command::IntegrityCheck(args) => cmd_integrity(args)?,
    };
    let envelope = Envelope::new(cli.command.name(), seed, outcome.params, outcome.metrics);
    emit(
        &envelope,
        &outcome.tables,
        settings.format.unwrap_or(OutputFormat::Text),
        cli.globals.out.as_deref(),
    )?;
    Ok(if outcome.failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

// ---------------------------------------------------------------------------
// Shared helpers.

fn confidence(alpha: f64) -> Result<ConfidenceLevel> {
    ConfidenceLevel::new(1.0 - alpha)
        .map_err(|e| anyhow!("--alpha {alpha}: {e}"))
}

fn load_trees(input: &Path) -> Result<IngestOutput> {
    ingest_path(input).with_context(|| format!("ingesting {}", input.display()))
}

fn select_models<'t>(
    trees: &'t BTreeMap<String, BenchmarkTree>,
    model: Option<&str>,
) -> Result<Vec<&'t BenchmarkTree>> {
    match model {
        None => Ok(trees.values().collect()),
        Some(name) => match trees.get(name) {
            Some(tree) => Ok(vec![tree]),
            None => bail!(
                "model '{name}' not in the input (present: {})",
                trees.keys().cloned().collect::<Vec<_>>().join(", ")
            ),
        },
    }
}

fn ladder_from_flags(args: &CiArgs) -> ResampleLadder {
    if !args.resample_scenarios && !args.resample_axes && !args.resample_rollouts {
        return ResampleLadder::full();
    }
    ResampleLadder {
        scenarios: args.resample_scenarios,
        config_axes: args.resample_axes,
        rollouts: args.resample_rollouts,
    }
}

fn statistic_from_trim(trim: f64) -> SuiteStatistic {
    if trim > 0.0 {
        SuiteStatistic::TrimmedMean(trim)
    } else {
        SuiteStatistic::Mean
    }
}

fn method_name(method: IntervalMethod) -> &'static str {
    match method {
        IntervalMethod::Wilson => "wilson",
        IntervalMethod::Wald => "wald",
        IntervalMethod::BootstrapPercentile => "bootstrap-percentile",
    }
}

fn yes_no(flag: bool) -> String {
    if flag { "yes" } else { "no" }.to_string()
}

// ---------------------------------------------------------------------------
// Command handlers.

fn cmd_ingest(args: &IngestArgs) -> Result<CommandOutput> {
    let output = load_trees(&args.input)?;
    let mut table = Table::new(
        "models",
        &["model", "apps", "scenarios", "leaves", "rollouts", "axes", "balanced"],
    );
    let mut models = serde_json::Map::new();
    for (name, tree) in &output.trees {
        let scenarios: usize = tree.apps().values().map(|a| a.scenario_count()).sum();
        let leaves: usize = tree
            .apps()
            .values()
            .flat_map(|a| a.scenarios().values())
            .map(|s| s.config_count())
            .sum();
        let axes = tree.axis_mask().axes();
        let axes_label = if axes.is_empty() {
            "none".to_string()
        } else {
            axes.iter()
                .map(|a| a.name())
                .collect::<Vec<_>>()
                .join("+")
        };
        table.row(vec![
            name.clone(),
            tree.app_count().to_string(),
            scenarios.to_string(),
            leaves.to_string(),
            tree.total_rollouts().to_string(),
            axes_label.clone(),
            yes_no(output.report.is_balanced),
        ]);
        models.insert(
            name.clone(),
            json!({
                "apps": tree.app_count(),
                "scenarios": scenarios,
                "leaves": leaves,
                "rollouts": tree.total_rollouts(),
                "axes": axes_label,
            }),
        );
    }
    let mut tables = vec![table];
    if !output.report.errors.is_empty() || !output.report.warnings.is_empty() {
        let mut issues = Table::new("validation", &["severity", "message"]);
        for error in &output.report.errors {
            issues.row(vec!["error".to_string(), error.clone()]);
        }
        for warning in &output.report.warnings {
            issues.row(vec!["warning".to_string(), warning.clone()]);
        }
        tables.push(issues);
    }
    let failed = !output.report.is_ok();
    Ok(CommandOutput {
        params: json!({ "input": args.input }),
        metrics: json!({
            "records": output.record_count,
            "models": models,
            "errors": output.report.errors,
            "warnings": output.report.warnings,
            "balanced": output.report.is_balanced,
        }),
        tables,
        failed,
    })
}

fn cmd_report(args: &ReportArgs) -> Result<CommandOutput> {
    let output = load_trees(&args.input)?;
    let selected = select_models(&output.trees, args.model.as_deref())?;
    let mut suite = Table::new("suite means", &["model", "pooling", "theta_hat", "trimmed"]);
    let mut apps = Table::new("per-app rates", &["model", "app", "rate"]);
    let mut metrics = serde_json::Map::new();
    for tree in selected {
        let estimate = suite_mean_pooled(tree, args.pooling.into())?;
        let trimmed = if args.trim > 0.0 {
            Some(trimmed_suite_mean(tree, args.trim)?)
        } else {
            None
        };
        suite.row(vec![
            tree.model().to_string(),
            args.pooling.label().to_string(),
            num(estimate.theta_hat),
            trimmed.map_or_else(|| "-".to_string(), num),
        ]);
        for (app, rate) in &estimate.per_app {
            apps.row(vec![tree.model().to_string(), app.clone(), num(*rate)]);
        }
        metrics.insert(
            tree.model().to_string(),
            json!({
                "theta_hat": estimate.theta_hat,
                "per_app": estimate.per_app,
                "trimmed": trimmed,
            }),
        );
    }
    Ok(CommandOutput::ok(
        json!({
            "input": args.input,
            "model": args.model,
            "pooling": args.pooling.label(),
            "trim": args.trim,
        }),
        Value::Object(metrics),
        vec![suite, apps],
    ))
}

fn cmd_ci(args: &CiArgs, seed: u64, per_app: bool) -> Result<CommandOutput> {
    let output = load_trees(&args.input)?;
    let selected = select_models(&output.trees, args.model.as_deref())?;
    let ladder = ladder_from_flags(args);
    let level = confidence(args.alpha)?;
    let statistic = statistic_from_trim(args.trim);
    let params = json!({
        "input": args.input,
        "model": args.model,
        "ladder": ladder.label(),
        "replicates": args.replicates,
        "alpha": args.alpha,
        "mechanics": args.mechanics.label(),
        "pooling": args.pooling.label(),
        "trim": args.trim,
    });
    let mut metrics = serde_json::Map::new();
    let mut tables = Vec::new();
    if per_app {
        let mut table = Table::new(
            "per-app bootstrap intervals",
            &["model", "app", "estimate", "lower", "upper", "width"],
        );
        for (idx, tree) in selected.iter().enumerate() {
            let cfg = BootstrapConfig {
                ladder,
                replicates: args.replicates,
                level,
                seed: derive_seed(seed, &[idx as u64]),
                statistic,
                mechanics: args.mechanics.into(),
                pooling: args.pooling.into(),
            };
            let intervals = per_app_bootstrap(tree, &cfg)?;
            for (app, ci) in &intervals {
                table.row(vec![
                    tree.model().to_string(),
                    app.clone(),
                    num(ci.estimate),
                    num(ci.lower),
                    num(ci.upper),
                    num(ci.width()),
                ]);
            }
            metrics.insert(tree.model().to_string(), serde_json::to_value(&intervals)?);
        }
        tables.push(table);
    } else {
        let mut table = Table::new(
            "suite bootstrap interval",
            &["model", "estimate", "lower", "upper", "width", "fallbacks"],
        );
        for (idx, tree) in selected.iter().enumerate() {
            let cfg = BootstrapConfig {
                ladder,
                replicates: args.replicates,
                level,
                seed: derive_seed(seed, &[idx as u64]),
                statistic,
                mechanics: args.mechanics.into(),
                pooling: args.pooling.into(),
            };
            let result = hierarchical_bootstrap(tree, &cfg)?;
            table.row(vec![
                tree.model().to_string(),
                num(result.interval.estimate),
                num(result.interval.lower),
                num(result.interval.upper),
                num(result.interval.width()),
                result.degenerate_fallbacks.to_string(),
            ]);
            metrics.insert(
                tree.model().to_string(),
                json!({
                    "interval": result.interval,
                    "degenerate_fallbacks": result.degenerate_fallbacks,
                    "replicates": result.replicates.len(),
                }),
            );
        }
        tables.push(table);
    }
    Ok(CommandOutput::ok(params, Value::Object(metrics), tables))
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<CommandOutput> {
    let output = load_trees(&args.input)?;
    let selected = select_models(&output.trees, args.model.as_deref())?;
    let mut summary = Table::new("axis sensitivity", &["model", "axis", "pairs", "mad", "q90"]);
    let mut grid = Table::new("per-app MAD grid", &["model", "app", "axis", "pairs", "mad"]);
    let mut exceedance = Table::new(
        "exceedance of |delta|",
        &["model", "axis", "threshold", "fraction"],
    );
    let mut metrics = serde_json::Map::new();
    for tree in selected {
        let axes = tree.axis_mask().axes();
        let mut profiles = Vec::new();
        let mut curves = Vec::new();
        let mut warnings: Vec<String> = Vec::new();
        for &axis in &axes {
            match sensitivity_profile(tree, axis) {
                Ok((profile, axis_warnings)) => {
                    summary.row(vec![
                        tree.model().to_string(),
                        axis.name().to_string(),
                        profile.pair_count.to_string(),
                        num(profile.mad),
                        num(profile.q90),
                    ]);
                    warnings.extend(axis_warnings);
                    profiles.push(profile);
                }
                Err(VariabilityError::NoPairs(_) | VariabilityError::EmptyDeltas) => {
                    summary.row(vec![
                        tree.model().to_string(),
                        axis.name().to_string(),
                        "0".to_string(),
                        "-".to_string(),
                        "-".to_string(),
                    ]);
                }
                Err(other) => return Err(other.into()),
            }
            match exceedance_curve(tree, axis, &args.thresholds) {
                Ok(curve) => {
                    for (tau, fraction) in curve.thresholds.iter().zip(&curve.fractions) {
                        exceedance.row(vec![
                            tree.model().to_string(),
                            axis.name().to_string(),
                            num4(*tau),
                            num(*fraction),
                        ]);
                    }
                    curves.push(curve);
                }
                Err(VariabilityError::NoPairs(_)) => {}
                Err(other) => return Err(other.into()),
            }
        }
        let grid_rows = if axes.is_empty() {
            Vec::new()
        } else {
            let (rows, grid_warnings) = sensitivity_grid(tree)?;
            warnings.extend(grid_warnings);
            rows
        };
        for row in &grid_rows {
            grid.row(vec![
                tree.model().to_string(),
                row.app.clone(),
                row.axis.name().to_string(),
                row.pair_count.to_string(),
                row.mad.map_or_else(|| "-".to_string(), num),
            ]);
        }
        warnings.sort();
        warnings.dedup();
        metrics.insert(
            tree.model().to_string(),
            json!({
                "axes": profiles,
                "grid": grid_rows,
                "exceedance": curves,
                "warnings": warnings,
            }),
        );
    }
    Ok(CommandOutput::ok(
        json!({
            "input": args.input,
            "model": args.model,
            "thresholds": args.thresholds,
        }),
        Value::Object(metrics),
        vec![summary, grid, exceedance],
    ))
}

fn cmd_profile(args: &ProfileArgs) -> Result<CommandOutput> {
    let output = load_trees(&args.input)?;
    let trees: Vec<&BenchmarkTree> = output.trees.values().collect();
    let profile = performance_profile(&trees, &args.thresholds)?;
    let mut headers: Vec<&str> = vec!["threshold"];
    let model_names: Vec<&String> = profile.series.keys().collect();
    for name in &model_names {
        headers.push(name.as_str());
    }
    let mut table = Table::new("performance profile", &headers);
    for (i, tau) in profile.thresholds.iter().enumerate() {
        let mut row = vec![num4(*tau)];
        for name in &model_names {
            row.push(num(profile.series[*name][i]));
        }
        table.row(row);
    }
    Ok(CommandOutput::ok(
        json!({
            "input": args.input,
            "thresholds": args.thresholds,
        }),
        serde_json::to_value(&profile)?,
        vec![table],
    ))
}

fn cmd_regret(args: &RegretArgs, seed: u64) -> Result<CommandOutput> {
    let output = load_trees(&args.input)?;
    let names: Vec<&String> = output.trees.keys().collect();
    let pick = |flag: &Option<String>, index: usize, side: &str| -> Result<String> {
        match flag {
            Some(name) => Ok(name.clone()),
            None => names.get(index).map(|n| (*n).clone()).ok_or_else(|| {
                anyhow!("--model-{side} required: the input holds {} model(s)", names.len())
            }),
        }
    };
    let name_a = pick(&args.model_a, 0, "a")?;
    let name_b = pick(&args.model_b, 1, "b")?;
    if name_a == name_b {
        bail!("--model-a and --model-b must differ");
    }
    let tree_a = select_models(&output.trees, Some(&name_a))?[0];
    let tree_b = select_models(&output.trees, Some(&name_b))?[0];
    let level = confidence(args.alpha)?;

    let report = split_half_regret(tree_a, tree_b, args.sims, derive_seed(seed, &[0]))?;
    let wald_flags = wald_significance(tree_a, tree_b, level)?;
    let boot_cfg = BootstrapConfig {
        replicates: args.replicates,
        level,
        seed: derive_seed(seed, &[1]),
        ..BootstrapConfig::default()
    };
    let boot_flags = bootstrap_significance(tree_a, tree_b, &boot_cfg)?;
    let wald = gated_regret(&report, &wald_flags, DecisionMethod::WaldDecision);
    let boot = gated_regret(&report, &boot_flags, DecisionMethod::BootstrapDecision);

    let flagged = |flags: &[SignificanceFlag], app: &str| {
        flags.iter().any(|f| f.app == app && f.significant)
    };
    let mut per_app = Table::new(
        "per-app regret",
        &["app", "winner", "p_wrong", "gap", "regret", "wald", "bootstrap"],
    );
    for (app, entry) in &report.per_app {
        per_app.row(vec![
            app.clone(),
            entry.full_winner.clone(),
            num(entry.p_wrong),
            num(entry.gap),
            num(entry.regret),
            yes_no(flagged(&wald_flags, app)),
            yes_no(flagged(&boot_flags, app)),
        ]);
    }
    let mut totals = Table::new("total regret", &["method", "apps_acted_on", "total_regret"]);
    totals.row(vec![
        "split-half".to_string(),
        report.per_app.len().to_string(),
        num(report.total_regret),
    ]);
    totals.row(vec![
        "wald-decision".to_string(),
        wald.flagged_apps.len().to_string(),
        num(wald.total_regret),
    ]);
    totals.row(vec![
        "bootstrap-decision".to_string(),
        boot.flagged_apps.len().to_string(),
        num(boot.total_regret),
    ]);
    Ok(CommandOutput::ok(
        json!({
            "input": args.input,
            "model_a": name_a,
            "model_b": name_b,
            "sims": args.sims,
            "replicates": args.replicates,
            "alpha": args.alpha,
        }),
        json!({
            "report": report,
            "wald": wald,
            "bootstrap": boot,
            "wald_flags": wald_flags,
            "bootstrap_flags": boot_flags,
        }),
        vec![per_app, totals],
    ))
}

fn cmd_sim_base(args: &SimBaseArgs, seed: u64) -> Result<CommandOutput> {
    let cal = BaseCalibration {
        mass_at_zero: args.mass_at_zero,
        rollouts: args.reference_rollouts,
    };
    let level = confidence(args.alpha)?;
    let rows = coverage_study_base(&cal, &args.rollouts, args.trials, level, seed)?;
    let mut table = Table::new(
        "interval coverage",
        &["rollouts", "method", "coverage", "mean_width"],
    );
    for row in &rows {
        table.row(vec![
            row.rollouts.to_string(),
            method_name(row.method).to_string(),
            num4(row.coverage),
            num(row.mean_width),
        ]);
    }
    Ok(CommandOutput::ok(
        json!({
            "trials": args.trials,
            "rollouts": args.rollouts,
            "mass_at_zero": args.mass_at_zero,
            "reference_rollouts": args.reference_rollouts,
            "alpha": args.alpha,
        }),
        json!({ "rows": rows }),
        vec![table],
    ))
}

fn calibrate(condition: ConditionArg, draws: u64, seed: u64) -> Result<SuiteCalibration> {
    build_calibration(condition.params(), draws, seed)
        .with_context(|| format!("calibrating condition '{}'", condition.label()))
}

fn cmd_sim_suite(args: &SimSuiteArgs, seed: u64) -> Result<CommandOutput> {
    if args.ladders.is_empty() {
        bail!("--ladders must name at least one variant");
    }
    let level = confidence(args.alpha)?;
    let cal = calibrate(args.condition, args.estimand_draws, derive_seed(seed, &[0]))?;
    let variants: Vec<LadderVariant> = args
        .ladders
        .iter()
        .map(|l| LadderVariant::new(l.label(), l.ladder(), args.mechanics.into()))
        .collect();
    let rows = coverage_study_suite(
        &cal,
        &variants,
        args.experiments,
        args.replicates,
        level,
        args.estimand.into(),
        derive_seed(seed, &[1]),
    )?;
    let mut table = Table::new(
        "ladder coverage",
        &["condition", "resampling", "coverage", "width"],
    );
    for row in &rows {
        table.row(vec![
            args.condition.label().to_string(),
            row.ladder.clone(),
            num4(row.coverage),
            num(row.mean_width),
        ]);
    }
    Ok(CommandOutput::ok(
        json!({
            "condition": args.condition.label(),
            "ladders": args.ladders.iter().map(|l| l.label()).collect::<Vec<_>>(),
            "experiments": args.experiments,
            "replicates": args.replicates,
            "alpha": args.alpha,
            "estimand": args.estimand.label(),
            "estimand_draws": args.estimand_draws,
            "mechanics": args.mechanics.label(),
        }),
        json!({
            "theta_true": cal.theta_true,
            "theta_true_se": cal.theta_true_se,
            "rows": rows,
        }),
        vec![table],
    ))
}

fn cmd_sim_b(args: &SimBArgs, seed: u64) -> Result<CommandOutput> {
    let level = confidence(args.alpha)?;
    let cal = calibrate(args.condition, args.estimand_draws, derive_seed(seed, &[0]))?;
    let variant = LadderVariant::new(
        args.ladder.label(),
        args.ladder.ladder(),
        AxisMechanics::ValueProduct,
    );
    let rows = bootstrap_b_sensitivity(
        &cal,
        &variant,
        &args.b_grid,
        args.experiments,
        level,
        derive_seed(seed, &[1]),
    )?;
    let mut table = Table::new(
        "replicate sensitivity",
        &["replicates", "coverage", "mean_width"],
    );
    for row in &rows {
        table.row(vec![
            row.replicates.to_string(),
            num4(row.coverage),
            num(row.mean_width),
        ]);
    }
    Ok(CommandOutput::ok(
        json!({
            "condition": args.condition.label(),
            "ladder": args.ladder.label(),
            "b_grid": args.b_grid,
            "experiments": args.experiments,
            "alpha": args.alpha,
            "estimand_draws": args.estimand_draws,
        }),
        json!({
            "theta_true": cal.theta_true,
            "theta_true_se": cal.theta_true_se,
            "rows": rows,
        }),
        vec![table],
    ))
}

fn cmd_sim_replay(args: &SimReplayArgs, seed: u64) -> Result<CommandOutput> {
    let vectors: Vec<Vec<f64>> = match &args.p {
        Some(rates) => vec![rates.clone()],
        None => random_task_rates(
            args.vectors,
            args.tasks,
            args.rate_min,
            args.rate_max,
            derive_seed(seed, &[0]),
        )?,
    };
    let env = if args.match_prob >= 1.0 {
        ReplayEnv::Static
    } else {
        ReplayEnv::Multifactorial {
            match_prob: args.match_prob,
        }
    };
    let mut table = Table::new(
        "replay vs analytic",
        &["vector", "k", "analytic", "empirical", "mc_se", "z"],
    );
    let mut rows = Vec::new();
    for (vi, task_rates) in vectors.iter().enumerate() {
        let label = if args.p.is_some() {
            "given".to_string()
        } else {
            format!("v{vi:02}")
        };
        for &k in &args.k {
            let spec = ReplaySpec {
                task_rates: task_rates.clone(),
                k,
                n_mc: args.mc,
                env,
            };
            let result = replay_study(&spec, derive_seed(seed, &[1, vi as u64, u64::from(k)]))?;
            let z = if result.mc_se > 0.0 {
                (result.empirical - result.analytic).abs() / result.mc_se
            } else {
                0.0
            };
            table.row(vec![
                label.clone(),
                k.to_string(),
                num(result.analytic),
                num(result.empirical),
                num(result.mc_se),
                num4(z),
            ]);
            rows.push(json!({
                "vector": label,
                "task_rates": task_rates,
                "k": k,
                "analytic": result.analytic,
                "empirical": result.empirical,
                "mc_se": result.mc_se,
                "z": z,
            }));
        }
    }
    Ok(CommandOutput::ok(
        json!({
            "p": args.p,
            "k": args.k,
            "mc": args.mc,
            "vectors": args.vectors,
            "tasks": args.tasks,
            "rate_min": args.rate_min,
            "rate_max": args.rate_max,
            "match_prob": args.match_prob,
        }),
        json!({ "rows": rows }),
        vec![table],
    ))
}

fn load_profiles(path: &Path) -> Result<Vec<ProfileStore>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            bail!("no *.json profile stores in {}", path.display());
        }
        let mut profiles = Vec::new();
        for file in files {
            profiles.extend(ProfileStore::load_many(&file)?);
        }
        Ok(profiles)
    } else {
        Ok(ProfileStore::load_many(path)?)
    }
}

fn cmd_integrity(args: &IntegrityArgs) -> Result<CommandOutput> {
    let instances = InstanceSpec::load_many(&args.instances)?;
    if instances.is_empty() {
        bail!("{} holds no instances", args.instances.display());
    }
    let profiles = load_profiles(&args.profiles)?;
    let matrix = feasibility_matrix(&instances, &profiles)?;
    let triviality = triviality_filter(&instances, &profiles)?;

    let mut headers: Vec<&str> = vec!["instance"];
    for profile in &matrix.profiles {
        headers.push(profile.as_str());
    }
    let mut grid = Table::new("feasibility", &headers);
    for (i, instance) in matrix.instances.iter().enumerate() {
        let mut row = vec![instance.clone()];
        for p in 0..matrix.profiles.len() {
            row.push(yes_no(matrix.cell(i, p).feasible));
        }
        grid.row(row);
    }
    let mut failures = Table::new("failed constraints", &["instance", "profile", "constraint"]);
    for (i, instance) in matrix.instances.iter().enumerate() {
        for (p, profile) in matrix.profiles.iter().enumerate() {
            for constraint in &matrix.cell(i, p).failed {
                failures.row(vec![instance.clone(), profile.clone(), constraint.clone()]);
            }
        }
    }
    let mut exclusions = Table::new("pre-solved exclusions", &["instance", "profile"]);
    for (instance, profile) in &triviality.trivial {
        exclusions.row(vec![instance.clone(), profile.clone()]);
    }
    let mut tables = vec![grid, failures, exclusions];
    if !matrix.warnings.is_empty() {
        let mut warnings = Table::new("warnings", &["message"]);
        for message in &matrix.warnings {
            warnings.row(vec![message.clone()]);
        }
        tables.push(warnings);
    }
    Ok(CommandOutput::ok(
        json!({
            "instances": args.instances,
            "profiles": args.profiles,
        }),
        json!({
            "matrix": matrix,
            "triviality": triviality,
        }),
        tables,
    ))
}
