//! `harvest`: command-line front end for the harvesting library.

mod args;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use harvest_core::battery::{self, BatteryConfig, StartPhase};
use harvest_core::bayes::{run_learner_with, BayesLearner, SleepPlanner, Weighting};
use harvest_core::harness::{evaluate, learning_comparison_spec, ExperimentSpec, OutputFormat, Scale};
use harvest_core::threshold::{build_lookup_table, AxisSpec, PolicyReport};
use harvest_core::value_iteration::{Representation, SolveReport};
use harvest_core::{LookupTable, Result, ThresholdPolicy, VISettings};
use serde::{Deserialize, Serialize};

use args::{merge_with_config, usage, ChainArgs, Format, OutputArgs, RewardArgs};

#[derive(Parser, Debug)]
#[command(name = "harvest", version, about = "Harvest/sleep policies for intermittent RF energy harvesting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Value iteration: V(q), V(1-p), the harvest threshold and the implied sleep count.
    Solve(SolveArgs),
    /// Optimal sleep count and policy values for one parameter point.
    Policy(PolicyArgs),
    /// Lookup table of optimal sleep counts over a (pi_g, t_b) grid.
    Table(TableArgs),
    /// Full-charge probabilities and charging times under a threshold policy.
    Battery(BatteryArgs),
    /// One episode of the posterior-sampling learner, as JSON lines.
    Learn(LearnArgs),
    /// Paired comparison of the learner against baseline policies.
    Compare(CompareArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Repr {
    Alpha,
    Grid,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct SolveArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    #[serde(flatten)]
    reward: RewardArgs,
    /// Absolute error bound [default: 1e-4 * max(r0, r1)].
    #[arg(long)]
    epsilon: Option<f64>,
    /// Iteration cap [default: 1000000].
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Belief grid spacing for the grid representation [default: 1e-4].
    #[arg(long)]
    grid_resolution: Option<f64>,
    /// Value-function representation [default: alpha].
    #[arg(long, value_enum)]
    representation: Option<Repr>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct PolicyArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    #[serde(flatten)]
    reward: RewardArgs,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct TableArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    reward: RewardArgs,
    /// Smallest pi_g [default: 0.05].
    #[arg(long)]
    pi_g_min: Option<f64>,
    /// Largest pi_g [default: 0.95].
    #[arg(long)]
    pi_g_max: Option<f64>,
    /// Number of pi_g values [default: 20].
    #[arg(long)]
    pi_g_steps: Option<usize>,
    /// Smallest t_b [default: 1.1].
    #[arg(long)]
    t_b_min: Option<f64>,
    /// Largest t_b [default: 20].
    #[arg(long)]
    t_b_max: Option<f64>,
    /// Number of t_b values [default: 20].
    #[arg(long)]
    t_b_steps: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Phase {
    Fresh,
    AfterSuccess,
    AfterFailure,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct BatteryArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// G -> B transition probability (single parameter point).
    #[arg(long)]
    p: Option<f64>,
    /// B -> G transition probability (single parameter point).
    #[arg(long)]
    q: Option<f64>,
    /// Stationary good probability, combined with every --t-b.
    #[arg(long = "pi-g")]
    pi_g: Option<f64>,
    /// Burst lengths to sweep (repeat or comma-separate).
    #[arg(long = "t-b", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    t_b: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    reward: RewardArgs,
    /// Fixed sleep count after a failure [default: optimal for each parameter point].
    #[arg(long)]
    sleep: Option<usize>,
    /// Battery capacity in units [default: 100].
    #[arg(long)]
    capacity: Option<u32>,
    /// Units gained per successful harvest [default: 1].
    #[arg(long)]
    gain: Option<u32>,
    /// Units lost per failed harvest [default: 1].
    #[arg(long)]
    loss: Option<u32>,
    /// Initial levels to report (repeat or comma-separate) [default: all].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    levels: Vec<u32>,
    /// History at the start [default: fresh].
    #[arg(long, value_enum)]
    phase: Option<Phase>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum WeightingArg {
    Appearance,
    Exact,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct LearnArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    #[serde(flatten)]
    reward: RewardArgs,
    /// Keep the 2K heaviest posterior hypotheses [default: 20].
    #[arg(long)]
    k: Option<usize>,
    /// Episode length in slots [default: 500].
    #[arg(long)]
    horizon: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Lookup table (JSON from `harvest table --format json`) consulted before solving.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Particle ranking for truncation, draws and estimates [default: appearance].
    #[arg(long, value_enum)]
    weighting: Option<WeightingArg>,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ScaleArg {
    Desk,
    Full,
}

#[derive(Args, Debug, Clone)]
struct CompareArgs {
    /// Experiment spec in TOML; replaces the --scale preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset size [default: desk].
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    /// Override the seed [preset default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of arrival paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the runs per path.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the episode length in slots.
    #[arg(long)]
    horizon: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => report_error("usage", &e.to_string(), 2),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_usage() => report_error("usage", &e.to_string(), 2),
        Err(e) => report_error("runtime", &e.to_string(), 1),
    }
}

fn report_error(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message.trim_end() } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Solve(a) => solve(merge_with_config(&a, a.config.as_deref())?),
        Command::Policy(a) => policy(merge_with_config(&a, a.config.as_deref())?),
        Command::Table(a) => table(merge_with_config(&a, a.config.as_deref())?),
        Command::Battery(a) => battery(merge_with_config(&a, a.config.as_deref())?),
        Command::Learn(a) => learn(merge_with_config(&a, a.config.as_deref())?),
        Command::Compare(a) => compare(a),
    }
}

fn require_json(out: &OutputArgs) -> Result<()> {
    match out.format {
        None | Some(Format::Json) => Ok(()),
        Some(Format::Csv) => Err(usage("this command only writes JSON")),
    }
}

fn solve(a: SolveArgs) -> Result<()> {
    require_json(&a.out)?;
    let params = a.chain.params()?;
    let cfg = a.reward.config()?;
    let mut settings = VISettings::for_rewards(&cfg);
    if let Some(e) = a.epsilon {
        settings.epsilon = e;
    }
    if let Some(m) = a.max_iterations {
        settings.max_iterations = m;
    }
    if let Some(r) = a.grid_resolution {
        settings.grid_resolution = r;
    }
    let repr = match a.representation.unwrap_or(Repr::Alpha) {
        Repr::Alpha => Representation::Alpha,
        Repr::Grid => Representation::Grid,
    };
    a.out.write(&SolveReport::compute(&params, &cfg, &settings, repr)?.to_json()?)
}

fn policy(a: PolicyArgs) -> Result<()> {
    require_json(&a.out)?;
    let params = a.chain.params()?;
    let cfg = a.reward.config()?;
    a.out.write(&PolicyReport::compute(&params, &cfg)?.to_json()?)
}

fn table(a: TableArgs) -> Result<()> {
    let cfg = a.reward.config()?;
    let axes = AxisSpec::burst_linspace(
        (a.pi_g_min.unwrap_or(0.05), a.pi_g_max.unwrap_or(0.95), a.pi_g_steps.unwrap_or(20)),
        (a.t_b_min.unwrap_or(1.1), a.t_b_max.unwrap_or(20.0), a.t_b_steps.unwrap_or(20)),
    );
    let t = build_lookup_table(&axes, &cfg)?;
    let text = match a.out.format.unwrap_or(Format::Csv) {
        Format::Csv => t.to_csv()?,
        Format::Json => t.to_json()?,
    };
    a.out.write(&text)
}

fn battery(a: BatteryArgs) -> Result<()> {
    if a.out.format == Some(Format::Json) {
        return Err(usage("battery tables are written as CSV"));
    }
    let capacity = a.capacity.unwrap_or(100);
    let template = BatteryConfig { capacity, gain: a.gain.unwrap_or(1), loss: a.loss.unwrap_or(1), initial: 0 };
    template.validate()?;
    let levels: Vec<u32> = if a.levels.is_empty() { (0..=capacity).collect() } else { a.levels.clone() };
    let phase = match a.phase.unwrap_or(Phase::Fresh) {
        Phase::Fresh => StartPhase::Fresh,
        Phase::AfterSuccess => StartPhase::AfterSuccess,
        Phase::AfterFailure => StartPhase::AfterFailure,
    };
    let fixed = a.sleep.map(ThresholdPolicy::SleepAfterFailure);
    let rows = match (a.p, a.q, a.pi_g) {
        (Some(p), Some(q), None) if a.t_b.is_empty() => {
            let params = harvest_core::GEParams::new(p, q)?;
            let pol = match fixed {
                Some(pol) => pol,
                None => harvest_core::threshold::optimal_sleep_time(&params, &a.reward.config()?, None)?.0,
            };
            battery::sweep_initial_levels(&params, pol, &template, &levels, phase)?
        }
        (None, None, Some(pi_g)) if !a.t_b.is_empty() => match fixed {
            Some(pol) => {
                let mut rows = Vec::new();
                for &t_b in &a.t_b {
                    let params = harvest_core::GEParams::from_burst_parameterization(pi_g, t_b)?;
                    rows.extend(battery::sweep_initial_levels(&params, pol, &template, &levels, phase)?);
                }
                rows
            }
            None => {
                let cfg = a.reward.config()?;
                battery::burst_length_sweep(pi_g, &a.t_b, &cfg, None, &template, &levels, phase)?
            }
        },
        _ => return Err(usage("give either --p/--q or --pi-g with at least one --t-b")),
    };
    a.out.write(&battery::rows_to_csv(&rows)?)
}

fn learn(a: LearnArgs) -> Result<()> {
    require_json(&a.out)?;
    let params = a.chain.params()?;
    let cfg = a.reward.config()?;
    let table = match &a.table {
        Some(path) => Some(Arc::new(LookupTable::from_json(&std::fs::read_to_string(path)?)?)),
        None => None,
    };
    let mode = match a.weighting.unwrap_or(WeightingArg::Appearance) {
        WeightingArg::Appearance => Weighting::AppearanceCount,
        WeightingArg::Exact => Weighting::Exact,
    };
    let learner = BayesLearner::new(a.k.unwrap_or(20), SleepPlanner::new(cfg, table)?)?.with_weighting(mode);
    let trace = run_learner_with(&params, a.horizon.unwrap_or(500), a.seed.unwrap_or(0), learner)?;
    a.out.write(&trace.to_json_lines()?)
}

fn compare(a: CompareArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(path) => {
            if a.scale.is_some() {
                return Err(usage("--scale and --config are mutually exclusive"));
            }
            ExperimentSpec::from_toml(&std::fs::read_to_string(path)?)?
        }
        None => {
            let scale = match a.scale.unwrap_or(ScaleArg::Desk) {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Full => Scale::Full,
            };
            learning_comparison_spec(scale, 0)
        }
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.paths {
        spec.paths = n;
    }
    if let Some(n) = a.runs {
        spec.runs_per_path = n;
    }
    if let Some(n) = a.horizon {
        spec.horizon = n;
    }
    let format = match a.out.format.unwrap_or(Format::Json) {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    a.out.write(&evaluate(&spec)?.render(format)?)
}
