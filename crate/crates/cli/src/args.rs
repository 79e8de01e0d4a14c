use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ssg_core::inference::{FreezeRule, GameType, IngestFormat};
use ssg_core::meanfield::{ControlSchedule, Dynamics};
use ssg_core::optctl::SweepMode;
use ssg_core::socialnet::GraphKind;
use ssg_core::ModelParams;
use ssg_server::bots::BotPolicy;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ssg", version, about = "Sustainability game laboratory: simulate, solve, fit and serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the mean-field system under a selection pressure schedule.
    Meanfield(MeanfieldArgs),
    /// Ensemble of agent-based realisations on a network.
    Abm(AbmArgs),
    /// Optimal control of the selection pressure.
    Solve(SolveArgs),
    /// Synthetic two-phase series for the fitting pipeline.
    Synth(SynthArgs),
    /// One in-process bot session; writes its record export.
    Session(SessionArgs),
    /// Fit the critical time to an experiment series or record log.
    Fit(FitArgs),
    /// Run the game server.
    Serve(ServeArgs),
}

/// Model parameters: the reference set, optionally replaced by a JSON
/// file, then overridden flag by flag.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ParamArgs {
    /// JSON parameter file.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// Resource growth rate T.
    #[arg(long = "T")]
    pub growth_rate: Option<f64>,
    /// Number of players.
    #[arg(long = "N")]
    pub n_players: Option<usize>,
    /// Normalised cooperator extraction rate.
    #[arg(long = "ehat-c")]
    pub ehat_c: Option<f64>,
    /// Normalised defector extraction rate.
    #[arg(long = "ehat-d")]
    pub ehat_d: Option<f64>,
    /// Initial resource level.
    #[arg(long)]
    pub r0: Option<f64>,
    /// Initial cooperator fraction.
    #[arg(long)]
    pub x0: Option<f64>,
    /// Time horizon.
    #[arg(long = "tf")]
    pub t_f: Option<f64>,
}

impl ParamArgs {
    /// A zero horizon keeps the base horizon; see [`ParamArgs::horizon`].
    pub fn resolve(&self) -> Result<ModelParams, CliError> {
        let base = match &self.params {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<ModelParams>(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => ModelParams::reference(),
        };
        let t_f = match self.t_f {
            Some(t) if t != 0.0 => t,
            _ => base.t_f,
        };
        ModelParams::from_normalized(
            self.growth_rate.unwrap_or(base.growth_rate),
            self.n_players.unwrap_or(base.n_players),
            self.ehat_c.unwrap_or(base.ehat_c),
            self.ehat_d.unwrap_or(base.ehat_d),
            t_f,
            self.r0.unwrap_or(base.r0),
            self.x0.unwrap_or(base.x0),
        )
        .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn horizon(&self, params: &ModelParams) -> f64 {
        self.t_f.unwrap_or(params.t_f)
    }
}

/// Constant `--w` or a breakpoint list `--schedule t0:w0,t1:w1,...`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ControlArgs {
    /// Constant selection pressure in [-1, 1].
    #[arg(long, allow_negative_numbers = true, conflicts_with = "schedule")]
    pub w: Option<f64>,
    /// Piecewise-constant schedule: comma-separated `start:w` pairs, the
    /// first starting at 0.
    #[arg(long, allow_hyphen_values = true)]
    pub schedule: Option<String>,
}

impl ControlArgs {
    pub fn build(&self, t_f: f64) -> Result<ControlSchedule, CliError> {
        let usage = |m: String| CliError::Usage(m);
        match (&self.w, &self.schedule) {
            (Some(w), None) => ControlSchedule::constant(0.0, t_f, *w).map_err(|e| usage(e.to_string())),
            (None, Some(spec)) => parse_schedule(spec, t_f),
            (None, None) => Err(usage("give --w or --schedule".into())),
            (Some(_), Some(_)) => Err(usage("--w and --schedule are exclusive".into())),
        }
    }
}

pub fn parse_schedule(spec: &str, t_f: f64) -> Result<ControlSchedule, CliError> {
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for part in spec.split(',') {
        let (t, w) = part
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("schedule entry {part:?} is not start:w")))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("schedule entry {part:?}: {s:?} is not a number")))
        };
        grid.push(num(t)?);
        values.push(num(w)?);
    }
    if grid.first() != Some(&0.0) {
        return Err(CliError::Usage("schedule must start at t = 0".into()));
    }
    grid.push(t_f);
    ControlSchedule::new(grid, values).map_err(|e| CliError::Usage(e.to_string()))
}

/// `a..b` (inclusive, integer steps) or a comma-separated list.
pub fn parse_tf_list(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("--tf-list {spec:?}: expected a..b or a comma-separated list"));
    let list = if let Some((a, b)) = spec.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| bad())?;
        let b: i64 = b.trim().parse().map_err(|_| bad())?;
        (a..=b).map(|t| t as f64).collect::<Vec<_>>()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?
    };
    if list.is_empty() || list.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(CliError::Usage(format!("--tf-list {spec:?}: horizons must be > 0")));
    }
    Ok(list)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsArg {
    Coupled,
    FixedStrategy,
    FixedResource,
}

impl From<DynamicsArg> for Dynamics {
    fn from(d: DynamicsArg) -> Self {
        match d {
            DynamicsArg::Coupled => Dynamics::Coupled,
            DynamicsArg::FixedStrategy => Dynamics::FixedStrategy,
            DynamicsArg::FixedResource => Dynamics::FixedResource,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = "ssg-out")]
    pub out: PathBuf,
    /// Also write SVG line plots.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MeanfieldArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    /// RK4 step size.
    #[arg(long, default_value_t = ssg_core::meanfield::DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = DynamicsArg::Coupled)]
    pub dynamics: DynamicsArg,
    /// Report payoff per player instead of collectively.
    #[arg(long)]
    pub per_player: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AbmArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    /// complete, chain, tree, ba or sw.
    #[arg(long, default_value = "complete")]
    pub network: GraphKind,
    /// Target connectivity (edge density).
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    /// Number of realisations.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Master seed; realisation i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop a realisation once R falls below this; 0 disables.
    #[arg(long, default_value_t = ssg_core::abm::DEFAULT_DEPLETION)]
    pub depletion_eps: f64,
    /// Use one network instance for all realisations.
    #[arg(long)]
    pub fixed_graph: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    FixedStrategy,
    FixedResource,
    Piecewise,
    Continuous,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepModeArg {
    FixedStrategy,
    FixedResource,
    Piecewise,
    Continuous,
}

impl From<SweepModeArg> for SweepMode {
    fn from(m: SweepModeArg) -> Self {
        match m {
            SweepModeArg::FixedStrategy => SweepMode::FixedStrategy,
            SweepModeArg::FixedResource => SweepMode::FixedResource,
            SweepModeArg::Piecewise => SweepMode::Piecewise,
            SweepModeArg::Continuous => SweepMode::Continuous,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_enum)]
    pub mode: SolveMode,
    /// Horizons for the sweep: `1..40` or `5,10,20`.
    #[arg(long, default_value = "1..40")]
    pub tf_list: String,
    /// Solver used at every horizon of the sweep.
    #[arg(long, value_enum, default_value_t = SweepModeArg::Continuous)]
    pub mode2: SweepModeArg,
    /// Control intervals; two per unit time when absent.
    #[arg(long)]
    pub grid_m: Option<usize>,
    /// Seed of the random multi-start points.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseArg {
    None,
    Binomial,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// 1 (individual rewards) or 2 (group rewards).
    #[arg(long, default_value = "2")]
    pub game_type: GameType,
    /// Critical time of the two-phase model.
    #[arg(long)]
    pub tau: u32,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, value_enum, default_value_t = NoiseArg::Binomial)]
    pub noise: NoiseArg,
    /// Realisation i draws its noise from seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SessionArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// always_C, always_D or replicator(w).
    #[arg(long, default_value = "replicator(-1)")]
    pub policy: BotPolicy,
    /// Seed of the bots' coin flips.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the game (initial strategies, displayed neighbours).
    #[arg(long, default_value_t = 0)]
    pub game_seed: u64,
    #[arg(long, default_value = "2")]
    pub game_type: GameType,
    #[arg(long, default_value = "complete")]
    pub network: GraphKind,
    #[arg(long = "C", default_value_t = 1.0)]
    pub c: f64,
    /// Resource level that ends the game.
    #[arg(long, default_value_t = ssg_core::abm::DEFAULT_DEPLETION)]
    pub epsilon: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeArg {
    Model,
    Empirical,
}

impl From<FreezeArg> for FreezeRule {
    fn from(f: FreezeArg) -> Self {
        match f {
            FreezeArg::Model => FreezeRule::Model,
            FreezeArg::Empirical => FreezeRule::Empirical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Records,
    Series,
}

impl From<FormatArg> for IngestFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Records => IngestFormat::Records,
            FormatArg::Series => IngestFormat::Series,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Series CSV (`game_id,t,R,x`) or record log (one JSON object per line).
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; `.jsonl` and `.ndjson` files default to records.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub game_type: GameType,
    /// Frozen cooperator fraction: the model's x(tau) or the observed mean.
    #[arg(long, value_enum, default_value_t = FreezeArg::Model)]
    pub freeze: FreezeArg,
    /// Accept x values off the 1/N lattice.
    #[arg(long)]
    pub no_lattice_check: bool,
    #[arg(long, default_value = "")]
    pub site: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    pub listen: Option<String>,
    /// Overrides the configured data directory.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tf_lists() {
        assert_eq!(parse_tf_list("1..3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_tf_list("2.5, 5").unwrap(), vec![2.5, 5.0]);
        assert!(parse_tf_list("0..2").is_err());
        assert!(parse_tf_list("a..b").is_err());
    }

    #[test]
    fn schedules() {
        let s = parse_schedule("0:-1,37.5:1", 40.0).unwrap();
        assert_eq!(s.grid(), &[0.0, 37.5, 40.0]);
        assert_eq!(s.values(), &[-1.0, 1.0]);
        assert!(parse_schedule("1:0", 40.0).is_err());
        assert!(parse_schedule("0:2", 40.0).is_err());
    }

    #[test]
    fn params_override_reference() {
        let p = ParamArgs {
            params: None,
            growth_rate: None,
            n_players: Some(200),
            ehat_c: None,
            ehat_d: None,
            r0: None,
            x0: None,
            t_f: Some(0.0),
        };
        let r = p.resolve().unwrap();
        assert_eq!((r.n_players, r.t_f, r.ehat_d), (200, 40.0, 1.1));
        assert_eq!(p.horizon(&r), 0.0);
    }
}
