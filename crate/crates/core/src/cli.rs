//! `molcap run`: runs a preset or a custom configuration and writes CSV/JSON
//! artifacts.
//!
//! Files per series `<label>`:
//! * `<label>.csv`: `step,reactions_left,optimistic_nodes,pessimistic_nodes`,
//!   averaged over runs;
//! * `<label>_messages.csv`: `cycle,messages_useful,messages_useless`,
//!   averaged over runs;
//! * `<label>_reactions.csv`: reaction log of the first run;
//! * `<label>_trace.csv` with `--trace`: message trace of the first run.
//!
//! Plus `optimum.csv` for the benchmark scenario and `summary.json`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::chemistry::MoleculeId;
use crate::harness::{
    aggregate, run_many, theoretic_optimum, Aggregate, ConfigError, ReactionRecord, RunMode, RunOutput,
    Scenario, SimConfig, TraceRecord,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot read config file {path}: {source}")]
    ConfigFile { path: PathBuf, source: io::Error },
    #[error("malformed config file {path}: {source}")]
    ConfigJson { path: PathBuf, source: serde_json::Error },
    #[error("writing {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(e) => e.exit_code(),
            CliError::Config(_) | CliError::ConfigFile { .. } | CliError::ConfigJson { .. } => 2,
            CliError::Output { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "molcap", version, about = "Atomic molecule capture simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a preset or a custom configuration.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Exp1Modes,
    Exp2ThresholdSweep,
    Exp3Switch,
    Exp4Messages,
    ScenarioCountAggregate,
}

pub const THRESHOLD_SWEEP: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// JSON file with any subset of the configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the message trace of the first run.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    nodes: Option<u32>,
    #[arg(long)]
    molecules: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
    #[arg(long, value_enum)]
    scenario: Option<CliScenario>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    cycle_len: Option<u64>,
    #[arg(long)]
    w_local: Option<usize>,
    #[arg(long)]
    w_remote: Option<usize>,
    #[arg(long)]
    local_weight: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliMode {
    Optimistic,
    Pessimistic,
    Mixed,
}

impl From<CliMode> for RunMode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Optimistic => RunMode::OptimisticOnly,
            CliMode::Pessimistic => RunMode::PessimisticOnly,
            CliMode::Mixed => RunMode::Mixed,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliScenario {
    Benchmark,
    CountAggregate,
}

/// One configuration of a sweep and the file stem its outputs go to.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub config: SimConfig,
}

impl Preset {
    /// Changes the preset makes to the base configuration before flags apply.
    fn base(self, config: &mut SimConfig) {
        if self == Preset::ScenarioCountAggregate {
            config.scenario = Scenario::CountAggregate;
            config.nodes = 4;
            config.runs = 20;
        }
    }

    /// Expands the base configuration into the preset's sweep grid.
    pub fn series(self, base: &SimConfig) -> Vec<Series> {
        let with = |label: String, mode: RunMode, threshold: f64| Series {
            label,
            config: SimConfig { mode, threshold, ..base.clone() },
        };
        let modes = || {
            [RunMode::OptimisticOnly, RunMode::PessimisticOnly, RunMode::Mixed]
                .into_iter()
                .map(|m| with(m.as_str().to_string(), m, base.threshold))
                .collect()
        };
        match self {
            Preset::Exp1Modes | Preset::ScenarioCountAggregate => modes(),
            Preset::Exp2ThresholdSweep => THRESHOLD_SWEEP
                .iter()
                .map(|s| with(format!("threshold-{s}"), RunMode::Mixed, *s))
                .collect(),
            Preset::Exp3Switch | Preset::Exp4Messages => {
                vec![with("mixed".to_string(), RunMode::Mixed, base.threshold)]
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct SeriesSummary<'a> {
    label: &'a str,
    config: &'a SimConfig,
    inertia_fraction: f64,
    steps_to_inertia: &'a crate::harness::metrics::StepStats,
    mean_total_messages: f64,
    total_messages: Vec<u64>,
    total_reactions: Vec<u64>,
    /// Per run: first and last step at which a node switched to pessimism for good.
    switch_windows: Vec<Option<(u64, u64)>>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    preset: Option<String>,
    series: Vec<SeriesSummary<'a>>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let Cli { command: Command::Run(args) } = Cli::try_parse_from(args)?;
    let (preset, series) = plan(&args)?;
    fs::create_dir_all(&args.out).map_err(|source| CliError::Output { path: args.out.clone(), source })?;

    let mut results = Vec::with_capacity(series.len());
    for s in &series {
        let mut first: Option<(Vec<ReactionRecord>, Vec<TraceRecord>)> = None;
        let runs = run_many(&s.config, |out: &RunOutput| {
            if first.is_none() {
                first = Some((out.reactions.clone(), if args.trace { out.trace.clone() } else { Vec::new() }));
            }
        });
        let agg = aggregate(&runs);
        let (reactions, trace) = first.expect("at least one run");
        let out = &args.out;
        write_curves(&out.join(format!("{}.csv", s.label)), &agg)?;
        write_messages(&out.join(format!("{}_messages.csv", s.label)), &agg)?;
        write_reactions(&out.join(format!("{}_reactions.csv", s.label)), &reactions)?;
        if args.trace {
            write_trace(&out.join(format!("{}_trace.csv", s.label)), &trace)?;
        }
        println!(
            "{:<16} runs={} inertia={:.0}% mean_steps={}",
            s.label,
            agg.runs,
            agg.inertia_fraction * 100.0,
            agg.steps_to_inertia.mean.map_or("-".to_string(), |m| format!("{m:.1}")),
        );
        results.push((runs, agg));
    }

    let base = &series[0].config;
    if base.scenario == Scenario::BenchmarkConsume2 {
        let path = args.out.join("optimum.csv");
        let rows = theoretic_optimum(base.nodes, base.molecules)
            .into_iter()
            .enumerate()
            .map(|(t, left)| vec![t.to_string(), left.to_string()]);
        write_csv(&path, &["step", "reactions_left"], rows)?;
    }

    let summary = Summary {
        preset: preset.map(|p| p.to_possible_value().expect("not skipped").get_name().to_string()),
        series: series
            .iter()
            .zip(&results)
            .map(|(s, (runs, agg))| SeriesSummary {
                label: &s.label,
                config: &s.config,
                inertia_fraction: agg.inertia_fraction,
                steps_to_inertia: &agg.steps_to_inertia,
                mean_total_messages: agg.mean_total_messages,
                total_messages: runs.iter().map(|r| r.total_messages).collect(),
                total_reactions: runs.iter().map(|r| r.total_reactions).collect(),
                switch_windows: runs.iter().map(|r| r.switch_window()).collect(),
            })
            .collect(),
    };
    let path = args.out.join("summary.json");
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|source| CliError::Output { path, source })?;
    Ok(())
}

fn plan(args: &RunArgs) -> Result<(Option<Preset>, Vec<Series>), CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::ConfigFile { path: path.clone(), source })?;
            serde_json::from_str(&text).map_err(|source| CliError::ConfigJson { path: path.clone(), source })?
        }
        None => SimConfig::default(),
    };
    if let Some(p) = args.preset {
        p.base(&mut config);
    }
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { config.$field = v.into(); } )* };
    }
    apply!(nodes, molecules, mode, scenario, threshold, seed, runs, max_steps, cycle_len, w_local, w_remote, local_weight);
    config.validate()?;
    let series = match args.preset {
        Some(p) => p.series(&config),
        None => vec![Series { label: config.mode.as_str().to_string(), config }],
    };
    for s in &series {
        s.config.validate()?;
    }
    Ok((args.preset, series))
}

impl From<CliScenario> for Scenario {
    fn from(s: CliScenario) -> Self {
        match s {
            CliScenario::Benchmark => Scenario::BenchmarkConsume2,
            CliScenario::CountAggregate => Scenario::CountAggregate,
        }
    }
}

fn write_csv<R, S>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), CliError>
where
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let io_err = |source: io::Error| CliError::Output { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    let csv_err = |e: csv::Error| io_err(e.into());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn write_curves(path: &Path, agg: &Aggregate) -> Result<(), CliError> {
    let rows = (0..agg.reactions_left.len()).map(|t| {
        [
            t.to_string(),
            agg.reactions_left[t].to_string(),
            agg.optimistic_nodes[t].to_string(),
            agg.pessimistic_nodes[t].to_string(),
        ]
    });
    write_csv(path, &["step", "reactions_left", "optimistic_nodes", "pessimistic_nodes"], rows)
}

fn write_messages(path: &Path, agg: &Aggregate) -> Result<(), CliError> {
    let rows = agg
        .messages_useful
        .iter()
        .zip(&agg.messages_useless)
        .enumerate()
        .map(|(c, (u, w))| [c.to_string(), u.to_string(), w.to_string()]);
    write_csv(path, &["cycle", "messages_useful", "messages_useless"], rows)
}

fn join_ids(ids: &[MoleculeId]) -> String {
    ids.iter().map(|id| id.0.to_string()).collect::<Vec<_>>().join(";")
}

fn write_reactions(path: &Path, log: &[ReactionRecord]) -> Result<(), CliError> {
    let rows = log.iter().map(|r| {
        [r.step.to_string(), r.requester.0.to_string(), r.rule.to_string(), join_ids(&r.consumed), join_ids(&r.produced)]
    });
    write_csv(path, &["step", "requester_node", "rule_name", "consumed_ids", "produced_ids"], rows)
}

fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), CliError> {
    let rows = trace.iter().map(|t| {
        [
            t.step.to_string(),
            t.from.0.to_string(),
            t.to.0.to_string(),
            t.kind.as_str().to_string(),
            t.molecule.0.to_string(),
            t.attempt.0.to_string(),
            t.request_type.as_str().to_string(),
        ]
    });
    write_csv(path, &["step", "from", "to", "kind", "molecule_id", "attempt_id", "request_type"], rows)
}

/// Entry point for the binary: runs and maps errors to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(CliError::Usage(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(e) => {
            let _ = writeln!(io::stderr(), "molcap: {e}");
            e.exit_code()
        }
    }
}
