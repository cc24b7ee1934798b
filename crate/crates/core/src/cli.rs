//! Command-line interface.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 initializer
//! exhaustion.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::entropy::{measure_entropy, Normalization};
use crate::envs::EnvId;
use crate::harness::{csv_writer, load_config, run_study, RunOptions, StudyKind};
use crate::initializer::{
    default_threshold, entropy_aware_init_with, measurement_seed, AttemptRecord,
    CandidateSource, InitConfig, RolloutCandidates, DEFAULT_ACTORS, DEFAULT_HORIZON,
    DEFAULT_MAX_ATTEMPTS,
};
use crate::policy::{restore, snapshot, InitKind, InitScheme, PolicyModel};
use crate::trainer::{train, Algo, TrainConfig};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "entroseed", version, about = "Entropy-aware policy initialization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure the mean initial entropy of a model.
    MeasureEntropy(MeasureArgs),
    /// Draw initializations until one clears the entropy threshold.
    Init(InitArgs),
    /// Train a model snapshot and write its learning curve.
    Train(TrainArgs),
    /// Run a multi-seed study from a config file.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    #[arg(long, default_value = "scaled_normal")]
    pub init_kind: InitKind,
    #[arg(long, default_value_t = InitScheme::default().hidden_gain)]
    pub hidden_gain: f64,
    #[arg(long, default_value_t = InitScheme::default().output_gain)]
    pub output_gain: f64,
}

impl SchemeArgs {
    fn scheme(&self) -> InitScheme {
        InitScheme {
            kind: self.init_kind,
            hidden_gain: self.hidden_gain,
            output_gain: self.output_gain,
        }
    }
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub env: String,
    /// Snapshot to measure.
    #[arg(long, conflicts_with = "init_seed", required_unless_present = "init_seed")]
    pub model: Option<PathBuf>,
    /// Measure a fresh initialization with this seed instead of a snapshot.
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value_t = DEFAULT_ACTORS)]
    pub actors: usize,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: usize,
    /// Rollout seed; defaults to the model's measurement seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = NormArg::Shannon)]
    pub normalization: NormArg,
    /// Per-step entropy CSV; the summary goes next to it as `<stem>.summary.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    Shannon,
    PaperNormalized,
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Shannon => Normalization::Shannon,
            NormArg::PaperNormalized => Normalization::PaperNormalized,
        }
    }
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub env: String,
    /// Acceptance threshold in nats; defaults to `min(0.5, 0.5 ln |A|)`.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ACTORS)]
    pub actors: usize,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: usize,
    #[arg(long, value_enum, default_value_t = NormArg::Shannon)]
    pub normalization: NormArg,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Snapshot of the accepted model.
    #[arg(long)]
    pub out: PathBuf,
    /// Attempt log CSV; defaults to `<out stem>.attempts.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Write every timing column as 0.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub env: String,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "ppo")]
    pub algo: Algo,
    #[arg(long)]
    pub out_curve: PathBuf,
    /// Optional snapshot of the trained model.
    #[arg(long)]
    pub out_model: Option<PathBuf>,
    /// Write every timing column as 0.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// histogram, scatter, seed-table or comparison.
    pub kind: StudyKind,
    #[arg(long)]
    pub config: PathBuf,
    /// Write every timing column as 0.
    #[arg(long)]
    pub no_timing: bool,
}

/// Parses the process arguments, runs the command, and returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Exhausted { .. } => EXIT_EXHAUSTED,
        Error::Usage(_) | Error::Config(_) | Error::Schema(_) => EXIT_USAGE,
        _ => EXIT_ERROR,
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::MeasureEntropy(args) => measure(args),
        Command::Init(args) => init(args),
        Command::Train(args) => train_command(args),
        Command::Study(args) => study(args),
    }
}

fn read_model(path: &Path) -> Result<PolicyModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    restore(&text)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn measure(args: MeasureArgs) -> Result<()> {
    let model = match (&args.model, args.init_seed) {
        (Some(path), _) => read_model(path)?,
        (None, Some(seed)) => {
            let mut cfg = InitConfig::new(&args.env)?;
            cfg.scheme = args.scheme.scheme();
            cfg.build_model(seed)?
        }
        (None, None) => return Err(Error::Usage("give --model or --init-seed".into())),
    };
    let seed = args.seed.unwrap_or_else(|| measurement_seed(model.seed()));
    let report = measure_entropy(&model, &args.env, args.actors, args.horizon, seed, args.normalization.into())?;
    report.write_csv(&args.out)?;
    report.write_summary(&sibling(&args.out, ".summary.json"))?;
    println!("{}", report.mean);
    Ok(())
}

#[derive(Serialize)]
struct AttemptLine {
    attempt: usize,
    seed: u64,
    entropy: f64,
    elapsed_sec: f64,
}

/// Wraps the rollout source to keep every attempt for the log, including
/// those of an exhausted run.
struct Logged {
    inner: RolloutCandidates,
    started: Instant,
    seen: Vec<(u64, f64, f64)>,
}

impl CandidateSource for Logged {
    fn candidate(&mut self, config: &InitConfig, seed: u64) -> Result<(PolicyModel, f64)> {
        let (model, h) = self.inner.candidate(config, seed)?;
        self.seen.push((seed, h, self.started.elapsed().as_secs_f64()));
        Ok((model, h))
    }
}

fn write_attempt_log(path: &Path, log: &[AttemptRecord], no_timing: bool) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in log {
        w.serialize(AttemptLine {
            attempt: r.attempt + 1,
            seed: r.seed,
            entropy: r.entropy,
            elapsed_sec: if no_timing { 0.0 } else { r.seconds },
        })?;
    }
    w.flush().map_err(|e| Error::storage(path, e))
}

fn init(args: InitArgs) -> Result<()> {
    let mut cfg = InitConfig::new(&args.env)?;
    let id: EnvId = args.env.parse()?;
    cfg.threshold = args.threshold.unwrap_or_else(|| default_threshold(&id.action_space()));
    cfg.actors = args.actors;
    cfg.horizon = args.horizon;
    cfg.base_seed = args.seed;
    cfg.max_attempts = args.max_attempts;
    cfg.normalization = args.normalization.into();
    cfg.scheme = args.scheme.scheme();
    let log_path = args.log.clone().unwrap_or_else(|| sibling(&args.out, ".attempts.csv"));

    let mut source = Logged {
        inner: RolloutCandidates,
        started: Instant::now(),
        seen: Vec::new(),
    };
    match entropy_aware_init_with(&cfg, &mut source) {
        Ok(outcome) => {
            write_attempt_log(&log_path, &outcome.log, args.no_timing)?;
            std::fs::write(&args.out, snapshot(&outcome.model)).map_err(|e| Error::storage(&args.out, e))?;
            println!(
                "accepted attempt {} entropy {}",
                outcome.attempts(),
                outcome.accepted_entropy()
            );
            Ok(())
        }
        Err(err @ Error::Exhausted { .. }) => {
            let log: Vec<AttemptRecord> = source
                .seen
                .iter()
                .enumerate()
                .map(|(i, &(seed, entropy, seconds))| AttemptRecord {
                    attempt: i,
                    seed,
                    entropy,
                    seconds,
                })
                .collect();
            write_attempt_log(&log_path, &log, args.no_timing)?;
            Err(err)
        }
        Err(e) => Err(e),
    }
}

#[derive(Serialize)]
struct CurveLine {
    iteration: usize,
    mean_return: f64,
    episodes: usize,
    elapsed_sec: f64,
}

fn train_command(args: TrainArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let config = TrainConfig {
        iterations: args.iters,
        algo: args.algo,
        ..TrainConfig::default()
    };
    let (trained, curve) = train(&model, &args.env, &config, args.seed)?;
    let mut w = csv_writer(&args.out_curve)?;
    for (i, (&mean_return, &episodes)) in curve.mean_returns.iter().zip(&curve.episodes).enumerate() {
        w.serialize(CurveLine {
            iteration: i,
            mean_return,
            episodes,
            elapsed_sec: if args.no_timing { 0.0 } else { curve.elapsed[i] },
        })?;
    }
    w.flush().map_err(|e| Error::storage(&args.out_curve, e))?;
    if let Some(path) = &args.out_model {
        std::fs::write(path, snapshot(&trained)).map_err(|e| Error::storage(path, e))?;
    }
    println!("final_reward {}", curve.final_reward);
    Ok(())
}

fn study(args: StudyArgs) -> Result<()> {
    let spec = load_config(&args.config)?;
    if spec.study_kind != args.kind {
        return Err(Error::Usage(format!(
            "config describes a {} study, not {}",
            spec.study_kind, args.kind
        )));
    }
    let result = run_study(&spec, RunOptions { no_timing: args.no_timing })?;
    for s in &result.summary {
        println!(
            "{}: runs {} failures {} exhausted {} mean_attempts {}",
            s.arm, s.runs, s.failure_count, s.exhausted_count, s.mean_attempts
        );
    }
    println!("results in {}", result.output_dir.display());
    Ok(())
}
