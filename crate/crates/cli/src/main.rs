//! `fld`: evaluate generated samples from feature files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fld_core::metrics::RankingKind;
use fld_core::pipeline::{self, Calibration, RunOptions};
use fld_core::report::{load_source, write_output, DatasetBundle};
use fld_core::synth::{ExperimentKind, ExperimentParams};
use fld_core::{FitConfig, FldError, Role};

#[derive(Parser)]
#[command(name = "fld", version, about = "Feature likelihood divergence and baseline metrics for generative models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// FLD, generalization gap and (by default) the baseline metrics.
    Fld(FldArgs),
    /// Rank generated samples by memorization or fidelity score.
    Rank(RankArgs),
    /// FID, precision/recall, C_T and AuthPct only.
    Baselines(BaselineArgs),
    /// Run a two-moons sweep and write its table as CSV.
    Synth(SynthArgs),
    /// Estimate the calibration constant from a half-split of train.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    gen: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Skip standardization with train statistics.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 10_000)]
    batch_size: usize,
    /// Global seed; sub-seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            standardize: !self.no_standardize,
            fit: FitConfig {
                lr: self.lr,
                epochs: self.epochs,
                batch_size: self.batch_size,
                ..FitConfig::default()
            },
            ..RunOptions::default()
        }
    }
}

#[derive(Args)]
struct FldArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    fit: FitArgs,
    /// Estimate C from a half-split of train.
    #[arg(long, conflicts_with = "constant")]
    calibrate: bool,
    /// Use a known calibration constant.
    #[arg(long, allow_negative_numbers = true)]
    constant: Option<f64>,
    #[arg(long)]
    no_baselines: bool,
    /// Neighbors for precision/recall.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Attach memorization and fidelity rankings.
    #[arg(long)]
    rankings: bool,
    /// Add per-stage wall-clock timings (the report is then not reproducible).
    #[arg(long)]
    timings: bool,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Memorization,
    Fidelity,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    fit: FitArgs,
    /// Keep only the K highest-scoring samples.
    #[arg(long)]
    top: Option<usize>,
    /// Percentile of calibration scores used as the memorization threshold.
    #[arg(long, default_value_t = 99.9)]
    threshold_percentile: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    KdeUshape,
    CopyInjection,
    Duplication,
}

impl From<ExperimentArg> for ExperimentKind {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::KdeUshape => ExperimentKind::KdeUShape,
            ExperimentArg::CopyInjection => ExperimentKind::CopyInjection,
            ExperimentArg::Duplication => ExperimentKind::DuplicationDiversity,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    experiment: ExperimentArg,
    /// Comma-separated knob values (bandwidths, copy fractions or
    /// duplication factors).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Generated rows per grid point.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 3000)]
    n_total: usize,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1e-4)]
    jitter_var: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    no_calibrate: bool,
    #[arg(long)]
    no_baselines: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
    /// Also write the full JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn warn(lines: Vec<String>) {
    for line in lines {
        eprintln!("warning: {line}");
    }
}

fn load(inputs: &Inputs) -> fld_core::Result<DatasetBundle> {
    let bundle = DatasetBundle::load(&inputs.train, &inputs.test, &inputs.gen)?;
    warn(pipeline::size_warnings(&bundle.test, Some(&bundle.gen)));
    Ok(bundle)
}

fn run_fld(a: &FldArgs) -> fld_core::Result<()> {
    let bundle = load(&a.inputs)?;
    let opts = RunOptions {
        calibration: match (a.calibrate, a.constant) {
            (_, Some(c)) => Calibration::Fixed(c),
            (true, None) => Calibration::Split,
            (false, None) => Calibration::None,
        },
        baselines: !a.no_baselines,
        pr_k: a.k,
        rankings: a.rankings,
        timings: a.timings,
        ..a.fit.options()
    };
    let report = pipeline::fld_report(&bundle, &opts)?;
    write_output(a.out.as_ref(), &report.to_json()?)
}

fn run_rank(a: &RankArgs) -> fld_core::Result<()> {
    let bundle = load(&a.inputs)?;
    let kind = match a.kind {
        KindArg::Memorization => RankingKind::Memorization,
        KindArg::Fidelity => RankingKind::Fidelity,
    };
    let opts = RunOptions {
        threshold_percentile: a.threshold_percentile,
        ..a.fit.options()
    };
    let (_, csv) = pipeline::rank(&bundle, kind, a.top, &opts)?;
    write_output(a.out.as_ref(), &csv)
}

fn run_baselines(a: &BaselineArgs) -> fld_core::Result<()> {
    let bundle = load(&a.inputs)?;
    let opts = RunOptions {
        standardize: !a.no_standardize,
        pr_k: a.k,
        timings: a.timings,
        ..RunOptions::default()
    };
    let report = pipeline::baselines_report(&bundle, &opts)?;
    write_output(a.out.as_ref(), &report.to_json()?)
}

fn run_synth(a: &SynthArgs) -> fld_core::Result<()> {
    let kind = ExperimentKind::from(a.experiment);
    let mut params = ExperimentParams::defaults(kind);
    if let Some(grid) = &a.grid {
        params.grid = grid.clone();
    }
    if let Some(m) = a.m {
        params.m = m;
    }
    params.moons.n_total = a.n_total;
    params.moons.n_train = a.n_train;
    params.moons.n_test = a.n_test;
    params.moons.noise = a.noise;
    params.moons.seed = a.seed;
    params.jitter_var = a.jitter_var;
    params.seed = a.seed;
    params.standardize = !a.no_standardize;
    params.calibrate = !a.no_calibrate;
    params.baselines = !a.no_baselines;
    let csv = pipeline::synth_table(kind, &params)?;
    write_output(a.out.as_ref(), &csv)
}

fn run_calibrate(a: &CalibrateArgs) -> fld_core::Result<()> {
    let (train, e_train) = load_source(&a.train, Role::Train)?;
    let (test, e_test) = load_source(&a.test, Role::Test)?;
    warn(pipeline::size_warnings(&test, None));
    let report = pipeline::calibration_report(&train, &test, vec![e_train, e_test], &a.fit.options())?;
    let c = report.calibration.as_ref().map_or(f64::NAN, |c| c.c_value);
    if let Some(out) = &a.out {
        write_output(Some(out), &report.to_json()?)?;
    }
    println!("{}", fld_core::io::format_sig17(c));
    Ok(())
}

fn describe(path: Option<&Path>) -> String {
    path.map(|p| format!(" ({})", p.display())).unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = match &cli.command {
        Command::Fld(a) => (run_fld(a), a.out.as_deref()),
        Command::Rank(a) => (run_rank(a), a.out.as_deref()),
        Command::Baselines(a) => (run_baselines(a), a.out.as_deref()),
        Command::Synth(a) => (run_synth(a), a.out.as_deref()),
        Command::Calibrate(a) => (run_calibrate(a), a.out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error{}: {e}", describe(out));
            if let FldError::Fit { trace, .. } = &e {
                eprintln!("objective trace before failure: {trace:?}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
