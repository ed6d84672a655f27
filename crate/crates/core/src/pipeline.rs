//! End-to-end runs behind each command-line subcommand. Every function here
//! is a pure map from loaded inputs and options to report bytes, so two runs
//! with the same inputs and seed produce the same output.

use std::time::Instant;

use crate::baselines::{baseline_report, DEFAULT_PR_K};
use crate::error::{FldError, Result};
use crate::io::{experiment_csv, ranking_csv};
use crate::metrics::{
    calibrate, fidelity_ranking, fld_with_model, memorization_ranking, memorization_threshold,
    prepare_splits, CalibrationConstant, PreparedSplits, RankingKind, SampleRanking,
    DEFAULT_THRESHOLD_PERCENTILE,
};
use crate::mog::FitConfig;
use crate::report::{ConfigEcho, DatasetBundle, MetricReport, RankingPair, SourceEntry, StageTiming};
use crate::seed::{derive, Stream};
use crate::synth::{run_experiment, ExperimentKind, ExperimentParams};
use crate::tensor::FeatureMatrix;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Below these sizes the estimate is noisy; callers warn but carry on.
pub const WARN_GEN_ROWS: usize = 1000;
pub const WARN_TEST_ROWS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Calibration {
    /// Estimate `C` from a seeded half-split of train.
    Split,
    Fixed(f64),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub standardize: bool,
    /// `seed` is overwritten by the fan-out of [`RunOptions::seed`].
    pub fit: FitConfig,
    pub calibration: Calibration,
    pub baselines: bool,
    pub pr_k: usize,
    pub rankings: bool,
    pub threshold_percentile: f64,
    pub timings: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            standardize: true,
            fit: FitConfig::default(),
            calibration: Calibration::Split,
            baselines: true,
            pr_k: DEFAULT_PR_K,
            rankings: false,
            threshold_percentile: DEFAULT_THRESHOLD_PERCENTILE,
            timings: false,
        }
    }
}

impl RunOptions {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            seed: derive(self.seed, Stream::Batching),
            ..self.fit.clone()
        }
    }

    pub fn calibration_seed(&self) -> u64 {
        derive(self.seed, Stream::Calibration)
    }

    pub fn threshold_seed(&self) -> u64 {
        derive(self.seed, Stream::Threshold)
    }

    fn echo(&self, calibrated: bool, pr_k: bool, threshold: bool) -> ConfigEcho {
        ConfigEcho {
            tool_version: TOOL_VERSION.to_string(),
            seed: self.seed,
            standardize: self.standardize,
            fit: self.fit_config(),
            calibration_seed: calibrated.then(|| self.calibration_seed()),
            pr_k: pr_k.then_some(self.pr_k),
            threshold_seed: threshold.then(|| self.threshold_seed()),
            threshold_percentile: threshold.then_some(self.threshold_percentile),
        }
    }
}

/// Human-readable warnings about small inputs.
pub fn size_warnings(test: &FeatureMatrix, gen: Option<&FeatureMatrix>) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(gen) = gen {
        if gen.rows() < WARN_GEN_ROWS {
            out.push(format!(
                "only {} generated rows; FLD is noisy below {WARN_GEN_ROWS}",
                gen.rows()
            ));
        }
    }
    if test.rows() < WARN_TEST_ROWS {
        out.push(format!(
            "only {} test rows; FLD is noisy below {WARN_TEST_ROWS}",
            test.rows()
        ));
    }
    out
}

struct Stopwatch {
    enabled: bool,
    last: Instant,
    stages: Vec<StageTiming>,
}

impl Stopwatch {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            last: Instant::now(),
            stages: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        if self.enabled {
            let now = Instant::now();
            self.stages.push(StageTiming {
                stage: stage.to_string(),
                seconds: (now - self.last).as_secs_f64(),
            });
            self.last = now;
        }
    }

    fn finish(self) -> Option<Vec<StageTiming>> {
        self.enabled.then_some(self.stages)
    }
}

fn prepared(bundle: &DatasetBundle, opts: &RunOptions) -> Result<PreparedSplits> {
    prepare_splits(&bundle.train, &bundle.test, &bundle.gen, opts.standardize)
}

fn constant_for(train: &FeatureMatrix, test: &FeatureMatrix, opts: &RunOptions) -> Result<CalibrationConstant> {
    match opts.calibration {
        Calibration::Split => calibrate(train, test, &opts.fit_config(), opts.calibration_seed()),
        Calibration::Fixed(c) => Ok(CalibrationConstant::fixed(c)),
        Calibration::None => Ok(CalibrationConstant::none()),
    }
}

/// The `fld` subcommand: FLD, gap, optional baselines and rankings.
pub fn fld_report(bundle: &DatasetBundle, opts: &RunOptions) -> Result<MetricReport> {
    let mut clock = Stopwatch::new(opts.timings);
    let s = prepared(bundle, opts)?;
    clock.lap("prepare");
    let constant = constant_for(&s.train, &s.test, opts)?;
    clock.lap("calibrate");
    let cfg = opts.fit_config();
    let (result, model) = fld_with_model(&s.test, &s.gen, &s.train, &cfg, constant)?;
    clock.lap("fld");
    let baselines = if opts.baselines {
        let b = baseline_report(&s.train, &s.test, &s.gen, opts.pr_k)?;
        clock.lap("baselines");
        Some(b)
    } else {
        None
    };
    let rankings = if opts.rankings {
        let log_delta = memorization_threshold(&s.train, &cfg, opts.threshold_seed(), opts.threshold_percentile)?;
        let memorization = memorization_ranking(&model, &s.train, Some(log_delta))?;
        let fidelity = fidelity_ranking(&s.gen, &s.test, &s.train, &cfg)?;
        clock.lap("rankings");
        Some(RankingPair {
            memorization: Some(memorization),
            fidelity: Some(fidelity),
        })
    } else {
        None
    };
    Ok(MetricReport {
        inputs: bundle.manifest.clone(),
        config: opts.echo(
            opts.calibration == Calibration::Split,
            opts.baselines,
            opts.rankings,
        ),
        calibration: None,
        overfitting: Some(result.is_overfitting()),
        fld: Some(result),
        baselines,
        rankings,
        timings: clock.finish(),
    })
}

/// The `baselines` subcommand.
pub fn baselines_report(bundle: &DatasetBundle, opts: &RunOptions) -> Result<MetricReport> {
    let mut clock = Stopwatch::new(opts.timings);
    let s = prepared(bundle, opts)?;
    clock.lap("prepare");
    let b = baseline_report(&s.train, &s.test, &s.gen, opts.pr_k)?;
    clock.lap("baselines");
    Ok(MetricReport {
        inputs: bundle.manifest.clone(),
        config: opts.echo(false, true, false),
        calibration: None,
        fld: None,
        overfitting: None,
        baselines: Some(b),
        rankings: None,
        timings: clock.finish(),
    })
}

/// The `calibrate` subcommand. `manifest` describes the two inputs.
pub fn calibration_report(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    manifest: Vec<SourceEntry>,
    opts: &RunOptions,
) -> Result<MetricReport> {
    let mut clock = Stopwatch::new(opts.timings);
    // The generated slot is unused; test stands in so the shapes line up.
    let s = prepare_splits(train, test, test, opts.standardize)?;
    clock.lap("prepare");
    let c = calibrate(&s.train, &s.test, &opts.fit_config(), opts.calibration_seed())?;
    clock.lap("calibrate");
    Ok(MetricReport {
        inputs: manifest,
        config: opts.echo(true, false, false),
        calibration: Some(c),
        fld: None,
        overfitting: None,
        baselines: None,
        rankings: None,
        timings: clock.finish(),
    })
}

/// The `rank` subcommand: the ranking itself and its CSV rendering.
pub fn rank(
    bundle: &DatasetBundle,
    kind: RankingKind,
    top: Option<usize>,
    opts: &RunOptions,
) -> Result<(SampleRanking, Vec<u8>)> {
    let s = prepared(bundle, opts)?;
    let cfg = opts.fit_config();
    let ranking = match kind {
        RankingKind::Memorization => {
            let model = crate::mog::fit(&s.gen, &s.train, &cfg)?;
            let log_delta = memorization_threshold(&s.train, &cfg, opts.threshold_seed(), opts.threshold_percentile)?;
            memorization_ranking(&model, &s.train, Some(log_delta))?
        }
        RankingKind::Fidelity => fidelity_ranking(&s.gen, &s.test, &s.train, &cfg)?,
    };
    // Ids come from the unstandardized input.
    let csv = ranking_csv(&ranking, &bundle.gen, top)?;
    Ok((ranking, csv))
}

/// The `synth` subcommand: one sweep rendered as CSV.
pub fn synth_table(kind: ExperimentKind, params: &ExperimentParams) -> Result<Vec<u8>> {
    if params.grid.is_empty() {
        return Err(FldError::config("experiment grid is empty"));
    }
    experiment_csv(&run_experiment(kind, params)?)
}
