//! FLD and the diagnostics built on the same density estimator: the
//! calibration constant, the train/test generalization gap, per-sample
//! memorization scores `O_j` and fidelity scores `Q_j`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FldError, Result};
use crate::mog::{self, FitConfig, MoGModel};
use crate::tensor::{fit_standardizer, FeatureMatrix, Role, StandardizationParams};

/// Percentile of surrogate `log O_j` used as the default memorization threshold.
pub const DEFAULT_THRESHOLD_PERCENTILE: f64 = 99.9;

/// Smallest train set accepted by [`calibrate`].
pub const MIN_CALIBRATION_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    TrainSplit,
    None,
}

/// Additive offset that brings an ideal generator's FLD to about zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConstant {
    pub c_value: f64,
    pub method: CalibrationMethod,
    pub split_seed: u64,
}

impl CalibrationConstant {
    pub fn none() -> Self {
        Self {
            c_value: 0.0,
            method: CalibrationMethod::None,
            split_seed: 0,
        }
    }

    /// A user-supplied constant.
    pub fn fixed(c_value: f64) -> Self {
        Self {
            c_value,
            method: CalibrationMethod::None,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FldResult {
    pub fld_test: f64,
    pub fld_train: f64,
    /// `fld_train - fld_test`; negative means the generator overfits.
    pub gen_gap: f64,
    /// Negative mean test log-likelihood per dimension, before scaling.
    pub raw_nll_test: f64,
    pub constant: CalibrationConstant,
}

impl FldResult {
    pub fn is_overfitting(&self) -> bool {
        self.gen_gap < 0.0
    }
}

/// `-(100/d) * mean log p(query) - c`
pub fn score(model: &MoGModel, query: &FeatureMatrix, c: f64) -> Result<f64> {
    let mean_ll = mog::mean_log_likelihood(model, query)?;
    Ok(-(100.0 / model.dim() as f64) * mean_ll - c)
}

/// FLD of `gen` against `test`, with bandwidths fit on `train`.
pub fn fld(
    test: &FeatureMatrix,
    gen: &FeatureMatrix,
    train: &FeatureMatrix,
    cfg: &FitConfig,
    c: CalibrationConstant,
) -> Result<FldResult> {
    fld_with_model(test, gen, train, cfg, c).map(|(r, _)| r)
}

/// [`fld`], also returning the fitted mixture.
pub fn fld_with_model(
    test: &FeatureMatrix,
    gen: &FeatureMatrix,
    train: &FeatureMatrix,
    cfg: &FitConfig,
    c: CalibrationConstant,
) -> Result<(FldResult, MoGModel)> {
    fld_held_out(test, gen, train, train, cfg, c)
}

/// Like [`fld_with_model`], but the train side of the gap is evaluated on
/// `gap_train` rather than on the rows used to fit the bandwidths.
pub fn fld_held_out(
    test: &FeatureMatrix,
    gen: &FeatureMatrix,
    fit_train: &FeatureMatrix,
    gap_train: &FeatureMatrix,
    cfg: &FitConfig,
    c: CalibrationConstant,
) -> Result<(FldResult, MoGModel)> {
    gen.ensure_same_dim(test)?;
    gen.ensure_same_dim(fit_train)?;
    gen.ensure_same_dim(gap_train)?;
    let model = mog::fit(gen, fit_train, cfg)?;
    let mean_ll_test = mog::mean_log_likelihood(&model, test)?;
    let d = model.dim() as f64;
    let fld_test = -(100.0 / d) * mean_ll_test - c.c_value;
    let fld_train = score(&model, gap_train, c.c_value)?;
    let result = FldResult {
        fld_test,
        fld_train,
        gen_gap: fld_train - fld_test,
        raw_nll_test: -mean_ll_test / d,
        constant: c,
    };
    Ok((result, model))
}

/// Seeded half-split of the train rows: `(centers, fit)`. The first half
/// stands in for a perfect generator.
pub fn calibration_split(train: &FeatureMatrix, seed: u64) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if train.rows() < 2 {
        return Err(FldError::data("calibration split needs at least 2 train rows"));
    }
    let mut order: Vec<usize> = (0..train.rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = train.rows() / 2;
    let centers = train.select_rows(&order[..half])?.with_role(Role::Baseline);
    let fit = train.select_rows(&order[half..])?;
    Ok((centers, fit))
}

/// Estimate the calibration constant from a half-split of `train`.
pub fn calibrate(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    cfg: &FitConfig,
    seed: u64,
) -> Result<CalibrationConstant> {
    calibrate_with_model(train, test, cfg, seed).map(|(c, _)| c)
}

/// [`calibrate`], also returning the surrogate mixture.
pub fn calibrate_with_model(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    cfg: &FitConfig,
    seed: u64,
) -> Result<(CalibrationConstant, MoGModel)> {
    train.ensure_same_dim(test)?;
    if train.rows() < MIN_CALIBRATION_ROWS {
        return Err(FldError::data(format!(
            "calibration needs at least {MIN_CALIBRATION_ROWS} train rows, got {}",
            train.rows()
        )));
    }
    let (centers, fit_rows) = calibration_split(train, seed)?;
    let model = mog::fit(&centers, &fit_rows, cfg)?;
    let c_value = score(&model, test, 0.0)?;
    if !c_value.is_finite() {
        return Err(FldError::Numerical {
            component: None,
            detail: format!("calibration constant evaluated to {c_value}"),
        });
    }
    let constant = CalibrationConstant {
        c_value,
        method: CalibrationMethod::TrainSplit,
        split_seed: seed,
    };
    Ok((constant, model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingKind {
    Memorization,
    Fidelity,
}

/// Per-generated-sample log scores and their descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRanking {
    pub kind: RankingKind,
    pub scores: Vec<f64>,
    /// Indices into `scores`, highest score first; ties keep index order.
    pub order: Vec<usize>,
    /// Log-space threshold, when one was applied.
    pub threshold: Option<f64>,
    /// `scores[j] > threshold`, when a threshold was applied.
    pub flagged: Option<Vec<bool>>,
}

impl SampleRanking {
    fn new(kind: RankingKind, scores: Vec<f64>, threshold: Option<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let flagged = threshold.map(|t| scores.iter().map(|s| *s > t).collect());
        Self {
            kind,
            scores,
            order,
            threshold,
            flagged,
        }
    }

    /// 1-based rank of sample `j`.
    pub fn rank_of(&self, j: usize) -> usize {
        self.order.iter().position(|&k| k == j).map_or(0, |p| p + 1)
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged
            .as_ref()
            .map_or(0, |f| f.iter().filter(|x| **x).count())
    }
}

/// Rank generated samples by `log O_j`, the largest train density their
/// fitted component assigns. `log_delta` flags `log O_j > log_delta`.
pub fn memorization_ranking(
    model: &MoGModel,
    train: &FeatureMatrix,
    log_delta: Option<f64>,
) -> Result<SampleRanking> {
    let scores = mog::per_component_max_train_density(model, train)?;
    Ok(SampleRanking::new(RankingKind::Memorization, scores, log_delta))
}

/// Default memorization threshold: the given percentile of `log O_j` under
/// the calibration surrogate, where no component is a copy by construction.
pub fn memorization_threshold(
    train: &FeatureMatrix,
    cfg: &FitConfig,
    seed: u64,
    percentile: f64,
) -> Result<f64> {
    let (centers, fit_rows) = calibration_split(train, seed)?;
    let model = mog::fit(&centers, &fit_rows, cfg)?;
    let scores = mog::per_component_max_train_density(&model, &fit_rows)?;
    percentile_of(&scores, percentile)
}

/// Rank generated samples by `log Q_j`, their density under a mixture
/// centered at the test rows with bandwidths fit on `train`.
pub fn fidelity_ranking(
    gen: &FeatureMatrix,
    test: &FeatureMatrix,
    train: &FeatureMatrix,
    cfg: &FitConfig,
) -> Result<SampleRanking> {
    gen.ensure_same_dim(test)?;
    let model = mog::fit(test, train, cfg)?;
    let scores = mog::log_likelihood(&model, gen)?;
    Ok(SampleRanking::new(RankingKind::Fidelity, scores, None))
}

/// Linear-interpolation percentile (`p` in `[0, 100]`).
pub fn percentile_of(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(FldError::data("percentile of an empty vector"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(FldError::config(format!("percentile must lie in [0, 100], got {p}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// The three splits after optional standardization with train statistics.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub gen: FeatureMatrix,
    pub standardizer: Option<StandardizationParams>,
}

pub fn prepare_splits(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    gen: &FeatureMatrix,
    standardize: bool,
) -> Result<PreparedSplits> {
    train.ensure_same_dim(test)?;
    train.ensure_same_dim(gen)?;
    if !standardize {
        return Ok(PreparedSplits {
            train: train.clone(),
            test: test.clone(),
            gen: gen.clone(),
            standardizer: None,
        });
    }
    let p = fit_standardizer(train);
    Ok(PreparedSplits {
        train: p.apply(train)?,
        test: p.apply(test)?,
        gen: p.apply(gen)?,
        standardizer: Some(p),
    })
}
