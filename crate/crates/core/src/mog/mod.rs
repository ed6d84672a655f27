//! Mixture of isotropic Gaussians with centers pinned to a sample set and one
//! variance per component, fit by Adam on the negative log-likelihood of a
//! separate training set.
//!
//! Each component `j` is `N(center_j, exp(log_var_j) I_d)`. Variances are
//! optimized in log space, so a memorized center drives its `log_var` toward
//! very negative values instead of hitting zero. Every density is handled
//! as a log-density from end to end: with `d` in the hundreds `sigma^-d`
//! leaves the `f64` range long before anything interesting happens.
//!
//! The training objective adds a per-row base likelihood `L_i` to the mixture
//! density. Without it, train rows far from every center receive an
//! exponentially small likelihood and dominate the gradient.

mod adam;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FldError, Result};
use crate::tensor::{log_add_exp, lse, pairwise_sq_dist, sq_dist, DistanceMatrix, FeatureMatrix};

use adam::Adam;

/// Floor on initial variances; a zero nearest-neighbor distance maps here.
pub const VAR_FLOOR: f64 = 1e-8;

/// Hard lower bound on `log_var` during optimization. Keeps `exp(-log_var)`
/// finite.
pub const LOG_VAR_MIN: f64 = -690.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Rows per reduction chunk. Fixed so that parallel reductions are summed in
/// the same order regardless of thread count.
const ROW_CHUNK: usize = 256;

/// Starting point for the per-component variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum InitRule {
    /// `sigma_j^2 = min_i D_ij / d`, floored at [`VAR_FLOOR`].
    NearestNeighborOverD,
    /// The same variance for every component.
    Constant(f64),
}

/// How the base likelihood of a train row is derived from its norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseRule {
    /// Identity-covariance Gaussian whose squared distance to the row is
    /// `scale * ||x||^2`.
    ScaledSquaredNorm,
    /// Same Gaussian placed at distance `scale * ||x||^2`, so the squared
    /// distance is `(scale * ||x||^2)^2`.
    ScaledNormAsDistance,
    /// No base term; the objective is the plain mixture NLL.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub base_likelihood_scale: f64,
    pub base_rule: BaseRule,
    pub seed: u64,
    pub init_rule: InitRule,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 50,
            batch_size: 10_000,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            base_likelihood_scale: 0.9,
            base_rule: BaseRule::ScaledSquaredNorm,
            seed: 0,
            init_rule: InitRule::NearestNeighborOverD,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(FldError::config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(FldError::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(FldError::config("batch_size must be at least 1"));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(FldError::config(format!(
                "adam betas must lie in [0, 1), got ({b1}, {b2})"
            )));
        }
        if self.adam_eps.is_nan() || self.adam_eps < 0.0 {
            return Err(FldError::config("adam_eps must be non-negative"));
        }
        if !self.base_likelihood_scale.is_finite() {
            return Err(FldError::config("base_likelihood_scale must be finite"));
        }
        if let InitRule::Constant(v) = self.init_rule {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FldError::config(format!(
                    "constant initial variance must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-row log base likelihood `log L_i`. Entries are `-inf` only under
/// [`BaseRule::Disabled`].
#[derive(Debug, Clone, PartialEq)]
pub struct BaseLikelihood {
    pub log_values: Vec<f64>,
}

impl BaseLikelihood {
    pub fn disabled(n: usize) -> Self {
        Self {
            log_values: vec![f64::NEG_INFINITY; n],
        }
    }

    /// Shift every `log L_i` by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            log_values: self.log_values.iter().map(|v| v + c).collect(),
        }
    }
}

pub fn compute_base_likelihood(train: &FeatureMatrix, scale: f64, rule: BaseRule) -> BaseLikelihood {
    let half_d_ln2pi = 0.5 * train.dim() as f64 * LN_2PI;
    let log_values = train
        .sq_norms()
        .into_iter()
        .map(|norm2| match rule {
            BaseRule::ScaledSquaredNorm => -half_d_ln2pi - 0.5 * scale * norm2,
            BaseRule::ScaledNormAsDistance => {
                let dist = scale * norm2;
                -half_d_ln2pi - 0.5 * dist * dist
            }
            BaseRule::Disabled => f64::NEG_INFINITY,
        })
        .collect();
    BaseLikelihood { log_values }
}

/// A fitted (or freshly initialized) mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MoGModel {
    pub centers: FeatureMatrix,
    pub log_var: Vec<f64>,
    /// `fit_trace[0]` is the objective at initialization, `fit_trace[e]` the
    /// full-data objective after epoch `e`.
    pub fit_trace: Vec<f64>,
}

impl MoGModel {
    pub fn new(centers: FeatureMatrix, log_var: Vec<f64>) -> Result<Self> {
        if log_var.len() != centers.rows() {
            return Err(FldError::data(format!(
                "{} log-variances for {} centers",
                log_var.len(),
                centers.rows()
            )));
        }
        if let Some(j) = log_var.iter().position(|v| !v.is_finite()) {
            return Err(FldError::Numerical {
                component: Some(j),
                detail: "log-variance is not finite".into(),
            });
        }
        Ok(Self {
            centers,
            log_var,
            fit_trace: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    pub fn components(&self) -> usize {
        self.centers.rows()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.log_var.iter().map(|s| s.exp()).collect()
    }
}

/// Per-component constants for evaluating `log N(x; c_j, e^{s_j} I)`.
struct ComponentTerms {
    /// `-(d/2) s_j - (d/2) ln(2 pi) + offset`
    bias: Vec<f64>,
    /// `1 / (2 e^{s_j})`
    half_precision: Vec<f64>,
}

impl ComponentTerms {
    fn new(log_var: &[f64], d: usize, offset: f64) -> Self {
        let half_d = 0.5 * d as f64;
        Self {
            bias: log_var
                .iter()
                .map(|s| -half_d * s - half_d * LN_2PI + offset)
                .collect(),
            half_precision: log_var.iter().map(|s| 0.5 * (-s).exp()).collect(),
        }
    }

    #[inline]
    fn log_density(&self, j: usize, sq_dist: f64) -> f64 {
        if sq_dist == 0.0 {
            self.bias[j]
        } else {
            self.bias[j] - sq_dist * self.half_precision[j]
        }
    }
}

pub fn init_variances(
    centers: &FeatureMatrix,
    train: &FeatureMatrix,
    rule: InitRule,
) -> Result<Vec<f64>> {
    centers.ensure_same_dim(train)?;
    let dist = pairwise_sq_dist(train, centers)?;
    init_from_distances(&dist, centers.dim(), rule)
}

fn init_from_distances(dist: &DistanceMatrix, d: usize, rule: InitRule) -> Result<Vec<f64>> {
    if dist.rows() == 0 {
        return Err(FldError::data("cannot initialize variances from an empty train set"));
    }
    Ok(match rule {
        InitRule::NearestNeighborOverD => dist
            .col_min()
            .into_iter()
            .map(|delta| (delta / d as f64).max(VAR_FLOOR).ln())
            .collect(),
        InitRule::Constant(v) => vec![v.ln(); dist.cols()],
    })
}

/// Objective value and its gradient with respect to each `log_var`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Mean negative log of `(1/m) sum_j N(x_i; c_j, sigma_j^2 I) + L_i` over the
/// train rows, with its analytic gradient.
pub fn train_nll_objective(
    model: &MoGModel,
    train: &FeatureMatrix,
    base: &BaseLikelihood,
) -> Result<Objective> {
    model.centers.ensure_same_dim(train)?;
    if base.log_values.len() != train.rows() {
        return Err(FldError::data(format!(
            "{} base likelihoods for {} train rows",
            base.log_values.len(),
            train.rows()
        )));
    }
    let dist = pairwise_sq_dist(train, &model.centers)?;
    objective_on_rows(&model.log_var, &dist, None, base, model.dim())
}

/// Objective restricted to `rows` of the precomputed train-by-center
/// distance matrix (all rows when `None`).
fn objective_on_rows(
    log_var: &[f64],
    dist: &DistanceMatrix,
    rows: Option<&[usize]>,
    base: &BaseLikelihood,
    d: usize,
) -> Result<Objective> {
    let m = dist.cols();
    let n_rows = rows.map_or(dist.rows(), <[usize]>::len);
    let terms = ComponentTerms::new(log_var, d, -(m as f64).ln());
    let half_d = 0.5 * d as f64;
    let inv_n = 1.0 / n_rows as f64;

    let row_at = |k: usize| rows.map_or(k, |r| r[k]);
    let chunks: Vec<(f64, Vec<f64>)> = (0..n_rows.div_ceil(ROW_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut value = 0.0;
            let mut grad = vec![0.0; m];
            let mut logp = vec![0.0; m];
            for k in c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(n_rows) {
                let i = row_at(k);
                let drow = dist.row(i);
                let mut max = f64::NEG_INFINITY;
                for (j, lp) in logp.iter_mut().enumerate() {
                    *lp = terms.log_density(j, drow[j]);
                    max = max.max(*lp);
                }
                // logp now holds exp(logp_j - max), reused for the weights.
                let mut sum = 0.0;
                for lp in logp.iter_mut() {
                    *lp = (*lp - max).exp();
                    sum += *lp;
                }
                let total = log_add_exp(max + sum.ln(), base.log_values[i]);
                value -= total;
                let scale = (max - total).exp();
                if scale > 0.0 {
                    for j in 0..m {
                        let w = logp[j] * scale;
                        if w > 0.0 {
                            // d/ds_j log N_ij = -d/2 + D_ij / (2 sigma_j^2)
                            grad[j] -= w * (drow[j] * terms.half_precision[j] - half_d);
                        }
                    }
                }
            }
            (value, grad)
        })
        .collect();

    let mut value = 0.0;
    let mut gradient = vec![0.0; m];
    for (v, g) in chunks {
        value += v;
        for (acc, x) in gradient.iter_mut().zip(g) {
            *acc += x;
        }
    }
    value *= inv_n;
    gradient.iter_mut().for_each(|g| *g *= inv_n);

    if !value.is_finite() {
        let component = log_var
            .iter()
            .position(|s| !s.is_finite())
            .or_else(|| gradient.iter().position(|g| !g.is_finite()));
        return Err(FldError::Numerical {
            component,
            detail: format!("training objective evaluated to {value}"),
        });
    }
    if let Some(j) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(FldError::Numerical {
            component: Some(j),
            detail: "gradient is not finite".into(),
        });
    }
    Ok(Objective { value, gradient })
}

/// Fit component variances for `centers` to `train`.
pub fn fit(centers: &FeatureMatrix, train: &FeatureMatrix, cfg: &FitConfig) -> Result<MoGModel> {
    let base = compute_base_likelihood(train, cfg.base_likelihood_scale, cfg.base_rule);
    fit_with_base(centers, train, cfg, &base)
}

/// [`fit`] with an explicit base likelihood.
pub fn fit_with_base(
    centers: &FeatureMatrix,
    train: &FeatureMatrix,
    cfg: &FitConfig,
    base: &BaseLikelihood,
) -> Result<MoGModel> {
    cfg.validate()?;
    centers.ensure_same_dim(train)?;
    if base.log_values.len() != train.rows() {
        return Err(FldError::data(format!(
            "{} base likelihoods for {} train rows",
            base.log_values.len(),
            train.rows()
        )));
    }
    let d = centers.dim();
    let dist = pairwise_sq_dist(train, centers)?;
    let mut log_var = init_from_distances(&dist, d, cfg.init_rule)?;
    let mut adam = Adam::new(log_var.len(), cfg.lr, cfg.adam_betas, cfg.adam_eps);
    let n = train.rows();
    let full_batch = cfg.batch_size >= n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs + 1);

    let diverged = |epoch: usize, trace: &[f64], err: FldError| match err {
        FldError::Numerical { .. } => FldError::Fit {
            epoch,
            trace: trace.to_vec(),
        },
        other => other,
    };

    let mut current = objective_on_rows(&log_var, &dist, None, base, d)
        .map_err(|e| diverged(0, &trace, e))?;
    trace.push(current.value);

    for epoch in 1..=cfg.epochs {
        if full_batch {
            adam.step(&mut log_var, &current.gradient);
            clamp_log_var(&mut log_var);
        } else {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let obj = objective_on_rows(&log_var, &dist, Some(batch), base, d)
                    .map_err(|e| diverged(epoch, &trace, e))?;
                adam.step(&mut log_var, &obj.gradient);
                clamp_log_var(&mut log_var);
            }
        }
        current = objective_on_rows(&log_var, &dist, None, base, d)
            .map_err(|e| diverged(epoch, &trace, e))?;
        trace.push(current.value);
    }

    let mut model = MoGModel::new(centers.clone(), log_var)?;
    model.fit_trace = trace;
    Ok(model)
}

fn clamp_log_var(log_var: &mut [f64]) {
    for s in log_var.iter_mut() {
        if *s < LOG_VAR_MIN {
            *s = LOG_VAR_MIN;
        }
    }
}

/// `log p(x)` of every query row under the mixture (no base term).
pub fn log_likelihood(model: &MoGModel, query: &FeatureMatrix) -> Result<Vec<f64>> {
    model.centers.ensure_same_dim(query)?;
    let m = model.components();
    let terms = ComponentTerms::new(&model.log_var, model.dim(), -(m as f64).ln());
    let out = (0..query.rows())
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |logp, i| {
                let x = query.row(i);
                for (j, lp) in logp.iter_mut().enumerate() {
                    *lp = terms.log_density(j, sq_dist(x, model.centers.row(j)));
                }
                lse(logp)
            },
        )
        .collect();
    Ok(out)
}

/// Mean of [`log_likelihood`] over the query rows.
pub fn mean_log_likelihood(model: &MoGModel, query: &FeatureMatrix) -> Result<f64> {
    let ll = log_likelihood(model, query)?;
    Ok(ll.iter().sum::<f64>() / ll.len() as f64)
}

/// `log max_i N(x_i^train; c_j, sigma_j^2 I)` for every component `j`.
pub fn per_component_max_train_density(
    model: &MoGModel,
    train: &FeatureMatrix,
) -> Result<Vec<f64>> {
    model.centers.ensure_same_dim(train)?;
    let terms = ComponentTerms::new(&model.log_var, model.dim(), 0.0);
    let out = (0..model.components())
        .into_par_iter()
        .map(|j| {
            let c = model.centers.row(j);
            let nearest = train
                .iter_rows()
                .map(|x| sq_dist(x, c))
                .fold(f64::INFINITY, f64::min);
            terms.log_density(j, nearest)
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Role;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random(rows: usize, cols: usize, scale: f64, seed: u64, role: Role) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        FeatureMatrix::new(data, rows, cols, role).unwrap()
    }

    fn m(rows: &[&[f64]], role: Role) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, role).unwrap()
    }

    #[test]
    fn init_hand_cases() {
        let c = m(&[&[1.0, 1.0]], Role::Generated);
        let t = m(&[&[1.0, 1.0], &[5.0, 5.0]], Role::Train);
        let lv = init_variances(&c, &t, InitRule::NearestNeighborOverD).unwrap();
        assert_relative_eq!(lv[0].exp(), VAR_FLOOR, max_relative = 1e-12);

        let c = m(&[&[0.0, 0.0]], Role::Generated);
        let t = m(&[&[3.0, 4.0], &[10.0, 0.0]], Role::Train);
        let lv = init_variances(&c, &t, InitRule::NearestNeighborOverD).unwrap();
        assert_relative_eq!(lv[0].exp(), 12.5, max_relative = 1e-12);

        let lv = init_variances(&c, &t, InitRule::Constant(2.0)).unwrap();
        assert_relative_eq!(lv[0], 2f64.ln());
    }

    #[test]
    fn init_matches_brute_force_min() {
        let c = random(7, 3, 2.0, 1, Role::Generated);
        let t = random(11, 3, 2.0, 2, Role::Train);
        let lv = init_variances(&c, &t, InitRule::NearestNeighborOverD).unwrap();
        for j in 0..7 {
            let mut best = f64::INFINITY;
            for i in 0..11 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += (c.row(j)[k] - t.row(i)[k]).powi(2);
                }
                best = best.min(s);
            }
            assert_relative_eq!(lv[j].exp(), best / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn base_likelihood_hand_cases() {
        let t = m(&[&[0.0, 0.0], &[1.0, 0.0]], Role::Train);
        let b = compute_base_likelihood(&t, 0.9, BaseRule::ScaledSquaredNorm);
        assert_relative_eq!(b.log_values[0], -LN_2PI, epsilon = 1e-15);
        assert_relative_eq!(b.log_values[0], -1.8379, epsilon = 1e-4);
        assert_relative_eq!(b.log_values[1], -LN_2PI - 0.45, epsilon = 1e-15);

        let t = m(&[&[2.0, 0.0]], Role::Train);
        let lit = compute_base_likelihood(&t, 0.9, BaseRule::ScaledNormAsDistance);
        assert_relative_eq!(lit.log_values[0], -LN_2PI - 0.5 * 3.6 * 3.6, epsilon = 1e-12);
        let off = compute_base_likelihood(&t, 0.9, BaseRule::Disabled);
        assert_eq!(off.log_values[0], f64::NEG_INFINITY);
    }

    #[test]
    fn base_likelihood_matches_per_row_formula() {
        let t = random(30, 5, 3.0, 9, Role::Train);
        let b = compute_base_likelihood(&t, 0.9, BaseRule::ScaledSquaredNorm);
        for (i, row) in t.iter_rows().enumerate() {
            let norm2: f64 = row.iter().map(|v| v * v).sum();
            let expect = -2.5 * (2.0 * std::f64::consts::PI).ln() - 0.45 * norm2;
            assert_relative_eq!(b.log_values[i], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn objective_standard_normal_at_mean() {
        let c = m(&[&[0.7]], Role::Generated);
        let model = MoGModel::new(c.clone(), vec![0.0]).unwrap();
        let obj = train_nll_objective(&model, &c, &BaseLikelihood::disabled(1)).unwrap();
        assert_relative_eq!(obj.value, 0.5 * LN_2PI, epsilon = 1e-14);
        assert_relative_eq!(obj.value, 0.9189, epsilon = 1e-4);
    }

    #[test]
    fn log_likelihood_hand_cases() {
        let c = m(&[&[0.3]], Role::Generated);
        let model = MoGModel::new(c.clone(), vec![0.0]).unwrap();
        let ll = log_likelihood(&model, &c).unwrap();
        assert_relative_eq!(ll[0], -0.5 * LN_2PI, epsilon = 1e-14);

        let q = random(5, 2, 2.0, 3, Role::Test);
        let one = MoGModel::new(m(&[&[0.5, -0.5]], Role::Generated), vec![-0.3]).unwrap();
        let two = MoGModel::new(m(&[&[0.5, -0.5], &[0.5, -0.5]], Role::Generated), vec![-0.3, -0.3])
            .unwrap();
        let a = log_likelihood(&one, &q).unwrap();
        let b = log_likelihood(&two, &q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-14);
        }
    }

    #[test]
    fn log_likelihood_dimension_mismatch() {
        let model = MoGModel::new(m(&[&[0.0, 0.0]], Role::Generated), vec![0.0]).unwrap();
        let q = m(&[&[0.0]], Role::Test);
        assert!(matches!(
            log_likelihood(&model, &q),
            Err(FldError::Dimension { .. })
        ));
    }

    #[test]
    fn max_train_density_hand_cases() {
        let c = m(&[&[1.0, 2.0], &[0.0, 0.0]], Role::Generated);
        let t = m(&[&[1.0, 2.0], &[9.0, 9.0]], Role::Train);
        let model = MoGModel::new(c, vec![(1e-6f64).ln(), 0.0]).unwrap();
        let o = per_component_max_train_density(&model, &t).unwrap();
        let expect = -LN_2PI - (1e-6f64).ln();
        assert_relative_eq!(o[0], expect, max_relative = 1e-12);
        assert_relative_eq!(o[0], 11.98, epsilon = 1e-2);
        assert!(o[0] > o[1]);
        assert_relative_eq!(o[1], -LN_2PI - 5.0 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn max_train_density_matches_brute_force() {
        let c = random(9, 3, 1.0, 4, Role::Generated);
        let t = random(13, 3, 1.0, 5, Role::Train);
        let lv: Vec<f64> = (0..9).map(|j| -1.0 + 0.2 * j as f64).collect();
        let model = MoGModel::new(c.clone(), lv.clone()).unwrap();
        let o = per_component_max_train_density(&model, &t).unwrap();
        for j in 0..9 {
            let var = lv[j].exp();
            let mut best = f64::NEG_INFINITY;
            for i in 0..13 {
                let d2: f64 = (0..3).map(|k| (c.row(j)[k] - t.row(i)[k]).powi(2)).sum();
                let log_n = -1.5 * (2.0 * std::f64::consts::PI * var).ln() - d2 / (2.0 * var);
                best = best.max(log_n);
            }
            assert_relative_eq!(o[j], best, max_relative = 1e-10);
        }
    }

    #[test]
    fn exact_copy_keeps_a_tiny_variance() {
        let t = random(40, 2, 2.0, 6, Role::Train);
        let mut rows: Vec<Vec<f64>> = random(10, 2, 2.0, 7, Role::Generated)
            .iter_rows()
            .map(<[f64]>::to_vec)
            .collect();
        rows[3] = t.row(5).to_vec();
        let c = FeatureMatrix::from_rows(&rows, Role::Generated).unwrap();
        let model = fit(&c, &t, &FitConfig::default()).unwrap();
        let var = model.variances();
        let others: f64 = var.iter().enumerate().filter(|(j, _)| *j != 3).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        assert!(var[3] < 1e-3 * others);
        assert!(model.log_var.iter().all(|s| s.is_finite()));
        assert_eq!(model.fit_trace.len(), 51);
    }

    #[test]
    fn minibatch_fit_is_seeded() {
        let t = random(50, 2, 2.0, 6, Role::Train);
        let c = random(20, 2, 2.0, 8, Role::Generated);
        let cfg = FitConfig {
            batch_size: 16,
            epochs: 5,
            seed: 42,
            ..FitConfig::default()
        };
        let a = fit(&c, &t, &cfg).unwrap();
        let b = fit(&c, &t, &cfg).unwrap();
        assert_eq!(a, b);
        let other = fit(&c, &t, &FitConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.log_var, other.log_var);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let t = random(5, 2, 1.0, 1, Role::Train);
        for cfg in [
            FitConfig { lr: 0.0, ..FitConfig::default() },
            FitConfig { epochs: 0, ..FitConfig::default() },
            FitConfig { adam_betas: (1.0, 0.9), ..FitConfig::default() },
            FitConfig { init_rule: InitRule::Constant(-1.0), ..FitConfig::default() },
        ] {
            assert!(matches!(fit(&t, &t, &cfg), Err(FldError::Config(_))));
        }
    }
}
