//! Desk-scale experimental settings on two-moons: data generation, KDE
//! generators with a controllable bandwidth, feature-level perturbations
//! (train copies, self-duplication, mode dropping, additive noise) and the
//! sweeps that tie them to the metrics.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_report, DEFAULT_PR_K};
use crate::error::{FldError, Result};
use crate::metrics::{calibrate, fld, prepare_splits, CalibrationConstant};
use crate::mog::FitConfig;
use crate::seed::{derive, Stream};
use crate::tensor::{FeatureMatrix, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoMoonsConfig {
    pub n_total: usize,
    pub noise: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for TwoMoonsConfig {
    fn default() -> Self {
        Self {
            n_total: 3000,
            noise: 0.1,
            n_train: 2000,
            n_test: 1000,
            seed: 0,
        }
    }
}

impl TwoMoonsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train + self.n_test > self.n_total {
            return Err(FldError::config(format!(
                "split {}+{} exceeds n_total {}",
                self.n_train, self.n_test, self.n_total
            )));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(FldError::config("train and test splits must be non-empty"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(FldError::config(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Feature rows with their moon label (0 = upper moon, 1 = lower moon).
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoMoonsSplit {
    pub train: Labeled,
    pub test: Labeled,
}

/// `n` shuffled two-moons points.
///
/// The upper moon is the half circle `(cos t, sin t)`, the lower one
/// `(1 - cos t, 0.5 - sin t)`, for `t` evenly spaced over `[0, pi]`. The
/// upper moon gets `n / 2` points. Gaussian noise of standard deviation
/// `noise` is added to both coordinates.
pub fn sample_two_moons(n: usize, noise: f64, seed: u64, role: Role) -> Result<Labeled> {
    if n == 0 {
        return Err(FldError::config("two-moons sample size must be positive"));
    }
    let n_upper = n / 2;
    let n_lower = n - n_upper;
    let arc = |count: usize, k: usize| {
        if count <= 1 {
            0.0
        } else {
            PI * k as f64 / (count - 1) as f64
        }
    };
    let mut points: Vec<([f64; 2], usize)> = Vec::with_capacity(n);
    for k in 0..n_upper {
        let t = arc(n_upper, k);
        points.push(([t.cos(), t.sin()], 0));
    }
    for k in 0..n_lower {
        let t = arc(n_lower, k);
        points.push(([1.0 - t.cos(), 0.5 - t.sin()], 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points.shuffle(&mut rng);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (p, label) in points {
        for v in p {
            let eps: f64 = rng.sample(StandardNormal);
            data.push(v + noise * eps);
        }
        labels.push(label);
    }
    Ok(Labeled {
        features: FeatureMatrix::new(data, n, 2, role)?,
        labels,
    })
}

/// Draw `n_total` points and split off the first `n_train` as train and the
/// next `n_test` as test.
pub fn two_moons(cfg: &TwoMoonsConfig) -> Result<TwoMoonsSplit> {
    cfg.validate()?;
    let all = sample_two_moons(cfg.n_total, cfg.noise, cfg.seed, Role::Train)?;
    let take = |range: std::ops::Range<usize>, role: Role| -> Result<Labeled> {
        let idx: Vec<usize> = range.collect();
        Ok(Labeled {
            features: all.features.select_rows(&idx)?.with_role(role),
            labels: idx.iter().map(|&i| all.labels[i]).collect(),
        })
    };
    Ok(TwoMoonsSplit {
        train: take(0..cfg.n_train, Role::Train)?,
        test: take(cfg.n_train..cfg.n_train + cfg.n_test, Role::Test)?,
    })
}

/// `m` samples from a Gaussian KDE on `train`: a uniformly chosen train row
/// plus `N(0, bandwidth^2 I)`.
pub fn kde_generator(train: &FeatureMatrix, bandwidth: f64, m: usize, seed: u64) -> Result<FeatureMatrix> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(FldError::config(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if m == 0 {
        return Err(FldError::config("sample count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = train.dim();
    let mut data = Vec::with_capacity(m * d);
    for _ in 0..m {
        let row = train.row(rng.gen_range(0..train.rows()));
        for v in row {
            let eps: f64 = rng.sample(StandardNormal);
            data.push(v + bandwidth * eps);
        }
    }
    FeatureMatrix::new(data, m, d, Role::Generated)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Perturbation {
    /// Replace the first `k` generated rows with the first `k` train rows
    /// plus `N(0, jitter_var I)`.
    CopyTrain { k: usize, jitter_var: f64 },
    /// Keep the first `ceil(m / factor)` rows and fill the rest with
    /// jittered copies of them, cycling in order.
    DuplicateGen { factor: usize, jitter_var: f64 },
    /// Keep rows whose label is in `keep`, then resample the kept rows with
    /// replacement back up to `m`.
    DropModes { labels: Vec<usize>, keep: Vec<usize> },
    /// Add `N(0, var I)` to every row.
    GaussianNoise { var: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: Perturbation,
    pub seed: u64,
}

pub fn apply_perturbation(
    gen: &FeatureMatrix,
    train: &FeatureMatrix,
    spec: &PerturbationSpec,
) -> Result<FeatureMatrix> {
    gen.ensure_same_dim(train)?;
    let (m, d) = (gen.rows(), gen.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jitter = |var: f64, out: &mut Vec<f64>, src: &[f64]| {
        let sd = var.sqrt();
        for v in src {
            if sd > 0.0 {
                let eps: f64 = rng.sample(StandardNormal);
                out.push(v + sd * eps);
            } else {
                out.push(*v);
            }
        }
    };
    let check_var = |var: f64| {
        if var >= 0.0 && var.is_finite() {
            Ok(())
        } else {
            Err(FldError::config(format!("variance must be >= 0, got {var}")))
        }
    };

    let data = match &spec.kind {
        Perturbation::CopyTrain { k, jitter_var } => {
            check_var(*jitter_var)?;
            if *k > m || *k > train.rows() {
                return Err(FldError::config(format!(
                    "cannot copy {k} train rows into {m} generated rows ({} train rows available)",
                    train.rows()
                )));
            }
            let mut out = Vec::with_capacity(m * d);
            for i in 0..*k {
                jitter(*jitter_var, &mut out, train.row(i));
            }
            out.extend_from_slice(&gen.as_slice()[k * d..]);
            out
        }
        Perturbation::DuplicateGen { factor, jitter_var } => {
            check_var(*jitter_var)?;
            if *factor == 0 || *factor > m {
                return Err(FldError::config(format!(
                    "duplication factor must lie in 1..={m}, got {factor}"
                )));
            }
            let distinct = m.div_ceil(*factor);
            let mut out = Vec::with_capacity(m * d);
            out.extend_from_slice(&gen.as_slice()[..distinct * d]);
            for p in distinct..m {
                jitter(*jitter_var, &mut out, gen.row(p % distinct));
            }
            out
        }
        Perturbation::DropModes { labels, keep } => {
            if labels.len() != m {
                return Err(FldError::config(format!(
                    "{} labels for {m} generated rows",
                    labels.len()
                )));
            }
            let kept: Vec<usize> = (0..m).filter(|&i| keep.contains(&labels[i])).collect();
            if kept.is_empty() {
                return Err(FldError::config("mode filter keeps no rows"));
            }
            let mut out = Vec::with_capacity(m * d);
            for &i in &kept {
                out.extend_from_slice(gen.row(i));
            }
            for _ in kept.len()..m {
                let i = kept[rng.gen_range(0..kept.len())];
                out.extend_from_slice(gen.row(i));
            }
            out
        }
        Perturbation::GaussianNoise { var } => {
            check_var(*var)?;
            let mut out = Vec::with_capacity(m * d);
            jitter(*var, &mut out, gen.as_slice());
            out
        }
    };
    FeatureMatrix::new(data, m, d, gen.role())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Sweep the bandwidth of a KDE generator centered at train points.
    KdeUShape,
    /// Sweep the fraction of generated rows replaced by jittered train copies.
    CopyInjection,
    /// Sweep the self-duplication factor of an i.i.d. generated set.
    DuplicationDiversity,
}

impl ExperimentKind {
    pub fn knob_name(self) -> &'static str {
        match self {
            ExperimentKind::KdeUShape => "bandwidth",
            ExperimentKind::CopyInjection => "copy_fraction",
            ExperimentKind::DuplicationDiversity => "duplication_factor",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            ExperimentKind::KdeUShape => vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            ExperimentKind::CopyInjection => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            ExperimentKind::DuplicationDiversity => vec![1.0, 2.0, 4.0, 8.0],
        }
    }

    pub fn default_m(self) -> usize {
        match self {
            ExperimentKind::KdeUShape => 1000,
            ExperimentKind::CopyInjection => 200,
            ExperimentKind::DuplicationDiversity => 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub moons: TwoMoonsConfig,
    /// Generated rows per grid point.
    pub m: usize,
    pub grid: Vec<f64>,
    pub fit: FitConfig,
    pub standardize: bool,
    /// Subtract a train-split calibration constant from every FLD value.
    pub calibrate: bool,
    /// Compute the baseline metrics alongside FLD.
    pub baselines: bool,
    pub pr_k: usize,
    /// Jitter variance for train copies and self-duplicates.
    pub jitter_var: f64,
    pub seed: u64,
}

impl ExperimentParams {
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self {
            moons: TwoMoonsConfig::default(),
            m: kind.default_m(),
            grid: kind.default_grid(),
            fit: FitConfig::default(),
            standardize: true,
            calibrate: true,
            baselines: true,
            pr_k: DEFAULT_PR_K,
            jitter_var: 1e-4,
            seed: 0,
        }
    }
}

/// One grid point. Baseline columns are `NaN` when baselines are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub knob: f64,
    pub fld_test: f64,
    pub fld_train: f64,
    pub gen_gap: f64,
    pub fid_train: f64,
    pub fid_test: f64,
    pub fid_gap: f64,
    pub precision: f64,
    pub recall: f64,
    pub c_t: f64,
    pub auth_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub kind: ExperimentKind,
    pub constant: CalibrationConstant,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn column(&self, f: impl Fn(&ExperimentRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Run a named sweep. The shared base set of the copy and duplication
/// sweeps comes from `derive(seed, Synthetic)`; grid point `i` draws its
/// own randomness (KDE samples, jitter) from `derive(seed + i + 1, Synthetic)`.
pub fn run_experiment(kind: ExperimentKind, params: &ExperimentParams) -> Result<ExperimentTable> {
    if params.grid.is_empty() {
        return Err(FldError::config("experiment grid is empty"));
    }
    let moons = two_moons(&params.moons)?;
    let train_raw = &moons.train.features;
    let test_raw = &moons.test.features;

    let constant = if params.calibrate {
        let p = prepare_splits(train_raw, test_raw, test_raw, params.standardize)?;
        calibrate(&p.train, &p.test, &params.fit, derive(params.seed, Stream::Calibration))?
    } else {
        CalibrationConstant::none()
    };

    // Copy and duplication sweeps perturb one shared i.i.d. set, so the knob
    // is the only thing that changes between rows.
    let base_set = match kind {
        ExperimentKind::KdeUShape => None,
        _ => Some(fresh_generated(params, derive(params.seed, Stream::Synthetic))?),
    };

    let mut rows = Vec::with_capacity(params.grid.len());
    for (i, &knob) in params.grid.iter().enumerate() {
        let point_seed = derive(params.seed.wrapping_add(i as u64 + 1), Stream::Synthetic);
        let gen_raw = generate_for(kind, knob, params, train_raw, base_set.as_ref(), point_seed)?;
        let p = prepare_splits(train_raw, test_raw, &gen_raw, params.standardize)?;
        let r = fld(&p.test, &p.gen, &p.train, &params.fit, constant)?;
        let mut row = ExperimentRow {
            knob,
            fld_test: r.fld_test,
            fld_train: r.fld_train,
            gen_gap: r.gen_gap,
            fid_train: f64::NAN,
            fid_test: f64::NAN,
            fid_gap: f64::NAN,
            precision: f64::NAN,
            recall: f64::NAN,
            c_t: f64::NAN,
            auth_pct: f64::NAN,
        };
        if params.baselines {
            let b = baseline_report(&p.train, &p.test, &p.gen, params.pr_k)?;
            row.fid_train = b.fid_train;
            row.fid_test = b.fid_test;
            row.fid_gap = b.fid_gap;
            row.precision = b.precision;
            row.recall = b.recall;
            row.c_t = b.c_t;
            row.auth_pct = b.auth_pct;
        }
        rows.push(row);
    }
    Ok(ExperimentTable {
        kind,
        constant,
        rows,
    })
}

fn generate_for(
    kind: ExperimentKind,
    knob: f64,
    params: &ExperimentParams,
    train: &FeatureMatrix,
    base_set: Option<&FeatureMatrix>,
    seed: u64,
) -> Result<FeatureMatrix> {
    let m = params.m;
    let base_set = || base_set.ok_or_else(|| FldError::config("sweep needs a base generated set"));
    match kind {
        ExperimentKind::KdeUShape => kde_generator(train, knob, m, seed),
        ExperimentKind::CopyInjection => {
            if !(0.0..=1.0).contains(&knob) {
                return Err(FldError::config(format!("copy fraction must lie in [0, 1], got {knob}")));
            }
            let iid = base_set()?;
            let k = (knob * m as f64).round() as usize;
            apply_perturbation(
                iid,
                train,
                &PerturbationSpec {
                    kind: Perturbation::CopyTrain {
                        k,
                        jitter_var: params.jitter_var,
                    },
                    seed,
                },
            )
        }
        ExperimentKind::DuplicationDiversity => {
            if knob < 1.0 || knob.fract() != 0.0 {
                return Err(FldError::config(format!(
                    "duplication factor must be a positive integer, got {knob}"
                )));
            }
            let iid = base_set()?;
            apply_perturbation(
                iid,
                train,
                &PerturbationSpec {
                    kind: Perturbation::DuplicateGen {
                        factor: knob as usize,
                        jitter_var: params.jitter_var,
                    },
                    seed,
                },
            )
        }
    }
}

/// Generated rows drawn from the data distribution itself.
fn fresh_generated(params: &ExperimentParams, seed: u64) -> Result<FeatureMatrix> {
    Ok(sample_two_moons(params.m, params.moons.noise, seed, Role::Generated)?.features)
}
