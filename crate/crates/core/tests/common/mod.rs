#![allow(dead_code)]

use fld_core::{FeatureMatrix, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rows: usize, cols: usize, scale: f64, seed: u64, role: Role) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    FeatureMatrix::new(data, rows, cols, role).unwrap()
}

pub fn uniform_vec(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Naive log-density of an isotropic Gaussian, computed in direct space.
pub fn naive_gauss(x: &[f64], c: &[f64], var: f64) -> f64 {
    let mut d2 = 0.0;
    for k in 0..x.len() {
        d2 += (x[k] - c[k]) * (x[k] - c[k]);
    }
    let norm = (2.0 * std::f64::consts::PI * var).powf(-(x.len() as f64) / 2.0);
    norm * (-d2 / (2.0 * var)).exp()
}

/// Naive mixture density `(1/m) sum_j N(x; c_j, var_j I)`.
pub fn naive_mixture(x: &[f64], centers: &FeatureMatrix, vars: &[f64]) -> f64 {
    let mut p = 0.0;
    for j in 0..centers.rows() {
        p += naive_gauss(x, centers.row(j), vars[j]);
    }
    p / centers.rows() as f64
}

/// Naive training objective with the default base term
/// `L_i = N(sqrt(0.9) * x; 0, I)`.
pub fn naive_objective(train: &FeatureMatrix, centers: &FeatureMatrix, vars: &[f64]) -> f64 {
    let origin = vec![0.0; train.dim()];
    let mut total = 0.0;
    for i in 0..train.rows() {
        let x = train.row(i);
        let scaled: Vec<f64> = x.iter().map(|v| v * 0.9f64.sqrt()).collect();
        let base = naive_gauss(&scaled, &origin, 1.0);
        total -= (naive_mixture(x, centers, vars) + base).ln();
    }
    total / train.rows() as f64
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn inversions(v: &[f64], increasing: bool) -> usize {
    v.windows(2)
        .filter(|w| if increasing { w[1] < w[0] } else { w[1] > w[0] })
        .count()
}
