//! Reference metrics reported next to FLD: Fréchet distance (FID) against
//! train and test, k-NN manifold precision/recall, the C_T Mann-Whitney
//! statistic and the authenticity percentage.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{FldError, Result};
use crate::tensor::{moments, pairwise_sq_dist, FeatureMatrix};

/// Tolerance for negative eigenvalues, relative to `max(1, largest |eigenvalue|)`.
const EIGEN_TOL: f64 = 1e-7;

pub const DEFAULT_PR_K: usize = 3;

/// Mean and population covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn from_features(x: &FeatureMatrix) -> Result<Self> {
        let (mean, cov) = moments(x)?;
        let d = mean.len();
        Ok(Self {
            mean,
            cov: DMatrix::from_row_slice(d, d, &cov),
        })
    }
}

/// Fréchet distance between Gaussian fits of `a` and `b`.
pub fn fid(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<f64> {
    a.ensure_same_dim(b)?;
    fid_from_stats(&GaussianStats::from_features(a)?, &GaussianStats::from_features(b)?)
}

/// `||mu_g - mu_p||^2 + Tr(S_g + S_p - 2 (S_g S_p)^{1/2})`.
///
/// The trace of `(S_g S_p)^{1/2}` equals that of `(S_p^{1/2} S_g S_p^{1/2})^{1/2}`,
/// which is symmetric, so both roots come from symmetric eigendecompositions.
pub fn fid_from_stats(g: &GaussianStats, p: &GaussianStats) -> Result<f64> {
    if g.mean.len() != p.mean.len() {
        return Err(FldError::Dimension {
            expected: g.mean.len(),
            found: p.mean.len(),
        });
    }
    let mean_term: f64 = g
        .mean
        .iter()
        .zip(&p.mean)
        .map(|(x, y)| (x - y).powi(2))
        .sum();

    let sqrt_p = psd_sqrt(&p.cov)?;
    let inner = &sqrt_p * &g.cov * &sqrt_p;
    let inner = (&inner + inner.transpose()) * 0.5;
    let eig = checked_eigenvalues(inner)?;
    let cross: f64 = eig.iter().map(|l| l.max(0.0).sqrt()).sum();

    let value = mean_term + g.cov.trace() + p.cov.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    check_psd(eig.eigenvalues.as_slice())?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

fn checked_eigenvalues(m: DMatrix<f64>) -> Result<Vec<f64>> {
    let vals = m.symmetric_eigenvalues();
    check_psd(vals.as_slice())?;
    Ok(vals.iter().copied().collect())
}

fn check_psd(vals: &[f64]) -> Result<()> {
    let scale = vals.iter().fold(1.0f64, |acc, l| acc.max(l.abs()));
    if let Some((k, l)) = vals
        .iter()
        .enumerate()
        .find(|(_, l)| **l < -EIGEN_TOL * scale || !l.is_finite())
    {
        return Err(FldError::Numerical {
            component: Some(k),
            detail: format!("covariance is not positive semi-definite (eigenvalue {l:e})"),
        });
    }
    Ok(())
}

/// k-NN manifold precision and recall of `gen` against `real`.
///
/// Each point's manifold ball has squared radius equal to the squared
/// distance to its k-th nearest neighbor within its own set. Precision is
/// the fraction of generated points inside some real ball; recall is the
/// fraction of real points inside some generated ball.
pub fn precision_recall(gen: &FeatureMatrix, real: &FeatureMatrix, k: usize) -> Result<(f64, f64)> {
    gen.ensure_same_dim(real)?;
    let limit = gen.rows().min(real.rows());
    if k == 0 || k >= limit {
        return Err(FldError::config(format!(
            "k must satisfy 1 <= k < min(n, m) = {limit}, got {k}"
        )));
    }
    let real_radii = knn_radii(real, k)?;
    let gen_radii = knn_radii(gen, k)?;
    let cross = pairwise_sq_dist(gen, real)?;

    let precision = (0..gen.rows())
        .filter(|&g| (0..real.rows()).any(|r| cross.get(g, r) <= real_radii[r]))
        .count() as f64
        / gen.rows() as f64;
    let recall = (0..real.rows())
        .filter(|&r| (0..gen.rows()).any(|g| cross.get(g, r) <= gen_radii[g]))
        .count() as f64
        / real.rows() as f64;
    Ok((precision, recall))
}

/// Squared distance from each row to its k-th nearest other row.
fn knn_radii(x: &FeatureMatrix, k: usize) -> Result<Vec<f64>> {
    let d = pairwise_sq_dist(x, x)?;
    let mut buf = Vec::with_capacity(x.rows());
    Ok((0..x.rows())
        .map(|i| {
            buf.clear();
            buf.extend(d.row(i).iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v));
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

/// Normal-approximation Mann-Whitney statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u: f64,
    pub z: f64,
    /// Set when every pooled value is identical; `z` is then 0.
    pub degenerate: bool,
}

/// Mann-Whitney U of `x` against `y` with midranks for ties and the
/// tie-corrected variance. `z < 0` means `x` tends to be smaller than `y`.
pub fn mann_whitney(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    if x.is_empty() || y.is_empty() {
        return Err(FldError::data("Mann-Whitney needs two non-empty samples"));
    }
    let (nx, ny) = (x.len(), y.len());
    let mut pooled: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    if pooled.iter().any(|(v, _)| v.is_nan()) {
        return Err(FldError::data("Mann-Whitney input contains NaN"));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let total = pooled.len();
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < total {
        let mut end = start + 1;
        while end < total && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let midrank = (start + 1 + end) as f64 / 2.0;
        let in_x = pooled[start..end].iter().filter(|p| p.1).count();
        rank_sum_x += midrank * in_x as f64;
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }

    let (fx, fy, fn_) = (nx as f64, ny as f64, total as f64);
    let u = rank_sum_x - fx * (fx + 1.0) / 2.0;
    let mean = fx * fy / 2.0;
    let correction = if total > 1 {
        tie_term / (fn_ * (fn_ - 1.0))
    } else {
        0.0
    };
    let var = fx * fy / 12.0 * ((fn_ + 1.0) - correction);
    if var <= 0.0 {
        return Ok(MannWhitney {
            u,
            z: 0.0,
            degenerate: true,
        });
    }
    Ok(MannWhitney {
        u,
        z: (u - mean) / var.sqrt(),
        degenerate: false,
    })
}

/// C_T: Mann-Whitney z of generated-to-train nearest-neighbor distances
/// against test-to-train nearest-neighbor distances. Negative values point
/// to overfitting, positive values to underfitting.
pub fn ct_score(train: &FeatureMatrix, test: &FeatureMatrix, gen: &FeatureMatrix) -> Result<MannWhitney> {
    train.ensure_same_dim(test)?;
    train.ensure_same_dim(gen)?;
    let gen_nn = pairwise_sq_dist(gen, train)?.row_min();
    let test_nn = pairwise_sq_dist(test, train)?.row_min();
    mann_whitney(&gen_nn, &test_nn)
}

/// Percentage of generated rows that are authentic: a row is inauthentic
/// when it is closer to its nearest train row `a` than `a` is to its own
/// nearest other train row.
pub fn auth_pct(train: &FeatureMatrix, gen: &FeatureMatrix) -> Result<f64> {
    train.ensure_same_dim(gen)?;
    if train.rows() < 2 {
        return Err(FldError::data("authenticity needs at least 2 train rows"));
    }
    let tt = pairwise_sq_dist(train, train)?;
    let spacing: Vec<f64> = (0..train.rows())
        .map(|a| {
            tt.row(a)
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != a)
                .map(|(_, v)| *v)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let gt = pairwise_sq_dist(gen, train)?;
    let authentic = (0..gen.rows())
        .filter(|&g| {
            let (a, dist) = gt
                .row(g)
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
            dist >= spacing[a]
        })
        .count();
    Ok(100.0 * authentic as f64 / gen.rows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub fid_train: f64,
    pub fid_test: f64,
    /// `fid_train - fid_test`
    pub fid_gap: f64,
    pub precision: f64,
    pub recall: f64,
    pub pr_k: usize,
    pub c_t: f64,
    pub c_t_degenerate: bool,
    pub auth_pct: f64,
}

/// All baseline metrics; precision/recall use the train split as the real set.
pub fn baseline_report(
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    gen: &FeatureMatrix,
    k: usize,
) -> Result<BaselineReport> {
    let fid_train = fid(gen, train)?;
    let fid_test = fid(gen, test)?;
    let (precision, recall) = precision_recall(gen, train, k)?;
    let ct = ct_score(train, test, gen)?;
    Ok(BaselineReport {
        fid_train,
        fid_test,
        fid_gap: fid_train - fid_test,
        precision,
        recall,
        pr_k: k,
        c_t: ct.z,
        c_t_degenerate: ct.degenerate,
        auth_pct: auth_pct(train, gen)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Role;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
        FeatureMatrix::new(data, rows, cols, Role::Generated).unwrap()
    }

    fn col(vals: &[f64]) -> FeatureMatrix {
        let rows: Vec<[f64; 1]> = vals.iter().map(|v| [*v]).collect();
        FeatureMatrix::from_rows(&rows, Role::Test).unwrap()
    }

    #[test]
    fn fid_identical_and_unit_shift() {
        let a = gaussian(200, 4, 1);
        assert!(fid(&a, &a).unwrap().abs() < 1e-6);
        let v = fid(&col(&[-1.0, 1.0]), &col(&[0.0, 2.0])).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fid_diagonal_closed_form() {
        let g = GaussianStats {
            mean: vec![0.5, -1.0, 2.0],
            cov: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.3, 2.0, 5.0])),
        };
        let p = GaussianStats {
            mean: vec![0.0, 1.0, 2.5],
            cov: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.1, 0.4, 5.0])),
        };
        let expect: f64 = [0.25, 4.0, 0.25].iter().sum::<f64>()
            + [(0.3, 1.1), (2.0, 0.4), (5.0, 5.0)]
                .iter()
                .map(|(a, b): &(f64, f64)| (a.sqrt() - b.sqrt()).powi(2))
                .sum::<f64>();
        assert_relative_eq!(fid_from_stats(&g, &p).unwrap(), expect, max_relative = 1e-8);
    }

    #[test]
    fn fid_rejects_indefinite_covariance() {
        let g = GaussianStats {
            mean: vec![0.0, 0.0],
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]),
        };
        assert!(matches!(
            fid_from_stats(&g, &g),
            Err(FldError::Numerical { .. })
        ));
    }

    #[test]
    fn fid_symmetric() {
        let a = gaussian(100, 3, 2);
        let b = gaussian(80, 3, 3);
        assert_relative_eq!(fid(&a, &b).unwrap(), fid(&b, &a).unwrap(), max_relative = 1e-8);
    }

    #[test]
    fn precision_recall_cases() {
        let real = gaussian(30, 2, 4);
        assert_eq!(precision_recall(&real, &real, 3).unwrap(), (1.0, 1.0));

        let shifted = FeatureMatrix::new(
            real.as_slice().iter().map(|v| v + 100.0).collect(),
            30,
            2,
            Role::Generated,
        )
        .unwrap();
        assert_eq!(precision_recall(&shifted, &real, 3).unwrap().0, 0.0);
        assert!(matches!(
            precision_recall(&real, &real, 30),
            Err(FldError::Config(_))
        ));
        assert!(precision_recall(&real, &real, 0).is_err());
    }

    #[test]
    fn precision_recall_brute_force() {
        let gen = gaussian(20, 2, 5);
        let real = gaussian(20, 2, 6);
        let k = 3;
        let radius = |x: &FeatureMatrix, i: usize| {
            let mut ds: Vec<f64> = (0..x.rows())
                .filter(|&j| j != i)
                .map(|j| crate::tensor::sq_dist(x.row(i), x.row(j)))
                .collect();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        };
        let inside = |p: &[f64], set: &FeatureMatrix| {
            (0..set.rows()).any(|j| crate::tensor::sq_dist(p, set.row(j)) <= radius(set, j))
        };
        let prec = (0..20).filter(|&g| inside(gen.row(g), &real)).count() as f64 / 20.0;
        let rec = (0..20).filter(|&r| inside(real.row(r), &gen)).count() as f64 / 20.0;
        assert_eq!(precision_recall(&gen, &real, k).unwrap(), (prec, rec));
        let (p2, r2) = precision_recall(&real, &gen, k).unwrap();
        assert_eq!((r2, p2), (prec, rec));
    }

    #[test]
    fn mann_whitney_known_values() {
        // No ties: x = {1, 2}, y = {3, 4, 5}; U_x = 0.
        let mw = mann_whitney(&[1.0, 2.0], &[3.0, 4.0, 5.0]).unwrap();
        assert_eq!(mw.u, 0.0);
        let var: f64 = 2.0 * 3.0 * 6.0 / 12.0;
        assert_relative_eq!(mw.z, -3.0 / var.sqrt(), max_relative = 1e-14);

        let flat = mann_whitney(&[2.0, 2.0], &[2.0]).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.z, 0.0);
    }

    #[test]
    fn mann_whitney_swap_flips_sign() {
        let x = [0.1, 0.5, 0.5, 2.0, 3.0];
        let y = [0.5, 1.0, 4.0, 4.0];
        let a = mann_whitney(&x, &y).unwrap();
        let b = mann_whitney(&y, &x).unwrap();
        assert_eq!(a.z, -b.z);
    }

    #[test]
    fn ct_copies_are_strongly_negative() {
        let train = gaussian(100, 2, 7);
        let test = gaussian(100, 2, 8).with_role(Role::Test);
        let ct = ct_score(&train, &test, &train).unwrap();
        assert!(ct.z < -5.0, "z = {}", ct.z);
    }

    #[test]
    fn auth_pct_cases() {
        let train = gaussian(40, 2, 9);
        assert_eq!(auth_pct(&train, &train).unwrap(), 0.0);
        let far = FeatureMatrix::new(
            train.as_slice().iter().map(|v| v + 50.0).collect(),
            40,
            2,
            Role::Generated,
        )
        .unwrap();
        assert_eq!(auth_pct(&train, &far).unwrap(), 100.0);
        let single = gaussian(1, 2, 1);
        assert!(matches!(auth_pct(&single, &train), Err(FldError::Data(_))));
    }

    #[test]
    fn auth_pct_brute_force() {
        let train = gaussian(25, 3, 10);
        let gen = gaussian(15, 3, 11);
        let dist = |a: &[f64], b: &[f64]| crate::tensor::sq_dist(a, b);
        let mut authentic = 0;
        for g in 0..15 {
            let mut best = (0, f64::INFINITY);
            for i in 0..25 {
                let v = dist(gen.row(g), train.row(i));
                if v < best.1 {
                    best = (i, v);
                }
            }
            let mut spacing = f64::INFINITY;
            for j in 0..25 {
                if j != best.0 {
                    spacing = spacing.min(dist(train.row(best.0), train.row(j)));
                }
            }
            if best.1 >= spacing {
                authentic += 1;
            }
        }
        assert_eq!(auth_pct(&train, &gen).unwrap(), 100.0 * authentic as f64 / 15.0);
    }
}
