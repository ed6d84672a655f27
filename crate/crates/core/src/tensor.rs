//! Dense feature matrices and the numerical kernels shared by every metric:
//! blocked squared-distance matrices, stable log-space reductions, moment
//! statistics and per-dimension standardization.
//!
//! All accumulation happens in `f64`, regardless of the precision the
//! features were stored in.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FldError, Result};

/// Default number of rows per distance block.
pub const DEFAULT_BLOCK_ROWS: usize = 1024;

/// Floor applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Which split a feature matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
    Generated,
    Baseline,
}

/// Row-major `n x d` matrix of feature embeddings.
///
/// Construction rejects empty shapes and non-finite entries, so every other
/// routine can assume clean input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    role: Role,
    ids: Option<Vec<String>>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize, role: Role) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(FldError::data(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(FldError::data(format!(
                "buffer holds {} values but shape is {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(FldError::data(format!(
                "non-finite value {} at row {}, column {}",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self {
            data,
            rows,
            cols,
            role,
            ids: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], role: Role) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(FldError::data(format!(
                    "ragged rows: row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(data, n, d, role)
    }

    /// Attach per-row identifiers. The count must match the row count.
    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.rows {
            return Err(FldError::data(format!(
                "{} ids supplied for {} rows",
                ids.len(),
                self.rows
            )));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.cols
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Identifier for row `i`: the attached id, or the row index.
    pub fn id(&self, i: usize) -> String {
        match &self.ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(FldError::data(format!(
                    "row index {i} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut out = Self::new(data, indices.len(), self.cols, self.role)?;
        if let Some(ids) = &self.ids {
            out.ids = Some(indices.iter().map(|&i| ids[i].clone()).collect());
        }
        Ok(out)
    }

    /// Squared Euclidean norm of every row.
    pub fn sq_norms(&self) -> Vec<f64> {
        self.iter_rows()
            .map(|r| r.iter().map(|v| v * v).sum())
            .collect()
    }

    pub(crate) fn ensure_same_dim(&self, other: &FeatureMatrix) -> Result<()> {
        if self.cols != other.cols {
            return Err(FldError::Dimension {
                expected: self.cols,
                found: other.cols,
            });
        }
        Ok(())
    }
}

/// Dense `n x m` matrix of squared Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    pub row_role: Role,
    pub col_role: Role,
}

impl DistanceMatrix {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Smallest entry of each row.
    pub fn row_min(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.cols)
            .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Smallest entry of each column.
    pub fn col_min(&self) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.cols];
        for r in self.values.chunks_exact(self.cols) {
            for (o, &v) in out.iter_mut().zip(r) {
                if v < *o {
                    *o = v;
                }
            }
        }
        out
    }

    /// Transposed copy.
    pub fn transpose(&self) -> DistanceMatrix {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        DistanceMatrix {
            values,
            rows: self.cols,
            cols: self.rows,
            row_role: self.col_role,
            col_role: self.row_role,
        }
    }
}

/// Squared distances between every row of `a` and every row of `b`.
pub fn pairwise_sq_dist(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<DistanceMatrix> {
    pairwise_sq_dist_blocked(a, b, DEFAULT_BLOCK_ROWS)
}

/// Blocked variant of [`pairwise_sq_dist`]. Each output entry is summed in
/// column order, so the result does not depend on `block_rows` or on how
/// blocks are scheduled across threads.
pub fn pairwise_sq_dist_blocked(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    block_rows: usize,
) -> Result<DistanceMatrix> {
    a.ensure_same_dim(b)?;
    if block_rows == 0 {
        return Err(FldError::config("distance block size must be at least 1"));
    }
    let (n, m) = (a.rows(), b.rows());
    let mut values = vec![0.0; n * m];
    values
        .par_chunks_mut(block_rows * m)
        .enumerate()
        .for_each(|(block, out)| {
            let start = block * block_rows;
            for (local, out_row) in out.chunks_exact_mut(m).enumerate() {
                let ar = a.row(start + local);
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o = sq_dist(ar, b.row(j));
                }
            }
        });
    Ok(DistanceMatrix {
        values,
        rows: n,
        cols: m,
        row_role: a.role(),
        col_role: b.role(),
    })
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(p, q)| {
            let t = p - q;
            t * t
        })
        .sum()
}

/// `log(sum(exp(v)))`, evaluated around the maximum entry.
///
/// Entries may be `-inf`; the result is `-inf` only when all of them are.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(FldError::data("logsumexp of an empty vector"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(FldError::data("logsumexp input contains NaN"));
    }
    Ok(lse(values))
}

/// Unchecked log-sum-exp for hot loops; callers guarantee non-empty, NaN-free input.
#[inline]
pub(crate) fn lse(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Population mean and covariance (`1/n` normalization).
///
/// Returns the covariance as a row-major `d x d` buffer.
pub fn moments(x: &FeatureMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, d) = (x.rows(), x.dim());
    if n < 2 {
        return Err(FldError::data(format!(
            "moments need at least 2 rows, got {n}"
        )));
    }
    // Welford co-moment update.
    let mut mean = vec![0.0; d];
    let mut comoment = vec![0.0; d * d];
    let mut delta = vec![0.0; d];
    for (k, row) in x.iter_rows().enumerate() {
        let count = (k + 1) as f64;
        for c in 0..d {
            delta[c] = row[c] - mean[c];
            mean[c] += delta[c] / count;
        }
        for p in 0..d {
            let after = row[p] - mean[p];
            let line = &mut comoment[p * d..(p + 1) * d];
            for q in 0..d {
                line[q] += delta[q] * after;
            }
        }
    }
    // The update above is exact only up to rounding in its asymmetric form;
    // symmetrize before normalizing.
    let nf = n as f64;
    let mut cov = vec![0.0; d * d];
    for p in 0..d {
        for q in 0..d {
            cov[p * d + q] = 0.5 * (comoment[p * d + q] + comoment[q * d + p]) / nf;
        }
    }
    Ok((mean, cov))
}

/// Per-dimension affine map `(x - mean) / stdev`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

impl StandardizationParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        apply_standardizer(self, x)
    }

    /// Map standardized features back to the original units.
    pub fn invert(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check_dim(x)?;
        let d = self.dim();
        let data = x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(k, v)| v * self.stdev[k % d] + self.mean[k % d])
            .collect();
        rebuild(x, data)
    }

    fn check_dim(&self, x: &FeatureMatrix) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(FldError::Dimension {
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(())
    }
}

/// Fit per-dimension mean and population standard deviation, flooring the
/// latter at [`STD_FLOOR`].
pub fn fit_standardizer(x: &FeatureMatrix) -> StandardizationParams {
    let (n, d) = (x.rows() as f64, x.dim());
    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in x.iter_rows() {
        for c in 0..d {
            let t = row[c] - mean[c];
            var[c] += t * t;
        }
    }
    let stdev = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    StandardizationParams { mean, stdev }
}

pub fn apply_standardizer(p: &StandardizationParams, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    p.check_dim(x)?;
    let d = p.dim();
    let data = x
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, v)| (v - p.mean[k % d]) / p.stdev[k % d])
        .collect();
    rebuild(x, data)
}

fn rebuild(like: &FeatureMatrix, data: Vec<f64>) -> Result<FeatureMatrix> {
    let mut out = FeatureMatrix::new(data, like.rows(), like.dim(), like.role())?;
    out.ids = like.ids.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-3.0..3.0)).collect();
        FeatureMatrix::new(data, rows, cols, Role::Train).unwrap()
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(FeatureMatrix::new(vec![], 0, 2, Role::Train).is_err());
        assert!(FeatureMatrix::new(vec![1.0, f64::NAN], 1, 2, Role::Train).is_err());
        assert!(FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]], Role::Train).is_err());
    }

    #[test]
    fn distance_hand_cases() {
        let a = FeatureMatrix::from_rows(&[[1.0, 2.0]], Role::Train).unwrap();
        let d = pairwise_sq_dist(&a, &a).unwrap();
        assert_eq!(d.get(0, 0), 0.0);

        let a = FeatureMatrix::from_rows(&[[0.0, 0.0]], Role::Train).unwrap();
        let b = FeatureMatrix::from_rows(&[[3.0, 4.0]], Role::Generated).unwrap();
        assert_eq!(pairwise_sq_dist(&a, &b).unwrap().get(0, 0), 25.0);
    }

    #[test]
    fn distance_matches_triple_loop() {
        let a = random(5, 3, 1);
        let b = random(4, 3, 2);
        let d = pairwise_sq_dist(&a, &b).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let mut naive = 0.0;
                for k in 0..3 {
                    naive += (a.row(i)[k] - b.row(j)[k]).powi(2);
                }
                assert_relative_eq!(d.get(i, j), naive, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn distance_dimension_mismatch() {
        let err = pairwise_sq_dist(&random(2, 3, 0), &random(2, 4, 0)).unwrap_err();
        assert!(matches!(err, FldError::Dimension { expected: 3, found: 4 }));
    }

    #[test]
    fn logsumexp_cases() {
        assert_eq!(logsumexp(&[3.25]).unwrap(), 3.25);
        assert_relative_eq!(logsumexp(&[0.0, 0.0]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(
            logsumexp(&[1000.0, 1000.0]).unwrap(),
            1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(logsumexp(&[]).is_err());
        assert!(logsumexp(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn moments_hand_cases() {
        let x = FeatureMatrix::from_rows(&[[0.0], [2.0]], Role::Train).unwrap();
        let (mu, cov) = moments(&x).unwrap();
        assert_eq!(mu, vec![1.0]);
        assert_eq!(cov, vec![1.0]);

        let rep = FeatureMatrix::from_rows(&[[1.5, -2.0]; 5], Role::Train).unwrap();
        let (_, cov) = moments(&rep).unwrap();
        assert!(cov.iter().all(|&c| c == 0.0));

        let one = FeatureMatrix::from_rows(&[[1.0]], Role::Train).unwrap();
        assert!(moments(&one).is_err());
    }

    #[test]
    fn moments_match_two_pass() {
        let x = random(50, 4, 7);
        let (mu, cov) = moments(&x).unwrap();
        let n = 50.0;
        let mut mu2 = [0.0; 4];
        for r in x.iter_rows() {
            for k in 0..4 {
                mu2[k] += r[k] / n;
            }
        }
        for k in 0..4 {
            assert_relative_eq!(mu[k], mu2[k], max_relative = 1e-10);
        }
        for p in 0..4 {
            for q in 0..4 {
                let mut c = 0.0;
                for r in x.iter_rows() {
                    c += (r[p] - mu2[p]) * (r[q] - mu2[q]);
                }
                assert_relative_eq!(cov[p * 4 + q], c / n, max_relative = 1e-10, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn standardizer_cases() {
        let x = FeatureMatrix::from_rows(&[[0.0], [2.0]], Role::Train).unwrap();
        let p = fit_standardizer(&x);
        let mid = FeatureMatrix::from_rows(&[[1.0]], Role::Test).unwrap();
        assert_eq!(p.apply(&mid).unwrap().row(0), &[0.0]);

        let c = FeatureMatrix::from_rows(&[[4.0, 1.0], [4.0, 3.0]], Role::Train).unwrap();
        let p = fit_standardizer(&c);
        assert_eq!(p.stdev[0], STD_FLOOR);
        let z = p.apply(&c).unwrap();
        assert!(z.iter_rows().all(|r| r[0] == 0.0));
    }

    #[test]
    fn standardizer_round_trip_and_moments() {
        let x = random(40, 5, 11);
        let p = fit_standardizer(&x);
        let z = p.apply(&x).unwrap();
        let (mu, cov) = moments(&z).unwrap();
        for k in 0..5 {
            assert!(mu[k].abs() < 1e-12);
            assert_relative_eq!(cov[k * 5 + k], 1.0, max_relative = 1e-12);
        }
        let back = p.invert(&z).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn self_distance_is_symmetric_with_zero_diagonal(seed in 0u64..1000, n in 1usize..12, d in 1usize..6) {
            let a = random(n, d, seed);
            let dm = pairwise_sq_dist(&a, &a).unwrap();
            for i in 0..n {
                prop_assert_eq!(dm.get(i, i), 0.0);
                for j in 0..n {
                    prop_assert!(dm.get(i, j) >= 0.0);
                    prop_assert!((dm.get(i, j) - dm.get(j, i)).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn blocking_does_not_change_distances(seed in 0u64..1000, block in 1usize..9) {
            let a = random(17, 3, seed);
            let b = random(6, 3, seed + 1);
            let full = pairwise_sq_dist_blocked(&a, &b, 1024).unwrap();
            let blocked = pairwise_sq_dist_blocked(&a, &b, block).unwrap();
            for (x, y) in full.as_slice().iter().zip(blocked.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300));
            }
        }

        #[test]
        fn logsumexp_is_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let lhs = logsumexp(&shifted).unwrap();
            let rhs = logsumexp(&v).unwrap() + c;
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }
}
