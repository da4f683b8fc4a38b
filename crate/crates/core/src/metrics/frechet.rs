use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::{AttributeSpec, LabeledSample};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
pub const EIGEN_TOLERANCE: f64 = 1e-10;

/// Mean and covariance of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussStats {
    mean: Vec<f64>,
    covariance: Matrix,
    n: usize,
}

impl GaussStats {
    /// Validates symmetry and positive semi-definiteness (eigenvalues down
    /// to `-1e-10` are accepted and treated as zero).
    pub fn new(mean: Vec<f64>, covariance: Matrix, n: usize) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::shape(format!(
                "covariance {:?} for a mean of length {d}",
                covariance.shape()
            )));
        }
        if !covariance.is_finite() || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian statistics".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        let min_eig = SymmetricEigen::new(to_dmatrix(&covariance))
            .eigenvalues
            .min();
        if min_eig < -EIGEN_TOLERANCE {
            return Err(Error::invalid(format!(
                "covariance has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(GaussStats {
            mean,
            covariance,
            n,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fewer than `dim + 1` samples cannot give a full-rank covariance.
    pub fn is_degenerate(&self) -> bool {
        self.n < self.dim() + 1
    }
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Sample mean and unbiased covariance of the rows of `samples`.
pub fn fit_gauss_stats(samples: &Matrix) -> Result<GaussStats> {
    let n = samples.rows();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples for statistics, got {n}"
        )));
    }
    let d = samples.cols();
    let mean = samples.column_means();
    let mut cov = Matrix::zeros(d, d);
    for row in samples.row_iter() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    GaussStats::new(mean, cov, n)
}

/// Squared Fréchet distance between two Gaussians,
/// `|μa - μb|² + tr(Σa + Σb - 2 (Σa Σb)^½)`.
///
/// The trace of the square root is computed as `tr((Σa^½ Σb Σa^½)^½)`, which
/// only needs symmetric eigendecompositions. Negative eigenvalues from
/// round-off are clamped to zero, and so is a final result within round-off
/// of zero.
pub fn frechet_sq(a: &GaussStats, b: &GaussStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "dimensions {} and {} differ",
            a.dim(),
            b.dim()
        )));
    }
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let sa = to_dmatrix(&a.covariance);
    let sb = to_dmatrix(&b.covariance);

    let eig_a = SymmetricEigen::new(sa.clone());
    let sqrt_vals = eig_a.eigenvalues.map(|l| l.max(0.0).sqrt());
    let sqrt_a =
        &eig_a.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig_a.eigenvectors.transpose();
    let inner = &sqrt_a * &sb * &sqrt_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();

    let value = mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "Fréchet distance (mean term {mean_term}, trace of root {tr_sqrt})"
        )));
    }
    Ok(value.max(0.0))
}

/// Statistics of a class-balanced resample of `holdout`: exactly
/// `per_class` samples of every joint label.
pub fn balanced_reference_stats(
    holdout: &[LabeledSample],
    spec: &AttributeSpec,
    per_class: usize,
    rng: &mut Rng,
) -> Result<GaussStats> {
    let rows = balanced_reference_rows(holdout, spec, per_class, rng)?;
    let dim = holdout.first().map_or(0, |s| s.features.len());
    let rows: Vec<&[f64]> = rows.iter().map(|s| s.features.as_slice()).collect();
    fit_gauss_stats(&Matrix::from_rows(&rows, dim)?)
}

/// The class-balanced resample itself, `per_class` samples of each label in
/// label order.
pub fn balanced_reference_rows<'a>(
    holdout: &'a [LabeledSample],
    spec: &AttributeSpec,
    per_class: usize,
    rng: &mut Rng,
) -> Result<Vec<&'a LabeledSample>> {
    let k = spec.joint_cardinality();
    if per_class == 0 {
        return Err(Error::invalid("per-class reference count must be positive"));
    }
    let mut pools: Vec<Vec<&LabeledSample>> = vec![Vec::new(); k];
    for s in holdout {
        if s.joint_label >= k {
            return Err(Error::invalid(format!(
                "label {} out of range",
                s.joint_label
            )));
        }
        pools[s.joint_label].push(s);
    }
    let mut out = Vec::with_capacity(per_class * k);
    for (class, pool) in pools.iter_mut().enumerate() {
        if pool.len() < per_class {
            return Err(Error::DeficientClass {
                class,
                needed: per_class,
                available: pool.len(),
            });
        }
        rng.shuffle(pool);
        out.extend_from_slice(&pool[..per_class]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: Vec<f64>, cov: Vec<f64>) -> GaussStats {
        let d = mean.len();
        GaussStats::new(mean, Matrix::from_vec(d, d, cov).unwrap(), 100).unwrap()
    }

    #[test]
    fn identical_stats_are_zero() {
        let a = stats(vec![0.3, -1.0], vec![2.0, 0.5, 0.5, 1.0]);
        assert!(frechet_sq(&a, &a).unwrap().abs() < 1e-9);
    }

    #[test]
    fn one_dimensional_closed_form() {
        let a = stats(vec![0.0], vec![1.0]);
        let b = stats(vec![1.0], vec![1.0]);
        assert!((frechet_sq(&a, &b).unwrap() - 1.0).abs() < 1e-9);
        // (0 - 0)² + (1 - 3)² for standard deviations 1 and 3
        let c = stats(vec![0.0], vec![9.0]);
        assert!((frechet_sq(&a, &c).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_commuting_case() {
        let a = stats(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 4.0]);
        let b = stats(vec![0.0, 0.0], vec![4.0, 0.0, 0.0, 1.0]);
        assert!((frechet_sq(&a, &b).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn fit_closed_forms() {
        let two = Matrix::from_vec(2, 1, vec![0.0, 2.0]).unwrap();
        let s = fit_gauss_stats(&two).unwrap();
        assert_eq!(s.mean(), &[1.0]);
        assert_eq!(s.covariance()[(0, 0)], 2.0);
        assert!(!s.is_degenerate());

        let constant = Matrix::filled(5, 3, 1.5);
        let s = fit_gauss_stats(&constant).unwrap();
        assert!(s.covariance().as_slice().iter().all(|&v| v == 0.0));
        assert!(fit_gauss_stats(&Matrix::zeros(1, 2)).is_err());
        assert!(fit_gauss_stats(&Matrix::zeros(2, 3))
            .unwrap()
            .is_degenerate());
    }

    #[test]
    fn large_draw_moments() {
        // n = 20000 from N((1, -2), diag(1, 4)): mean standard errors are
        // 0.007 and 0.014, variance standard errors 0.01 and 0.04.
        let mut rng = Rng::new(99);
        let z = rng.gauss_sample(20_000, 2).unwrap();
        let mut x = Matrix::zeros(20_000, 2);
        for i in 0..20_000 {
            x[(i, 0)] = 1.0 + z[(i, 0)];
            x[(i, 1)] = -2.0 + 2.0 * z[(i, 1)];
        }
        let s = fit_gauss_stats(&x).unwrap();
        assert!((s.mean()[0] - 1.0).abs() < 0.05);
        assert!((s.mean()[1] + 2.0).abs() < 0.1);
        assert!((s.covariance()[(0, 0)] - 1.0).abs() < 0.06);
        assert!((s.covariance()[(1, 1)] - 4.0).abs() < 0.24);
        assert!(s.covariance()[(0, 1)].abs() < 0.1);
    }

    #[test]
    fn rejects_invalid_covariances() {
        let asym = Matrix::from_vec(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(GaussStats::new(vec![0.0, 0.0], asym, 10).is_err());
        let indefinite = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(GaussStats::new(vec![0.0, 0.0], indefinite, 10).is_err());
        let a = stats(vec![0.0], vec![1.0]);
        let b = stats(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]);
        assert!(frechet_sq(&a, &b).is_err());
    }
}
