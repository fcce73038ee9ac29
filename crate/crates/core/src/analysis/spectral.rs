use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::problems::{Matrix, Vector};

/// Symmetry tolerance accepted by [`spectral_split`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix split at the sign boundary.
///
/// Eigenvalues are in descending order within each part and each eigenvector
/// has its first nonzero component positive.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub eigvals_nonneg: Vec<f64>,
    pub eigvals_neg: Vec<f64>,
    /// `M × k` with orthonormal columns spanning the nonnegative eigenspace.
    pub basis_nonneg: Matrix,
    /// `M × (M−k)` with orthonormal columns spanning the negative eigenspace.
    pub basis_neg: Matrix,
}

impl SpectralSplit {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigvals_nonneg
            .iter()
            .chain(&self.eigvals_neg)
            .copied()
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `V Λ Vᵀ`.
    pub fn reassemble(&self) -> Matrix {
        let v = self.basis();
        let lambda = Matrix::from_diagonal(&Vector::from_vec(self.eigenvalues()));
        &v * lambda * v.transpose()
    }

    /// `[V^{≥0} V^{<0}]`.
    pub fn basis(&self) -> Matrix {
        let n = self.basis_nonneg.nrows().max(self.basis_neg.nrows());
        let mut v = Matrix::zeros(n, self.basis_nonneg.ncols() + self.basis_neg.ncols());
        let k = self.basis_nonneg.ncols();
        if k > 0 {
            v.columns_mut(0, k).copy_from(&self.basis_nonneg);
        }
        if self.basis_neg.ncols() > 0 {
            v.columns_mut(k, self.basis_neg.ncols())
                .copy_from(&self.basis_neg);
        }
        v
    }
}

fn asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).abs().max()
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::invalid("hessian", "matrix must be square"));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("hessian", "entries must be finite"));
    }
    let a = asymmetry(m);
    if a > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: a });
    }
    Ok(())
}

pub fn spectral_split(hessian: &Matrix) -> Result<SpectralSplit> {
    check_symmetric(hessian)?;
    let n = hessian.nrows();
    let sym = (hessian + hessian.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let scale = eig.eigenvectors.abs().max().max(f64::MIN_POSITIVE);
    let column = |idx: usize| {
        let mut c = eig.eigenvectors.column(idx).into_owned();
        if let Some(first) = c.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                c.neg_mut();
            }
        }
        c
    };

    let (nonneg, neg): (Vec<usize>, Vec<usize>) =
        order.into_iter().partition(|&i| eig.eigenvalues[i] >= 0.0);
    let build = |idx: &[usize]| {
        let mut m = Matrix::zeros(n, idx.len());
        for (k, &i) in idx.iter().enumerate() {
            m.set_column(k, &column(i));
        }
        m
    };
    Ok(SpectralSplit {
        eigvals_nonneg: nonneg.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigvals_neg: neg.iter().map(|&i| eig.eigenvalues[i]).collect(),
        basis_nonneg: build(&nonneg),
        basis_neg: build(&neg),
    })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 2 {
        // Closed form keeps the per-step classifier cheap for planar models.
        let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
        let mid = 0.5 * (a + d);
        let rad = (0.5 * (a - d)).hypot(b);
        return mid - rad;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// `λ_min((V^{<0})ᵀ R_s V^{<0})`: the noise power along the descent directions.
pub fn saddle_noise_floor(covariance: &Matrix, split: &SpectralSplit) -> Result<f64> {
    check_symmetric(covariance)?;
    if split.basis_neg.ncols() == 0 {
        return Err(Error::EmptyNegativeSubspace);
    }
    if covariance.nrows() != split.basis_neg.nrows() {
        return Err(Error::DimensionMismatch {
            expected: split.basis_neg.nrows(),
            got: covariance.nrows(),
        });
    }
    let v = &split.basis_neg;
    let projected = v.transpose() * covariance * v;
    let projected = (&projected + projected.transpose()) * 0.5;
    Ok(projected
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn diagonal_split() {
        let s = spectral_split(&m2(1.0, 0.0, 0.0, -1.0)).unwrap();
        assert_eq!(s.eigvals_nonneg, vec![1.0]);
        assert_eq!(s.eigvals_neg, vec![-1.0]);
        assert_eq!(
            s.basis_nonneg.column(0).into_owned(),
            Vector::from_vec(vec![1.0, 0.0])
        );
        assert_eq!(
            s.basis_neg.column(0).into_owned(),
            Vector::from_vec(vec![0.0, 1.0])
        );
    }

    #[test]
    fn logistic_saddle_hessian_split() {
        // Closed form for [[a, b], [b, a]]: a ± b with eigenvectors (1, ∓1)/√2.
        let s = spectral_split(&m2(0.1, -0.5, -0.5, 0.1)).unwrap();
        assert!((s.eigvals_nonneg[0] - 0.6).abs() < 1e-14);
        assert!((s.eigvals_neg[0] + 0.4).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let neg = s.basis_neg.column(0);
        assert!((neg[0] - r).abs() < 1e-14 && (neg[1] - r).abs() < 1e-14);
        let pos = s.basis_nonneg.column(0);
        assert!((pos[0] - r).abs() < 1e-14 && (pos[1] + r).abs() < 1e-14);
    }

    #[test]
    fn identity_has_no_negative_part() {
        let s = spectral_split(&Matrix::identity(3, 3)).unwrap();
        assert!(s.eigvals_neg.is_empty());
        assert_eq!(s.basis_neg.ncols(), 0);
        assert_eq!(s.eigvals_nonneg, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(matches!(
            spectral_split(&m2(1.0, 0.5, 0.0, 1.0)),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(spectral_split(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn noise_floor_examples() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let split = spectral_split(&m2(0.1, -0.5, -0.5, 0.1)).unwrap();
        let iso = Matrix::identity(2, 2) * 2.5;
        assert!((saddle_noise_floor(&iso, &split).unwrap() - 2.5).abs() < 1e-14);

        let along = Vector::from_vec(vec![r, r]);
        let aligned = &along * along.transpose() * 3.0;
        assert!((saddle_noise_floor(&aligned, &split).unwrap() - 3.0).abs() < 1e-14);

        let across = Vector::from_vec(vec![r, -r]);
        let orth = &across * across.transpose();
        assert!(saddle_noise_floor(&orth, &split).unwrap().abs() < 1e-15);

        let convex = spectral_split(&Matrix::identity(2, 2)).unwrap();
        assert!(matches!(
            saddle_noise_floor(&iso, &convex),
            Err(Error::EmptyNegativeSubspace)
        ));
    }

    #[test]
    fn closed_form_min_eigenvalue() {
        assert!((min_eigenvalue(&m2(0.1, -0.5, -0.5, 0.1)) + 0.4).abs() < 1e-15);
        assert_eq!(min_eigenvalue(&m2(1.0, 0.0, 0.0, -1.0)), -1.0);
        let m3 = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, -3.0, 1.0]));
        assert!((min_eigenvalue(&m3) + 3.0).abs() < 1e-14);
    }
}
