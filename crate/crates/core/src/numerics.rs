//! Dense real linear-algebra kernels shared by the estimators and metrics.
//!
//! Everything here is a pure function of its inputs. Decompositions are
//! delegated to `nalgebra`; this module fixes the conventions the rest of
//! the crate relies on (ascending eigenvalues, relative rank cutoffs, full
//! null-space bases even for wide matrices).

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Dense, row/column-indexed real matrix.
pub type Matrix = DMatrix<f64>;

/// Relative singular-value cutoff used to decide numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Relative asymmetry accepted by [`sym_eig_ascending`] before it refuses.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Full spectrum of a symmetric matrix, eigenvalues in non-decreasing order.
#[derive(Debug, Clone)]
pub struct EigenPairsAscending {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, column `i` belongs to `values[i]`.
    pub vectors: Matrix,
}

impl EigenPairsAscending {
    /// Eigenvectors of the `count` smallest eigenvalues.
    pub fn smallest_vectors(&self, count: usize) -> Matrix {
        self.vectors.columns(0, count).into_owned()
    }
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Builds a matrix from row-major entries, rejecting non-finite values.
pub fn from_rows(rows: usize, cols: usize, entries: &[f64]) -> Result<Matrix> {
    if entries.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    let m = Matrix::from_row_slice(rows, cols, entries);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

/// Largest singular value (0 for empty matrices).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

/// Stacks `top` over `bottom` (equal column counts).
pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Matrix> {
    if top.ncols() != bottom.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "vstack of {} and {} columns",
            top.ncols(),
            bottom.ncols()
        )));
    }
    let mut out = Matrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    Ok(out)
}

/// Places `left` beside `right` (equal row counts).
pub fn hstack(left: &Matrix, right: &Matrix) -> Result<Matrix> {
    if left.nrows() != right.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "hstack of {} and {} rows",
            left.nrows(),
            right.nrows()
        )));
    }
    let mut out = Matrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    Ok(out)
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
///
/// The input is symmetrized as `(S + Sᵀ)/2` after checking that the
/// asymmetry is within round-off (`SYMMETRY_TOL` relative to `‖S‖_F`).
/// Eigenvector signs are left as the solver returns them.
pub fn sym_eig_ascending(s: &Matrix) -> Result<EigenPairsAscending> {
    if s.nrows() != s.ncols() {
        return Err(Error::NonSquare {
            rows: s.nrows(),
            cols: s.ncols(),
        });
    }
    ensure_finite(s)?;
    let n = s.nrows();
    if n == 0 {
        return Ok(EigenPairsAscending {
            values: Vec::new(),
            vectors: Matrix::zeros(0, 0),
        });
    }
    let asymmetry = (s - s.transpose()).norm();
    let tolerance = SYMMETRY_TOL * frobenius(s).max(1.0);
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric {
            asymmetry,
            tolerance,
        });
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenPairsAscending { values, vectors })
}

/// Singular values together with the full right singular basis (`q×q`).
///
/// Wide inputs are padded with zero rows so that the returned basis always
/// spans all of `R^q`; the padding does not change the singular values that
/// matter, it only appends zeros.
fn full_right_svd(m: &Matrix) -> (Vec<f64>, Matrix) {
    let (p, q) = m.shape();
    let padded = if p >= q {
        m.clone()
    } else {
        let mut padded = Matrix::zeros(q, q);
        padded.rows_mut(0, p).copy_from(m);
        padded
    };
    let svd = SVD::new(padded, false, true);
    let v = svd
        .v_t
        .expect("right singular vectors were requested")
        .transpose();
    (svd.singular_values.iter().copied().collect(), v)
}

/// Numerical rank: singular values above `rank_tol · σ_max`.
pub fn numerical_rank(m: &Matrix, rank_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// Orthonormal basis `N` (`q×d`) of the numerical null space of `M` (`p×q`).
///
/// `d = q − rank`, where the rank counts singular values above
/// `rank_tol · σ_max`. A zero (or row-less) `M` yields `I_q`.
pub fn orthonormal_nullspace(m: &Matrix, rank_tol: f64) -> Result<Matrix> {
    ensure_finite(m)?;
    let q = m.ncols();
    if q == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if m.nrows() == 0 {
        return Ok(identity(q));
    }
    let (sv, v) = full_right_svd(m);
    let smax = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    let null_cols: Vec<usize> = (0..q)
        .filter(|&j| smax == 0.0 || sv[j] <= rank_tol * smax)
        .collect();
    let mut basis = Matrix::zeros(q, null_cols.len());
    for (dst, &src) in null_cols.iter().enumerate() {
        basis.set_column(dst, &v.column(src));
    }
    Ok(basis)
}

/// Orthonormal basis of the column space of `u` (numerical rank cutoff
/// `DEFAULT_RANK_TOL`).
pub fn orthonormal_range(u: &Matrix) -> Result<Matrix> {
    ensure_finite(u)?;
    let (rows, cols) = u.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(rows, 0));
    }
    let svd = SVD::new(u.clone(), true, false);
    let left = svd.u.expect("left singular vectors were requested");
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&j| smax > 0.0 && svd.singular_values[j] > DEFAULT_RANK_TOL * smax)
        .collect();
    let mut basis = Matrix::zeros(rows, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        basis.set_column(dst, &left.column(src));
    }
    Ok(basis)
}

/// Moore–Penrose inverse of a wide matrix with full row rank.
///
/// Equals `Zᵀ(ZZᵀ)⁻¹`; evaluated through the SVD so that moderately
/// ill-conditioned inputs keep full accuracy.
pub fn pinv_full_row_rank(z_low: &Matrix) -> Result<Matrix> {
    ensure_finite(z_low)?;
    let (l, c) = z_low.shape();
    if l > c {
        return Err(Error::ShapeMismatch(format!(
            "pseudoinverse expects a wide matrix, got {l}x{c}"
        )));
    }
    if l == 0 {
        return Ok(Matrix::zeros(c, 0));
    }
    let svd = SVD::new(z_low.clone(), true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    let smin = sv.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio <= DEFAULT_RANK_TOL {
        return Err(Error::RankDeficientRows { ratio });
    }
    let u = svd.u.expect("left singular vectors were requested");
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let inv_s = DVector::from_iterator(sv.len(), sv.iter().map(|s| 1.0 / s));
    let scaled_ut = Matrix::from_diagonal(&inv_s) * u.transpose();
    Ok(v_t.transpose() * scaled_ut)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_eigen_contract(s: &Matrix, eig: &EigenPairsAscending) {
        for w in eig.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
        let n = s.nrows();
        let gram = eig.vectors.transpose() * &eig.vectors;
        assert!(spectral_norm(&(gram - identity(n))) <= 1e-12);
        let lambda = Matrix::from_diagonal(&DVector::from_vec(eig.values.clone()));
        let resid = s * &eig.vectors - &eig.vectors * lambda;
        assert!(resid.norm() <= 1e-10 * frobenius(s).max(1.0));
    }

    #[test]
    fn eig_diagonal() {
        let s = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let eig = sym_eig_ascending(&s).unwrap();
        assert_abs_diff_eq!(eig.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.vectors[(1, 0)].abs(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.vectors[(0, 1)].abs(), 1.0, epsilon = 1e-14);
        check_eigen_contract(&s, &eig);
    }

    #[test]
    fn eig_two_by_two_closed_form() {
        let s = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let eig = sym_eig_ascending(&s).unwrap();
        assert_abs_diff_eq!(eig.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], 3.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = eig.vectors.column(0);
        let v1 = eig.vectors.column(1);
        assert_abs_diff_eq!((v0[0] * h - v0[1] * h).abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!((v1[0] * h + v1[1] * h).abs(), 1.0, epsilon = 1e-12);
    }

    /// Real roots of a monic cubic via the trigonometric formula.
    fn cubic_roots(c2: f64, c1: f64, c0: f64) -> [f64; 3] {
        // x^3 + c2 x^2 + c1 x + c0, shift x = t - c2/3
        let p = c1 - c2 * c2 / 3.0;
        let q = 2.0 * c2.powi(3) / 27.0 - c2 * c1 / 3.0 + c0;
        let r = (-p / 3.0).sqrt();
        let arg = (3.0 * q / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let mut roots = [0.0; 3];
        for (k, root) in roots.iter_mut().enumerate() {
            *root = 2.0 * r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - c2 / 3.0;
        }
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn eig_random_three_by_three_matches_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 3, 3);
        let s = (&a + a.transpose()) * 0.5;
        // det(xI - S) = x^3 - tr x^2 + (sum of principal 2x2 minors) x - det
        let tr = s.trace();
        let minors = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)]
            + s[(0, 0)] * s[(2, 2)] - s[(0, 2)] * s[(2, 0)]
            + s[(1, 1)] * s[(2, 2)] - s[(1, 2)] * s[(2, 1)];
        let det = s.determinant();
        let roots = cubic_roots(-tr, minors, -det);
        let eig = sym_eig_ascending(&s).unwrap();
        for (got, want) in eig.values.iter().zip(roots.iter()) {
            assert_abs_diff_eq!(*got, *want, epsilon = 1e-10);
        }
        check_eigen_contract(&s, &eig);
    }

    #[test]
    fn eig_errors() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(sym_eig_ascending(&rect), Err(Error::NonSquare { .. })));
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig_ascending(&asym), Err(Error::NotSymmetric { .. })));
        let nan = Matrix::from_row_slice(1, 1, &[f64::NAN]);
        assert_eq!(sym_eig_ascending(&nan).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn eig_tolerates_roundoff_asymmetry() {
        let s = Matrix::from_row_slice(2, 2, &[2.0, 1.0 + 1e-15, 1.0, 2.0]);
        let eig = sym_eig_ascending(&s).unwrap();
        assert_abs_diff_eq!(eig.values[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nullspace_examples() {
        let n = orthonormal_nullspace(&identity(2), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(n.shape(), (2, 0));

        let n = orthonormal_nullspace(&Matrix::from_row_slice(1, 2, &[1.0, 0.0]), DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(n.shape(), (2, 1));
        assert_abs_diff_eq!(n[(0, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n[(1, 0)].abs(), 1.0, epsilon = 1e-15);

        let n = orthonormal_nullspace(&Matrix::from_row_slice(1, 2, &[1.0, 1.0]), DEFAULT_RANK_TOL)
            .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(n[(0, 0)].abs(), h, epsilon = 1e-14);
        assert_abs_diff_eq!(n[(0, 0)] + n[(1, 0)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn nullspace_of_empty_and_zero() {
        assert_eq!(orthonormal_nullspace(&Matrix::zeros(0, 3), 1e-10).unwrap(), identity(3));
        assert_eq!(orthonormal_nullspace(&Matrix::zeros(2, 3), 1e-10).unwrap().ncols(), 3);
        let nan = Matrix::from_row_slice(1, 1, &[f64::INFINITY]);
        assert_eq!(orthonormal_nullspace(&nan, 1e-10).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn nullspace_dimension_for_constructed_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 1000;
        let mut hits = 0;
        for _ in 0..trials {
            let p = rng.random_range(1..7);
            let q = rng.random_range(1..7);
            let rho = rng.random_range(0..=p.min(q));
            let m = random_matrix(&mut rng, p, rho) * random_matrix(&mut rng, rho, q);
            let n = orthonormal_nullspace(&m, DEFAULT_RANK_TOL).unwrap();
            let d = n.ncols();
            let orth = (n.transpose() * &n - identity(d)).norm();
            let resid = (&m * &n).norm();
            assert!(orth <= 1e-12);
            assert!(resid <= DEFAULT_RANK_TOL * frobenius(&m).max(1.0));
            if d == q - rho {
                hits += 1;
            }
        }
        assert!(hits * 100 >= trials * 99, "{hits}/{trials}");
    }

    #[test]
    fn pinv_examples() {
        let p = pinv_full_row_rank(&Matrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert_eq!(p, Matrix::from_row_slice(2, 1, &[1.0, 0.0]));
        let p = pinv_full_row_rank(&Matrix::from_row_slice(1, 1, &[2.0])).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);
        let p = pinv_full_row_rank(&Matrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[(1, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn pinv_rejects_rank_deficient_rows() {
        let z = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(pinv_full_row_rank(&z), Err(Error::RankDeficientRows { .. })));
        let z = Matrix::zeros(1, 2);
        assert!(matches!(pinv_full_row_rank(&z), Err(Error::RankDeficientRows { .. })));
    }

    #[test]
    fn pinv_moore_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let l = rng.random_range(1..4);
            let c = rng.random_range(l..7);
            let z = random_matrix(&mut rng, l, c);
            let p = pinv_full_row_rank(&z).unwrap();
            assert!((&z * &p - identity(l)).norm() <= 1e-10);
            assert!((&z * &p * &z - &z).norm() <= 1e-9);
            assert!((&p * &z * &p - &p).norm() <= 1e-9);
            let zp = &z * &p;
            let pz = &p * &z;
            assert!((&zp - zp.transpose()).norm() <= 1e-9);
            assert!((&pz - pz.transpose()).norm() <= 1e-9);
            // agrees with the normal-equations formula
            let formula = z.transpose() * (&z * z.transpose()).try_inverse().unwrap();
            assert!((&p - formula).norm() <= 1e-8);
        }
    }

    #[test]
    fn range_basis_drops_dependent_columns() {
        let u = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let b = orthonormal_range(&u).unwrap();
        assert_eq!(b.ncols(), 1);
        assert_abs_diff_eq!(b[(0, 0)].abs(), 1.0, epsilon = 1e-14);
    }
}
