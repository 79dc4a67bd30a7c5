//! Subspace distances and the Gram-limit and Davis–Kahan diagnostics.
//!
//! Subspaces are compared through principal angles. `sin_max`, the sine of
//! the largest angle, equals the spectral distance between the orthogonal
//! projectors when the dimensions agree.

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};

/// Bases whose Gram matrix is further than this from `I` are re-orthonormalized.
const ORTHONORMALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceReport {
    /// Principal angles in radians, non-decreasing.
    pub angles: Vec<f64>,
    pub sin_max: f64,
    pub dims: (usize, usize),
}

fn orthonormalized(u: &Matrix) -> Result<Matrix> {
    numerics::ensure_finite(u)?;
    let gram = u.tr_mul(u);
    if (gram - numerics::identity(u.ncols())).norm() > ORTHONORMALITY_TOL {
        numerics::orthonormal_range(u)
    } else {
        Ok(u.clone())
    }
}

fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    SVD::new(m.clone(), false, false).singular_values.iter().copied().collect()
}

/// Principal angles between `Ra(U₁)` and `Ra(U₂)`.
///
/// Cosines come from the singular values of `U₁ᵀU₂` and sines from those of
/// the component of the smaller basis orthogonal to the larger one; each
/// angle is read from whichever of the two is better conditioned, so both
/// tiny and near-right angles keep full relative accuracy.
pub fn principal_angles(u1: &Matrix, u2: &Matrix) -> Result<SubspaceReport> {
    if u1.nrows() != u2.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "bases live in R^{} and R^{}",
            u1.nrows(),
            u2.nrows()
        )));
    }
    let q1 = orthonormalized(u1)?;
    let q2 = orthonormalized(u2)?;
    let dims = (q1.ncols(), q2.ncols());
    let (small, big) = if q1.ncols() <= q2.ncols() { (&q1, &q2) } else { (&q2, &q1) };
    let count = small.ncols();
    if count == 0 {
        return Ok(SubspaceReport {
            angles: Vec::new(),
            sin_max: 0.0,
            dims,
        });
    }

    let mut cos = singular_values(&(small.tr_mul(big)));
    cos.sort_by(|a, b| b.total_cmp(a));
    cos.resize(count, 0.0);
    let residual = small - big * big.tr_mul(small);
    let mut sin = singular_values(&residual);
    sin.sort_by(|a, b| a.total_cmp(b));
    sin.resize(count, 0.0);

    let angles: Vec<f64> = cos
        .iter()
        .zip(&sin)
        .map(|(&c, &s)| {
            let c = c.clamp(0.0, 1.0);
            if c * c < 0.5 {
                c.acos()
            } else {
                s.clamp(0.0, 1.0).asin()
            }
        })
        .collect();
    let mut angles = angles;
    angles.sort_by(|a, b| a.total_cmp(b));
    let sin_max = angles.last().map_or(0.0, |a| a.sin());
    Ok(SubspaceReport {
        angles,
        sin_max,
        dims,
    })
}

/// `Ra(U₁) = Ra(U₂)` up to `tol` on the largest principal-angle sine.
pub fn subspace_equal(u1: &Matrix, u2: &Matrix, tol: f64) -> Result<(bool, SubspaceReport)> {
    let report = principal_angles(u1, u2)?;
    if report.dims.0 != report.dims.1 {
        return Err(Error::DimensionMismatch(report.dims.0, report.dims.1));
    }
    Ok((report.sin_max <= tol, report))
}

/// `Ra(U_small) ⊆ Ra(U_big)` up to `tol`.
pub fn subspace_contained(u_small: &Matrix, u_big: &Matrix, tol: f64) -> Result<(bool, SubspaceReport)> {
    let report = principal_angles(u_small, u_big)?;
    if report.dims.0 > report.dims.1 {
        return Err(Error::ShapeMismatch(format!(
            "cannot contain a {}-dimensional subspace in a {}-dimensional one",
            report.dims.0, report.dims.1
        )));
    }
    Ok((report.sin_max <= tol, report))
}

/// `‖m⁻¹G − (T̂ + σ²I)‖_F`.
pub fn gram_limit_residual(g: &Matrix, m: usize, t_hat: &Matrix, sigma: f64) -> Result<f64> {
    if g.shape() != t_hat.shape() || g.nrows() != g.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "G is {}x{}, T_hat is {}x{}",
            g.nrows(),
            g.ncols(),
            t_hat.nrows(),
            t_hat.ncols()
        )));
    }
    let limit = t_hat + numerics::identity(g.nrows()) * (sigma * sigma);
    Ok((g / m as f64 - limit).norm())
}

/// Both sides of the sin-Θ bound between the noisy Ritz basis `V` and the
/// noiseless null basis `V̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkCheck {
    /// `‖(I − V̄V̄ᵀ)V‖₂`.
    pub lhs: f64,
    /// `‖(I − V̄V̄ᵀ)(T̂ + σ²I − m⁻¹G)V‖₂ / (σ² − ε)`.
    pub rhs: f64,
    pub epsilon: f64,
    pub violated: bool,
}

pub fn davis_kahan_check(
    v: &Matrix,
    v_bar: &Matrix,
    g: &Matrix,
    m: usize,
    t_hat: &Matrix,
    sigma: f64,
    epsilon: f64,
) -> Result<DkCheck> {
    let sigma2 = sigma * sigma;
    if !(epsilon > 0.0 && epsilon < sigma2) {
        return Err(Error::InvalidSlack { epsilon, sigma2 });
    }
    let dim = g.nrows();
    if v.shape() != v_bar.shape() || v.nrows() != dim || g.shape() != t_hat.shape() || !g.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "V {:?}, V_bar {:?}, G {:?}, T_hat {:?}",
            v.shape(),
            v_bar.shape(),
            g.shape(),
            t_hat.shape()
        )));
    }
    let complement = numerics::identity(dim) - v_bar * v_bar.transpose();
    let lhs = numerics::spectral_norm(&(&complement * v));
    let perturbation = t_hat + numerics::identity(dim) * sigma2 - g / m as f64;
    let rhs = numerics::spectral_norm(&(&complement * perturbation * v)) / (sigma2 - epsilon);
    Ok(DkCheck {
        lhs,
        rhs,
        epsilon,
        violated: lhs > rhs + 1e-10,
    })
}
