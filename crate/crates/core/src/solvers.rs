//! Row- and rank-constrained total least squares.
//!
//! The pipeline projects the data onto the orthogonal complement of the
//! exact rows (`P`), forms the projected Gram matrix `G = PᵀC₂ᵀC₂P`,
//! extracts the eigenvectors `V` of its `n+ℓ−r` smallest eigenvalues and
//! lifts them back as Ritz vectors `Z = PV`. The minimal-norm estimate is
//! `X* = −Z_upper·Z_lower⁺`; the estimated null-space generator is
//! `Ŵ = Z_upper·Z_lower⊥`. Standard TLS (`k = 0`, `r = n`) and truncated TLS
//! (`k = 0`) are specializations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::numerics::{self, EigenPairsAscending, Matrix, DEFAULT_RANK_TOL};

/// Gap below `GAP_DEGENERATE_REL · λ_max` marks a basis as gap-degenerate.
pub const GAP_DEGENERATE_REL: f64 = 1e-8;

/// Target rank of the corrected coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RankModeRepr", into = "RankModeRepr")]
pub enum RankMode {
    Explicit(usize),
    /// Estimate from the eigenvalue distribution of `G`.
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RankModeRepr {
    Int(usize),
    Text(String),
}

impl TryFrom<RankModeRepr> for RankMode {
    type Error = String;

    fn try_from(value: RankModeRepr) -> std::result::Result<Self, Self::Error> {
        match value {
            RankModeRepr::Int(r) => Ok(RankMode::Explicit(r)),
            RankModeRepr::Text(s) => s.parse(),
        }
    }
}

impl From<RankMode> for RankModeRepr {
    fn from(value: RankMode) -> Self {
        match value {
            RankMode::Explicit(r) => RankModeRepr::Int(r),
            RankMode::Auto => RankModeRepr::Text("auto".into()),
        }
    }
}

impl std::str::FromStr for RankMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(RankMode::Auto);
        }
        s.parse::<usize>()
            .map(RankMode::Explicit)
            .map_err(|_| format!("expected a non-negative integer or \"auto\", got {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct CtlsProblem {
    pub instance: ProblemInstance,
    pub rank: RankMode,
}

impl CtlsProblem {
    pub fn new(instance: ProblemInstance, rank: RankMode) -> Self {
        CtlsProblem { instance, rank }
    }
}

/// Rayleigh–Ritz state of one solve.
#[derive(Debug, Clone)]
pub struct RitzBasis {
    pub p: Matrix,
    pub eigvals_g: Vec<f64>,
    pub v: Matrix,
    pub z: Matrix,
    pub z_upper: Matrix,
    pub z_lower: Matrix,
    /// `λ_{n+ℓ−r+1} − λ_{n+ℓ−r}` of `G`.
    pub spectral_gap: f64,
    pub gap_degenerate: bool,
    pub rank: usize,
}

impl RitzBasis {
    pub fn n(&self) -> usize {
        self.z_upper.nrows()
    }

    pub fn ell(&self) -> usize {
        self.z_lower.nrows()
    }
}

/// How the rank used by a solve was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub mode: String,
    pub rank: usize,
    /// Size of the smallest-eigenvalue cluster treated as noise (`n+ℓ−rank`).
    pub cluster_size: usize,
    /// Eigenvalues of `G` inside the noise cluster, ascending.
    pub cluster: Vec<f64>,
    /// Relative gaps scanned by the estimator, indexed by candidate cluster
    /// size starting at `ℓ`; empty for explicit ranks.
    pub relative_gaps: Vec<f64>,
    pub note: Option<String>,
}

/// Structured diagnostics of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub eigenvalues: Vec<f64>,
    pub spectral_gap: f64,
    pub gap_degenerate: bool,
    pub rank_decision: RankDecision,
}

/// Minimal-norm estimate plus the estimated solution-set generator.
#[derive(Debug, Clone)]
pub struct SolutionSet {
    pub x_star: Matrix,
    pub w_hat: Matrix,
    pub basis: RitzBasis,
    pub rank_decision: RankDecision,
}

impl SolutionSet {
    /// `X* + Ŵ·L`.
    pub fn member(&self, l: &Matrix) -> Result<Matrix> {
        if l.shape() != (self.w_hat.ncols(), self.x_star.ncols()) {
            return Err(Error::ShapeMismatch(format!(
                "L must be {}x{}, got {}x{}",
                self.w_hat.ncols(),
                self.x_star.ncols(),
                l.nrows(),
                l.ncols()
            )));
        }
        Ok(&self.x_star + &self.w_hat * l)
    }

    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            eigenvalues: self.basis.eigvals_g.clone(),
            spectral_gap: self.basis.spectral_gap,
            gap_degenerate: self.basis.gap_degenerate,
            rank_decision: self.rank_decision.clone(),
        }
    }
}

/// Orthonormal basis of the orthogonal complement of the rows of `[A₁ B₁]`.
pub fn build_p(a1: &Matrix, b1: &Matrix) -> Result<Matrix> {
    if a1.nrows() != b1.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "A1 has {} rows, B1 has {}",
            a1.nrows(),
            b1.nrows()
        )));
    }
    let k = a1.nrows();
    let width = a1.ncols() + b1.ncols();
    if k == 0 {
        return Ok(numerics::identity(width));
    }
    let rank = numerics::numerical_rank(a1, DEFAULT_RANK_TOL);
    if rank != k {
        return Err(Error::RowRankDeficient { rank, expected: k });
    }
    let exact = numerics::hstack(a1, b1)?;
    let p = numerics::orthonormal_nullspace(&exact, DEFAULT_RANK_TOL)?;
    debug_assert_eq!(p.ncols(), width - k);
    Ok(p)
}

/// `G = PᵀC₂ᵀC₂P`, formed as the Gram matrix of `C₂P`.
pub fn form_g(c2: &Matrix, p: &Matrix) -> Result<Matrix> {
    if c2.ncols() != p.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "C2 has {} columns, P has {} rows",
            c2.ncols(),
            p.nrows()
        )));
    }
    numerics::ensure_finite(c2)?;
    let cp = c2 * p;
    Ok(cp.tr_mul(&cp))
}

fn check_rank(rank: usize, k: usize, n: usize) -> Result<()> {
    if k < rank && rank <= n {
        Ok(())
    } else {
        Err(Error::InfeasibleSpec(format!(
            "rank must satisfy k < rank <= n, got k={k}, rank={rank}, n={n}"
        )))
    }
}

fn ritz_from_eigen(eig: &EigenPairsAscending, p: &Matrix, ell: usize, rank: usize) -> Result<RitzBasis> {
    let width = p.nrows();
    if ell == 0 || ell > width {
        return Err(Error::ShapeMismatch(format!("ell={ell} with n+ell={width}")));
    }
    let n = width - ell;
    let k = width - p.ncols();
    check_rank(rank, k, n)?;
    let dim = width - rank;
    let v = eig.smallest_vectors(dim);
    let z = p * &v;
    let z_upper = z.rows(0, n).into_owned();
    let z_lower = z.rows(n, ell).into_owned();
    let values = &eig.values;
    let spectral_gap = values[dim] - values[dim - 1];
    let lambda_max = values.last().copied().unwrap_or(0.0).abs();
    Ok(RitzBasis {
        p: p.clone(),
        eigvals_g: values.clone(),
        v,
        z,
        z_upper,
        z_lower,
        spectral_gap,
        gap_degenerate: spectral_gap < GAP_DEGENERATE_REL * lambda_max,
        rank,
    })
}

/// Ritz vectors of `C₂ᵀC₂` from `Ra(P)` for the `n+ℓ−rank` smallest
/// eigenvalues of `G`.
pub fn ritz_subspace(g: &Matrix, p: &Matrix, ell: usize, rank: usize) -> Result<RitzBasis> {
    if g.nrows() != p.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "G is {}x{}, P has {} columns",
            g.nrows(),
            g.ncols(),
            p.ncols()
        )));
    }
    let eig = numerics::sym_eig_ascending(g)?;
    ritz_from_eigen(&eig, p, ell, rank)
}

fn not_generic(basis: &RitzBasis) -> Error {
    Error::NotGeneric(format!(
        "Z_lower ({}x{}) is not of full row rank",
        basis.z_lower.nrows(),
        basis.z_lower.ncols()
    ))
}

/// `X* = −Z_upper·Z_lower⁺`.
pub fn minimal_norm_from_z(basis: &RitzBasis) -> Result<Matrix> {
    let pinv = numerics::pinv_full_row_rank(&basis.z_lower).map_err(|e| match e {
        Error::RankDeficientRows { .. } => not_generic(basis),
        other => other,
    })?;
    Ok(-(&basis.z_upper * pinv))
}

/// `Ŵ = Z_upper·Z_lower⊥` with `Z_lower⊥` an orthonormal basis of
/// `Nu(Z_lower)`.
pub fn nullspace_from_z(basis: &RitzBasis) -> Result<Matrix> {
    let complement = lower_complement(basis)?;
    Ok(&basis.z_upper * complement)
}

/// Orthonormal basis of `Nu(Z_lower)`, `(n+ℓ−r)×(n−r)`.
pub fn lower_complement(basis: &RitzBasis) -> Result<Matrix> {
    let complement = numerics::orthonormal_nullspace(&basis.z_lower, DEFAULT_RANK_TOL)?;
    let expected = basis.n() - basis.rank;
    if complement.ncols() != expected {
        return Err(not_generic(basis));
    }
    Ok(complement)
}

/// Rows of `[A₁ B₁]` that combine into `0·X = nonzero`, if any.
fn exact_row_witness(a1: &Matrix, b1: &Matrix) -> Option<Vec<usize>> {
    let left_null = numerics::orthonormal_nullspace(&a1.transpose(), DEFAULT_RANK_TOL).ok()?;
    let scale = numerics::hstack(a1, b1).ok()?.norm().max(1.0);
    for y in left_null.column_iter() {
        let hit = (y.transpose() * b1).norm();
        if hit > 1e-8 * scale {
            let rows = y
                .iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > 1e-8)
                .map(|(i, _)| i)
                .collect();
            return Some(rows);
        }
    }
    None
}

/// Chooses the rank from the eigenvalues of `G` (ascending, length
/// `n+ℓ−k`).
///
/// The noise cluster size `c ≥ ℓ` is the largest maximizer of the relative
/// gap `(λ_{c+1} − λ_c)/(λ_c + ε·m)` with `ε = 1e−12·λ_max`; the rank is
/// `n+ℓ−c`.
pub fn estimate_rank(eigvals: &[f64], ell: usize, k: usize, m: usize) -> Result<RankDecision> {
    let len = eigvals.len();
    if ell == 0 || len < ell + 1 {
        return Err(Error::ShapeMismatch(format!(
            "{len} eigenvalues cannot hold a noise cluster of size >= {ell} plus signal"
        )));
    }
    if eigvals.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Malformed("eigenvalues must be sorted ascending".into()));
    }
    let width = len + k;
    let lambda_max = eigvals[len - 1];
    if lambda_max <= 0.0 {
        return Err(Error::NoGap);
    }
    let floor = 1e-12 * lambda_max * m as f64;
    let mut gaps = Vec::with_capacity(len - ell);
    let mut best: Option<(usize, f64)> = None;
    for c in ell..len {
        // λ_c and λ_{c+1} in one-based numbering
        let lo = eigvals[c - 1];
        let hi = eigvals[c];
        let gap = (hi - lo) / (lo.max(0.0) + floor);
        gaps.push(gap);
        if best.is_none_or(|(_, g)| gap >= g) {
            best = Some((c, gap));
        }
    }
    let (cluster_size, best_gap) = best.expect("at least one candidate");
    if best_gap < 10.0 * f64::EPSILON {
        return Err(Error::NoGap);
    }
    Ok(RankDecision {
        mode: "auto".into(),
        rank: width - cluster_size,
        cluster_size,
        cluster: eigvals[..cluster_size].to_vec(),
        relative_gaps: gaps,
        note: Some(
            "noise cluster constrained to size >= ell; rank clamped to k < rank <= n".into(),
        ),
    })
}

/// Full row- and rank-constrained pipeline.
pub fn solve_ctls(problem: &CtlsProblem) -> Result<SolutionSet> {
    let inst = &problem.instance;
    let (n, ell, k) = (inst.n(), inst.ell(), inst.k);
    if let RankMode::Explicit(r) = problem.rank {
        check_rank(r, k, n)?;
    }
    let a1 = inst.a1();
    let b1 = inst.b1();
    if k > 0 {
        if let Some(rows) = exact_row_witness(&a1, &b1) {
            return Err(Error::InconsistentExactRows { rows });
        }
    }
    let p = build_p(&a1, &b1)?;
    let g = form_g(&inst.c2(), &p)?;
    let eig = numerics::sym_eig_ascending(&g)?;

    let rank_decision = match problem.rank {
        RankMode::Explicit(rank) => {
            let cluster_size = n + ell - rank;
            RankDecision {
                mode: "explicit".into(),
                rank,
                cluster_size,
                cluster: eig.values[..cluster_size].to_vec(),
                relative_gaps: Vec::new(),
                note: None,
            }
        }
        RankMode::Auto => estimate_rank(&eig.values, ell, k, inst.m())?,
    };

    let basis = ritz_from_eigen(&eig, &p, ell, rank_decision.rank)?;
    let x_star = minimal_norm_from_z(&basis)?;
    let w_hat = nullspace_from_z(&basis)?;
    Ok(SolutionSet {
        x_star,
        w_hat,
        basis,
        rank_decision,
    })
}

/// Standard total least squares (`k = 0`, `r = n`) from the `ℓ` smallest
/// eigenpairs of `F = CᵀC`, `C = [A B]`.
pub fn solve_tls(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let inst = ProblemInstance::new(a.clone(), b.clone(), 0)?;
    let (n, ell) = (inst.n(), inst.ell());
    if n == 0 || ell == 0 {
        return Err(Error::ShapeMismatch(format!("A has {n} columns, B has {ell}")));
    }
    let c = numerics::hstack(a, b)?;
    let eig = numerics::sym_eig_ascending(&c.tr_mul(&c))?;
    let gap = eig.values[ell] - eig.values[ell - 1];
    let lambda_max = eig.values[n + ell - 1].abs();
    if gap < GAP_DEGENERATE_REL * lambda_max {
        return Err(Error::NotGeneric(format!(
            "sigma_n = sigma_(n+1) within tolerance (gap {gap:e})"
        )));
    }
    let z = eig.smallest_vectors(ell);
    let z_lower = z.rows(n, ell).into_owned();
    let pinv = numerics::pinv_full_row_rank(&z_lower).map_err(|e| match e {
        Error::RankDeficientRows { .. } => Error::NotGeneric("Z_lower is singular".into()),
        other => other,
    })?;
    Ok(-(z.rows(0, n) * pinv))
}

/// Truncated total least squares with explicit rank (`k = 0`).
pub fn solve_ttls(a: &Matrix, b: &Matrix, rank: RankMode) -> Result<SolutionSet> {
    let inst = ProblemInstance::new(a.clone(), b.clone(), 0)?;
    solve_ctls(&CtlsProblem::new(inst, rank))
}
