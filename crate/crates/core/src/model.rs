//! Synthetic errors-in-variables instances with a known solution set.
//!
//! A ground truth is built from a latent-factor model: an orthonormal
//! `r×n` row basis `R`, exact rows taken from the first `k` rows of `R`, and
//! noiseless data rows `t·D·R` with i.i.d. latent `t ~ N(0, I_r)`. Because
//! the rows are i.i.d., `m⁻¹ PᵀC̄₂ᵀC̄₂P` converges and its limit has rank
//! `r∞ − k`. Latent directions `r∞..r` are damped by `m^(-1/4)`, so they
//! keep `rank(Ā) = r` at every finite `m` while their Gram contribution
//! vanishes.

use nalgebra::SVD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, DEFAULT_RANK_TOL};
use crate::rng::{self, Purpose};
use crate::solvers;

/// Distribution of the additive row noise (mean 0, variance σ²).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform on `[-σ√3, σ√3]`.
    Uniform,
}

/// Which latent directions feed the noisy data rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LatentLayout {
    /// Data rows span the whole `r`-dimensional row space of `Ā`.
    #[default]
    Full,
    /// Data rows avoid the directions carried by the exact rows, so only
    /// the exact rows pin those directions down.
    ExactRowsExcluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub ell: usize,
    pub k: usize,
    pub r: usize,
    pub r_inf: usize,
    pub sigma: f64,
    pub noise: NoiseKind,
    pub seed: u64,
    pub layout: LatentLayout,
}

impl ModelSpec {
    /// Spec with `r∞ = r`, Gaussian noise, full latent layout and seed 0.
    pub fn new(n: usize, ell: usize, k: usize, r: usize, sigma: f64) -> Self {
        ModelSpec {
            n,
            ell,
            k,
            r,
            r_inf: r,
            sigma,
            noise: NoiseKind::Gaussian,
            seed: 0,
            layout: LatentLayout::Full,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_r_inf(mut self, r_inf: usize) -> Self {
        self.r_inf = r_inf;
        self
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_layout(mut self, layout: LatentLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return Err(Error::InfeasibleSpec("ell must be at least 1".into()));
        }
        if !(self.k < self.r && self.r <= self.n) {
            return Err(Error::InfeasibleSpec(format!(
                "need k < r <= n, got k={}, r={}, n={}",
                self.k, self.r, self.n
            )));
        }
        if !(self.k < self.r_inf && self.r_inf <= self.r) {
            return Err(Error::InfeasibleSpec(format!(
                "need k < r_inf <= r, got k={}, r_inf={}, r={}",
                self.k, self.r_inf, self.r
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InfeasibleSpec(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Noiseless model and its exact solution set `{X_min + W·L}`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub spec: ModelSpec,
    pub m: usize,
    /// `m×n`, first `k` rows equal `a1`.
    pub a_bar: Matrix,
    /// `m×ℓ`, equals `Ā·X_min`.
    pub b_bar: Matrix,
    pub a1: Matrix,
    pub b1: Matrix,
    /// `[Ā₂ B̄₂]`, `(m−k)×(n+ℓ)`.
    pub c2_bar: Matrix,
    pub x_min: Matrix,
    /// Orthonormal basis of `Nu(Ā)`, `n×(n−r)`.
    pub w: Matrix,
    /// `[[−X_min, W], [I_ℓ, 0]]`, spans `Nu([Ā B̄])`.
    pub y_bar: Matrix,
}

impl GroundTruth {
    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn ell(&self) -> usize {
        self.spec.ell
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    /// Builds the solution set for given noiseless data by pseudoinverse.
    ///
    /// `a_bar` must already contain the exact rows on top; `spec.r` is
    /// replaced by the numerical rank of `a_bar`.
    pub fn from_noiseless(spec: ModelSpec, a_bar: Matrix, b_bar: Matrix) -> Result<Self> {
        numerics::ensure_finite(&a_bar)?;
        numerics::ensure_finite(&b_bar)?;
        let (m, n) = a_bar.shape();
        if b_bar.nrows() != m || n != spec.n || b_bar.ncols() != spec.ell {
            return Err(Error::ShapeMismatch(format!(
                "A is {m}x{n}, B is {}x{}, spec expects n={}, ell={}",
                b_bar.nrows(),
                b_bar.ncols(),
                spec.n,
                spec.ell
            )));
        }
        let k = spec.k;
        if k > m {
            return Err(Error::DimensionTooSmall(format!("k={k} exceeds m={m}")));
        }
        let rank = numerics::numerical_rank(&a_bar, DEFAULT_RANK_TOL);
        let svd = SVD::new(a_bar.clone(), true, true);
        let smax = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
        let x_min = svd
            .solve(&b_bar, DEFAULT_RANK_TOL * smax)
            .map_err(|e| Error::NotGeneric(e.to_string()))?;
        let w = numerics::orthonormal_nullspace(&a_bar, DEFAULT_RANK_TOL)?;
        let mut spec = spec;
        spec.r = rank;
        spec.r_inf = spec.r_inf.min(rank);
        let a1 = a_bar.rows(0, k).into_owned();
        let b1 = b_bar.rows(0, k).into_owned();
        let c2_bar = numerics::hstack(
            &a_bar.rows(k, m - k).into_owned(),
            &b_bar.rows(k, m - k).into_owned(),
        )?;
        let y_bar = solution_space_basis(&x_min, &w)?;
        Ok(GroundTruth {
            spec,
            m,
            a_bar,
            b_bar,
            a1,
            b1,
            c2_bar,
            x_min,
            w,
            y_bar,
        })
    }

    /// Checks the structural identities of the ground truth, returning a
    /// description of the first one that fails.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let a_norm = self.a_bar.norm();
        let x_norm = self.x_min.norm();
        let fit = (&self.a_bar * &self.x_min - &self.b_bar).norm();
        if fit > 1e-10 * a_norm * x_norm.max(1.0) {
            return Err(format!("A X_min != B (residual {fit:e})"));
        }
        let null = (&self.a_bar * &self.w).norm();
        if null > 1e-10 * a_norm.max(1.0) {
            return Err(format!("A W != 0 (residual {null:e})"));
        }
        let n_minus_r = self.spec.n - self.spec.r;
        if self.w.ncols() != n_minus_r || numerics::numerical_rank(&self.w, 1e-10) != n_minus_r {
            return Err(format!("W has rank != n-r = {n_minus_r}"));
        }
        if numerics::numerical_rank(&self.a1, DEFAULT_RANK_TOL) != self.spec.k {
            return Err("rank(A1) != k".into());
        }
        if numerics::numerical_rank(&self.a_bar, DEFAULT_RANK_TOL) != self.spec.r {
            return Err("rank(A) != r".into());
        }
        let c_bar = numerics::hstack(&self.a_bar, &self.b_bar).map_err(|e| e.to_string())?;
        let cy = (&c_bar * &self.y_bar).norm();
        if cy > 1e-9 * c_bar.norm().max(1.0) * self.y_bar.norm().max(1.0) {
            return Err(format!("[A B] Y != 0 (residual {cy:e})"));
        }
        let expected_cols = self.spec.n + self.spec.ell - self.spec.r;
        if numerics::numerical_rank(&self.y_bar, 1e-10) != expected_cols {
            return Err("rank(Y) != n+ell-r".into());
        }
        let orth = (self.w.transpose() * &self.x_min).norm();
        if orth > 1e-10 * self.w.norm().max(1.0) * x_norm.max(1.0) {
            return Err(format!("X_min not orthogonal to Nu(A) ({orth:e})"));
        }
        Ok(())
    }
}

/// `[[−X, W], [I_ℓ, 0]]`.
pub fn solution_space_basis(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    let (n, ell) = x.shape();
    if w.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "W has {} rows, X has {n}",
            w.nrows()
        )));
    }
    let top = numerics::hstack(&(-x), w)?;
    let bottom = numerics::hstack(&numerics::identity(ell), &Matrix::zeros(ell, w.ncols()))?;
    numerics::vstack(&top, &bottom)
}

/// Observed data: exact rows on top, noisy rows below.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub a: Matrix,
    pub b: Matrix,
    pub k: usize,
}

impl ProblemInstance {
    pub fn new(a: Matrix, b: Matrix, k: usize) -> Result<Self> {
        numerics::ensure_finite(&a)?;
        numerics::ensure_finite(&b)?;
        if a.nrows() != b.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "A has {} rows, B has {}",
                a.nrows(),
                b.nrows()
            )));
        }
        if a.ncols() == 0 || b.ncols() == 0 {
            return Err(Error::DimensionTooSmall("A and B need at least one column".into()));
        }
        if k > a.nrows() {
            return Err(Error::DimensionTooSmall(format!(
                "k={k} exceeds the row count {}",
                a.nrows()
            )));
        }
        Ok(ProblemInstance { a, b, k })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn ell(&self) -> usize {
        self.b.ncols()
    }

    pub fn a1(&self) -> Matrix {
        self.a.rows(0, self.k).into_owned()
    }

    pub fn b1(&self) -> Matrix {
        self.b.rows(0, self.k).into_owned()
    }

    /// `[A₁ B₁]`.
    pub fn exact_block(&self) -> Matrix {
        numerics::hstack(&self.a1(), &self.b1()).expect("row counts agree")
    }

    /// `[A₂ B₂]`.
    pub fn c2(&self) -> Matrix {
        let rest = self.m() - self.k;
        numerics::hstack(
            &self.a.rows(self.k, rest).into_owned(),
            &self.b.rows(self.k, rest).into_owned(),
        )
        .expect("row counts agree")
    }

    /// The same data with every row treated as noisy.
    pub fn without_exact_rows(&self) -> ProblemInstance {
        ProblemInstance {
            a: self.a.clone(),
            b: self.b.clone(),
            k: 0,
        }
    }
}

/// Noiseless counterparts of the solver's state, used as the oracle.
#[derive(Debug, Clone)]
pub struct NoiselessReference {
    pub p: Matrix,
    pub g_bar: Matrix,
    /// `m⁻¹ Ḡ`, the finite-sample stand-in for the limit Gram matrix.
    pub t_hat: Matrix,
    /// Orthonormal basis of `Nu(Ḡ)`.
    pub v_bar: Matrix,
    pub z_bar: Matrix,
}

impl NoiselessReference {
    pub fn new(gt: &GroundTruth) -> Result<Self> {
        let p = solvers::build_p(&gt.a1, &gt.b1)?;
        let g_bar = solvers::form_g(&gt.c2_bar, &p)?;
        let t_hat = &g_bar / gt.m as f64;
        let null_dim = gt.spec.n + gt.spec.ell - gt.spec.r;
        let eig = numerics::sym_eig_ascending(&g_bar)?;
        let v_bar = eig.smallest_vectors(null_dim);
        let z_bar = &p * &v_bar;
        Ok(NoiselessReference {
            p,
            g_bar,
            t_hat,
            v_bar,
            z_bar,
        })
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Latent structure shared by every sample size and replicate of a spec.
struct Structure {
    /// `r×n` with orthonormal rows.
    row_basis: Matrix,
    x_min: Matrix,
    w: Matrix,
}

fn structure(spec: &ModelSpec) -> Result<Structure> {
    let mut rng = rng::stream(spec.seed, 0, 0, Purpose::Structure);
    let g = gaussian_matrix(&mut rng, spec.n, spec.r);
    let q = g.qr().q();
    let row_basis = q.columns(0, spec.r).transpose();
    let x_raw = gaussian_matrix(&mut rng, spec.n, spec.ell);
    let x_min = row_basis.transpose() * (&row_basis * x_raw);
    // Nu(Ā) = Nu(R): the rows of Ā span exactly the rows of R.
    let w = numerics::orthonormal_nullspace(&row_basis, DEFAULT_RANK_TOL)?;
    Ok(Structure {
        row_basis,
        x_min,
        w,
    })
}

/// Ground truth for replicate 0 at sample size `m`.
pub fn synthesize_ground_truth(spec: &ModelSpec, m: usize) -> Result<GroundTruth> {
    synthesize_replicate(spec, m, 0)
}

/// Ground truth whose data rows come from the stream keyed by
/// `(spec.seed, m, replicate)`. The structure (`R`, `X_min`, `W`) depends on
/// `spec.seed` only.
pub fn synthesize_replicate(spec: &ModelSpec, m: usize, replicate: u64) -> Result<GroundTruth> {
    spec.validate()?;
    let (n, ell, k, r) = (spec.n, spec.ell, spec.k, spec.r);
    if m <= n + ell {
        return Err(Error::DimensionTooSmall(format!(
            "sample size m={m} must exceed n+ell={}",
            n + ell
        )));
    }
    let st = structure(spec)?;

    let damp = (m as f64).powf(-0.25);
    let scales: Vec<f64> = (0..r)
        .map(|j| {
            if j < k && spec.layout == LatentLayout::ExactRowsExcluded {
                0.0
            } else if j >= spec.r_inf {
                damp
            } else {
                1.0
            }
        })
        .collect();

    let mut rows_rng = rng::stream(spec.seed, m as u64, replicate, Purpose::Rows);
    let mut latent = gaussian_matrix(&mut rows_rng, m - k, r);
    for (j, s) in scales.iter().enumerate() {
        latent.column_mut(j).scale_mut(*s);
    }
    let a2_bar = latent * &st.row_basis;
    let a1 = st.row_basis.rows(0, k).into_owned();
    let a_bar = numerics::vstack(&a1, &a2_bar)?;
    let b_bar = &a_bar * &st.x_min;
    let b1 = b_bar.rows(0, k).into_owned();
    let b2_bar = b_bar.rows(k, m - k).into_owned();
    let c2_bar = numerics::hstack(&a2_bar, &b2_bar)?;
    let y_bar = solution_space_basis(&st.x_min, &st.w)?;

    Ok(GroundTruth {
        spec: spec.clone(),
        m,
        a_bar,
        b_bar,
        a1,
        b1,
        c2_bar,
        x_min: st.x_min,
        w: st.w,
        y_bar,
    })
}

/// Adds i.i.d. noise with variance σ² to rows `k..m`; exact rows are copied.
pub fn add_noise(gt: &GroundTruth, noise_seed: u64) -> Result<ProblemInstance> {
    let (m, n, ell, k) = (gt.m, gt.spec.n, gt.spec.ell, gt.spec.k);
    let mut a = gt.a_bar.clone();
    let mut b = gt.b_bar.clone();
    let sigma = gt.spec.sigma;
    if sigma > 0.0 {
        let mut rng = rng::stream(noise_seed, 0, 0, Purpose::Noise);
        let half_width = sigma * 3.0_f64.sqrt();
        for i in k..m {
            for j in 0..n + ell {
                let e = match gt.spec.noise {
                    NoiseKind::Gaussian => {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sigma * z
                    }
                    NoiseKind::Uniform => rng.random_range(-half_width..half_width),
                };
                if j < n {
                    a[(i, j)] += e;
                } else {
                    b[(i, j - n)] += e;
                }
            }
        }
    }
    ProblemInstance::new(a, b, k)
}

/// `X_min + W·L`, a member of the exact solution set.
pub fn solution_set_member(gt: &GroundTruth, l: &Matrix) -> Result<Matrix> {
    if l.shape() != (gt.w.ncols(), gt.spec.ell) {
        return Err(Error::ShapeMismatch(format!(
            "L must be {}x{}, got {}x{}",
            gt.w.ncols(),
            gt.spec.ell,
            l.nrows(),
            l.ncols()
        )));
    }
    Ok(&gt.x_min + &gt.w * l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn synthesized_truth_satisfies_invariants() {
        let spec = ModelSpec::new(3, 1, 1, 2, 0.1).with_seed(3);
        let gt = synthesize_ground_truth(&spec, 50).unwrap();
        gt.check_invariants().unwrap();
        assert_eq!(gt.w.shape(), (3, 1));
        assert_eq!(gt.y_bar.shape(), (4, 2));
    }

    #[test]
    fn full_rank_spec_has_empty_w() {
        let spec = ModelSpec::new(3, 2, 1, 3, 0.0).with_seed(9);
        let gt = synthesize_ground_truth(&spec, 40).unwrap();
        gt.check_invariants().unwrap();
        assert_eq!(gt.w.ncols(), 0);
        let expected = numerics::vstack(&(-&gt.x_min), &numerics::identity(2)).unwrap();
        assert_eq!(gt.y_bar, expected);
    }

    #[test]
    fn invariants_hold_across_specs() {
        let specs = [
            ModelSpec::new(6, 2, 2, 4, 0.1),
            ModelSpec::new(6, 1, 0, 6, 0.0),
            ModelSpec::new(5, 2, 3, 4, 0.5).with_r_inf(4),
            ModelSpec::new(6, 2, 1, 5, 0.1).with_r_inf(3),
            ModelSpec::new(6, 2, 2, 4, 0.1).with_layout(LatentLayout::ExactRowsExcluded),
        ];
        for (i, spec) in specs.iter().enumerate() {
            let gt = synthesize_replicate(&spec.clone().with_seed(i as u64), 200, 4).unwrap();
            gt.check_invariants().unwrap_or_else(|e| panic!("spec {i}: {e}"));
        }
    }

    #[test]
    fn least_norm_closed_form() {
        // rows (t, 2t), b = 3t: the least-norm solution of (1,2)·x = 3 is
        // (1,2)ᵀ·3/5.
        let ts = [1.0, -2.0, 0.5, 3.0, -1.5];
        let a = Matrix::from_fn(ts.len(), 2, |i, j| ts[i] * (j as f64 + 1.0));
        let b = Matrix::from_fn(ts.len(), 1, |i, _| 3.0 * ts[i]);
        let gt = GroundTruth::from_noiseless(ModelSpec::new(2, 1, 0, 1, 0.0), a, b).unwrap();
        assert_eq!(gt.spec.r, 1);
        assert_abs_diff_eq!(gt.x_min[(0, 0)], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(gt.x_min[(1, 0)], 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(gt.w[(0, 0)] * 2.0 + gt.w[(1, 0)] * 4.0, 0.0, epsilon = 1e-12);
        gt.check_invariants().unwrap();
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let bad = ModelSpec::new(3, 1, 2, 2, 0.1);
        assert!(matches!(synthesize_ground_truth(&bad, 50), Err(Error::InfeasibleSpec(_))));
        let bad = ModelSpec::new(3, 1, 1, 2, 0.1).with_r_inf(1);
        assert!(matches!(synthesize_ground_truth(&bad, 50), Err(Error::InfeasibleSpec(_))));
        let bad = ModelSpec::new(3, 0, 0, 2, 0.1);
        assert!(matches!(synthesize_ground_truth(&bad, 50), Err(Error::InfeasibleSpec(_))));
        let small = ModelSpec::new(3, 1, 1, 2, 0.1);
        assert!(matches!(synthesize_ground_truth(&small, 4), Err(Error::DimensionTooSmall(_))));
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let spec = ModelSpec::new(4, 2, 1, 3, 0.0).with_seed(5);
        let gt = synthesize_ground_truth(&spec, 30).unwrap();
        let inst = add_noise(&gt, 99).unwrap();
        assert_eq!(inst.a, gt.a_bar);
        assert_eq!(inst.b, gt.b_bar);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ModelSpec::new(4, 2, 1, 3, 0.3).with_seed(5);
        let x = add_noise(&synthesize_ground_truth(&spec, 30).unwrap(), 17).unwrap();
        let y = add_noise(&synthesize_ground_truth(&spec, 30).unwrap(), 17).unwrap();
        assert_eq!(x, y);
        let z = add_noise(&synthesize_ground_truth(&spec, 30).unwrap(), 18).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn exact_rows_are_preserved_bitwise() {
        let spec = ModelSpec::new(5, 2, 3, 4, 1.0)
            .with_seed(8)
            .with_noise(NoiseKind::Uniform);
        let gt = synthesize_ground_truth(&spec, 60).unwrap();
        let inst = add_noise(&gt, 4).unwrap();
        assert_eq!(inst.a1(), gt.a1);
        assert_eq!(inst.b1(), gt.b1);
        assert_ne!(inst.c2(), gt.c2_bar);
    }

    fn noise_block(gt: &GroundTruth, inst: &ProblemInstance) -> Matrix {
        inst.c2() - &gt.c2_bar
    }

    #[test]
    fn noise_covariance_is_sigma_squared_identity() {
        let spec = ModelSpec::new(3, 1, 1, 2, 1.0).with_seed(1);
        let m = 1_000_000;
        let gt = synthesize_ground_truth(&spec, m).unwrap();
        let inst = add_noise(&gt, 2).unwrap();
        let e = noise_block(&gt, &inst);
        let cov = e.tr_mul(&e) / e.nrows() as f64;
        let dev = (cov - numerics::identity(4)).norm();
        assert!(dev <= 0.01, "covariance deviation {dev} exceeds 1% of ‖I‖_F");
    }

    #[test]
    fn noise_moments_per_column() {
        for noise in [NoiseKind::Gaussian, NoiseKind::Uniform] {
            let sigma = 0.7;
            let m = 10_000;
            let trials = 40;
            let mut ok = 0;
            for t in 0..trials {
                let spec = ModelSpec::new(3, 1, 1, 2, sigma).with_seed(t).with_noise(noise);
                let gt = synthesize_ground_truth(&spec, m).unwrap();
                let inst = add_noise(&gt, 1000 + t).unwrap();
                let e = noise_block(&gt, &inst);
                let rows = e.nrows() as f64;
                let good = e.column_iter().all(|c| {
                    let mean = c.sum() / rows;
                    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rows - 1.0);
                    mean.abs() <= 4.0 * sigma / (m as f64).sqrt()
                        && (var - sigma * sigma).abs()
                            <= 5.0 * sigma * sigma * (2.0 / m as f64).sqrt()
                });
                if good {
                    ok += 1;
                }
            }
            assert!(ok * 100 >= trials * 95, "{noise:?}: {ok}/{trials}");
        }
    }

    #[test]
    fn solution_set_members() {
        let spec = ModelSpec::new(5, 2, 1, 3, 0.0).with_seed(12);
        let gt = synthesize_ground_truth(&spec, 40).unwrap();
        let zero = Matrix::zeros(2, 2);
        assert_eq!(solution_set_member(&gt, &zero).unwrap(), gt.x_min);

        let l = Matrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let x = solution_set_member(&gt, &l).unwrap();
        let wl = &gt.w * &l;
        let resid = (&gt.a_bar * &x - &gt.b_bar).norm();
        assert!(resid <= 1e-9 * gt.a_bar.norm() * (gt.x_min.norm() + wl.norm()));
        let pyth = x.norm_squared() - gt.x_min.norm_squared() - wl.norm_squared();
        assert!(pyth.abs() <= 1e-10 * x.norm_squared());
        assert!(x.norm() > gt.x_min.norm());

        assert!(matches!(
            solution_set_member(&gt, &Matrix::zeros(3, 2)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn noiseless_reference_identities() {
        let spec = ModelSpec::new(6, 2, 2, 4, 0.1).with_seed(21);
        let gt = synthesize_ground_truth(&spec, 300).unwrap();
        let reference = NoiselessReference::new(&gt).unwrap();
        let exact = numerics::hstack(&gt.a1, &gt.b1).unwrap();
        assert!((&exact * &reference.p).norm() <= 1e-10 * exact.norm().max(1.0));
        let d = reference.p.ncols();
        assert!((reference.p.transpose() * &reference.p - numerics::identity(d)).norm() <= 1e-12);
        let gv = (&reference.g_bar * &reference.v_bar).norm();
        assert!(gv <= 1e-8 * reference.g_bar.norm());
        assert_eq!(numerics::numerical_rank(&reference.z_bar, 1e-10), 4);
        let report = crate::metrics::principal_angles(&reference.z_bar, &gt.y_bar).unwrap();
        assert!(report.sin_max <= 1e-8, "{}", report.sin_max);
    }

    #[test]
    fn projected_gram_converges_in_sample_size() {
        let mut diffs = Vec::new();
        let mut norms = Vec::new();
        for seed in 0..8 {
            let spec = ModelSpec::new(6, 2, 2, 4, 0.1).with_seed(seed);
            let small = NoiselessReference::new(&synthesize_ground_truth(&spec, 10_000).unwrap())
                .unwrap();
            let large = NoiselessReference::new(&synthesize_ground_truth(&spec, 100_000).unwrap())
                .unwrap();
            diffs.push((&small.t_hat - &large.t_hat).norm());
            norms.push(large.t_hat.norm());
        }
        let med = crate::harness::median(&mut diffs).unwrap();
        let norm = crate::harness::median(&mut norms).unwrap();
        assert!(med < 0.05 * norm, "median diff {med} vs norm {norm}");
    }
}
