//! Seeded Monte Carlo experiments over a schedule of sample sizes.
//!
//! Each `(m, replicate)` cell draws a fresh ground truth and noise from
//! streams keyed by `(seed, m, replicate)`, solves, and records one row per
//! method. Cells run in parallel on a dedicated rayon pool (size from
//! `EIV_TLS_THREADS`, default all cores); rows are assembled in schedule
//! order, so output is identical for any thread count. The per-`m` summary
//! is a pure function of the rows, which lets `report` rebuild it from the
//! CSV alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{self, GroundTruth, LatentLayout, ModelSpec, NoiseKind, NoiselessReference, ProblemInstance};
use crate::numerics;
use crate::rng::{self, Purpose};
use crate::solvers::{self, CtlsProblem, RankMode, SolutionSet};

pub const THREADS_ENV: &str = "EIV_TLS_THREADS";

/// Coefficient sequence `αᵢ` of the weighted strong-law demo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AlphaSequence {
    Zero,
    #[default]
    Constant,
    /// `(−1)ⁱ`
    Alternating,
    /// `sin(i)`
    Sinusoid,
}

impl AlphaSequence {
    pub fn value(self, i: u64) -> f64 {
        match self {
            AlphaSequence::Zero => 0.0,
            AlphaSequence::Constant => 1.0,
            AlphaSequence::Alternating => {
                if i.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
            AlphaSequence::Sinusoid => (i as f64).sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AlphaSequence::Zero => "zero",
            AlphaSequence::Constant => "constant",
            AlphaSequence::Alternating => "alternating",
            AlphaSequence::Sinusoid => "sinusoid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Consistency,
    Inclusion,
    #[serde(rename = "misspec")]
    Misspecification,
    Slln,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Consistency => "consistency",
            Experiment::Inclusion => "inclusion",
            Experiment::Misspecification => "misspec",
            Experiment::Slln => "slln",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "consistency" => Ok(Experiment::Consistency),
            "inclusion" => Ok(Experiment::Inclusion),
            "misspec" | "misspecification" => Ok(Experiment::Misspecification),
            "slln" => Ok(Experiment::Slln),
            other => Err(format!("unknown experiment {other:?}")),
        }
    }
}

/// Experiment configuration as read from a JSON or TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub ell: usize,
    pub k: usize,
    pub r: usize,
    /// Defaults to `r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_inf: Option<usize>,
    pub sigma: f64,
    #[serde(default)]
    pub noise: NoiseKind,
    pub seed: u64,
    pub m_schedule: Vec<usize>,
    pub replicates: usize,
    /// Defaults to the explicit rank `r` (`r∞` for the inclusion run).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_mode: Option<RankMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_prefix: Option<String>,
    /// Defaults to `full`, except `exact_rows_excluded` for the
    /// misspecification run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LatentLayout>,
    /// Strong-law demo only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaSequence>,
}

fn serde_field(message: &str) -> String {
    // serde names the offending key between backticks
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".to_string())
}

impl ExperimentConfig {
    /// Config with the defaults used throughout the documentation:
    /// `n=6, ℓ=2, k=2, r=4, σ=0.1`, `m ∈ {10², 10³, 10⁴, 10⁵}`, 32 replicates.
    pub fn default_consistency() -> Self {
        ExperimentConfig {
            n: 6,
            ell: 2,
            k: 2,
            r: 4,
            r_inf: None,
            sigma: 0.1,
            noise: NoiseKind::Gaussian,
            seed: 2024,
            m_schedule: vec![100, 1_000, 10_000, 100_000],
            replicates: 32,
            rank_mode: None,
            out_prefix: None,
            layout: None,
            alpha: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            Error::config(serde_field(&msg), msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            Error::config(serde_field(&msg), msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML for `.toml` files and JSON otherwise.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            Self::from_toml_str(&text)
        } else {
            Self::from_json_str(&text)
        }
    }

    pub fn r_inf(&self) -> usize {
        self.r_inf.unwrap_or(self.r)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.n, self.ell, self.k, self.r, self.sigma)
            .with_r_inf(self.r_inf())
            .with_noise(self.noise)
            .with_seed(self.seed)
            .with_layout(self.layout.unwrap_or_default())
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return Err(Error::config("ell", "must be at least 1"));
        }
        if self.r > self.n {
            return Err(Error::config("r", format!("must not exceed n={}", self.n)));
        }
        if self.k >= self.r {
            return Err(Error::config("k", format!("must be smaller than r={}", self.r)));
        }
        let r_inf = self.r_inf();
        if !(self.k < r_inf && r_inf <= self.r) {
            return Err(Error::config("r_inf", format!("must satisfy k < r_inf <= r, got {r_inf}")));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::config("sigma", "must be finite and non-negative"));
        }
        if self.m_schedule.is_empty() {
            return Err(Error::config("m_schedule", "must not be empty"));
        }
        if self.m_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("m_schedule", "must be strictly increasing"));
        }
        if let Some(&m) = self.m_schedule.iter().find(|&&m| m <= self.n + self.ell) {
            return Err(Error::config(
                "m_schedule",
                format!("sample size {m} must exceed n+ell={}", self.n + self.ell),
            ));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        if let Some(RankMode::Explicit(rank)) = self.rank_mode {
            if !(self.k < rank && rank <= self.n) {
                return Err(Error::config("rank_mode", format!("explicit rank must satisfy k < rank <= n, got {rank}")));
            }
        }
        Ok(())
    }

    pub fn slln_config(&self) -> SllnConfig {
        SllnConfig {
            alpha: self.alpha.unwrap_or_default(),
            sigma: self.sigma,
            noise: self.noise,
            m_schedule: self.m_schedule.clone(),
            seeds: self.replicates,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SllnConfig {
    pub alpha: AlphaSequence,
    pub sigma: f64,
    pub noise: NoiseKind,
    pub m_schedule: Vec<usize>,
    pub seeds: usize,
    pub seed: u64,
}

impl SllnConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::config("sigma", "must be finite and non-negative"));
        }
        if self.m_schedule.is_empty() || self.m_schedule[0] == 0 {
            return Err(Error::config("m_schedule", "must be non-empty and positive"));
        }
        if self.m_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("m_schedule", "must be strictly increasing"));
        }
        if self.seeds == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        let bound = self.cesaro_square_bound();
        if !bound.is_finite() || bound > 1.0 + 1e-12 {
            return Err(Error::config("alpha", format!("m^-1 sum alpha_i^2 reaches {bound}")));
        }
        Ok(())
    }

    /// `max_m m⁻¹Σᵢ₌₁ᵐ αᵢ²` over the schedule.
    pub fn cesaro_square_bound(&self) -> f64 {
        let mut sum = 0.0;
        let mut worst: f64 = 0.0;
        let mut next = self.m_schedule.iter().peekable();
        let last = self.m_schedule.last().copied().unwrap_or(0);
        for i in 1..=last as u64 {
            sum += self.alpha.value(i).powi(2);
            if next.peek().is_some_and(|&&m| m as u64 == i) {
                worst = worst.max(sum / i as f64);
                next.next();
            }
        }
        worst
    }
}

/// One row of an experiment: a `(method, m, replicate)` cell.
///
/// Metrics that do not apply to a row are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub experiment: String,
    pub method: String,
    pub m: usize,
    pub replicate: u64,
    /// `ok` or the name of the error that stopped the solve.
    pub status: String,
    /// Largest principal-angle sine between `Ra(Z)` and `Ra(Ȳ)`.
    pub sin_max: Option<f64>,
    /// `‖X* − X_min‖_F`.
    pub x_error: Option<f64>,
    /// `‖m⁻¹G − (T̂ + σ²I)‖_F`.
    pub gram_residual: Option<f64>,
    /// Gap of `G` (not scaled by `m`).
    pub spectral_gap: Option<f64>,
    pub rank: Option<usize>,
    /// Extremes of the `n+ℓ−r` smallest eigenvalues of `m⁻¹G`.
    pub noise_eig_min: Option<f64>,
    pub noise_eig_max: Option<f64>,
    pub dk_lhs: Option<f64>,
    pub dk_rhs: Option<f64>,
    /// `spectral_gap/m > σ² − ε` with `ε = σ²/2`.
    pub dk_eligible: Option<bool>,
    pub dk_violated: Option<bool>,
    /// Largest sine of the angles from `Ra(Ȳ)` into `Ra(Z)`.
    pub containment_sin_max: Option<f64>,
    /// `|m⁻¹Σαᵢεᵢ|` for the strong-law demo.
    pub cesaro_abs: Option<f64>,
}

impl RowRecord {
    fn empty(experiment: &str, method: &str, m: usize, replicate: u64) -> Self {
        RowRecord {
            experiment: experiment.to_string(),
            method: method.to_string(),
            m,
            replicate,
            status: "ok".to_string(),
            sin_max: None,
            x_error: None,
            gram_residual: None,
            spectral_gap: None,
            rank: None,
            noise_eig_min: None,
            noise_eig_max: None,
            dk_lhs: None,
            dk_rhs: None,
            dk_eligible: None,
            dk_violated: None,
            containment_sin_max: None,
            cesaro_abs: None,
        }
    }

    fn failed(experiment: &str, method: &str, m: usize, replicate: u64, err: &Error) -> Self {
        let mut row = Self::empty(experiment, method, m, replicate);
        row.status = err.name().to_string();
        row
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Type-7 quantiles (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Some(Quartiles {
            count: sorted.len(),
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
        })
    }
}

/// Median, sorting `values` in place.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    Some(quantile_sorted(values, 0.5))
}

/// Aggregate of all rows sharing a `(method, m)` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub method: String,
    pub m: usize,
    pub rows: usize,
    /// Rows whose status is not `ok`; they never enter the statistics.
    pub excluded: usize,
    pub excluded_by_status: BTreeMap<String, usize>,
    pub rank_counts: BTreeMap<usize, usize>,
    pub modal_rank: Option<usize>,
    pub dk_eligible: usize,
    pub dk_violations: usize,
    /// Quartiles per metric column, over `ok` rows that carry the metric.
    pub metrics: BTreeMap<String, Quartiles>,
}

impl GroupSummary {
    pub fn median(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|q| q.median)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub groups: Vec<GroupSummary>,
}

pub const METRIC_COLUMNS: [&str; 10] = [
    "sin_max",
    "x_error",
    "gram_residual",
    "spectral_gap",
    "noise_eig_min",
    "noise_eig_max",
    "dk_lhs",
    "dk_rhs",
    "containment_sin_max",
    "cesaro_abs",
];

fn metric(row: &RowRecord, name: &str) -> Option<f64> {
    match name {
        "sin_max" => row.sin_max,
        "x_error" => row.x_error,
        "gram_residual" => row.gram_residual,
        "spectral_gap" => row.spectral_gap,
        "noise_eig_min" => row.noise_eig_min,
        "noise_eig_max" => row.noise_eig_max,
        "dk_lhs" => row.dk_lhs,
        "dk_rhs" => row.dk_rhs,
        "containment_sin_max" => row.containment_sin_max,
        "cesaro_abs" => row.cesaro_abs,
        _ => None,
    }
}

impl Summary {
    /// Groups rows by `(method, m)` in sorted key order.
    pub fn from_rows(rows: &[RowRecord]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Malformed("no rows to summarize".into()))?;
        let mut groups: BTreeMap<(String, usize), Vec<&RowRecord>> = BTreeMap::new();
        for row in rows {
            groups.entry((row.method.clone(), row.m)).or_default().push(row);
        }
        let groups = groups
            .into_iter()
            .map(|((method, m), members)| summarize_group(method, m, &members))
            .collect();
        Ok(Summary {
            experiment: first.experiment.clone(),
            groups,
        })
    }

    pub fn group(&self, method: &str, m: usize) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.method == method && g.m == m)
    }

    /// Groups of one method in increasing `m`.
    pub fn trajectory(&self, method: &str) -> Vec<&GroupSummary> {
        self.groups.iter().filter(|g| g.method == method).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serializable") + "\n"
    }

    /// Median table in Markdown.
    pub fn to_markdown(&self) -> String {
        let cols = ["sin_max", "x_error", "gram_residual", "containment_sin_max", "cesaro_abs"];
        let mut out = format!("experiment: {}\n\n| method | m | ok | excluded | rank |", self.experiment);
        for c in cols {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str("\n|---|---:|---:|---:|---:|");
        for _ in cols {
            out.push_str("---:|");
        }
        out.push('\n');
        for g in &self.groups {
            let rank = g.modal_rank.map_or("-".to_string(), |r| r.to_string());
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |",
                g.method,
                g.m,
                g.rows - g.excluded,
                g.excluded,
                rank
            ));
            for c in cols {
                let cell = g.median(c).map_or("-".to_string(), |v| format!("{v:.3e}"));
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
        out
    }
}

fn summarize_group(method: String, m: usize, members: &[&RowRecord]) -> GroupSummary {
    let ok: Vec<&RowRecord> = members.iter().copied().filter(|r| r.is_ok()).collect();
    let mut excluded_by_status = BTreeMap::new();
    for r in members.iter().filter(|r| !r.is_ok()) {
        *excluded_by_status.entry(r.status.clone()).or_insert(0) += 1;
    }
    let mut rank_counts = BTreeMap::new();
    for r in &ok {
        if let Some(rank) = r.rank {
            *rank_counts.entry(rank).or_insert(0) += 1;
        }
    }
    // ties go to the smaller rank
    let modal_rank = rank_counts
        .iter()
        .fold(None, |best: Option<(usize, usize)>, (&rank, &count)| match best {
            Some((_, c)) if c >= count => best,
            _ => Some((rank, count)),
        })
        .map(|(rank, _)| rank);
    let mut metrics = BTreeMap::new();
    for name in METRIC_COLUMNS {
        let values: Vec<f64> = ok.iter().filter_map(|r| metric(r, name)).collect();
        if let Some(q) = Quartiles::of(&values) {
            metrics.insert(name.to_string(), q);
        }
    }
    GroupSummary {
        method,
        m,
        rows: members.len(),
        excluded: members.len() - ok.len(),
        excluded_by_status,
        rank_counts,
        modal_rank,
        dk_eligible: ok.iter().filter(|r| r.dk_eligible == Some(true)).count(),
        dk_violations: ok
            .iter()
            .filter(|r| r.dk_eligible == Some(true) && r.dk_violated == Some(true))
            .count(),
        metrics,
    }
}

/// Rows plus their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<RowRecord>,
    pub summary: Summary,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

impl ConvergenceReport {
    pub fn from_rows(rows: Vec<RowRecord>) -> Result<Self> {
        let summary = Summary::from_rows(&rows)?;
        Ok(ConvergenceReport { rows, summary })
    }

    /// Writes `<prefix>_rows.csv` and `<prefix>_summary.json`.
    pub fn write(&self, prefix: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let prefix = prefix.as_ref();
        let rows_path = with_suffix(prefix, "_rows.csv");
        let summary_path = with_suffix(prefix, "_summary.json");
        write_rows(&rows_path, &self.rows)?;
        fs::write(&summary_path, self.summary.to_json())?;
        Ok((rows_path, summary_path))
    }
}

pub fn write_rows(path: impl AsRef<Path>, rows: &[RowRecord]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut out = csv::Writer::from_path(path).map_err(io_err)?;
    for row in rows {
        out.serialize(row).map_err(io_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<RowRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let rows = reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Malformed(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect::<Result<Vec<RowRecord>>>()?;
    if rows.is_empty() {
        return Err(Error::Malformed(format!("{}: no rows", path.display())));
    }
    Ok(rows)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(format!("thread pool: {e}")))
}

/// Runs `cell` over the `(m, replicate)` grid in schedule order.
fn run_cells<F>(schedule: &[usize], replicates: usize, cell: F) -> Result<Vec<RowRecord>>
where
    F: Fn(usize, u64) -> Vec<RowRecord> + Sync,
{
    let cells: Vec<(usize, u64)> = schedule
        .iter()
        .flat_map(|&m| (0..replicates as u64).map(move |rep| (m, rep)))
        .collect();
    let pool = thread_pool()?;
    let nested: Vec<Vec<RowRecord>> = pool.install(|| cells.par_iter().map(|&(m, rep)| cell(m, rep)).collect());
    Ok(nested.into_iter().flatten().collect())
}

struct Cell {
    gt: GroundTruth,
    reference: NoiselessReference,
    instance: ProblemInstance,
}

fn prepare_cell(spec: &ModelSpec, m: usize, rep: u64) -> Result<Cell> {
    let gt = model::synthesize_replicate(spec, m, rep)?;
    let reference = NoiselessReference::new(&gt)?;
    let instance = model::add_noise(&gt, rng::cell_noise_seed(spec.seed, m as u64, rep))?;
    Ok(Cell {
        gt,
        reference,
        instance,
    })
}

fn subspace_metrics(row: &mut RowRecord, sol: &SolutionSet, gt: &GroundTruth) {
    let z = &sol.basis.z;
    if z.ncols() == gt.y_bar.ncols() {
        row.sin_max = metrics::principal_angles(z, &gt.y_bar).ok().map(|r| r.sin_max);
    }
    if z.ncols() >= gt.y_bar.ncols() {
        row.containment_sin_max = metrics::subspace_contained(&gt.y_bar, z, 0.0).ok().map(|(_, r)| r.sin_max);
    }
    row.x_error = Some((&sol.x_star - &gt.x_min).norm());
    row.rank = Some(sol.rank_decision.rank);
    row.spectral_gap = Some(sol.basis.spectral_gap);
}

/// Row for the constrained estimator, with every diagnostic filled in.
fn ctls_row(experiment: &str, cell: &Cell, rank: RankMode, m: usize, rep: u64) -> RowRecord {
    let problem = CtlsProblem::new(cell.instance.clone(), rank);
    let sol = match solvers::solve_ctls(&problem) {
        Ok(sol) => sol,
        Err(e) => return RowRecord::failed(experiment, "ctls", m, rep, &e),
    };
    let mut row = RowRecord::empty(experiment, "ctls", m, rep);
    subspace_metrics(&mut row, &sol, &cell.gt);

    let spec = &cell.gt.spec;
    let sigma = spec.sigma;
    let scale = 1.0 / m as f64;
    let g = match solvers::form_g(&cell.instance.c2(), &sol.basis.p) {
        Ok(g) => g,
        Err(e) => return RowRecord::failed(experiment, "ctls", m, rep, &e),
    };
    row.gram_residual = metrics::gram_limit_residual(&g, m, &cell.reference.t_hat, sigma).ok();
    let noise_dim = spec.n + spec.ell - spec.r;
    let noise = &sol.basis.eigvals_g[..noise_dim];
    row.noise_eig_min = noise.first().map(|v| v * scale);
    row.noise_eig_max = noise.last().map(|v| v * scale);

    let sigma2 = sigma * sigma;
    let epsilon = sigma2 / 2.0;
    if sigma > 0.0 && sol.basis.v.shape() == cell.reference.v_bar.shape() {
        if let Ok(dk) = metrics::davis_kahan_check(
            &sol.basis.v,
            &cell.reference.v_bar,
            &g,
            m,
            &cell.reference.t_hat,
            sigma,
            epsilon,
        ) {
            row.dk_lhs = Some(dk.lhs);
            row.dk_rhs = Some(dk.rhs);
            row.dk_violated = Some(dk.violated);
            row.dk_eligible = Some(sol.basis.spectral_gap * scale > sigma2 - epsilon);
        }
    }
    row
}

/// Row for truncated TLS run on all rows, ignoring that the first `k` are exact.
fn tls_row(experiment: &str, cell: &Cell, rank: usize, m: usize, rep: u64) -> RowRecord {
    match solvers::solve_ttls(&cell.instance.a, &cell.instance.b, RankMode::Explicit(rank)) {
        Ok(sol) => {
            let mut row = RowRecord::empty(experiment, "tls", m, rep);
            subspace_metrics(&mut row, &sol, &cell.gt);
            row
        }
        Err(e) => RowRecord::failed(experiment, "tls", m, rep, &e),
    }
}

fn ensure_valid(config: &ExperimentConfig) -> Result<ModelSpec> {
    config.validate()?;
    let spec = config.spec();
    spec.validate()?;
    Ok(spec)
}

/// Solves every `(m, replicate)` cell at the configured rank and records
/// subspace distance, estimator error, Gram residual and the sin-Θ audit.
pub fn run_consistency_experiment(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let spec = ensure_valid(config)?;
    let rank = config.rank_mode.unwrap_or(RankMode::Explicit(config.r));
    let rows = run_cells(&config.m_schedule, config.replicates, |m, rep| {
        let name = Experiment::Consistency.name();
        match prepare_cell(&spec, m, rep) {
            Ok(cell) => vec![ctls_row(name, &cell, rank, m, rep)],
            Err(e) => vec![RowRecord::failed(name, "ctls", m, rep, &e)],
        }
    })?;
    ConvergenceReport::from_rows(rows)
}

/// Runs at rank `r∞ < r` (or AUTO) and records how far `Ra(Ȳ)` sticks out
/// of the extracted subspace.
pub fn run_inclusion_experiment(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let spec = ensure_valid(config)?;
    if spec.r_inf >= spec.r {
        return Err(Error::config("r_inf", "inclusion experiment needs r_inf < r"));
    }
    let rank = config.rank_mode.unwrap_or(RankMode::Explicit(spec.r_inf));
    let rows = run_cells(&config.m_schedule, config.replicates, |m, rep| {
        let name = Experiment::Inclusion.name();
        match prepare_cell(&spec, m, rep) {
            Ok(cell) => vec![ctls_row(name, &cell, rank, m, rep)],
            Err(e) => vec![RowRecord::failed(name, "ctls", m, rep, &e)],
        }
    })?;
    ConvergenceReport::from_rows(rows)
}

/// Paired `ctls` and `tls` rows per cell. Unless the config sets `layout`,
/// the data rows avoid the exact-row directions, which is the case where
/// plain TLS loses consistency.
pub fn misspecification_demo(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let mut config = config.clone();
    config.layout = Some(config.layout.unwrap_or(LatentLayout::ExactRowsExcluded));
    if config.k == 0 {
        return Err(Error::config("k", "misspecification demo needs exact rows (k > 0)"));
    }
    let spec = ensure_valid(&config)?;
    let rank = config.rank_mode.unwrap_or(RankMode::Explicit(config.r));
    let tls_rank = match rank {
        RankMode::Explicit(r) => r,
        RankMode::Auto => config.r,
    };
    let rows = run_cells(&config.m_schedule, config.replicates, |m, rep| {
        let name = Experiment::Misspecification.name();
        match prepare_cell(&spec, m, rep) {
            Ok(cell) => vec![
                ctls_row(name, &cell, rank, m, rep),
                tls_row(name, &cell, tls_rank, m, rep),
            ],
            Err(e) => vec![
                RowRecord::failed(name, "ctls", m, rep, &e),
                RowRecord::failed(name, "tls", m, rep, &e),
            ],
        }
    })?;
    ConvergenceReport::from_rows(rows)
}

/// `|m⁻¹Σᵢ₌₁ᵐ αᵢεᵢ|` along the schedule, one noise sequence per seed.
pub fn slln_demo(config: &SllnConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let name = Experiment::Slln.name();
    let last = *config.m_schedule.last().expect("validated non-empty");
    let pool = thread_pool()?;
    let per_seed: Vec<Vec<f64>> = pool.install(|| {
        (0..config.seeds as u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rng::stream(config.seed, 0, rep, Purpose::Slln);
                let half_width = config.sigma * 3.0_f64.sqrt();
                let mut sum = 0.0;
                let mut out = Vec::with_capacity(config.m_schedule.len());
                let mut next = config.m_schedule.iter().peekable();
                for i in 1..=last as u64 {
                    let eps = match config.noise {
                        NoiseKind::Gaussian => {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            config.sigma * z
                        }
                        NoiseKind::Uniform => {
                            if half_width > 0.0 {
                                rng.random_range(-half_width..half_width)
                            } else {
                                0.0
                            }
                        }
                    };
                    sum += config.alpha.value(i) * eps;
                    if next.peek().is_some_and(|&&m| m as u64 == i) {
                        out.push((sum / i as f64).abs());
                        next.next();
                    }
                }
                out
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(config.m_schedule.len() * config.seeds);
    for (j, &m) in config.m_schedule.iter().enumerate() {
        for (rep, values) in per_seed.iter().enumerate() {
            let mut row = RowRecord::empty(name, config.alpha.name(), m, rep as u64);
            row.cesaro_abs = Some(values[j]);
            rows.push(row);
        }
    }
    ConvergenceReport::from_rows(rows)
}

pub fn run_experiment(config: &ExperimentConfig, experiment: Experiment) -> Result<ConvergenceReport> {
    match experiment {
        Experiment::Consistency => run_consistency_experiment(config),
        Experiment::Inclusion => run_inclusion_experiment(config),
        Experiment::Misspecification => misspecification_demo(config),
        Experiment::Slln => slln_demo(&config.slln_config()),
    }
}

/// `X*` for a given ground truth and noise seed, as a standalone helper for
/// callers that want a single solve without the experiment machinery.
pub fn solve_cell(spec: &ModelSpec, m: usize, replicate: u64, rank: RankMode) -> Result<(GroundTruth, SolutionSet)> {
    let cell = prepare_cell(spec, m, replicate)?;
    let sol = solvers::solve_ctls(&CtlsProblem::new(cell.instance, rank))?;
    Ok((cell.gt, sol))
}

/// Eigenvalues of `m⁻¹G` for one cell, ascending.
pub fn scaled_gram_spectrum(instance: &ProblemInstance) -> Result<Vec<f64>> {
    let p = solvers::build_p(&instance.a1(), &instance.b1())?;
    let g = solvers::form_g(&instance.c2(), &p)?;
    let eig = numerics::sym_eig_ascending(&(g / instance.m() as f64))?;
    Ok(eig.values)
}
