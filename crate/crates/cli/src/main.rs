use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eiv_tls::harness::{self, ConvergenceReport, Experiment, ExperimentConfig, Summary};
use eiv_tls::io::{self, BundleMeta};
use eiv_tls::model::{add_noise, synthesize_replicate, ProblemInstance};
use eiv_tls::numerics;
use eiv_tls::rng::cell_noise_seed;
use eiv_tls::solvers::{self, CtlsProblem, Diagnostics, RankDecision, RankMode};
use eiv_tls::{Error, Matrix};
use serde_json::json;

/// Constrained total least squares: solve instances, run experiments,
/// summarize results.
#[derive(Parser)]
#[command(name = "eiv-tls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance given as headerless CSV matrices.
    Solve {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Number of leading rows of A and B that are exact.
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Target rank (defaults to n) or `auto`.
        #[arg(long)]
        rank: Option<RankMode>,
        #[arg(long, value_enum, default_value_t = Method::Ctls)]
        method: Method,
        /// Output prefix for `_x.csv`, `_w.csv` and `_diag.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment from a JSON or TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "consistency")]
        experiment: Experiment,
        /// Output prefix; overrides `out_prefix` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild the summary of an experiment from its rows file.
    Report {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// Write one synthetic instance and its ground truth.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Sample size (defaults to the first entry of `m_schedule`).
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Tls,
    Ttls,
    Ctls,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Md,
    Json,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn tls_diagnostics(a: &Matrix, b: &Matrix) -> Result<Diagnostics, Error> {
    let c = numerics::hstack(a, b)?;
    let eig = numerics::sym_eig_ascending(&c.tr_mul(&c))?;
    let ell = b.ncols();
    let lambda_max = eig.values.last().copied().unwrap_or(0.0).abs();
    let spectral_gap = eig.values[ell] - eig.values[ell - 1];
    Ok(Diagnostics {
        spectral_gap,
        gap_degenerate: spectral_gap < solvers::GAP_DEGENERATE_REL * lambda_max,
        rank_decision: RankDecision {
            mode: "explicit".into(),
            rank: a.ncols(),
            cluster_size: ell,
            cluster: eig.values[..ell].to_vec(),
            relative_gaps: Vec::new(),
            note: None,
        },
        eigenvalues: eig.values,
    })
}

fn cmd_solve(
    a: &Path,
    b: &Path,
    k: usize,
    rank: Option<RankMode>,
    method: Method,
    out: &Path,
) -> Result<(), Error> {
    let a = io::read_matrix(a)?;
    let b = io::read_matrix(b)?;
    let inst = ProblemInstance::new(a, b, k)?;
    let n = inst.n();
    if method != Method::Ctls && k != 0 {
        return Err(Error::Malformed("--k applies to --method ctls only".into()));
    }
    let (x, w, diag) = match method {
        Method::Tls => {
            if rank.is_some_and(|r| r != RankMode::Explicit(n)) {
                return Err(Error::Malformed("--method tls solves at rank n; use ttls for other ranks".into()));
            }
            let x = solvers::solve_tls(&inst.a, &inst.b)?;
            let diag = tls_diagnostics(&inst.a, &inst.b)?;
            (x, Matrix::zeros(n, 0), diag)
        }
        Method::Ttls | Method::Ctls => {
            let rank = rank.unwrap_or(RankMode::Explicit(n));
            let sol = solvers::solve_ctls(&CtlsProblem::new(inst.clone(), rank))?;
            let diag = sol.diagnostics();
            (sol.x_star, sol.w_hat, diag)
        }
    };
    io::write_matrix(with_suffix(out, "_x.csv"), &x)?;
    io::write_matrix(with_suffix(out, "_w.csv"), &w)?;
    let method_name = match method {
        Method::Tls => "tls",
        Method::Ttls => "ttls",
        Method::Ctls => "ctls",
    };
    let report = json!({
        "method": method_name,
        "m": inst.m(),
        "n": n,
        "ell": inst.ell(),
        "k": k,
        "eigenvalues": diag.eigenvalues,
        "spectral_gap": diag.spectral_gap,
        "gap_degenerate": diag.gap_degenerate,
        "rank_decision": diag.rank_decision,
    });
    write_json(&with_suffix(out, "_diag.json"), &report)?;
    if diag.gap_degenerate {
        eprintln!("warning: spectral gap {:e} is degenerate; the extracted subspace is ill-determined", diag.spectral_gap);
    }
    Ok(())
}

fn cmd_simulate(config_path: &Path, experiment: Experiment, out: Option<PathBuf>) -> Result<(), Error> {
    let config = ExperimentConfig::from_path(config_path)?;
    let prefix = out
        .or_else(|| config.out_prefix.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(experiment.name()));
    let report: ConvergenceReport = harness::run_experiment(&config, experiment)?;
    let (rows, summary) = report.write(&prefix)?;
    print!("{}", report.summary.to_markdown());
    eprintln!("wrote {} and {}", rows.display(), summary.display());
    Ok(())
}

fn cmd_report(rows: &Path, format: Format) -> Result<(), Error> {
    let rows = harness::read_rows(rows)?;
    let summary = Summary::from_rows(&rows)?;
    match format {
        Format::Md => print!("{}", summary.to_markdown()),
        Format::Json => print!("{}", summary.to_json()),
    }
    Ok(())
}

fn cmd_generate(config_path: &Path, m: Option<usize>, replicate: u64, out: &Path) -> Result<(), Error> {
    let config = ExperimentConfig::from_path(config_path)?;
    let spec = config.spec();
    let m = m.unwrap_or(config.m_schedule[0]);
    let gt = synthesize_replicate(&spec, m, replicate)?;
    let noise_seed = cell_noise_seed(spec.seed, m as u64, replicate);
    let inst = add_noise(&gt, noise_seed)?;
    let meta = BundleMeta {
        m,
        n: spec.n,
        ell: spec.ell,
        k: spec.k,
        spec: Some(spec),
        replicate: Some(replicate),
        noise_seed: Some(noise_seed),
    };
    io::save_instance(out, &inst, &meta)?;
    io::save_ground_truth(out, &gt, &meta)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve {
            a,
            b,
            k,
            rank,
            method,
            out,
        } => cmd_solve(&a, &b, k, rank, method, &out),
        Command::Simulate { config, experiment, out } => cmd_simulate(&config, experiment, out),
        Command::Report { rows, format } => cmd_report(&rows, format),
        Command::Generate {
            config,
            m,
            replicate,
            out,
        } => cmd_generate(&config, m, replicate, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(if e.is_degeneracy() { 2 } else { 1 })
        }
    }
}
