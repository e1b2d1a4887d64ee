//! `monlyap`: experiment drivers writing CSV tables.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure in at
//! least one cell (all other cells are still written), 1 I/O error.

mod config;
mod output;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use monlyap_core::experiment::{self, ExperimentConfig};
use monlyap_core::{cptp, lyapunov};

use config::{Resolved, RunArgs};
use output::{eta_tag, Cell, Table};

pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "monlyap", version, about = "Lyapunov analysis of monitored spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lyapunov spectra: per-trajectory traces and a per-cell summary.
    Lyapunov(RunArgs),
    /// Gaps Δ = ε₁ − ε₂ over (η, L) and their L → ∞ extrapolation.
    GapSweep(RunArgs),
    /// Half-chain entropy and end-to-end mutual information after equilibration.
    Entanglement(RunArgs),
    /// Fixed points of the outcome-averaged channel and algebra closure.
    CptpCheck(RunArgs),
    /// Gram–Schmidt exponents against the graded SVD of the full product.
    OracleCheck(RunArgs),
}

impl Command {
    fn split(self) -> (&'static str, RunArgs) {
        match self {
            Command::Lyapunov(a) => ("lyapunov", a),
            Command::GapSweep(a) => ("gap-sweep", a),
            Command::Entanglement(a) => ("entanglement", a),
            Command::CptpCheck(a) => ("cptp-check", a),
            Command::OracleCheck(a) => ("oracle-check", a),
        }
    }
}

fn main() -> ExitCode {
    let (name, args) = Cli::parse().command.split();
    match run(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("monlyap {name}: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(name: &str, args: RunArgs) -> Result<(), Failure> {
    let mut r = config::resolve(args, name)?;
    prepare(name, &mut r)?;
    let warnings = r
        .cfg
        .validate(r.desk_scale)
        .map_err(|e| Failure::config(e.to_string()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&r.out)?;
    output::write_atomic(&config::config_path(&r.out), config::echo(&r, name).as_bytes())?;
    let errors = match name {
        "lyapunov" => lyapunov_cmd(&r.cfg, &r.out)?,
        "gap-sweep" => gap_sweep_cmd(&r.cfg, &r.out)?,
        "entanglement" => entanglement_cmd(&r.cfg, &r.out)?,
        "cptp-check" => cptp_cmd(&r.cfg, &r.out)?,
        "oracle-check" => oracle_cmd(&r.cfg, &r.out)?,
        _ => unreachable!("clap restricts subcommands"),
    };
    if errors.is_empty() {
        Ok(())
    } else {
        for e in &errors[1..] {
            eprintln!("monlyap {name}: {e}");
        }
        Err(Failure::numerical(errors[0].clone()))
    }
}

/// Subcommand-specific constraints checked before any work starts.
fn prepare(name: &str, r: &mut Resolved) -> Result<(), Failure> {
    let cfg = &mut r.cfg;
    match name {
        "gap-sweep" | "entanglement" => cfg.q = experiment::GAP_PROBES,
        "cptp-check" => cfg.q = 1,
        _ => {}
    }
    let distinct: BTreeSet<usize> = cfg.sizes.iter().copied().collect();
    match name {
        "gap-sweep" if distinct.len() < 3 => Err(Failure::config(format!(
            "gap extrapolation needs at least 3 distinct sizes, got {}",
            distinct.len()
        ))),
        "entanglement" => match cfg.sizes.iter().find(|&&l| l % 2 == 1 || l < 2) {
            Some(l) => Err(Failure::config(format!("half-chain entropy needs even L >= 2, got {l}"))),
            None => Ok(()),
        },
        "cptp-check" => match cfg.sizes.iter().find(|&&l| l > cptp::MAX_CHANNEL_SITES) {
            Some(l) => Err(Failure::config(format!(
                "superoperator limited to L <= {}, got {l}",
                cptp::MAX_CHANNEL_SITES
            ))),
            None => Ok(()),
        },
        "oracle-check" => {
            if let Some(l) = cfg.sizes.iter().find(|&&l| l > lyapunov::MAX_ORACLE_SITES) {
                Err(Failure::config(format!(
                    "dense oracle limited to L <= {}, got {l}",
                    lyapunov::MAX_ORACLE_SITES
                )))
            } else if cfg.oracle_steps == 0
                || cfg.oracle_steps > lyapunov::MAX_ORACLE_STEPS
                || !cfg.oracle_steps.is_multiple_of(cfg.bin_size.max(1))
            {
                Err(Failure::config(format!(
                    "oracle steps must be a positive multiple of b = {} and at most {}",
                    cfg.bin_size,
                    lyapunov::MAX_ORACLE_STEPS
                )))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

fn lyapunov_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, Failure> {
    let cells = experiment::run_lyapunov(cfg);
    let mut errors = Vec::new();
    let header = ["eta", "L", "t", "i", "epsilon_tilde", "shifted", "converged_flag"];
    let mut traces: Vec<Table> = (0..cfg.trajectories).map(|_| Table::new(&header)).collect();
    let mut summary = Table::new(&[
        "eta",
        "L",
        "i",
        "mean_shifted",
        "min_shifted",
        "max_shifted",
        "rel_spread",
        "n_converged",
        "n_trajectories",
    ]);
    for cell in &cells {
        let mut n_ok = 0;
        for (k, run) in cell.trajectories.iter().enumerate() {
            let run = match run {
                Ok(run) => run,
                Err(e) => {
                    errors.push(format!("eta={} L={} trajectory {k}: {e}", cell.eta, cell.num_sites));
                    continue;
                }
            };
            n_ok += 1;
            for p in &run.trace {
                for (i, (&e, &c)) in p.exponents.iter().zip(&p.converged).enumerate() {
                    traces[k].row(&[
                        Cell::F(cell.eta),
                        Cell::I(cell.num_sites as u64),
                        Cell::I(p.t),
                        Cell::I(i as u64 + 1),
                        Cell::F(e),
                        Cell::F(e - p.exponents[0]),
                        Cell::B(c),
                    ]);
                }
            }
        }
        for s in &cell.summary {
            summary.row(&[
                Cell::F(cell.eta),
                Cell::I(cell.num_sites as u64),
                Cell::I(s.index as u64),
                Cell::F(s.mean_shifted),
                Cell::F(s.min_shifted),
                Cell::F(s.max_shifted),
                Cell::F(s.rel_spread),
                Cell::I(s.n_converged as u64),
                Cell::I(n_ok),
            ]);
        }
    }
    for (k, t) in traces.iter().enumerate() {
        t.write(&out.join(format!("lyapunov_traj{k}.csv")))?;
    }
    summary.write(&out.join("lyapunov_summary.csv"))?;
    println!("lyapunov: {} cells -> {}", cells.len(), out.display());
    Ok(errors)
}

fn gap_sweep_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, Failure> {
    let report = experiment::run_gap_sweep(cfg);
    let mut errors = Vec::new();
    let mut gaps = Table::new(&["eta", "L", "delta", "converged", "n_trajectories"]);
    for p in &report.points {
        if let Some(e) = &p.error {
            errors.push(format!("eta={} L={}: {e}", p.eta, p.num_sites));
        }
        gaps.row(&[
            Cell::F(p.eta),
            Cell::I(p.num_sites as u64),
            Cell::F(p.delta),
            Cell::B(p.converged),
            Cell::I(p.n_trajectories as u64),
        ]);
    }
    let mut fits = Table::new(&[
        "eta",
        "gamma",
        "alpha",
        "beta",
        "cost",
        "flat_fit_flag",
        "delta_inf",
        "error",
    ]);
    for row in &report.fits {
        match &row.fit {
            Ok(f) => fits.row(&[
                Cell::F(row.eta),
                Cell::F(f.gamma),
                Cell::F(f.alpha),
                Cell::F(f.beta),
                Cell::F(f.cost),
                Cell::B(f.flat_fit),
                Cell::F(f.gap()),
                Cell::S(""),
            ]),
            Err(e) => {
                errors.push(format!("fit at eta={}: {e}", row.eta));
                let msg = e.to_string();
                fits.row(&[
                    Cell::F(row.eta),
                    Cell::F(f64::NAN),
                    Cell::F(f64::NAN),
                    Cell::F(f64::NAN),
                    Cell::F(f64::NAN),
                    Cell::B(false),
                    Cell::F(f64::NAN),
                    Cell::S(&msg),
                ]);
            }
        }
    }
    gaps.write(&out.join("gaps.csv"))?;
    fits.write(&out.join("gap_fits.csv"))?;
    match report.liftoff(0.1) {
        Some(eta) => println!("gap-sweep: extrapolated gap lifts off at eta = {eta}"),
        None => println!("gap-sweep: no extrapolated gap above zero"),
    }
    Ok(errors)
}

fn entanglement_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, Failure> {
    let cells = experiment::run_entanglement(cfg);
    let mut errors = Vec::new();
    let mut summary = Table::new(&["eta", "L", "mean_S", "mean_I", "n_samples", "delta"]);
    for c in &cells {
        if let Some(e) = &c.error {
            errors.push(format!("eta={} L={}: {e}", c.eta, c.num_sites));
        }
        summary.row(&[
            Cell::F(c.eta),
            Cell::I(c.num_sites as u64),
            Cell::F(c.mean_s),
            Cell::F(c.mean_i),
            Cell::I(c.n_samples as u64),
            Cell::F(c.delta),
        ]);
        let mut samples = Table::new(&["t", "S_half", "I_1L", "trajectory"]);
        for s in &c.samples {
            samples.row(&[Cell::I(s.t), Cell::F(s.s_half), Cell::F(s.i_1l), Cell::I(s.trajectory as u64)]);
        }
        samples.write(&out.join(format!("entanglement_samples_eta{}_L{}.csv", eta_tag(c.eta), c.num_sites)))?;
    }
    summary.write(&out.join("entanglement_summary.csv"))?;
    for &l in cfg.sizes.iter().collect::<BTreeSet<_>>() {
        if let Some(eta) = experiment::mutual_information_peak(&cells, l) {
            println!("entanglement: L = {l} mutual information peaks at eta = {eta}");
        }
    }
    Ok(errors)
}

fn cptp_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, Failure> {
    let rows = experiment::run_cptp_check(cfg);
    let mut errors = Vec::new();
    let mut table = Table::new(&[
        "model",
        "L",
        "eta",
        "multiplicity",
        "min_eig",
        "unique",
        "pd",
        "closure_dim",
        "closure_target",
        "spectral_radius",
        "trace_residual",
        "theta_samples",
        "pauli_identities",
    ]);
    for r in &rows {
        let tag = format!("{} eta={} L={}", r.model.name(), r.eta, r.num_sites);
        let (mult, min_eig, unique, pd, radius) = match &r.report {
            Ok(s) => (
                s.eigenvalue_one_multiplicity as u64,
                s.min_eigenvalue_of_fixed_state,
                s.unique,
                s.positive_definite,
                s.spectral_radius,
            ),
            Err(e) => {
                errors.push(format!("{tag}: {e}"));
                (0, f64::NAN, false, false, f64::NAN)
            }
        };
        let (closure_dim, closure_target) = match &r.closure {
            Some(Ok(c)) => (c.basis_dim as u64, c.target_dim as u64),
            Some(Err(e)) => {
                errors.push(format!("{tag} closure: {e}"));
                (0, 0)
            }
            None => (0, 0),
        };
        let pauli = match &r.pauli_identities {
            Ok(b) => *b,
            Err(e) => {
                errors.push(format!("{tag} pauli: {e}"));
                false
            }
        };
        table.row(&[
            Cell::S(r.model.name()),
            Cell::I(r.num_sites as u64),
            Cell::F(r.eta),
            Cell::I(mult),
            Cell::F(min_eig),
            Cell::B(unique),
            Cell::B(pd),
            Cell::I(closure_dim),
            Cell::I(closure_target),
            Cell::F(radius),
            Cell::F(r.trace_residual),
            Cell::I(r.theta_samples as u64),
            Cell::B(pauli),
        ]);
    }
    table.write(&out.join("cptp_report.csv"))?;
    println!("cptp-check: {} channels -> {}", rows.len(), out.display());
    Ok(errors)
}

fn oracle_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>, Failure> {
    let results = experiment::run_oracle_check(cfg);
    let mut errors = Vec::new();
    let mut table = Table::new(&[
        "eta",
        "L",
        "trajectory",
        "i",
        "gram_schmidt_shifted",
        "svd_shifted",
        "rel_error",
        "overlap",
    ]);
    let mut worst: f64 = 0.0;
    for res in &results {
        match res {
            Ok(rows) => {
                for o in rows {
                    worst = worst.max(o.rel_error);
                    table.row(&[
                        Cell::F(o.eta),
                        Cell::I(o.num_sites as u64),
                        Cell::I(o.trajectory as u64),
                        Cell::I(o.index as u64),
                        Cell::F(o.gram_schmidt_shifted),
                        Cell::F(o.svd_shifted),
                        Cell::F(o.rel_error),
                        Cell::F(o.overlap),
                    ]);
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    table.write(&out.join("oracle_check.csv"))?;
    println!("oracle-check: worst relative deviation {worst:.3e}");
    Ok(errors)
}
