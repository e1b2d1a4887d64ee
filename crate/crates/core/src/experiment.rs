//! Experiment runners over (η, L, trajectory) cells. Results are returned as
//! plain data; serialization lives in the command-line front end.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::analysis::{self, GapFitResult, GapSeries};
use crate::circuit::{CircuitModel, ModelKind, TrajectoryEngine};
use crate::cptp;
use crate::error::{Error, Result};
use crate::lyapunov::{self, LyapunovEstimate, LyapunovRun};
use crate::observables;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub etas: Vec<f64>,
    pub sizes: Vec<usize>,
    pub q: usize,
    /// b
    pub bin_size: usize,
    /// f
    pub window: usize,
    /// d
    pub threshold: f64,
    /// Runs continue past convergence until at least this many steps.
    pub min_steps: u64,
    pub max_steps: u64,
    pub seed: u64,
    pub trajectories: usize,
    /// Entropy samples taken after equilibration, one per bin.
    pub entropy_samples: usize,
    pub equilibration_cap: u64,
    pub grid_points: usize,
    pub theta_samples: usize,
    /// Bins between rows of the per-trajectory exponent trace.
    pub trace_every: usize,
    /// Steps of the dense-oracle comparison.
    pub oracle_steps: usize,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::TemporallyRandom,
            etas: vec![0.36],
            sizes: vec![8],
            q: lyapunov::DEFAULT_Q,
            bin_size: 8,
            window: lyapunov::DEFAULT_WINDOW,
            threshold: lyapunov::DEFAULT_THRESHOLD,
            min_steps: 0,
            max_steps: 2_000_000,
            seed: 1,
            trajectories: 1,
            entropy_samples: 1000,
            equilibration_cap: analysis::DEFAULT_EQUILIBRATION_CAP,
            grid_points: analysis::DEFAULT_GRID_POINTS,
            theta_samples: cptp::DEFAULT_THETA_SAMPLES,
            trace_every: 16,
            oracle_steps: 256,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

pub const MIN_PAPER_WINDOW: usize = 200;
pub const MAX_THRESHOLD: f64 = 1e-2;

impl ExperimentConfig {
    /// Small windows and step budgets for quick runs.
    pub fn desk_scale() -> Self {
        Self {
            window: 64,
            min_steps: 4096,
            max_steps: 40_000,
            entropy_samples: 1000,
            equilibration_cap: 20_000,
            ..Self::default()
        }
    }

    /// Checks cross-module constraints. Returns warnings for settings that are
    /// only accepted because of `desk_scale`.
    pub fn validate(&self, desk_scale: bool) -> Result<Vec<String>> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let mut warnings = Vec::new();
        if self.etas.is_empty() || self.sizes.is_empty() {
            return bad("eta and L lists must be nonempty".into());
        }
        if let Some(e) = self.etas.iter().find(|e| !(0.0..=0.5).contains(*e)) {
            return bad(format!("eta = {e} outside [0, 1/2]"));
        }
        if let Some(l) = self.sizes.iter().find(|&&l| l == 0 || l > crate::spinchain::MAX_SITES) {
            return bad(format!("L = {l} outside 1..={}", crate::spinchain::MAX_SITES));
        }
        let min_l = *self.sizes.iter().min().expect("nonempty");
        if self.q == 0 || (min_l < 63 && self.q as u64 > 1u64 << min_l) {
            return bad(format!("q = {} exceeds 2^L = {} for L = {min_l}", self.q, 1u64 << min_l));
        }
        if !(self.threshold > 0.0 && self.threshold <= MAX_THRESHOLD) {
            return bad(format!("d = {} must lie in (0, {MAX_THRESHOLD}]", self.threshold));
        }
        if self.window < MIN_PAPER_WINDOW {
            if !desk_scale {
                return bad(format!(
                    "f = {} below {MIN_PAPER_WINDOW}; pass --desk-scale to allow it",
                    self.window
                ));
            }
            warnings.push(format!("f = {} is below {MIN_PAPER_WINDOW} (desk scale)", self.window));
        }
        if self.window == 0 || self.bin_size == 0 || self.trajectories == 0 || self.trace_every == 0 {
            return bad("f, b, trajectories and trace interval must be positive".into());
        }
        if self.max_steps < self.min_steps {
            return bad("max_steps below min_steps".into());
        }
        if self.threads == 0 {
            return bad("threads must be positive".into());
        }
        Ok(warnings)
    }

    fn model_for(&self, eta: f64, num_sites: usize) -> Result<CircuitModel> {
        CircuitModel::new(self.model, num_sites, eta)
    }
}

/// Deterministic ChaCha stream for a cell and trajectory.
pub fn cell_stream(eta_index: usize, size_index: usize, trajectory: usize) -> u64 {
    ((eta_index as u64) << 40) | ((size_index as u64) << 24) | trajectory as u64
}

/// Maps `f` over `items` on up to `threads` scoped workers; output order
/// follows input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                *slots[k].lock().expect("worker slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("worker slot").expect("every item processed"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub t: u64,
    pub exponents: Vec<f64>,
    pub converged: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub trajectory: usize,
    pub trace: Vec<TracePoint>,
    pub estimate: LyapunovEstimate,
    pub run: LyapunovRun,
}

/// Advances until every exponent converged and `min_steps` passed, or
/// `max_steps` is reached.
fn drive(run: &mut LyapunovRun, cfg: &ExperimentConfig, mut trace: Option<&mut Vec<TracePoint>>) -> Result<()> {
    let b = cfg.bin_size as u64;
    loop {
        run.advance_bin()?;
        let acc = &run.accumulator;
        let t = acc.total_steps();
        let converged = acc.check_convergence();
        let done = (converged.iter().all(|&c| c) && t >= cfg.min_steps) || t + b > cfg.max_steps;
        if let Some(tr) = trace.as_deref_mut() {
            if acc.bins_done().is_multiple_of(cfg.trace_every) || done {
                tr.push(TracePoint {
                    t,
                    exponents: acc.current(),
                    converged,
                });
            }
        }
        if done {
            return Ok(());
        }
    }
}

pub fn run_lyapunov_trajectory(
    cfg: &ExperimentConfig,
    eta: f64,
    num_sites: usize,
    q: usize,
    trajectory: usize,
    stream: u64,
) -> Result<TrajectoryRun> {
    let engine = TrajectoryEngine::new(cfg.model_for(eta, num_sites)?, q, cfg.seed, stream)?;
    let mut run = LyapunovRun::new(engine, cfg.bin_size, cfg.window, cfg.threshold)?;
    let mut trace = Vec::new();
    drive(&mut run, cfg, Some(&mut trace))?;
    Ok(TrajectoryRun {
        trajectory,
        trace,
        estimate: run.estimate(),
        run,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// 1-based exponent index.
    pub index: usize,
    pub mean_shifted: f64,
    pub min_shifted: f64,
    pub max_shifted: f64,
    /// (max − min) / |mean|.
    pub rel_spread: f64,
    pub n_converged: usize,
}

#[derive(Debug)]
pub struct LyapunovCell {
    pub eta: f64,
    pub num_sites: usize,
    pub trajectories: Vec<Result<TrajectoryRun>>,
    pub summary: Vec<SummaryRow>,
}

fn summarize(runs: &[Result<TrajectoryRun>], q: usize) -> Vec<SummaryRow> {
    let ok: Vec<&TrajectoryRun> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        return Vec::new();
    }
    (0..q)
        .map(|i| {
            let vals: Vec<f64> = ok
                .iter()
                .map(|r| lyapunov::shift_spectrum(&r.estimate).exponents[i])
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            SummaryRow {
                index: i + 1,
                mean_shifted: mean,
                min_shifted: min,
                max_shifted: max,
                rel_spread: if mean == 0.0 { 0.0 } else { (max - min) / mean.abs() },
                n_converged: ok.iter().filter(|r| r.estimate.converged[i]).count(),
            }
        })
        .collect()
}

/// One cell per (η, L), `trajectories` independent runs each.
pub fn run_lyapunov(cfg: &ExperimentConfig) -> Vec<LyapunovCell> {
    let jobs: Vec<(usize, usize, usize)> = cells(cfg)
        .into_iter()
        .flat_map(|(ie, il)| (0..cfg.trajectories).map(move |k| (ie, il, k)))
        .collect();
    let mut results = parallel_map(&jobs, cfg.threads, |&(ie, il, k)| {
        run_lyapunov_trajectory(cfg, cfg.etas[ie], cfg.sizes[il], cfg.q, k, cell_stream(ie, il, k))
    })
    .into_iter();
    cells(cfg)
        .into_iter()
        .map(|(ie, il)| {
            let trajectories: Vec<_> = results.by_ref().take(cfg.trajectories).collect();
            LyapunovCell {
                eta: cfg.etas[ie],
                num_sites: cfg.sizes[il],
                summary: summarize(&trajectories, cfg.q),
                trajectories,
            }
        })
        .collect()
}

fn cells(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    (0..cfg.etas.len())
        .flat_map(|ie| (0..cfg.sizes.len()).map(move |il| (ie, il)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapPoint {
    pub eta: f64,
    pub num_sites: usize,
    /// Mean over successful trajectories of ε₂ − ε₁ (floored at 0).
    pub delta: f64,
    pub converged: bool,
    pub n_trajectories: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GapFitRow {
    pub eta: f64,
    pub fit: Result<GapFitResult>,
}

#[derive(Debug, Clone)]
pub struct GapSweepReport {
    pub points: Vec<GapPoint>,
    pub fits: Vec<GapFitRow>,
}

/// Probe count used for gaps: ε₁ and ε₂ are all that is needed.
pub const GAP_PROBES: usize = 2;

impl GapSweepReport {
    /// First η (in sweep order) whose floored extrapolated gap exceeds
    /// `fraction` of the largest one.
    pub fn liftoff(&self, fraction: f64) -> Option<f64> {
        let gaps: Vec<(f64, f64)> = self
            .fits
            .iter()
            .filter_map(|r| r.fit.as_ref().ok().map(|f| (r.eta, f.gap())))
            .collect();
        let max = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
        if max <= 0.0 {
            return None;
        }
        gaps.iter().find(|g| g.1 > fraction * max).map(|g| g.0)
    }
}

fn gap_point(cfg: &ExperimentConfig, ie: usize, il: usize) -> GapPoint {
    let (eta, l) = (cfg.etas[ie], cfg.sizes[il]);
    let mut deltas = Vec::new();
    let mut converged = true;
    let mut error = None;
    for k in 0..cfg.trajectories {
        match run_gap_trajectory(cfg, eta, l, cell_stream(ie, il, k)) {
            Ok((g, _)) => {
                deltas.push(g.delta);
                converged &= g.converged;
            }
            Err(e) => error = Some(e.to_string()),
        }
    }
    GapPoint {
        eta,
        num_sites: l,
        delta: if deltas.is_empty() { f64::NAN } else { deltas.iter().sum::<f64>() / deltas.len() as f64 },
        converged: converged && !deltas.is_empty(),
        n_trajectories: deltas.len(),
        error,
    }
}

fn run_gap_trajectory(
    cfg: &ExperimentConfig,
    eta: f64,
    num_sites: usize,
    stream: u64,
) -> Result<(observables::GapValue, LyapunovRun)> {
    let engine = TrajectoryEngine::new(cfg.model_for(eta, num_sites)?, GAP_PROBES, cfg.seed, stream)?;
    let mut run = LyapunovRun::new(engine, cfg.bin_size, cfg.window, cfg.threshold)?;
    drive(&mut run, cfg, None)?;
    let gap = observables::spectral_gap(&run.estimate(), eta, num_sites)?;
    Ok((gap, run))
}

/// Gaps for every (η, L) and one extrapolation per η over converged points.
pub fn run_gap_sweep(cfg: &ExperimentConfig) -> GapSweepReport {
    let jobs = cells(cfg);
    let points = parallel_map(&jobs, cfg.threads, |&(ie, il)| gap_point(cfg, ie, il));
    let fits = cfg
        .etas
        .iter()
        .map(|&eta| {
            let series: Vec<(usize, f64)> = points
                .iter()
                .filter(|p| p.eta == eta && p.converged)
                .map(|p| (p.num_sites, p.delta))
                .collect();
            let fit = GapSeries::new(eta, series).and_then(|s| analysis::fit_gap_extrapolation(&s, cfg.grid_points));
            GapFitRow { eta, fit }
        })
        .collect();
    GapSweepReport { points, fits }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropySample {
    pub trajectory: usize,
    pub t: u64,
    pub s_half: f64,
    pub i_1l: f64,
}

#[derive(Debug, Clone)]
pub struct EntanglementCell {
    pub eta: f64,
    pub num_sites: usize,
    pub mean_s: f64,
    pub mean_i: f64,
    pub n_samples: usize,
    /// Gap used for the equilibration time, averaged over trajectories.
    pub delta: f64,
    pub samples: Vec<EntropySample>,
    pub error: Option<String>,
}

fn entanglement_trajectory(
    cfg: &ExperimentConfig,
    eta: f64,
    num_sites: usize,
    trajectory: usize,
    stream: u64,
) -> Result<(f64, Vec<EntropySample>)> {
    let (gap, mut run) = run_gap_trajectory(cfg, eta, num_sites, stream)?;
    let t_eq = analysis::equilibration_time(gap.delta, analysis::DEFAULT_EQUILIBRATION_TOL, cfg.equilibration_cap);
    while run.accumulator.total_steps() < t_eq {
        run.advance_bin()?;
    }
    let mut samples = Vec::with_capacity(cfg.entropy_samples);
    for _ in 0..cfg.entropy_samples {
        run.advance_bin()?;
        let probe = observables::ground_state_probe(run.probes(), true)?.state;
        samples.push(EntropySample {
            trajectory,
            t: run.accumulator.total_steps(),
            s_half: observables::half_chain_entropy(&probe)?,
            i_1l: observables::end_to_end_mutual_information(&probe)?,
        });
    }
    Ok((gap.delta, samples))
}

fn entanglement_cell(cfg: &ExperimentConfig, ie: usize, il: usize) -> EntanglementCell {
    let (eta, l) = (cfg.etas[ie], cfg.sizes[il]);
    let mut samples = Vec::new();
    let mut deltas = Vec::new();
    let mut error = None;
    for k in 0..cfg.trajectories {
        match entanglement_trajectory(cfg, eta, l, k, cell_stream(ie, il, k)) {
            Ok((d, s)) => {
                deltas.push(d);
                samples.extend(s);
            }
            Err(e) => error = Some(e.to_string()),
        }
    }
    let n = samples.len();
    let mean = |f: fn(&EntropySample) -> f64| {
        if n == 0 {
            f64::NAN
        } else {
            samples.iter().map(f).sum::<f64>() / n as f64
        }
    };
    EntanglementCell {
        eta,
        num_sites: l,
        mean_s: mean(|s| s.s_half),
        mean_i: mean(|s| s.i_1l),
        n_samples: n,
        delta: if deltas.is_empty() { f64::NAN } else { deltas.iter().sum::<f64>() / deltas.len() as f64 },
        samples,
        error,
    }
}

/// Time-averaged S^{L/2} and I^{1,L} of the leading probe after equilibration.
pub fn run_entanglement(cfg: &ExperimentConfig) -> Vec<EntanglementCell> {
    let jobs = cells(cfg);
    parallel_map(&jobs, cfg.threads, |&(ie, il)| entanglement_cell(cfg, ie, il))
}

/// η with the largest mean I^{1,L} among cells of size `num_sites`.
pub fn mutual_information_peak(cells: &[EntanglementCell], num_sites: usize) -> Option<f64> {
    cells
        .iter()
        .filter(|c| c.num_sites == num_sites && c.mean_i.is_finite())
        .max_by(|a, b| a.mean_i.total_cmp(&b.mean_i))
        .map(|c| c.eta)
}

#[derive(Debug, Clone)]
pub struct CptpRow {
    pub model: ModelKind,
    pub num_sites: usize,
    pub eta: f64,
    pub report: Result<cptp::StationaryReport>,
    pub trace_residual: f64,
    pub theta_samples: usize,
    /// None above the closure size limit.
    pub closure: Option<Result<cptp::AlgebraClosure>>,
    pub pauli_identities: Result<bool>,
}

pub const CLOSURE_RANDOM_LAYERS: usize = 8;
const CLOSURE_MAX_ITERATIONS: usize = 64;

pub fn run_cptp_check(cfg: &ExperimentConfig) -> Vec<CptpRow> {
    let jobs = cells(cfg);
    parallel_map(&jobs, cfg.threads, |&(ie, il)| {
        let (eta, l) = (cfg.etas[ie], cfg.sizes[il]);
        let channel = cfg
            .model_for(eta, l)
            .and_then(|m| cptp::build_superoperator(&m, cfg.theta_samples, cfg.seed));
        let (report, trace_residual, theta_samples) = match channel {
            Ok(g) => (cptp::stationary_analysis(&g), g.trace_preservation_residual(), g.theta_samples),
            Err(e) => (Err(e), f64::NAN, 0),
        };
        let closure = (l <= cptp::MAX_CLOSURE_SITES).then(|| {
            cptp::spanning_generators(l, eta, CLOSURE_RANDOM_LAYERS, cfg.seed)
                .and_then(|g| cptp::algebra_closure(&g, CLOSURE_MAX_ITERATIONS))
        });
        CptpRow {
            model: cfg.model,
            num_sites: l,
            eta,
            report,
            trace_residual,
            theta_samples,
            closure,
            pauli_identities: cptp::pauli_construction_check(eta),
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub eta: f64,
    pub num_sites: usize,
    pub trajectory: usize,
    /// 1-based.
    pub index: usize,
    pub gram_schmidt_shifted: f64,
    pub svd_shifted: f64,
    pub rel_error: f64,
    /// |⟨Ψ̃_i|Ψ_i⟩|
    pub overlap: f64,
}

/// Both estimators on the same logged trajectory of `oracle_steps` steps.
pub fn oracle_trajectory(
    cfg: &ExperimentConfig,
    eta: f64,
    num_sites: usize,
    trajectory: usize,
    stream: u64,
) -> Result<Vec<OracleRow>> {
    if !cfg.oracle_steps.is_multiple_of(cfg.bin_size) {
        return Err(Error::InvalidParameter("oracle steps must be a multiple of b".into()));
    }
    let mut engine = TrajectoryEngine::new(cfg.model_for(eta, num_sites)?, cfg.q, cfg.seed, stream)?;
    engine.enable_log();
    let mut run = LyapunovRun::new(engine, cfg.bin_size, cfg.window, cfg.threshold)?;
    for _ in 0..cfg.oracle_steps / cfg.bin_size {
        run.advance_bin()?;
    }
    let gs = run.accumulator.current();
    let log = run.engine.log().ok_or_else(|| Error::Contract("outcome log missing".into()))?;
    let svd = lyapunov::svd_oracle(log, num_sites, eta, cfg.oracle_steps)?;
    Ok((0..cfg.q)
        .map(|i| {
            let a = gs[i] - gs[0];
            let b = svd.exponents[i] - svd.exponents[0];
            OracleRow {
                eta,
                num_sites,
                trajectory,
                index: i + 1,
                gram_schmidt_shifted: a,
                svd_shifted: b,
                rel_error: if i == 0 { 0.0 } else { (a - b).abs() / b.abs() },
                overlap: run.probes()[i].inner(&svd.singular_vectors[i]).norm(),
            }
        })
        .collect())
}

pub fn run_oracle_check(cfg: &ExperimentConfig) -> Vec<Result<Vec<OracleRow>>> {
    let jobs: Vec<(usize, usize, usize)> = cells(cfg)
        .into_iter()
        .flat_map(|(ie, il)| (0..cfg.trajectories).map(move |k| (ie, il, k)))
        .collect();
    parallel_map(&jobs, cfg.threads, |&(ie, il, k)| {
        oracle_trajectory(cfg, cfg.etas[ie], cfg.sizes[il], k, cell_stream(ie, il, k))
    })
}
