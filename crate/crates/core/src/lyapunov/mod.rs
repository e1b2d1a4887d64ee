//! Lyapunov spectrum of the trajectory operator product by binned evolution
//! and Gram–Schmidt reorthonormalization of probe vectors.
//!
//! Probes are carried unnormalized through `b` steps, orthonormalized, and the
//! log-norms of the orthogonalized residuals are accumulated. After `s` bins
//! the `i`th exponent estimate is `−Σ ln‖χ_i‖ / (s·b)`.

mod oracle;

use std::collections::VecDeque;

use rand::Rng;

use crate::circuit::TrajectoryEngine;
use crate::error::{Error, Result};
use crate::spinchain::StateVector;

pub use oracle::{svd_oracle, OracleResult, MAX_ORACLE_SITES, MAX_ORACLE_STEPS};

/// Relative residual below which a probe counts as linearly dependent on the
/// earlier ones.
pub const RANK_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeEnsemble {
    pub vectors: Vec<StateVector>,
}

impl ProbeEnsemble {
    pub fn q(&self) -> usize {
        self.vectors.len()
    }
}

/// `q` Haar-random orthonormal vectors.
pub fn init_probes<R: Rng + ?Sized>(q: usize, num_sites: usize, rng: &mut R) -> Result<ProbeEnsemble> {
    let dim = 1usize.checked_shl(num_sites as u32).unwrap_or(usize::MAX);
    if q == 0 || q > dim {
        return Err(Error::InvalidParameter(format!(
            "q = {q} probes for Hilbert-space dimension {dim}"
        )));
    }
    let mut vectors = (0..q)
        .map(|_| StateVector::random(num_sites, rng))
        .collect::<Result<Vec<_>>>()?;
    orthonormalize(&mut vectors)?;
    Ok(ProbeEnsemble { vectors })
}

/// Classical Gram–Schmidt in index order with one reorthogonalization pass.
/// Returns ln‖χ_i‖ for each probe and leaves the normalized χ_i in place.
pub fn orthonormalize(probes: &mut [StateVector]) -> Result<Vec<f64>> {
    let mut log_norms = Vec::with_capacity(probes.len());
    for i in 0..probes.len() {
        let (done, rest) = probes.split_at_mut(i);
        let v = &mut rest[0];
        let original = v.norm();
        for _pass in 0..2 {
            let coeffs: Vec<_> = done.iter().map(|u| u.inner(v)).collect();
            for (u, c) in done.iter().zip(coeffs) {
                v.sub_scaled(c, u);
            }
        }
        let n = v.norm();
        if !(n > RANK_TOLERANCE * original) || !n.is_finite() {
            return Err(Error::RankDeficient {
                index: i + 1,
                residual: if original > 0.0 { n / original } else { 0.0 },
            });
        }
        v.scale(1.0 / n);
        log_norms.push(n.ln());
    }
    Ok(log_norms)
}

/// Advances the engine `bin_size` steps. Probes come out as V(θ̃_s)|Ψ̃_i⟩ up to
/// the common factor tracked by the engine.
pub fn evolve_bin(engine: &mut TrajectoryEngine, bin_size: usize) -> Result<()> {
    if bin_size == 0 {
        return Err(Error::InvalidParameter("bin size must be at least 1".into()));
    }
    engine.take_underflow();
    for _ in 0..bin_size {
        engine.step()?;
        if engine.take_underflow() {
            return Err(Error::BinOverflow {
                bin_size,
                threshold: crate::circuit::PROBE_UNDERFLOW_RATIO,
            });
        }
    }
    Ok(())
}

/// Running sums of probe log-norms with a window of recent estimates.
#[derive(Debug, Clone)]
pub struct LyapunovAccumulator {
    sum_log_norms: Vec<f64>,
    bins_done: usize,
    bin_size: usize,
    history: Vec<VecDeque<f64>>,
    window: usize,
    threshold: f64,
}

pub const DEFAULT_WINDOW: usize = 256;
pub const DEFAULT_THRESHOLD: f64 = 5e-3;
pub const DEFAULT_Q: usize = 8;

impl LyapunovAccumulator {
    /// `window` is the number f of recent estimates averaged, `threshold` the
    /// relative-deviation bound d.
    pub fn new(q: usize, bin_size: usize, window: usize, threshold: f64) -> Result<Self> {
        if q == 0 || bin_size == 0 || window == 0 {
            return Err(Error::InvalidParameter(
                "q, bin size and window must be positive".into(),
            ));
        }
        if !(threshold > 0.0) {
            return Err(Error::InvalidParameter("threshold must be positive".into()));
        }
        Ok(Self {
            sum_log_norms: vec![0.0; q],
            bins_done: 0,
            bin_size,
            history: vec![VecDeque::with_capacity(window); q],
            window,
            threshold,
        })
    }

    pub fn q(&self) -> usize {
        self.sum_log_norms.len()
    }

    pub fn bins_done(&self) -> usize {
        self.bins_done
    }

    pub fn bin_size(&self) -> usize {
        self.bin_size
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn total_steps(&self) -> u64 {
        (self.bins_done * self.bin_size) as u64
    }

    pub fn sum_log_norms(&self) -> &[f64] {
        &self.sum_log_norms
    }

    pub fn record_bin(&mut self, log_norms: &[f64]) -> Result<()> {
        if log_norms.len() != self.q() {
            return Err(Error::InvalidParameter(format!(
                "{} log-norms for {} probes",
                log_norms.len(),
                self.q()
            )));
        }
        self.bins_done += 1;
        let t = (self.bins_done * self.bin_size) as f64;
        for ((sum, hist), ln) in self
            .sum_log_norms
            .iter_mut()
            .zip(self.history.iter_mut())
            .zip(log_norms)
        {
            *sum += ln;
            if hist.len() == self.window {
                hist.pop_front();
            }
            hist.push_back(-*sum / t);
        }
        Ok(())
    }

    /// ε̃_i at the latest bin.
    pub fn current(&self) -> Vec<f64> {
        let t = self.total_steps() as f64;
        self.sum_log_norms
            .iter()
            .map(|s| if t > 0.0 { -s / t } else { f64::NAN })
            .collect()
    }

    /// Mean of the retained estimates per index.
    pub fn window_mean(&self) -> Vec<f64> {
        self.history
            .iter()
            .map(|h| h.iter().sum::<f64>() / h.len() as f64)
            .collect()
    }

    /// Converged when s ≥ 2f and the window's relative standard deviation is at
    /// most d. Assessed on the raw (unshifted) estimates.
    pub fn check_convergence(&self) -> Vec<bool> {
        if self.bins_done < 2 * self.window {
            return vec![false; self.q()];
        }
        self.history
            .iter()
            .map(|h| {
                let n = h.len() as f64;
                let mean = h.iter().sum::<f64>() / n;
                let var = (h.iter().map(|e| e * e).sum::<f64>() / n - mean * mean).max(0.0);
                mean > 0.0 && var.sqrt() / mean <= self.threshold
            })
            .collect()
    }

    pub fn estimate(&self) -> LyapunovEstimate {
        LyapunovEstimate {
            exponents: self.window_mean(),
            converged: self.check_convergence(),
            total_steps: self.total_steps(),
            shifted: false,
        }
    }
}

/// Exponents in probe order (ascending once converged), units 1/step.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    pub exponents: Vec<f64>,
    pub converged: Vec<bool>,
    pub total_steps: u64,
    pub shifted: bool,
}

impl LyapunovEstimate {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Subtracts ε₁ from every exponent.
pub fn shift_spectrum(estimate: &LyapunovEstimate) -> LyapunovEstimate {
    let base = estimate.exponents.first().copied().unwrap_or(0.0);
    LyapunovEstimate {
        exponents: estimate.exponents.iter().map(|e| e - base).collect(),
        shifted: true,
        ..estimate.clone()
    }
}

/// Engine plus accumulator driven one bin at a time.
#[derive(Debug, Clone)]
pub struct LyapunovRun {
    pub engine: TrajectoryEngine,
    pub accumulator: LyapunovAccumulator,
}

impl LyapunovRun {
    pub fn new(engine: TrajectoryEngine, bin_size: usize, window: usize, threshold: f64) -> Result<Self> {
        let q = engine.probes().len();
        Ok(Self {
            accumulator: LyapunovAccumulator::new(q, bin_size, window, threshold)?,
            engine,
        })
    }

    /// Evolves one bin, orthonormalizes and records. Returns the log-norms.
    pub fn advance_bin(&mut self) -> Result<Vec<f64>> {
        evolve_bin(&mut self.engine, self.accumulator.bin_size())?;
        let mut log_norms = orthonormalize(self.engine.probes_mut())?;
        let scale = self.engine.reset_probe_log_scale();
        for ln in log_norms.iter_mut() {
            *ln += scale;
        }
        self.accumulator.record_bin(&log_norms)?;
        Ok(log_norms)
    }

    pub fn probes(&self) -> &[StateVector] {
        self.engine.probes()
    }

    pub fn estimate(&self) -> LyapunovEstimate {
        self.accumulator.estimate()
    }
}
