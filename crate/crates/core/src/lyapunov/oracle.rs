//! Direct route to the Lyapunov spectrum: rebuild V(ω_t) from a logged
//! trajectory and take its singular-value decomposition.
//!
//! Singular values of V(ω_t) span far more than the double-precision range at
//! moderate t, so the product is held as V = Q·diag(e^s)·T (Householder QR per
//! step, scales in logs) and the final SVD is a one-sided Jacobi sweep on
//! log-scaled columns.

use crate::circuit::{dense_brickwork_layer, OutcomeRecord};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::spinchain::{build_kraus, build_two_site_gate, StateVector};

pub const MAX_ORACLE_SITES: usize = 8;
pub const MAX_ORACLE_STEPS: usize = 512;
const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// ε_i(ω_t), ascending.
    pub exponents: Vec<f64>,
    /// Left singular vectors |Ψ_i⟩ in the same order.
    pub singular_vectors: Vec<StateVector>,
}

fn layer_unitary(record: &OutcomeRecord, num_sites: usize) -> Result<CMatrix> {
    let gate = build_two_site_gate(&record.theta_used)?;
    Ok(dense_brickwork_layer(&gate, num_sites, record.step))
}

/// V = q · diag(exp(log_d)) · t, with log_d kept in descending order.
struct GradedProduct {
    q: CMatrix,
    log_d: Vec<f64>,
    t: CMatrix,
}

impl GradedProduct {
    fn identity(n: usize) -> Self {
        Self {
            q: CMatrix::identity(n, n),
            log_d: vec![0.0; n],
            t: CMatrix::identity(n, n),
        }
    }

    fn left_multiply(&mut self, g: &CMatrix) -> Result<()> {
        let n = self.log_d.len();
        let a = g * &self.q;
        let qr = a.qr();
        let (q, r) = (qr.q(), qr.r());
        let mut log_d = vec![0.0; n];
        for i in 0..n {
            let rii = r[(i, i)].norm();
            if rii == 0.0 {
                return Err(Error::Contract("singular factor in operator product".into()));
            }
            log_d[i] = rii.ln() + self.log_d[i];
        }
        // S = D'^{-1} R D, bounded because log_d is sorted.
        let mut s = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                s[(i, j)] = r[(i, j)] * (self.log_d[j] - log_d[i]).exp();
            }
        }
        let t = s * &self.t;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| log_d[y].total_cmp(&log_d[x]));
        self.q = CMatrix::from_fn(n, n, |i, j| q[(i, order[j])]);
        self.t = CMatrix::from_fn(n, n, |i, j| t[(order[i], j)]);
        self.log_d = order.iter().map(|&k| log_d[k]).collect();
        Ok(())
    }
}

fn normalize_column(c: &mut CVector, s: &mut f64) {
    let norm = c.norm();
    if norm > 0.0 {
        c.unscale_mut(norm);
        *s += norm.ln();
    } else {
        *s = f64::NEG_INFINITY;
    }
}

/// One-sided Jacobi on columns a_j = exp(s_j)·c_j. Returns (ln σ_j, J) with
/// A·J having orthogonal columns.
fn log_scaled_jacobi(mut cols: Vec<CVector>, mut s: Vec<f64>) -> (Vec<f64>, CMatrix) {
    let n = cols.len();
    let mut jmat = CMatrix::identity(n, n);
    for (c, sj) in cols.iter_mut().zip(s.iter_mut()) {
        normalize_column(c, sj);
    }
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (hi, lo) = if s[p] >= s[q] { (p, q) } else { (q, p) };
                if s[lo] == f64::NEG_INFINITY {
                    continue;
                }
                let gamma = cols[hi].dotc(&cols[lo]);
                let g0 = gamma.norm();
                if g0 <= JACOBI_TOL {
                    continue;
                }
                rotated = true;
                let phase = gamma / g0;
                let w = (s[lo] - s[hi]).exp();
                // Real Jacobi on (α, β, |γ|) = (1, w², w·g0), solved for t/w.
                let z = (w * w - 1.0) / (2.0 * g0);
                let t_over_w = if z == 0.0 { 1.0 / w } else { z.signum() / (z.abs() + (w * w + z * z).sqrt()) };
                let t = w * t_over_w;
                let c = 1.0 / (1.0 + t * t).sqrt();
                let b_lo = &cols[lo] * phase.conj();
                let new_hi = &cols[hi] * C64::from(c) - &b_lo * C64::from(c * t * w);
                let new_lo = &cols[hi] * C64::from(c * t_over_w) + &b_lo * C64::from(c);
                cols[hi] = new_hi;
                cols[lo] = new_lo;
                let j_lo = jmat.column(lo) * phase.conj();
                let j_hi = jmat.column(hi).clone_owned();
                jmat.set_column(hi, &(&j_hi * C64::from(c) - &j_lo * C64::from(c * t)));
                jmat.set_column(lo, &(&j_hi * C64::from(c * t) + &j_lo * C64::from(c)));
                normalize_column(&mut cols[hi], &mut s[hi]);
                normalize_column(&mut cols[lo], &mut s[lo]);
            }
        }
        if !rotated {
            break;
        }
    }
    (s, jmat)
}

pub fn svd_oracle(log: &[OutcomeRecord], num_sites: usize, eta: f64, t_max: usize) -> Result<OracleResult> {
    if num_sites == 0 || num_sites > MAX_ORACLE_SITES || t_max > MAX_ORACLE_STEPS {
        return Err(Error::Size(format!(
            "dense oracle limited to L <= {MAX_ORACLE_SITES}, t <= {MAX_ORACLE_STEPS}"
        )));
    }
    if t_max == 0 {
        return Err(Error::InvalidParameter("t_max must be positive".into()));
    }
    if log.len() < t_max {
        return Err(Error::InsufficientLog {
            available: log.len(),
            requested: t_max,
        });
    }
    let kraus = build_kraus(eta)?;
    let n = 1usize << num_sites;
    let mut v = GradedProduct::identity(n);
    for record in &log[..t_max] {
        if record.outcomes.len() != num_sites {
            return Err(Error::InvalidParameter("log record size mismatch".into()));
        }
        let m = linalg::kron_all(
            &record
                .outcomes
                .iter()
                .map(|&o| kraus.matrix(o))
                .collect::<Vec<_>>(),
        );
        v.left_multiply(&(m * layer_unitary(record, num_sites)?))?;
    }
    // V = Q X with X = D T; Jacobi on X† gives X = J Σ W†.
    let cols: Vec<CVector> = (0..n).map(|j| v.t.row(j).adjoint()).collect();
    let (log_sigma, jmat) = log_scaled_jacobi(cols, v.log_d.clone());
    if log_sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::DegenerateOutcome { eta });
    }
    let u = &v.q * jmat;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| log_sigma[b].total_cmp(&log_sigma[a]));
    let t = t_max as f64;
    let exponents = order.iter().map(|&i| -log_sigma[i] / t).collect();
    let singular_vectors = order
        .iter()
        .map(|&i| StateVector::from_amplitudes(num_sites, u.column(i).iter().copied().collect::<Vec<C64>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleResult {
        exponents,
        singular_vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{CircuitModel, TrajectoryEngine};
    use crate::lyapunov::LyapunovRun;
    use crate::spinchain::{Outcome, ThetaSet};

    #[test]
    fn eta_zero_spectrum_is_flat() {
        let model = CircuitModel::temporally_random(3, 0.0).unwrap();
        let mut e = TrajectoryEngine::new(model, 0, 1, 0).unwrap();
        e.enable_log();
        for _ in 0..24 {
            e.step().unwrap();
        }
        let r = svd_oracle(e.log().unwrap(), 3, 0.0, 24).unwrap();
        for eps in &r.exponents {
            assert!((eps - 1.5 * std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn single_site_sequences_by_enumeration() {
        let eta: f64 = 0.3;
        let a = (0.5 + eta).sqrt();
        let b = (0.5 - eta).sqrt();
        for bits in 0..8u32 {
            let log: Vec<OutcomeRecord> = (0..3)
                .map(|k| OutcomeRecord {
                    step: k + 1,
                    outcomes: vec![if bits >> k & 1 == 0 { Outcome::Plus } else { Outcome::Minus }],
                    theta_used: ThetaSet::ZERO,
                })
                .collect();
            let plus = (0..3).filter(|k| bits >> k & 1 == 0).count() as i32;
            // V = diag(a^p b^m, b^p a^m)
            let up = a.powi(plus) * b.powi(3 - plus);
            let down = b.powi(plus) * a.powi(3 - plus);
            let mut expect = [-up.ln() / 3.0, -down.ln() / 3.0];
            expect.sort_by(f64::total_cmp);
            let r = svd_oracle(&log, 1, eta, 3).unwrap();
            assert!((r.exponents[0] - expect[0]).abs() < 1e-14);
            assert!((r.exponents[1] - expect[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_plain_svd_at_short_times() {
        let (l, eta) = (3, 0.25);
        let model = CircuitModel::temporally_random(l, eta).unwrap();
        let mut e = TrajectoryEngine::new(model, 0, 5, 2).unwrap();
        e.enable_log();
        for _ in 0..12 {
            e.step().unwrap();
        }
        let log = e.log().unwrap();
        let kraus = build_kraus(eta).unwrap();
        let mut v = CMatrix::identity(8, 8);
        for rec in log {
            let m = linalg::kron_all(&rec.outcomes.iter().map(|&o| kraus.matrix(o)).collect::<Vec<_>>());
            v = m * layer_unitary(rec, l).unwrap() * v;
        }
        let mut sv: Vec<f64> = v.singular_values().iter().map(|x| -x.ln() / 12.0).collect();
        sv.sort_by(f64::total_cmp);
        let r = svd_oracle(log, l, eta, 12).unwrap();
        for (a, b) in sv.iter().zip(&r.exponents) {
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
        for (i, u) in r.singular_vectors.iter().enumerate() {
            let w = StateVector::from_amplitudes(l, (&v * v.adjoint() * u.to_cvector()).iter().copied().collect()).unwrap();
            let lambda = (-2.0 * 12.0 * r.exponents[i]).exp();
            assert!((w.norm() - lambda).abs() < 1e-9 * lambda.max(1e-300) + 1e-13);
        }
    }

    #[test]
    fn resolves_spectra_beyond_double_range() {
        // diag(a^t, b^t) after 400 Plus outcomes: ratio ~1e-340.
        let eta: f64 = 0.49;
        let log: Vec<OutcomeRecord> = (0..400)
            .map(|k| OutcomeRecord {
                step: k + 1,
                outcomes: vec![Outcome::Plus, Outcome::Minus],
                theta_used: ThetaSet::ZERO,
            })
            .collect();
        let r = svd_oracle(&log, 2, eta, 400).unwrap();
        let (a, b) = (-(0.5 + eta).ln() / 2.0, -(0.5 - eta).ln() / 2.0);
        let expect = [2.0 * a.min(b), a + b, a + b, 2.0 * a.max(b)];
        for (x, y) in r.exponents.iter().zip(expect) {
            assert!((x - y).abs() < 1e-12, "{x} {y}");
        }
    }

    #[test]
    fn guards() {
        let model = CircuitModel::temporally_random(2, 0.2).unwrap();
        let mut e = TrajectoryEngine::new(model, 0, 1, 0).unwrap();
        e.enable_log();
        for _ in 0..4 {
            e.step().unwrap();
        }
        assert!(matches!(
            svd_oracle(e.log().unwrap(), 2, 0.2, 5),
            Err(Error::InsufficientLog { available: 4, requested: 5 })
        ));
        assert!(matches!(svd_oracle(e.log().unwrap(), 9, 0.2, 4), Err(Error::Size(_))));
    }

    #[test]
    fn gram_schmidt_approaches_oracle() {
        let l = 4;
        let eta = 0.3;
        let model = CircuitModel::temporally_random(l, eta).unwrap();
        let mut engine = TrajectoryEngine::new(model, 4, 21, 0).unwrap();
        engine.enable_log();
        let mut run = LyapunovRun::new(engine, 8, 256, 5e-3).unwrap();
        for _ in 0..8 {
            run.advance_bin().unwrap();
        }
        let gs = run.accumulator.current();
        let r = svd_oracle(run.engine.log().unwrap(), l, eta, 64).unwrap();
        for (g, e) in gs.iter().zip(&r.exponents) {
            assert!((g - e).abs() / e < 0.05);
        }
        let overlap = run.probes()[0].inner(&r.singular_vectors[0]).norm();
        assert!(overlap > 0.99, "{overlap}");
    }
}
