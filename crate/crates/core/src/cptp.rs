//! Outcome-averaged channel of one brickwork period for small chains: its
//! fixed points, and the operator algebra generated by trajectory operators.
//!
//! Vectorization is column stacking, vec(ρ)[i + N·j] = ρ_ij, so ρ ↦ AρB†
//! becomes B̄ ⊗ A.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{dense_brickwork_layer, sample_theta, CircuitModel, ModelKind};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, I, ONE};
use crate::spinchain::{build_kraus, build_two_site_gate, Outcome};

pub const MAX_CHANNEL_SITES: usize = 4;
pub const MAX_CLOSURE_SITES: usize = 3;
pub const DEFAULT_THETA_SAMPLES: usize = 256;
/// |λ − 1| below this counts toward the fixed-point multiplicity.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-8;
const CLOSURE_TOLERANCE: f64 = 1e-8;
const PD_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SuperOperator {
    pub matrix: CMatrix,
    pub num_sites: usize,
    pub description: String,
    /// Number of θ pairs averaged; 1 for the Floquet model.
    pub theta_samples: usize,
}

impl SuperOperator {
    pub fn dim(&self) -> usize {
        1 << self.num_sites
    }

    /// max_j |Σ_i Γ_(ii),j − δ_j| where j runs over vec indices: the adjoint
    /// map must fix the identity.
    pub fn trace_preservation_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for col in 0..n * n {
            let tr: C64 = (0..n).map(|i| self.matrix[(i + n * i, col)]).sum();
            let expect = if col % n == col / n { 1.0 } else { 0.0 };
            worst = worst.max((tr - expect).norm());
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        let (_, t) = self.matrix.clone().schur().unpack();
        t.diagonal().iter().copied().collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let n = self.dim();
        let v = &self.matrix * CMatrix::from_column_slice(n * n, 1, rho.as_slice());
        CMatrix::from_column_slice(n, n, v.as_slice())
    }
}

/// Diagonal factor of the outcome-summed measurement layer on vec(ρ):
/// ρ_ij ↦ c^{d(i,j)} ρ_ij with c = 2√(1/4 − η²) and d the Hamming distance.
fn dephasing_factors(num_sites: usize, eta: f64) -> Vec<f64> {
    let c = 2.0 * (0.25 - eta * eta).max(0.0).sqrt();
    let n = 1usize << num_sites;
    (0..n * n)
        .map(|k| c.powi(((k % n) ^ (k / n)).count_ones() as i32))
        .collect()
}

/// One measurement layer summed over outcomes, Σ_ζ M̄_ζ ⊗ M_ζ.
pub fn measurement_superoperator(num_sites: usize, eta: f64) -> Result<SuperOperator> {
    guard(num_sites)?;
    build_kraus(eta)?;
    let d = dephasing_factors(num_sites, eta);
    Ok(SuperOperator {
        matrix: CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            d.len(),
            d.iter().map(|&x| C64::new(x, 0.0)),
        )),
        num_sites,
        description: format!("measurement layer, L={num_sites}, eta={eta}"),
        theta_samples: 0,
    })
}

fn guard(num_sites: usize) -> Result<()> {
    if num_sites == 0 || num_sites > MAX_CHANNEL_SITES {
        return Err(Error::Size(format!(
            "superoperator limited to 1 <= L <= {MAX_CHANNEL_SITES}, got {num_sites}"
        )));
    }
    Ok(())
}

/// Adds Γ for ρ ↦ Φ_M(U₂ Φ_M(U₁ ρ U₁†) U₂†), built column by column.
fn accumulate_period(acc: &mut CMatrix, u1: &CMatrix, u2: &CMatrix, deph: &[f64], weight: f64) {
    let n = u1.nrows();
    let u2_adj = u2.adjoint();
    for j in 0..n {
        for i in 0..n {
            // U₁ E_ij U₁† = u_i u_j†
            let mut x = u1.column(i) * u1.column(j).adjoint();
            for (v, f) in x.iter_mut().zip(deph) {
                *v *= *f;
            }
            let mut y = u2 * x * &u2_adj;
            for (v, f) in y.iter_mut().zip(deph) {
                *v *= *f * weight;
            }
            let mut col = acc.column_mut(i + n * j);
            for (a, v) in col.iter_mut().zip(y.iter()) {
                *a += *v;
            }
        }
    }
}

/// Γ averaged over outcomes of a full period (odd layer then even layer).
/// Floquet sums outcomes exactly; the temporally random model also averages
/// `theta_samples` independent θ pairs drawn from `seed`.
pub fn build_superoperator(model: &CircuitModel, theta_samples: usize, seed: u64) -> Result<SuperOperator> {
    let l = model.num_sites;
    guard(l)?;
    let n = 1usize << l;
    let deph = dephasing_factors(l, model.eta);
    let samples = match model.kind {
        ModelKind::Floquet => 1,
        ModelKind::TemporallyRandom if theta_samples == 0 => {
            return Err(Error::InvalidParameter("theta_samples must be positive".into()));
        }
        ModelKind::TemporallyRandom => theta_samples,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = CMatrix::zeros(n * n, n * n);
    for _ in 0..samples {
        let t1 = sample_theta(model, 1, &mut rng);
        let t2 = sample_theta(model, 2, &mut rng);
        let u1 = dense_brickwork_layer(&build_two_site_gate(&t1)?, l, 1);
        let u2 = dense_brickwork_layer(&build_two_site_gate(&t2)?, l, 2);
        accumulate_period(&mut matrix, &u1, &u2, &deph, 1.0 / samples as f64);
    }
    Ok(SuperOperator {
        matrix,
        num_sites: l,
        description: format!("{} period channel, L={l}, eta={}", model.kind.name(), model.eta),
        theta_samples: samples,
    })
}

#[derive(Debug, Clone)]
pub struct StationaryReport {
    pub eigenvalue_one_multiplicity: usize,
    pub min_eigenvalue_of_fixed_state: f64,
    pub unique: bool,
    pub positive_definite: bool,
    /// Hermitian, unit trace.
    pub fixed_state: CMatrix,
    pub spectral_radius: f64,
}

pub fn stationary_analysis(gamma: &SuperOperator) -> Result<StationaryReport> {
    let n = gamma.dim();
    let eig = gamma.eigenvalues();
    let dist: Vec<f64> = eig.iter().map(|l| (l - ONE).norm()).collect();
    let multiplicity = dist.iter().filter(|&&d| d <= EIGENVALUE_TOLERANCE).count();
    if multiplicity == 0 {
        return Err(Error::BrokenChannel {
            tolerance: EIGENVALUE_TOLERANCE,
            closest: dist.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    let spectral_radius = eig.iter().map(|l| l.norm()).fold(0.0, f64::max);

    // Fixed space = span of the right singular vectors of Γ − I with the
    // smallest singular values; project vec(I) onto it.
    let shifted = &gamma.matrix - CMatrix::identity(n * n, n * n);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..n * n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let vec_id = CMatrix::identity(n, n);
    let mut fixed = linalg::CVector::zeros(n * n);
    for &k in &order[..multiplicity] {
        let w = v_t.row(k).adjoint();
        let c: C64 = w.iter().zip(vec_id.iter()).map(|(a, b)| a.conj() * b).sum();
        fixed += &w * c;
    }
    if fixed.norm() < 1e-8 {
        fixed = v_t.row(order[0]).adjoint();
    }
    let mut rho = CMatrix::from_column_slice(n, n, fixed.as_slice());
    rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let tr = rho.trace();
    if tr.norm() < 1e-12 {
        return Err(Error::Contract("fixed point has vanishing trace".into()));
    }
    rho /= tr;
    let min_eig = linalg::hermitian_eigenvalues(&rho)[0];
    Ok(StationaryReport {
        eigenvalue_one_multiplicity: multiplicity,
        min_eigenvalue_of_fixed_state: min_eig,
        unique: multiplicity == 1,
        positive_definite: min_eig > PD_THRESHOLD,
        fixed_state: rho,
        spectral_radius,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraClosure {
    pub basis_dim: usize,
    pub target_dim: usize,
    pub generators_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// basis_dim after each iteration.
    pub history: Vec<usize>,
}

/// Orthogonalizes `x` against the basis (two passes) and appends it if enough
/// of it survives.
fn try_extend(basis: &mut Vec<CMatrix>, x: &CMatrix) -> bool {
    let norm0 = x.norm();
    if norm0 == 0.0 {
        return false;
    }
    let mut r = x / C64::new(norm0, 0.0);
    for _ in 0..2 {
        for b in basis.iter() {
            let c = linalg::hs_inner(b, &r);
            r -= b * c;
        }
    }
    let res = r.norm();
    if res <= CLOSURE_TOLERANCE {
        return false;
    }
    basis.push(r / C64::new(res, 0.0));
    true
}

/// Dimension of the span of all products of `generators` (with the identity).
pub fn algebra_closure(generators: &[CMatrix], max_iterations: usize) -> Result<AlgebraClosure> {
    let first = generators.first().ok_or_else(|| Error::Empty("generator set".into()))?;
    let n = first.nrows();
    if generators.iter().any(|g| g.shape() != (n, n)) {
        return Err(Error::InvalidParameter("generators differ in shape".into()));
    }
    if n > 1 << MAX_CLOSURE_SITES {
        return Err(Error::Size(format!("closure limited to L <= {MAX_CLOSURE_SITES}")));
    }
    let target = n * n;
    let mut basis = Vec::new();
    let mut frontier = Vec::new();
    for g in std::iter::once(&CMatrix::identity(n, n)).chain(generators) {
        if try_extend(&mut basis, g) {
            frontier.push(basis.len() - 1);
        }
    }
    let mut history = vec![basis.len()];
    let mut iterations = 0;
    while !frontier.is_empty() && basis.len() < target && iterations < max_iterations {
        iterations += 1;
        let mut next = Vec::new();
        for &k in &frontier {
            for g in generators {
                let x = &basis[k] * g;
                if try_extend(&mut basis, &x) {
                    next.push(basis.len() - 1);
                }
            }
        }
        frontier = next;
        history.push(basis.len());
    }
    Ok(AlgebraClosure {
        basis_dim: basis.len(),
        target_dim: target,
        generators_used: generators.len(),
        iterations,
        converged: frontier.is_empty() || basis.len() == target,
        history,
    })
}

/// ⊗_x exp(s·iπσ^ν/4) with s = ±1.
pub fn exemplar_unitary(num_sites: usize, nu: usize, sign: f64) -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let single = (CMatrix::identity(2, 2) + linalg::pauli(nu) * (I * sign)) * C64::new(h, 0.0);
    linalg::kron_all(std::iter::repeat_n(&single, num_sites))
}

/// All 2^L measurement-layer Kraus operators ⊗_x M(ζ_x).
pub fn kraus_layer_set(num_sites: usize, eta: f64) -> Result<Vec<CMatrix>> {
    let kraus = build_kraus(eta)?;
    Ok((0..1usize << num_sites)
        .map(|bits| {
            let ms: Vec<CMatrix> = (0..num_sites)
                .map(|x| kraus.matrix(if bits >> x & 1 == 0 { Outcome::Plus } else { Outcome::Minus }))
                .collect();
            linalg::kron_all(&ms)
        })
        .collect())
}

/// M_ζ·U for every Kraus layer M_ζ and U among the exemplars U_1^±, U_2^± and
/// `n_random` sampled brickwork layers.
pub fn spanning_generators(num_sites: usize, eta: f64, n_random: usize, seed: u64) -> Result<Vec<CMatrix>> {
    let model = CircuitModel::temporally_random(num_sites, eta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unitaries: Vec<CMatrix> = [(1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)]
        .iter()
        .map(|&(nu, s)| exemplar_unitary(num_sites, nu, s))
        .collect();
    for k in 0..n_random as u64 {
        let theta = sample_theta(&model, k + 1, &mut rng);
        unitaries.push(dense_brickwork_layer(&build_two_site_gate(&theta)?, num_sites, k + 1));
    }
    let ms = kraus_layer_set(num_sites, eta)?;
    Ok(ms.iter().flat_map(|m| unitaries.iter().map(move |u| m * u)).collect())
}

/// Single-site identities behind the spanning argument: M₊+M₋ ∝ σ⁰,
/// M₊−M₋ ∝ σ³, U₂⁺σ³U₂⁻ ∝ σ¹, U₁⁺σ³U₁⁻ ∝ σ².
pub fn pauli_construction_check(eta: f64) -> Result<bool> {
    let kraus = build_kraus(eta)?;
    let (mp, mm) = (kraus.matrix(Outcome::Plus), kraus.matrix(Outcome::Minus));
    let tol = 1e-12;
    let prop = |a: &CMatrix, b: &CMatrix| linalg::proportionality(a, b, tol).is_some();
    let s3 = linalg::pauli(3);
    let conj = |nu: usize| exemplar_unitary(1, nu, 1.0) * &s3 * exemplar_unitary(1, nu, -1.0);
    Ok(prop(&(&mp + &mm), &linalg::pauli(0))
        && prop(&(&mp - &mm), &s3)
        && prop(&conj(2), &linalg::pauli(1))
        && prop(&conj(1), &linalg::pauli(2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Σ over all outcome pairs of conj(G) ⊗ G with G = M_ζ' U₂ M_ζ U₁.
    fn brute_force_period(u1: &CMatrix, u2: &CMatrix, l: usize, eta: f64) -> CMatrix {
        let ms = kraus_layer_set(l, eta).unwrap();
        let n = 1 << l;
        let mut acc = CMatrix::zeros(n * n, n * n);
        for a in &ms {
            for b in &ms {
                let g = b * u2 * a * u1;
                acc += g.map(|z| z.conj()).kronecker(&g);
            }
        }
        acc
    }

    #[test]
    fn single_measurement_layer_dephases_by_point_eight() {
        let m = measurement_superoperator(1, 0.3).unwrap();
        let rho = CMatrix::from_row_slice(2, 2, &[C64::new(0.6, 0.0), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::new(0.4, 0.0)]);
        let out = m.apply(&rho);
        assert!((out[(0, 0)] - rho[(0, 0)]).norm() < 1e-15);
        assert!((out[(1, 1)] - rho[(1, 1)]).norm() < 1e-15);
        assert!((out[(0, 1)] - rho[(0, 1)] * 0.8).norm() < 1e-15);
    }

    #[test]
    fn single_site_period_dephases_twice() {
        let model = CircuitModel::temporally_random(1, 0.3).unwrap();
        let g = build_superoperator(&model, 3, 1).unwrap();
        let expect = [1.0, 0.64, 0.64, 1.0];
        for (k, e) in expect.iter().enumerate() {
            assert!((g.matrix[(k, k)] - C64::new(*e, 0.0)).norm() < 1e-14);
        }
        let r = stationary_analysis(&g).unwrap();
        assert_eq!(r.eigenvalue_one_multiplicity, 2);
        assert!(!r.unique);
    }

    #[test]
    fn floquet_matches_outcome_enumeration() {
        let model = CircuitModel::floquet(2, 0.25).unwrap();
        let g = build_superoperator(&model, 0, 0).unwrap();
        let gate = build_two_site_gate(&model.fixed_theta).unwrap();
        let u1 = dense_brickwork_layer(&gate, 2, 1);
        let u2 = dense_brickwork_layer(&gate, 2, 2);
        let brute = brute_force_period(&u1, &u2, 2, 0.25);
        assert!(linalg::max_abs_diff(&g.matrix, &brute) < 1e-12);
        assert!(g.trace_preservation_residual() < 1e-10);
    }

    #[test]
    fn three_site_matches_enumeration() {
        let model = CircuitModel::floquet(3, 0.4).unwrap();
        let g = build_superoperator(&model, 0, 0).unwrap();
        let gate = build_two_site_gate(&model.fixed_theta).unwrap();
        let brute = brute_force_period(&dense_brickwork_layer(&gate, 3, 1), &dense_brickwork_layer(&gate, 3, 2), 3, 0.4);
        assert!(linalg::max_abs_diff(&g.matrix, &brute) < 1e-12);
    }

    #[test]
    fn eta_zero_fixes_identity() {
        let model = CircuitModel::temporally_random(2, 0.0).unwrap();
        let g = build_superoperator(&model, 4, 9).unwrap();
        let id = CMatrix::identity(4, 4);
        assert!(linalg::max_abs_diff(&g.apply(&id), &id) < 1e-12);
        assert!(g.spectral_radius() <= 1.0 + 1e-9);
    }

    #[test]
    fn random_and_floquet_two_sites_are_unique_and_pd() {
        for model in [
            CircuitModel::temporally_random(2, 0.3).unwrap(),
            CircuitModel::floquet(2, 0.3).unwrap(),
        ] {
            let g = build_superoperator(&model, 64, 5).unwrap();
            assert!(g.trace_preservation_residual() < 1e-10);
            let r = stationary_analysis(&g).unwrap();
            assert_eq!(r.eigenvalue_one_multiplicity, 1, "{}", g.description);
            assert!(r.positive_definite);
            assert!((r.fixed_state.trace() - ONE).norm() < 1e-8);
            assert!(linalg::max_abs_diff(&r.fixed_state, &r.fixed_state.adjoint()) < 1e-8);
        }
    }

    #[test]
    fn broken_channel_is_reported() {
        let g = SuperOperator {
            matrix: CMatrix::identity(4, 4) * C64::new(0.5, 0.0),
            num_sites: 1,
            description: "half".into(),
            theta_samples: 0,
        };
        assert!(matches!(stationary_analysis(&g), Err(Error::BrokenChannel { .. })));
    }

    #[test]
    fn size_guard() {
        let model = CircuitModel::floquet(5, 0.3).unwrap();
        assert!(matches!(build_superoperator(&model, 1, 0), Err(Error::Size(_))));
    }

    #[test]
    fn closure_examples() {
        let id = algebra_closure(&[CMatrix::identity(2, 2)], 10).unwrap();
        assert_eq!(id.basis_dim, 1);
        let diag = algebra_closure(&kraus_layer_set(1, 0.3).unwrap(), 10).unwrap();
        assert_eq!(diag.basis_dim, 2);
        let diag2 = algebra_closure(&kraus_layer_set(2, 0.3).unwrap(), 10).unwrap();
        assert!(diag2.basis_dim < 16);
        let full = algebra_closure(&spanning_generators(2, 0.3, 8, 1).unwrap(), 20).unwrap();
        assert_eq!(full.basis_dim, 16);
        assert!(full.converged);
        assert!(full.history.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pauli_identities() {
        assert!(pauli_construction_check(0.3).unwrap());
        assert!(pauli_construction_check(0.5).unwrap());
        assert!(pauli_construction_check(0.1).unwrap());
        assert!(!pauli_construction_check(0.0).unwrap());
    }
}
