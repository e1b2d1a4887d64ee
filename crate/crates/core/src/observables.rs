//! Entanglement entropy, mutual information and spectral gaps.

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::lyapunov::LyapunovEstimate;
use crate::spinchain::StateVector;

/// Allowed deviation of tr ρ from 1 before entropies refuse the input.
pub const TRACE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDensityMatrix {
    pub matrix: CMatrix,
    /// Sorted site indices; the first one is the most significant bit.
    pub region: Vec<usize>,
}

impl ReducedDensityMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }
}

fn check_region(region: &[usize], num_sites: usize) -> Result<Vec<usize>> {
    let mut sorted = region.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != region.len() {
        return Err(Error::InvalidParameter("repeated site in region".into()));
    }
    if let Some(&x) = sorted.iter().find(|&&x| x == 0 || x > num_sites) {
        return Err(Error::SiteIndex {
            index: x,
            max: num_sites,
        });
    }
    Ok(sorted)
}

/// Partial trace of |ψ⟩⟨ψ| over the complement of `region`.
pub fn reduced_density_matrix(state: &StateVector, region: &[usize]) -> Result<ReducedDensityMatrix> {
    let l = state.num_sites();
    let region = check_region(region, l)?;
    let rest: Vec<usize> = (1..=l).filter(|x| !region.contains(x)).collect();
    let (da, db) = (1usize << region.len(), 1usize << rest.len());
    // Ψ[a, b] = ψ(a ⊕ b), so ρ_A = Ψ Ψ†.
    let mut psi = CMatrix::zeros(da, db);
    for (k, &amp) in state.amplitudes().iter().enumerate() {
        let pick = |sites: &[usize]| {
            sites
                .iter()
                .fold(0usize, |acc, &x| (acc << 1) | (k >> (l - x) & 1))
        };
        psi[(pick(&region), pick(&rest))] = amp;
    }
    let matrix = &psi * psi.adjoint();
    Ok(ReducedDensityMatrix { matrix, region })
}

/// −Σ λ ln λ in nats, eigenvalues clipped at zero.
pub fn von_neumann_entropy(rho: &ReducedDensityMatrix) -> Result<f64> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > TRACE_TOLERANCE {
        return Err(Error::Contract(format!("density matrix trace {tr} differs from 1")));
    }
    Ok(linalg::hermitian_eigenvalues(&rho.matrix)
        .into_iter()
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.ln())
        .sum())
}

pub fn entanglement_entropy(state: &StateVector, region: &[usize]) -> Result<f64> {
    von_neumann_entropy(&reduced_density_matrix(state, region)?)
}

/// Entropy of sites 1..L/2.
pub fn half_chain_entropy(state: &StateVector) -> Result<f64> {
    let l = state.num_sites();
    if !l.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("half-chain entropy needs even L, got {l}")));
    }
    let region: Vec<usize> = (1..=l / 2).collect();
    entanglement_entropy(state, &region)
}

/// S^A + S^B − S^{A∪B} for disjoint regions.
pub fn mutual_information(state: &StateVector, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.iter().any(|x| b.contains(x)) {
        return Err(Error::InvalidParameter("mutual information regions overlap".into()));
    }
    let union: Vec<usize> = a.iter().chain(b).copied().collect();
    Ok(entanglement_entropy(state, a)? + entanglement_entropy(state, b)? - entanglement_entropy(state, &union)?)
}

/// I^{1,L}: mutual information between the two end sites.
pub fn end_to_end_mutual_information(state: &StateVector) -> Result<f64> {
    let l = state.num_sites();
    if l < 2 {
        return Err(Error::InvalidParameter("end-to-end mutual information needs L >= 2".into()));
    }
    mutual_information(state, &[1], &[l])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundStateProbe {
    pub state: StateVector,
    /// Set when the leading exponent had not converged yet.
    pub stale: bool,
}

/// The first orthonormalized probe, which approximates the ground state of K.
pub fn ground_state_probe(probes: &[StateVector], leading_converged: bool) -> Result<GroundStateProbe> {
    let state = probes
        .first()
        .cloned()
        .ok_or_else(|| Error::Empty("probe ensemble".into()))?;
    Ok(GroundStateProbe {
        state,
        stale: !leading_converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapValue {
    pub delta: f64,
    pub eta: f64,
    pub num_sites: usize,
    pub converged: bool,
}

/// Δ = ε₂ − ε₁. Tiny negative values from noise are floored at zero.
pub fn spectral_gap(estimate: &LyapunovEstimate, eta: f64, num_sites: usize) -> Result<GapValue> {
    if estimate.exponents.len() < 2 {
        return Err(Error::InvalidParameter("gap needs at least two exponents".into()));
    }
    let delta = (estimate.exponents[1] - estimate.exponents[0]).max(0.0);
    Ok(GapValue {
        delta,
        eta,
        num_sites,
        converged: estimate.converged[0] && estimate.converged[1],
    })
}

/// Bell pair (|↑↑⟩+|↓↓⟩)/√2 on sites `x`, `y`, all other spins up.
pub fn bell_pair(num_sites: usize, x: usize, y: usize) -> Result<StateVector> {
    let mut amps = vec![C64::new(0.0, 0.0); 1usize << num_sites];
    if x == y || x == 0 || y == 0 || x > num_sites || y > num_sites {
        return Err(Error::InvalidParameter("bell pair needs two distinct valid sites".into()));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    amps[0] = C64::new(h, 0.0);
    amps[(1 << (num_sites - x)) | (1 << (num_sites - y))] = C64::new(h, 0.0);
    StateVector::from_amplitudes(num_sites, amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::trajectory_rng;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn random_state(l: usize, seed: u64) -> StateVector {
        let mut rng = trajectory_rng(seed, 0);
        let mut s = StateVector::random(l, &mut rng).unwrap();
        s.normalize();
        s
    }

    // Naive double loop over all index pairs.
    fn naive_partial_trace(state: &StateVector, region: &[usize]) -> CMatrix {
        let l = state.num_sites();
        let n = state.dim();
        let bit = |k: usize, x: usize| k >> (l - x) & 1;
        let sub = |k: usize| region.iter().fold(0, |acc, &x| acc * 2 + bit(k, x));
        let mut rho = CMatrix::zeros(1 << region.len(), 1 << region.len());
        let psi = state.amplitudes();
        for i in 0..n {
            for j in 0..n {
                let same_rest = (1..=l).filter(|x| !region.contains(x)).all(|x| bit(i, x) == bit(j, x));
                if same_rest {
                    rho[(sub(i), sub(j))] += psi[i] * psi[j].conj();
                }
            }
        }
        rho
    }

    #[test]
    fn product_state_gives_rank_one_projector() {
        let s = StateVector::product(&[false; 4]).unwrap();
        let rho = reduced_density_matrix(&s, &[2, 3]).unwrap();
        let mut expect = CMatrix::zeros(4, 4);
        expect[(0, 0)] = C64::new(1.0, 0.0);
        assert!(linalg::max_abs_diff(&rho.matrix, &expect) < 1e-15);
        assert!(von_neumann_entropy(&rho).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bell_pair_half_is_maximally_mixed() {
        let s = bell_pair(2, 1, 2).unwrap();
        let rho = reduced_density_matrix(&s, &[1]).unwrap();
        let expect = CMatrix::identity(2, 2) * C64::new(0.5, 0.0);
        assert!(linalg::max_abs_diff(&rho.matrix, &expect) < 1e-15);
        assert!((von_neumann_entropy(&rho).unwrap() - LN_2).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_matches_naive_loop() {
        let s = random_state(5, 3);
        for region in [vec![2, 4], vec![1], vec![1, 3, 5], vec![5, 2]] {
            let mut sorted = region.clone();
            sorted.sort();
            let rho = reduced_density_matrix(&s, &region).unwrap();
            assert!(linalg::max_abs_diff(&rho.matrix, &naive_partial_trace(&s, &sorted)) < 1e-12);
        }
    }

    #[test]
    fn empty_and_full_regions() {
        let s = random_state(3, 4);
        let empty = reduced_density_matrix(&s, &[]).unwrap();
        assert_eq!(empty.matrix.shape(), (1, 1));
        assert!((empty.trace() - 1.0).abs() < 1e-12);
        let full = reduced_density_matrix(&s, &[1, 2, 3]).unwrap();
        let v = s.to_cvector();
        assert!(linalg::max_abs_diff(&full.matrix, &(&v * v.adjoint())) < 1e-14);
        assert!(entanglement_entropy(&s, &[1, 2, 3]).unwrap().abs() < 1e-10);
    }

    #[test]
    fn known_spectrum_entropy() {
        let mut m = CMatrix::zeros(4, 4);
        for (i, p) in [0.5, 0.25, 0.25, 0.0].iter().enumerate() {
            m[(i, i)] = C64::new(*p, 0.0);
        }
        let rho = ReducedDensityMatrix {
            matrix: m,
            region: vec![1, 2],
        };
        let direct = -(0.5f64 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        assert!((von_neumann_entropy(&rho).unwrap() - direct).abs() < 1e-14);
        assert!((direct - 1.5 * LN_2).abs() < 1e-14);
    }

    #[test]
    fn trace_contract() {
        let rho = ReducedDensityMatrix {
            matrix: CMatrix::identity(2, 2),
            region: vec![1],
        };
        assert!(matches!(von_neumann_entropy(&rho), Err(Error::Contract(_))));
    }

    #[test]
    fn mutual_information_cases() {
        let p = StateVector::product(&[false, true, false, true]).unwrap();
        assert!(end_to_end_mutual_information(&p).unwrap().abs() < 1e-12);
        let b = bell_pair(4, 1, 4).unwrap();
        assert!((end_to_end_mutual_information(&b).unwrap() - 2.0 * LN_2).abs() < 1e-12);
        assert!(matches!(mutual_information(&b, &[1, 2], &[2]), Err(Error::InvalidParameter(_))));
        assert!(matches!(half_chain_entropy(&random_state(3, 1)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn mutual_information_matches_three_partial_traces() {
        let s = random_state(5, 8);
        let ent = |r: &[usize]| {
            let ev = linalg::hermitian_eigenvalues(&naive_partial_trace(&s, r));
            ev.into_iter().filter(|&l| l > 0.0).map(|l| -l * l.ln()).sum::<f64>()
        };
        let expect = ent(&[1]) + ent(&[5]) - ent(&[1, 5]);
        assert!((end_to_end_mutual_information(&s).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn ground_state_probe_is_first_probe() {
        let mut rng = trajectory_rng(1, 1);
        let probes = crate::lyapunov::init_probes(3, 3, &mut rng).unwrap();
        let g = ground_state_probe(&probes.vectors, false).unwrap();
        assert!(g.stale);
        assert_eq!(g.state, probes.vectors[0]);
        assert_eq!(ground_state_probe(&probes.vectors, true).unwrap().state, g.state);
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_purity(seed in 0u64..1000, l in 2usize..7, cut in 1usize..6) {
            let s = random_state(l, seed);
            let cut = cut.min(l - 1);
            let a: Vec<usize> = (1..=cut).collect();
            let b: Vec<usize> = (cut + 1..=l).collect();
            let sa = entanglement_entropy(&s, &a).unwrap();
            let sb = entanglement_entropy(&s, &b).unwrap();
            prop_assert!(sa >= -1e-12 && sa <= cut as f64 * LN_2 + 1e-12);
            prop_assert!((sa - sb).abs() < 1e-9);
        }

        #[test]
        fn mutual_information_symmetric_nonnegative(seed in 0u64..1000, l in 2usize..7) {
            let s = random_state(l, seed);
            let iab = mutual_information(&s, &[1], &[l]).unwrap();
            let iba = mutual_information(&s, &[l], &[1]).unwrap();
            prop_assert!(iab >= -1e-9);
            prop_assert!((iab - iba).abs() < 1e-12);
        }
    }
}
