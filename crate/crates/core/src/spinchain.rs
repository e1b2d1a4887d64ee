//! State vectors of an open spin-1/2 chain and the local operators acting on
//! them.
//!
//! Sites are numbered `1..=L`. Site 1 is the most significant bit of an
//! amplitude index, so dense operators are ordered `σ_1 ⊗ σ_2 ⊗ … ⊗ σ_L` and a
//! two-site gate on `(x, x+1)` acts on the local basis `|s_x s_{x+1}⟩`. Bit value
//! 0 is spin up (σ³ = +1).

use std::fmt;

use nalgebra::Matrix4;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ONE, ZERO};

/// Largest chain handled by the state-vector engine.
pub const MAX_SITES: usize = 24;

#[derive(Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    num_sites: usize,
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateVector")
            .field("num_sites", &self.num_sites)
            .field("norm", &self.norm())
            .finish()
    }
}

impl StateVector {
    pub fn from_amplitudes(num_sites: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_num_sites(num_sites)?;
        if amplitudes.len() != 1 << num_sites {
            return Err(Error::InvalidParameter(format!(
                "{} amplitudes for {} sites (expected {})",
                amplitudes.len(),
                num_sites,
                1usize << num_sites
            )));
        }
        Ok(Self { amplitudes, num_sites })
    }

    pub fn zeros(num_sites: usize) -> Result<Self> {
        check_num_sites(num_sites)?;
        Ok(Self {
            amplitudes: vec![ZERO; 1 << num_sites],
            num_sites,
        })
    }

    /// Computational basis state with the given amplitude index.
    pub fn basis(num_sites: usize, index: usize) -> Result<Self> {
        let mut s = Self::zeros(num_sites)?;
        if index >= s.dim() {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} >= {}",
                s.dim()
            )));
        }
        s.amplitudes[index] = ONE;
        Ok(s)
    }

    /// Product state from per-site spins, `true` = down.
    pub fn product(spins_down: &[bool]) -> Result<Self> {
        let index = spins_down
            .iter()
            .fold(0usize, |acc, &down| (acc << 1) | down as usize);
        Self::basis(spins_down.len(), index)
    }

    /// Normalized complex Gaussian vector (Haar-distributed direction).
    pub fn random<R: Rng + ?Sized>(num_sites: usize, rng: &mut R) -> Result<Self> {
        let mut s = Self::zeros(num_sites)?;
        for a in s.amplitudes.iter_mut() {
            *a = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        s.normalize();
        Ok(s)
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Scales to unit norm and returns the previous norm. A zero vector is left
    /// untouched.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n);
        }
        n
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.amplitudes.iter_mut() {
            *a *= factor;
        }
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> C64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `self -= c·other`.
    pub fn sub_scaled(&mut self, c: C64, other: &StateVector) {
        for (a, b) in self.amplitudes.iter_mut().zip(&other.amplitudes) {
            *a -= c * b;
        }
    }

    pub fn to_cvector(&self) -> linalg::CVector {
        linalg::CVector::from_column_slice(&self.amplitudes)
    }

    /// Bit mask of site `x` in an amplitude index.
    #[inline]
    pub(crate) fn site_mask(&self, x: usize) -> usize {
        1 << (self.num_sites - x)
    }

    fn check_site(&self, x: usize, max: usize) -> Result<()> {
        if x == 0 || x > max {
            Err(Error::SiteIndex { index: x, max })
        } else {
            Ok(())
        }
    }
}

fn check_num_sites(num_sites: usize) -> Result<()> {
    if num_sites == 0 || num_sites > MAX_SITES {
        Err(Error::InvalidParameter(format!(
            "number of sites {num_sites} outside 1..={MAX_SITES}"
        )))
    } else {
        Ok(())
    }
}

/// Coefficients θ^{μν} of the two-site Hamiltonian Σ θ^{μν} σ^μ ⊗ σ^ν.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSet {
    pub theta: [[f64; 4]; 4],
}

impl ThetaSet {
    pub const ZERO: ThetaSet = ThetaSet { theta: [[0.0; 4]; 4] };

    pub fn new(theta: [[f64; 4]; 4]) -> Self {
        Self { theta }
    }

    /// Row-major (μ, ν) flattening, the order used in trajectory logs.
    pub fn to_flat(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for (k, v) in self.theta.iter().flatten().enumerate() {
            out[k] = *v;
        }
        out
    }

    pub fn from_flat(flat: &[f64; 16]) -> Self {
        let mut theta = [[0.0; 4]; 4];
        for (k, v) in flat.iter().enumerate() {
            theta[k / 4][k % 4] = *v;
        }
        Self { theta }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().flatten().all(|v| v.is_finite())
    }

    /// Dense Hermitian H = Σ θ^{μν} σ^μ ⊗ σ^ν.
    pub fn hamiltonian(&self) -> CMatrix {
        let mut h = CMatrix::zeros(4, 4);
        for mu in 0..4 {
            for nu in 0..4 {
                let t = self.theta[mu][nu];
                if t != 0.0 {
                    h += linalg::pauli(mu).kronecker(&linalg::pauli(nu)) * C64::new(t, 0.0);
                }
            }
        }
        h
    }
}

/// Unitary acting on a neighbouring pair of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteUnitary {
    matrix: Matrix4<C64>,
}

impl TwoSiteUnitary {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    /// Wraps a matrix after checking unitarity to `tol`.
    pub fn from_matrix(matrix: &CMatrix, tol: f64) -> Result<Self> {
        if matrix.shape() != (4, 4) {
            return Err(Error::InvalidParameter("two-site gate must be 4x4".into()));
        }
        let r = linalg::unitarity_residual(matrix);
        if r > tol {
            return Err(Error::InvalidParameter(format!(
                "gate is not unitary (residual {r:e})"
            )));
        }
        Ok(Self {
            matrix: Matrix4::from_fn(|i, j| matrix[(i, j)]),
        })
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_fn(4, 4, |i, j| self.matrix[(i, j)])
    }

    fn entries(&self) -> [[C64; 4]; 4] {
        let mut m = [[ZERO; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.matrix[(i, j)];
            }
        }
        m
    }
}

/// exp(−iH) with H = Σ θ^{μν} σ^μ ⊗ σ^ν, through the eigendecomposition of H.
pub fn build_two_site_gate(theta: &ThetaSet) -> Result<TwoSiteUnitary> {
    if !theta.is_finite() {
        return Err(Error::InvalidParameter("non-finite theta entry".into()));
    }
    let h = theta.hamiltonian();
    let h4 = Matrix4::from_fn(|i, j| h[(i, j)]);
    let eig = h4.symmetric_eigen();
    let phases = eig.eigenvalues.map(|l| C64::from_polar(1.0, -l));
    let v = eig.eigenvectors;
    let matrix = v * Matrix4::from_diagonal(&phases) * v.adjoint();
    Ok(TwoSiteUnitary { matrix })
}

/// Two-outcome weak σ³ measurement of strength η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausPair {
    /// Diagonal of M₊ (up, down).
    pub m_plus: [f64; 2],
    /// Diagonal of M₋ (up, down).
    pub m_minus: [f64; 2],
    pub eta: f64,
}

pub fn build_kraus(eta: f64) -> Result<KrausPair> {
    if !(0.0..=0.5).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "measurement strength {eta} outside [0, 1/2]"
        )));
    }
    let a = (0.5 + eta).sqrt();
    let b = (0.5 - eta).sqrt();
    Ok(KrausPair {
        m_plus: [a, b],
        m_minus: [b, a],
        eta,
    })
}

impl KrausPair {
    pub fn factors(&self, outcome: Outcome) -> [f64; 2] {
        match outcome {
            Outcome::Plus => self.m_plus,
            Outcome::Minus => self.m_minus,
        }
    }

    pub fn matrix(&self, outcome: Outcome) -> CMatrix {
        let d = self.factors(outcome);
        CMatrix::from_row_slice(2, 2, &[d[0].into(), ZERO, ZERO, d[1].into()])
    }

    /// ‖M₊†M₊ + M₋†M₋ − I‖_max.
    pub fn completeness_residual(&self) -> f64 {
        let s = self.matrix(Outcome::Plus).adjoint() * self.matrix(Outcome::Plus)
            + self.matrix(Outcome::Minus).adjoint() * self.matrix(Outcome::Minus);
        linalg::max_abs_diff(&s, &CMatrix::identity(2, 2))
    }
}

/// Single-site measurement outcome ζ = ±.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn sign(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_sign(s: i64) -> Option<Self> {
        match s {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            _ => None,
        }
    }
}

/// Applies a gate to sites `(x, x+1)` in place.
pub fn apply_two_site(state: &mut StateVector, gate: &TwoSiteUnitary, x: usize) -> Result<()> {
    if state.num_sites < 2 {
        return Err(Error::SiteIndex { index: x, max: 0 });
    }
    state.check_site(x, state.num_sites - 1)?;
    apply_two_site_entries(state, &gate.entries(), x);
    Ok(())
}

pub(crate) fn apply_two_site_entries(state: &mut StateVector, u: &[[C64; 4]; 4], x: usize) {
    let lo = state.site_mask(x + 1);
    let hi = lo << 1;
    let n = state.dim();
    let amps = &mut state.amplitudes;
    for block in (0..n).step_by(hi << 1) {
        for base in block..block + lo {
            let idx = [base, base | lo, base | hi, base | hi | lo];
            let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
            for (r, &i) in idx.iter().enumerate() {
                let row = &u[r];
                amps[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
            }
        }
    }
}

/// Applies an arbitrary 2×2 operator to site `x` in place.
pub fn apply_single_site(state: &mut StateVector, op: &CMatrix, x: usize) -> Result<()> {
    if op.shape() != (2, 2) {
        return Err(Error::InvalidParameter("single-site operator must be 2x2".into()));
    }
    state.check_site(x, state.num_sites)?;
    let m = state.site_mask(x);
    let n = state.dim();
    let (a, b, c, d) = (op[(0, 0)], op[(0, 1)], op[(1, 0)], op[(1, 1)]);
    let amps = &mut state.amplitudes;
    for block in (0..n).step_by(m << 1) {
        for i0 in block..block + m {
            let i1 = i0 | m;
            let (u, v) = (amps[i0], amps[i1]);
            amps[i0] = a * u + b * v;
            amps[i1] = c * u + d * v;
        }
    }
    Ok(())
}

/// Multiplies site `x` by diag(up, down).
pub(crate) fn apply_diagonal_site(state: &mut StateVector, x: usize, up: f64, down: f64) {
    let m = state.site_mask(x);
    for (i, a) in state.amplitudes.iter_mut().enumerate() {
        *a *= if i & m == 0 { up } else { down };
    }
}

/// Probability weight of spin up at site `x` (unnormalized: sum of |a|² over
/// indices with that bit clear).
pub(crate) fn site_up_weight(state: &StateVector, x: usize) -> (f64, f64) {
    let m = state.site_mask(x);
    let mut up = 0.0;
    let mut down = 0.0;
    for (i, a) in state.amplitudes.iter().enumerate() {
        if i & m == 0 {
            up += a.norm_sqr();
        } else {
            down += a.norm_sqr();
        }
    }
    (up, down)
}

/// Labels μ_x ∈ {0,1,2,3} of the Pauli string Π_x σ_x^{μ_x}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliString {
    labels: Vec<u8>,
}

impl PauliString {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if labels.is_empty() || labels.iter().any(|&l| l > 3) {
            return Err(Error::InvalidParameter(format!(
                "invalid Pauli labels {labels:?}"
            )));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Largest chain for which dense 2^L × 2^L operators are built.
pub const MAX_DENSE_SITES: usize = 10;

pub fn pauli_dense(p: &PauliString) -> Result<CMatrix> {
    if p.labels.len() > MAX_DENSE_SITES {
        return Err(Error::Size(format!(
            "dense Pauli string on {} sites",
            p.labels.len()
        )));
    }
    let factors: Vec<CMatrix> = p.labels.iter().map(|&l| linalg::pauli(l as usize)).collect();
    Ok(linalg::kron_all(&factors))
}
