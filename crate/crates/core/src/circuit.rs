//! Monitored brickwork circuits: unitary layers, weak measurements sampled by
//! the Born rule, and lockstep evolution of a physical state with probe
//! vectors.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ZERO};
use crate::lyapunov::{init_probes, ProbeEnsemble};
use crate::spinchain::{
    apply_diagonal_site, apply_two_site_entries, build_kraus, build_two_site_gate,
    site_up_weight, KrausPair, Outcome, StateVector, ThetaSet, TwoSiteUnitary,
};

/// Fixed θ^{μν} (in units of π) of the Floquet model, row μ, column ν.
const FLOQUET_THETA_OVER_PI: [[f64; 4]; 4] = [
    [0.0, 0.43, 0.62, 0.47],
    [1.21, 0.71, 0.35, 1.87],
    [0.83, 0.69, 1.43, 1.19],
    [1.53, 0.12, 0.75, 0.27],
];

pub fn floquet_theta() -> ThetaSet {
    let mut t = [[0.0; 4]; 4];
    for (mu, row) in FLOQUET_THETA_OVER_PI.iter().enumerate() {
        for (nu, v) in row.iter().enumerate() {
            t[mu][nu] = v * PI;
        }
    }
    ThetaSet::new(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Fresh uniform θ^{μν} ∈ [−π, π] at every step, shared by all bonds.
    TemporallyRandom,
    /// A fixed θ set at every step.
    Floquet,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TemporallyRandom => "random",
            ModelKind::Floquet => "floquet",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" | "temporally-random" | "temporally_random" => Ok(ModelKind::TemporallyRandom),
            "floquet" => Ok(ModelKind::Floquet),
            other => Err(Error::Parse(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitModel {
    pub kind: ModelKind,
    pub fixed_theta: ThetaSet,
    pub eta: f64,
    pub num_sites: usize,
}

impl CircuitModel {
    pub fn new(kind: ModelKind, num_sites: usize, eta: f64) -> Result<Self> {
        build_kraus(eta)?;
        if num_sites == 0 {
            return Err(Error::InvalidParameter("chain needs at least one site".into()));
        }
        Ok(Self {
            kind,
            fixed_theta: floquet_theta(),
            eta,
            num_sites,
        })
    }

    pub fn temporally_random(num_sites: usize, eta: f64) -> Result<Self> {
        Self::new(ModelKind::TemporallyRandom, num_sites, eta)
    }

    pub fn floquet(num_sites: usize, eta: f64) -> Result<Self> {
        Self::new(ModelKind::Floquet, num_sites, eta)
    }

    /// Floquet model with a custom fixed θ set.
    pub fn floquet_with(num_sites: usize, eta: f64, theta: ThetaSet) -> Result<Self> {
        let mut m = Self::floquet(num_sites, eta)?;
        m.fixed_theta = theta;
        Ok(m)
    }

    pub fn kraus(&self) -> KrausPair {
        build_kraus(self.eta).expect("eta validated at construction")
    }
}

/// θ used at step `t`. θ^{00} is drawn as well; it only sets a global phase.
pub fn sample_theta<R: Rng + ?Sized>(model: &CircuitModel, _t: u64, rng: &mut R) -> ThetaSet {
    match model.kind {
        ModelKind::Floquet => model.fixed_theta,
        ModelKind::TemporallyRandom => {
            let mut t = [[0.0; 4]; 4];
            for v in t.iter_mut().flatten() {
                *v = rng.random_range(-PI..=PI);
            }
            ThetaSet::new(t)
        }
    }
}

/// Left sites of the bonds acted on at step `t`: odd t → 1, 3, …; even t → 2, 4, ….
pub fn brickwork_bonds(num_sites: usize, t: u64) -> impl Iterator<Item = usize> {
    let first = if t % 2 == 1 { 1 } else { 2 };
    (first..num_sites).step_by(2)
}

/// One brickwork layer with the same gate on every active bond.
pub fn brickwork_layer(state: &mut StateVector, theta: &ThetaSet, t: u64) -> Result<()> {
    let gate = build_two_site_gate(theta)?;
    apply_brickwork(state, &gate_entries(&gate), t);
    Ok(())
}

/// Dense 2^L × 2^L matrix of one brickwork layer (reference path for small L).
pub fn dense_brickwork_layer(gate: &TwoSiteUnitary, num_sites: usize, t: u64) -> CMatrix {
    let bonds: Vec<usize> = brickwork_bonds(num_sites, t).collect();
    let (g, id) = (gate.matrix(), CMatrix::identity(2, 2));
    let mut factors = Vec::new();
    let mut x = 1;
    while x <= num_sites {
        if bonds.contains(&x) {
            factors.push(&g);
            x += 2;
        } else {
            factors.push(&id);
            x += 1;
        }
    }
    linalg::kron_all(factors)
}

pub(crate) fn gate_entries(gate: &TwoSiteUnitary) -> [[C64; 4]; 4] {
    let m = gate.matrix();
    let mut e = [[ZERO; 4]; 4];
    for (i, row) in e.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    e
}

pub(crate) fn apply_brickwork(state: &mut StateVector, u: &[[C64; 4]; 4], t: u64) {
    for x in brickwork_bonds(state.num_sites(), t) {
        apply_two_site_entries(state, u, x);
    }
}

const NORM_CONTRACT_TOL: f64 = 1e-6;

fn check_normalized(state: &StateVector) -> Result<()> {
    let n = state.norm();
    if (n - 1.0).abs() > NORM_CONTRACT_TOL {
        return Err(Error::Contract(format!(
            "Born sampling needs a normalized state (norm {n})"
        )));
    }
    Ok(())
}

/// Draws ζ_x site by site from the conditional Born probabilities, applying and
/// renormalizing each Kraus factor as it is drawn. Leaves the normalized
/// post-measurement state in `state`.
fn sample_and_collapse<R: Rng + ?Sized>(
    state: &mut StateVector,
    kraus: &KrausPair,
    rng: &mut R,
) -> Result<Vec<Outcome>> {
    let mut outcomes = Vec::with_capacity(state.num_sites());
    for x in 1..=state.num_sites() {
        let (up, down) = site_up_weight(state, x);
        let total = up + down;
        let [pu, pd] = kraus.m_plus;
        let p_plus = (pu * pu * up + pd * pd * down) / total;
        let outcome = if rng.random::<f64>() < p_plus {
            Outcome::Plus
        } else {
            Outcome::Minus
        };
        let [fu, fd] = kraus.factors(outcome);
        let p = if outcome == Outcome::Plus { p_plus } else { 1.0 - p_plus };
        let weight = (fu * fu * up + fd * fd * down) / total;
        if weight <= 0.0 || p <= 0.0 {
            return Err(Error::DegenerateOutcome { eta: kraus.eta });
        }
        let renorm = 1.0 / (weight * total).sqrt();
        apply_diagonal_site(state, x, fu * renorm, fd * renorm);
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Samples a full outcome pattern from the Born distribution of `state`.
pub fn sample_outcomes<R: Rng + ?Sized>(
    state: &StateVector,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<Outcome>> {
    check_normalized(state)?;
    let kraus = build_kraus(eta)?;
    let mut work = state.clone();
    sample_and_collapse(&mut work, &kraus, rng)
}

/// Applies M(ζ) = Π_x M(ζ_x) without renormalizing.
pub(crate) fn apply_kraus_layer(state: &mut StateVector, outcomes: &[Outcome], kraus: &KrausPair) {
    let l = state.num_sites();
    let factors: Vec<[f64; 2]> = outcomes.iter().map(|&o| kraus.factors(o)).collect();
    for (i, a) in state.amplitudes_mut().iter_mut().enumerate() {
        let mut f = 1.0;
        for (k, fx) in factors.iter().enumerate() {
            f *= fx[(i >> (l - 1 - k)) & 1];
        }
        *a *= f;
    }
}

/// Applies M(ζ), renormalizes in place and returns ln‖M(ζ)ψ‖.
pub fn apply_measurement_layer(
    state: &mut StateVector,
    outcomes: &[Outcome],
    eta: f64,
) -> Result<f64> {
    if outcomes.len() != state.num_sites() {
        return Err(Error::InvalidParameter(format!(
            "{} outcomes for {} sites",
            outcomes.len(),
            state.num_sites()
        )));
    }
    let kraus = build_kraus(eta)?;
    apply_kraus_layer(state, outcomes, &kraus);
    let n = state.normalize();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateOutcome { eta });
    }
    Ok(n.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord {
    pub step: u64,
    pub outcomes: Vec<Outcome>,
    pub theta_used: ThetaSet,
}

/// Per-trajectory RNG: the master seed picks the key, the trajectory index the
/// ChaCha stream.
pub fn trajectory_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Haar,
    /// All spins up.
    ProductUp,
}

/// Stored probes are rescaled by an exact power of two once the largest falls
/// below this.
const PROBE_RESCALE_BELOW: f64 = 1e-100;
/// Ratio of smallest to largest probe norm that signals loss of the smaller
/// probes to underflow.
pub const PROBE_UNDERFLOW_RATIO: f64 = 1e-250;

/// Physical reference state plus probe vectors advanced by identical operators.
#[derive(Debug, Clone)]
pub struct TrajectoryEngine {
    model: CircuitModel,
    kraus: KrausPair,
    physical: StateVector,
    probes: Vec<StateVector>,
    /// True probe vectors are `probes[i] * exp(probe_log_scale)`.
    probe_log_scale: f64,
    step: u64,
    rng_seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    log: Option<Vec<OutcomeRecord>>,
    underflow: bool,
}

impl TrajectoryEngine {
    /// Haar-random physical state followed by `q` Haar-random orthonormal
    /// probes, all drawn from the trajectory stream.
    pub fn new(model: CircuitModel, q: usize, seed: u64, stream: u64) -> Result<Self> {
        Self::with_initial(model, q, seed, stream, InitialState::Haar)
    }

    pub fn with_initial(
        model: CircuitModel,
        q: usize,
        seed: u64,
        stream: u64,
        initial: InitialState,
    ) -> Result<Self> {
        let mut rng = trajectory_rng(seed, stream);
        let l = model.num_sites;
        let physical = match initial {
            InitialState::Haar => StateVector::random(l, &mut rng)?,
            InitialState::ProductUp => StateVector::basis(l, 0)?,
        };
        let probes = if q == 0 {
            ProbeEnsemble { vectors: Vec::new() }
        } else {
            init_probes(q, l, &mut rng)?
        };
        Self::from_parts(model, physical, probes, seed, stream, rng)
    }

    pub fn from_parts(
        model: CircuitModel,
        physical: StateVector,
        probes: ProbeEnsemble,
        seed: u64,
        stream: u64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let l = model.num_sites;
        if physical.num_sites() != l || probes.vectors.iter().any(|p| p.num_sites() != l) {
            return Err(Error::InvalidParameter(
                "state sizes do not match the model".into(),
            ));
        }
        check_normalized(&physical)?;
        Ok(Self {
            kraus: model.kraus(),
            model,
            physical,
            probes: probes.vectors,
            probe_log_scale: 0.0,
            step: 0,
            rng_seed: seed,
            stream,
            rng,
            log: None,
            underflow: false,
        })
    }

    pub fn enable_log(&mut self) {
        if self.log.is_none() {
            self.log = Some(Vec::new());
        }
    }

    pub fn log(&self) -> Option<&[OutcomeRecord]> {
        self.log.as_deref()
    }

    pub fn take_log(&mut self) -> Option<Vec<OutcomeRecord>> {
        self.log.take()
    }

    pub fn model(&self) -> &CircuitModel {
        &self.model
    }

    pub fn physical(&self) -> &StateVector {
        &self.physical
    }

    /// Stored (possibly power-of-two rescaled) probe vectors.
    pub fn probes(&self) -> &[StateVector] {
        &self.probes
    }

    pub fn probes_mut(&mut self) -> &mut [StateVector] {
        &mut self.probes
    }

    /// ln of the common factor dividing the stored probes since the last reset.
    pub fn probe_log_scale(&self) -> f64 {
        self.probe_log_scale
    }

    pub(crate) fn reset_probe_log_scale(&mut self) -> f64 {
        std::mem::replace(&mut self.probe_log_scale, 0.0)
    }

    /// Whether some probe fell below the underflow ratio since the last reset.
    pub(crate) fn take_underflow(&mut self) -> bool {
        std::mem::replace(&mut self.underflow, false)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// One time step G(ω_t) = M(ζ_t) U(θ_t). Outcomes come from the physical
    /// state; probes get the same operators without renormalization.
    pub fn step(&mut self) -> Result<()> {
        let t = self.step + 1;
        let theta = sample_theta(&self.model, t, &mut self.rng);
        let gate = gate_entries(&build_two_site_gate(&theta)?);
        apply_brickwork(&mut self.physical, &gate, t);
        let outcomes = sample_and_collapse(&mut self.physical, &self.kraus, &mut self.rng)?;
        for p in self.probes.iter_mut() {
            apply_brickwork(p, &gate, t);
            apply_kraus_layer(p, &outcomes, &self.kraus);
        }
        self.rescale_probes();
        if let Some(log) = self.log.as_mut() {
            log.push(OutcomeRecord {
                step: t,
                outcomes,
                theta_used: theta,
            });
        }
        self.step = t;
        Ok(())
    }

    fn rescale_probes(&mut self) {
        if self.probes.is_empty() {
            return;
        }
        let norms: Vec<f64> = self.probes.iter().map(|p| p.norm()).collect();
        let max = norms.iter().copied().fold(0.0, f64::max);
        let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
        if max == 0.0 || min < PROBE_UNDERFLOW_RATIO * max {
            self.underflow = true;
        }
        if max > 0.0 && max < PROBE_RESCALE_BELOW {
            let k = -max.log2().floor() as i32;
            let factor = 2f64.powi(k);
            for p in self.probes.iter_mut() {
                p.scale(factor);
            }
            self.probe_log_scale -= k as f64 * std::f64::consts::LN_2;
        }
    }
}

/// Writes a trajectory log as CSV: `t, zeta_1..zeta_L (±1), theta_00..theta_33`,
/// floats with 17 significant digits.
pub fn write_log<W: Write>(records: &[OutcomeRecord], num_sites: usize, mut out: W) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=num_sites).map(|x| format!("zeta_{x}")));
    for mu in 0..4 {
        for nu in 0..4 {
            header.push(format!("theta_{mu}{nu}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![r.step.to_string()];
        row.extend(r.outcomes.iter().map(|o| o.sign().to_string()));
        row.extend(r.theta_used.to_flat().iter().map(|v| format!("{v:.16e}")));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_log<R: BufRead>(input: R) -> Result<(usize, Vec<OutcomeRecord>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty trajectory log".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    let cols = header.split(',').count();
    if cols < 18 {
        return Err(Error::Parse(format!("log header has {cols} columns")));
    }
    let num_sites = cols - 17;
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 2));
        if fields.len() != cols {
            return Err(bad("wrong column count"));
        }
        let step = fields[0].trim().parse().map_err(|_| bad("bad step"))?;
        let outcomes = fields[1..=num_sites]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<i64>()
                    .ok()
                    .and_then(Outcome::from_sign)
                    .ok_or_else(|| bad("bad outcome"))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut flat = [0.0; 16];
        for (k, f) in fields[num_sites + 1..].iter().enumerate() {
            flat[k] = f.trim().parse().map_err(|_| bad("bad theta"))?;
        }
        records.push(OutcomeRecord {
            step,
            outcomes,
            theta_used: ThetaSet::from_flat(&flat),
        });
    }
    Ok((num_sites, records))
}
