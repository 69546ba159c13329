//! Discrete-time processes on a time lattice `tau Z`.
//!
//! * The restriction of Bell's process to lattice times, sampled by running
//!   the continuous sampler across each step, together with a truncated-series
//!   evaluation of its one-step transition probability.
//! * The minimal two-state process, whose transition probabilities are the
//!   smallest ones compatible with the net flow between the two configurations.
//! * The iid process, Born-distributed at every step and independent of the past.

use nalgebra::{DMatrix, DVector};

use crate::bell::{BellProcess, SamplingControls, StartConfig};
use crate::error::{Error, Result};
use crate::hilbert::{
    born_weights, evolve_discrete, sample_index, Decomposition, HermitianOperator,
    ProbabilityVector, SpectralState, StateVector, UnitaryOperator, C64, WEIGHT_EPS,
};
use crate::ode::{self, OdeOptions};
use crate::rng::{self, StreamRng};

/// Column sums of a transition matrix must equal 1 within this.
pub const COLUMN_SUM_TOL: f64 = 1e-10;

/// One-step transition probabilities; entry `(q, q')` is `P(q' -> q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    probs: DMatrix<f64>,
    flagged: Vec<usize>,
}

impl TransitionMatrix {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        let m = Self {
            probs,
            flagged: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            probs: DMatrix::identity(n, n),
            flagged: Vec::new(),
        }
    }

    pub(crate) fn from_parts(probs: DMatrix<f64>, flagged: Vec<usize>) -> Self {
        Self { probs, flagged }
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.nrows() != self.probs.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.probs.nrows(),
                found: self.probs.ncols(),
            });
        }
        for (j, col) in self.probs.column_iter().enumerate() {
            if let Some(p) = col.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
                return Err(Error::InvalidInput(format!(
                    "transition probability {p} out of [0, 1] in column {j}"
                )));
            }
            let s = col.sum();
            if (s - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidInput(format!("column {j} sums to {s}")));
            }
        }
        Ok(())
    }

    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.probs[(to, from)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn n_configs(&self) -> usize {
        self.probs.nrows()
    }

    /// Configurations whose weight was too small to divide by; their jump
    /// probabilities were set to zero.
    pub fn flagged(&self) -> &[usize] {
        &self.flagged
    }

    /// Pushes a distribution one step forward.
    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        (0..self.n_configs())
            .map(|q| (0..rho.len()).map(|r| self.probs[(q, r)] * rho[r]).sum())
            .collect()
    }

    pub fn step(&self, from: usize, rng: &mut StreamRng) -> usize {
        let col: Vec<f64> = self.probs.column(from).iter().copied().collect();
        sample_index(&col, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    configs: Vec<usize>,
    tau: f64,
}

impl DiscreteTrajectory {
    pub fn new(configs: Vec<usize>, tau: f64) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::InvalidInput(
                "discrete trajectory needs at least one configuration".into(),
            ));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!(
                "time step must be positive, got {tau}"
            )));
        }
        Ok(Self { configs, tau })
    }

    pub fn configs(&self) -> &[usize] {
        &self.configs
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!(
            "time step must be positive, got {tau}"
        )));
    }
    Ok(())
}

/// Endpoint of Bell's process run over `[t, t + tau]` from `q_from`, where
/// `psi_t` is the state at the start of the step.
pub fn restricted_step(
    process: &BellProcess,
    psi_t: &StateVector,
    q_from: usize,
    tau: f64,
    rng: &mut StreamRng,
    controls: &SamplingControls,
) -> Result<usize> {
    check_tau(tau)?;
    Ok(process
        .sample_path(psi_t, 0.0, tau, StartConfig::Fixed(q_from), rng, controls)?
        .final_config())
}

/// Seeded convenience form of [`restricted_step`].
pub fn restricted_step_seeded(
    h: &HermitianOperator,
    dec: &Decomposition,
    psi_t: &StateVector,
    q_from: usize,
    tau: f64,
    seed: u64,
    controls: &SamplingControls,
) -> Result<usize> {
    let process = BellProcess::new(h.clone(), dec.clone())?;
    restricted_step(
        &process,
        psi_t,
        q_from,
        tau,
        &mut rng::from_seed(seed),
        controls,
    )
}

/// Truncated jump-count expansion of the restricted transition probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    /// Partial sum over jump counts `0..=n_max`.
    pub probability: f64,
    /// Contribution of each jump count.
    pub terms: Vec<f64>,
    /// `(sup rate * tau)^(n_max+1) / (n_max+1)!`, bounding the omitted terms.
    pub remainder_bound: f64,
    /// Largest total rate seen on the sampling grid.
    pub sup_total_rate: f64,
}

impl SeriesResult {
    pub fn meets_accuracy(&self, accuracy: f64) -> bool {
        self.remainder_bound <= accuracy
    }
}

/// Sampling grid used to bound the total rate over a step.
const RATE_GRID: usize = 256;

/// Transition probabilities of the restricted process from `q_from` to
/// every configuration, summed over at most `n_max` jumps.
///
/// The k-jump term is the time-ordered k-fold integral of the jump-rate
/// product times the survival factors between jumps. Writing `p_m(s)` for
/// the probability of being at each configuration at time `s` after exactly
/// `m` jumps, the nested integrals are the solution of
/// `p_0' = -Sigma p_0`, `p_m' = -Sigma p_m + R p_{m-1}`,
/// with `R` the rate matrix and `Sigma` the total outgoing rates. The system
/// is integrated by adaptive Dormand-Prince with tolerance `quad_tol`.
pub fn restricted_transition_column(
    process: &BellProcess,
    psi_t: &StateVector,
    q_from: usize,
    tau: f64,
    n_max: usize,
    quad_tol: f64,
) -> Result<Vec<SeriesResult>> {
    check_tau(tau)?;
    process.decomposition().check_dim(psi_t.dim())?;
    let n = process.n_configs();
    if q_from >= n {
        return Err(Error::InvalidInput(format!(
            "configuration {q_from} out of range 0..{n}"
        )));
    }
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "quadrature tolerance must be positive, got {quad_tol}"
        )));
    }
    let spectral = process.propagator().spectral_state(psi_t);
    let mut rates = StepRates::new(process, &spectral);

    let sup = (0..=RATE_GRID)
        .map(|k| {
            rates.at(tau * k as f64 / RATE_GRID as f64);
            rates.totals.iter().copied().fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    if !sup.is_finite() {
        return Err(Error::InvalidInput(
            "total jump rate is unbounded on the step".into(),
        ));
    }

    let mut y0 = vec![0.0; n * (n_max + 1)];
    y0[q_from] = 1.0;
    let rhs = |s: f64, y: &[f64], dy: &mut [f64]| {
        rates.at(s);
        for m in 0..=n_max {
            for q in 0..n {
                let mut v = -rates.totals[q] * y[m * n + q];
                if m > 0 {
                    v += (0..n)
                        .map(|r| rates.matrix[(q, r)] * y[(m - 1) * n + r])
                        .sum::<f64>();
                }
                dy[m * n + q] = v;
            }
        }
    };
    let y = ode::integrate(rhs, 0.0, &y0, &[tau], OdeOptions::with_tol(quad_tol))?.swap_remove(0);

    let k = (n_max + 1) as f64;
    let log_bound = k * (sup * tau).ln() - ln_factorial(n_max + 1);
    let remainder_bound = if sup == 0.0 { 0.0 } else { log_bound.exp() };
    Ok((0..n)
        .map(|q| {
            let per_n: Vec<f64> = (0..=n_max).map(|m| y[m * n + q].max(0.0)).collect();
            SeriesResult {
                probability: per_n.iter().sum(),
                terms: per_n,
                remainder_bound,
                sup_total_rate: sup,
            }
        })
        .collect())
}

/// Single-destination form of [`restricted_transition_column`].
#[allow(clippy::too_many_arguments)]
pub fn restricted_transition_series(
    h: &HermitianOperator,
    dec: &Decomposition,
    psi_t: &StateVector,
    q_from: usize,
    q_to: usize,
    tau: f64,
    n_max: usize,
    quad_tol: f64,
) -> Result<SeriesResult> {
    let process = BellProcess::new(h.clone(), dec.clone())?;
    if q_to >= process.n_configs() {
        return Err(Error::InvalidInput(format!(
            "configuration {q_to} out of range"
        )));
    }
    let mut col = restricted_transition_column(&process, psi_t, q_from, tau, n_max, quad_tol)?;
    Ok(col.swap_remove(q_to))
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Rate matrix `sigma(q|r)` at `(q, r)` and its column sums along one step.
struct StepRates<'a> {
    process: &'a BellProcess,
    spectral: &'a SpectralState<'a>,
    rot: DVector<C64>,
    amps: DVector<C64>,
    matrix: DMatrix<f64>,
    totals: Vec<f64>,
}

impl<'a> StepRates<'a> {
    fn new(process: &'a BellProcess, spectral: &'a SpectralState<'a>) -> Self {
        let (d, n) = (process.decomposition().dim(), process.n_configs());
        Self {
            process,
            spectral,
            rot: DVector::zeros(d),
            amps: DVector::zeros(d),
            matrix: DMatrix::zeros(n, n),
            totals: vec![0.0; n],
        }
    }

    fn at(&mut self, s: f64) {
        self.spectral
            .amplitudes_into(s, &mut self.rot, &mut self.amps);
        for r in 0..self.totals.len() {
            let (col, _) = self.process.outgoing_rates(&self.amps, r);
            self.totals[r] = col.iter().sum();
            self.matrix.set_column(r, &DVector::from_vec(col));
        }
    }
}

/// Minimal two-state transition matrix for one step `Psi -> U Psi`.
///
/// `P(jump from q) = [<Psi|(P(q) - U^* P(q) U)|Psi>]^+ / <Psi|P(q)|Psi>`.
pub fn two_state_transition(
    psi_t: &StateVector,
    u: &UnitaryOperator,
    dec: &Decomposition,
) -> Result<TransitionMatrix> {
    if dec.n_configs() != 2 {
        return Err(Error::InvalidInput(format!(
            "two-state process needs exactly 2 configurations, got {}",
            dec.n_configs()
        )));
    }
    dec.check_dim(psi_t.dim())?;
    let next = evolve_discrete(u, psi_t)?;
    let before = born_weights(psi_t.amplitudes(), dec);
    let after = born_weights(next.amplitudes(), dec);
    Ok(minimal_pair_transition(&before, &after))
}

/// Minimal transitions between two configurations with weights moving from
/// `before` to `after`.
pub(crate) fn minimal_pair_transition(before: &[f64], after: &[f64]) -> TransitionMatrix {
    let mut probs = DMatrix::identity(2, 2);
    let mut flagged = Vec::new();
    for q in 0..2 {
        let other = 1 - q;
        let p = if before[q] < WEIGHT_EPS {
            flagged.push(q);
            0.0
        } else {
            ((before[q] - after[q]).max(0.0) / before[q]).min(1.0)
        };
        probs[(other, q)] = p;
        probs[(q, q)] = 1.0 - p;
    }
    TransitionMatrix::from_parts(probs, flagged)
}

/// One step of the iid process: a fresh Born draw from the advanced state.
pub fn iid_step(psi_next: &StateVector, dec: &Decomposition, rng: &mut StreamRng) -> Result<usize> {
    dec.check_dim(psi_next.dim())?;
    Ok(sample_index(&born_weights(psi_next.amplitudes(), dec), rng))
}

/// Which discrete-time process to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteKind {
    Restricted,
    TwoState,
    Iid,
}

/// Deterministic data shared by every run of a discrete chain: the states
/// `Psi_k = U^k Psi_0` and, for the two-state process, the per-step matrices.
#[derive(Debug, Clone)]
pub struct DiscreteChain {
    kind: DiscreteKind,
    dec: Decomposition,
    tau: f64,
    states: Vec<StateVector>,
    transitions: Vec<TransitionMatrix>,
    bell: Option<BellProcess>,
}

impl DiscreteChain {
    /// `h` drives the restricted process; it defaults to the principal
    /// logarithm of `u` when absent.
    pub fn new(
        kind: DiscreteKind,
        u: &UnitaryOperator,
        h: Option<HermitianOperator>,
        dec: Decomposition,
        psi0: &StateVector,
        tau: f64,
        steps: usize,
    ) -> Result<Self> {
        check_tau(tau)?;
        dec.check_dim(psi0.dim())?;
        if u.dim() != psi0.dim() {
            return Err(Error::DimensionMismatch {
                expected: psi0.dim(),
                found: u.dim(),
            });
        }
        let mut states = vec![psi0.clone()];
        for k in 0..steps {
            states.push(evolve_discrete(u, &states[k])?);
        }
        let mut transitions = Vec::new();
        if kind == DiscreteKind::TwoState {
            for psi in &states[..steps] {
                transitions.push(two_state_transition(psi, u, &dec)?);
            }
        }
        let bell = if kind == DiscreteKind::Restricted {
            let h = match h {
                Some(h) => h,
                None => crate::hilbert::principal_log_hamiltonian(u, tau)?,
            };
            Some(BellProcess::new(h, dec.clone())?)
        } else {
            None
        };
        Ok(Self {
            kind,
            dec,
            tau,
            states,
            transitions,
            bell,
        })
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn born(&self, k: usize) -> ProbabilityVector {
        ProbabilityVector::from_trusted(born_weights(self.states[k].amplitudes(), &self.dec))
    }

    pub fn run(
        &self,
        start: StartConfig,
        rng: &mut StreamRng,
        controls: &SamplingControls,
    ) -> Result<DiscreteTrajectory> {
        let n = self.dec.n_configs();
        let mut q = match start {
            StartConfig::Fixed(q) if q < n => q,
            StartConfig::Fixed(q) => {
                return Err(Error::InvalidInput(format!(
                    "configuration {q} out of range 0..{n}"
                )))
            }
            StartConfig::Born => sample_index(self.born(0).weights(), rng),
        };
        let mut configs = Vec::with_capacity(self.states.len());
        configs.push(q);
        for k in 0..self.steps() {
            q = match self.kind {
                DiscreteKind::Restricted => {
                    let bell = self
                        .bell
                        .as_ref()
                        .expect("restricted chain carries a Bell process");
                    restricted_step(bell, &self.states[k], q, self.tau, rng, controls)?
                }
                DiscreteKind::TwoState => self.transitions[k].step(q, rng),
                DiscreteKind::Iid => iid_step(&self.states[k + 1], &self.dec, rng)?,
            };
            configs.push(q);
        }
        DiscreteTrajectory::new(configs, self.tau)
    }
}
