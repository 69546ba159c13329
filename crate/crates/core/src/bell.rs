//! Bell's continuous-time jump process on a finite configuration space.
//!
//! The jump rate from `q'` to `q` is
//! `sigma(q|q') = [2 Im <Psi|P(q) H P(q')|Psi>]^+ / <Psi|P(q')|Psi>`,
//! evaluated along the exact Schrodinger evolution of `Psi`. Waiting times are
//! drawn by inverting the cumulative hazard against an `Exp(1)` variate, so the
//! sampler carries no time-discretization bias.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::hilbert::{
    born_weights, sample_index, Decomposition, HermitianOperator, ProbabilityVector, Propagator,
    SpectralState, StateVector, C64, WEIGHT_EPS,
};
use crate::ode::{self, OdeOptions};
use crate::quad::{adaptive_simpson, adaptive_simpson_leaves};
use crate::rng::{self, StreamRng};

/// Jump rates `sigma(q|q')`, stored at `(q, q')`. Diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    rates: DMatrix<f64>,
    zero_weight: Vec<usize>,
}

impl RateMatrix {
    pub fn rate(&self, to: usize, from: usize) -> f64 {
        self.rates[(to, from)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// `sigma(Q|q')`, the total rate out of `from`.
    pub fn total_out(&self, from: usize) -> f64 {
        self.rates.column(from).sum()
    }

    /// Configurations whose Born weight fell below the division threshold;
    /// their outgoing rates were set to zero.
    pub fn zero_weight_configs(&self) -> &[usize] {
        &self.zero_weight
    }

    pub fn n_configs(&self) -> usize {
        self.rates.nrows()
    }
}

/// Real antisymmetric net probability current `J(q, q')` (flow from `q'` to `q`).
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentMatrix {
    entries: DMatrix<f64>,
}

impl CurrentMatrix {
    /// Accepts any real square matrix; antisymmetry is checked separately by
    /// the admissibility report, since user-supplied currents may violate it.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        Ok(Self { entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
        }
    }

    pub fn get(&self, q: usize, q_from: usize) -> f64 {
        self.entries[(q, q_from)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n_configs(&self) -> usize {
        self.entries.nrows()
    }

    /// `max |J(q,q') + J(q',q)|`.
    pub fn max_asymmetry(&self) -> f64 {
        (&self.entries + self.entries.transpose()).amax()
    }
}

/// One jump event or the initial condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub config: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    records: Vec<JumpRecord>,
    start_time: f64,
    end_time: f64,
    zero_weight_events: usize,
}

impl Trajectory {
    pub fn records(&self) -> &[JumpRecord] {
        &self.records
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn n_jumps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn final_config(&self) -> usize {
        self.records
            .last()
            .expect("trajectory has an initial record")
            .config
    }

    /// Number of times the sampler found the occupied configuration at
    /// (numerically) zero Born weight.
    pub fn zero_weight_events(&self) -> usize {
        self.zero_weight_events
    }

    /// Configuration occupied at time `t` (right-continuous).
    pub fn config_at(&self, t: f64) -> usize {
        let idx = self.records.partition_point(|r| r.time <= t);
        self.records[idx.saturating_sub(1)].config
    }
}

/// Initial configuration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartConfig {
    Fixed(usize),
    /// Draw from the Born distribution of the initial state.
    Born,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingControls {
    /// Relative tolerance of the cumulative-hazard quadrature.
    pub hazard_rel_tol: f64,
    /// Waiting-time resolution, relative to the trajectory span.
    pub time_tol: f64,
    pub max_jumps: usize,
}

impl Default for SamplingControls {
    fn default() -> Self {
        Self {
            hazard_rel_tol: 1e-9,
            time_tol: 1e-10,
            max_jumps: 1_000_000,
        }
    }
}

const HAZARD_MAX_DEPTH: u32 = 30;
const INITIAL_PANELS: f64 = 8.0;

/// Bell's process for a fixed Hamiltonian and decomposition.
#[derive(Debug, Clone)]
pub struct BellProcess {
    h: HermitianOperator,
    dec: Decomposition,
    prop: Propagator,
}

impl BellProcess {
    pub fn new(h: HermitianOperator, dec: Decomposition) -> Result<Self> {
        dec.check_dim(h.dim())?;
        let prop = Propagator::new(&h);
        Ok(Self { h, dec, prop })
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.dec
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub fn n_configs(&self) -> usize {
        self.dec.n_configs()
    }

    /// `2 Im <Psi|P(q) H P(q_from)|Psi>` for every `q`, plus the weight of `q_from`.
    fn column_current(&self, amps: &DVector<C64>, q_from: usize) -> (Vec<f64>, f64) {
        let d = self.dec.dim();
        let h = self.h.matrix();
        let block = self.dec.block(q_from);
        let mut phi = DVector::<C64>::zeros(d);
        for &j in block {
            let a = amps[j];
            for i in 0..d {
                phi[i] += h[(i, j)] * a;
            }
        }
        let mut col = vec![0.0; self.dec.n_configs()];
        for (q, c) in col.iter_mut().enumerate() {
            if q != q_from {
                *c = 2.0 * self.dec.block_inner(q, amps, &phi).im;
            }
        }
        let weight = block.iter().map(|&j| amps[j].norm_sqr()).sum();
        (col, weight)
    }

    /// Outgoing rates `sigma(.|q_from)`; all zero when the weight of `q_from`
    /// is below the division threshold. The flag reports that case.
    pub fn outgoing_rates(&self, amps: &DVector<C64>, q_from: usize) -> (Vec<f64>, bool) {
        let (mut col, weight) = self.column_current(amps, q_from);
        if weight < WEIGHT_EPS {
            col.iter_mut().for_each(|c| *c = 0.0);
            return (col, true);
        }
        for c in col.iter_mut() {
            *c = c.max(0.0) / weight;
        }
        (col, false)
    }

    pub fn rates(&self, psi: &StateVector) -> Result<RateMatrix> {
        self.dec.check_dim(psi.dim())?;
        let n = self.n_configs();
        let mut rates = DMatrix::zeros(n, n);
        let mut zero_weight = Vec::new();
        for q_from in 0..n {
            let (col, flagged) = self.outgoing_rates(psi.amplitudes(), q_from);
            if flagged {
                zero_weight.push(q_from);
            }
            for (q, r) in col.into_iter().enumerate() {
                rates[(q, q_from)] = r;
            }
        }
        Ok(RateMatrix { rates, zero_weight })
    }

    pub fn current(&self, psi: &StateVector) -> Result<CurrentMatrix> {
        self.dec.check_dim(psi.dim())?;
        let n = self.n_configs();
        let mut entries = DMatrix::zeros(n, n);
        for q_from in 0..n {
            let (col, _) = self.column_current(psi.amplitudes(), q_from);
            for (q, j) in col.into_iter().enumerate() {
                entries[(q, q_from)] = j;
            }
        }
        Ok(CurrentMatrix { entries })
    }

    /// Samples a path on `[t_start, t_end]`, where `psi_start` is the state at
    /// `t_start`.
    pub fn sample_path(
        &self,
        psi_start: &StateVector,
        t_start: f64,
        t_end: f64,
        start: StartConfig,
        rng: &mut StreamRng,
        controls: &SamplingControls,
    ) -> Result<Trajectory> {
        self.dec.check_dim(psi_start.dim())?;
        if !(t_end > t_start) {
            return Err(Error::InvalidInput(format!(
                "end time {t_end} must exceed start time {t_start}"
            )));
        }
        let q0 = match start {
            StartConfig::Fixed(q) if q < self.n_configs() => q,
            StartConfig::Fixed(q) => {
                return Err(Error::InvalidInput(format!(
                    "configuration {q} out of range 0..{}",
                    self.n_configs()
                )))
            }
            StartConfig::Born => {
                sample_index(&born_weights(psi_start.amplitudes(), &self.dec), rng)
            }
        };
        let spectral = self.prop.spectral_state(psi_start);
        let mut hazard = Hazard::new(self, &spectral, t_start);
        let time_tol = controls.time_tol * (t_end - t_start);

        let mut records = vec![JumpRecord {
            time: t_start,
            config: q0,
        }];
        let mut zero_weight_events = 0;
        let mut q = q0;
        let mut t = t_start;
        loop {
            if records.len() > controls.max_jumps {
                return Err(Error::Numerical(format!(
                    "more than {} jumps before t = {t}",
                    controls.max_jumps
                )));
            }
            hazard.q = q;
            if hazard.weight(t) < WEIGHT_EPS {
                zero_weight_events += 1;
            }
            let target: f64 = rng.sample(Exp1);
            let Some(t_jump) = next_jump_time(&mut hazard, t, t_end, target, controls, time_tol)?
            else {
                break;
            };
            let (rates, flagged) =
                self.outgoing_rates(&spectral.amplitudes_at(t_jump - t_start), q);
            t = t_jump;
            if flagged || rates.iter().all(|&r| r == 0.0) {
                zero_weight_events += 1;
                continue;
            }
            q = sample_index(&rates, rng);
            records.push(JumpRecord { time: t, config: q });
        }
        Ok(Trajectory {
            records,
            start_time: t_start,
            end_time: t_end,
            zero_weight_events,
        })
    }

    /// Integrates the master equation for the configuration distribution
    /// along the exact evolution of `psi0`, reporting `rho` at each time of
    /// `t_grid` (which starts at or after 0).
    pub fn master_equation(
        &self,
        psi0: &StateVector,
        rho0: &ProbabilityVector,
        t_grid: &[f64],
        ode_tol: f64,
    ) -> Result<Vec<ProbabilityVector>> {
        self.dec.check_dim(psi0.dim())?;
        let n = self.n_configs();
        if rho0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rho0.len(),
            });
        }
        if t_grid.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::InvalidInput(
                "time grid must start at or after 0".into(),
            ));
        }
        let spectral = self.prop.spectral_state(psi0);
        let rhs = |t: f64, rho: &[f64], drho: &mut [f64]| {
            let amps = spectral.amplitudes_at(t);
            drho.iter_mut().for_each(|x| *x = 0.0);
            for q_from in 0..n {
                let (rates, _) = self.outgoing_rates(&amps, q_from);
                for (q, r) in rates.into_iter().enumerate() {
                    let flow = r * rho[q_from];
                    drho[q] += flow;
                    drho[q_from] -= flow;
                }
            }
        };
        let out = ode::integrate(
            rhs,
            0.0,
            rho0.weights(),
            t_grid,
            OdeOptions::with_tol(ode_tol),
        )?;
        Ok(out
            .into_iter()
            .map(ProbabilityVector::from_trusted)
            .collect())
    }
}

/// Total jump rate out of one configuration along a fixed evolution, with
/// scratch buffers so the quadrature loop does not allocate.
struct Hazard<'a> {
    process: &'a BellProcess,
    spectral: &'a SpectralState<'a>,
    t_start: f64,
    q: usize,
    rot: DVector<C64>,
    amps: DVector<C64>,
    phi: DVector<C64>,
}

impl<'a> Hazard<'a> {
    fn new(process: &'a BellProcess, spectral: &'a SpectralState<'a>, t_start: f64) -> Self {
        let d = process.dec.dim();
        Self {
            process,
            spectral,
            t_start,
            q: 0,
            rot: DVector::zeros(d),
            amps: DVector::zeros(d),
            phi: DVector::zeros(d),
        }
    }

    fn weight(&mut self, t: f64) -> f64 {
        self.spectral
            .amplitudes_into(t - self.t_start, &mut self.rot, &mut self.amps);
        self.process
            .dec
            .block(self.q)
            .iter()
            .map(|&j| self.amps[j].norm_sqr())
            .sum()
    }

    fn rate(&mut self, t: f64) -> f64 {
        let weight = self.weight(t);
        if weight < WEIGHT_EPS {
            return 0.0;
        }
        let dec = &self.process.dec;
        let h = self.process.h.matrix();
        self.phi.fill(C64::new(0.0, 0.0));
        for &j in dec.block(self.q) {
            let a = self.amps[j];
            for i in 0..self.phi.len() {
                self.phi[i] += h[(i, j)] * a;
            }
        }
        let mut total = 0.0;
        for other in 0..dec.n_configs() {
            if other != self.q {
                let inner: C64 = dec
                    .block(other)
                    .iter()
                    .map(|&i| self.amps[i].conj() * self.phi[i])
                    .sum();
                total += (2.0 * inner.im).max(0.0);
            }
        }
        total / weight
    }

    fn integral(&mut self, a: f64, b: f64, tol: f64) -> crate::quad::Integral {
        adaptive_simpson(|s| self.rate(s), a, b, tol, HAZARD_MAX_DEPTH)
    }
}

/// First time in `(from, until]` at which the cumulative hazard reaches
/// `target`, or `None` if it stays below.
fn next_jump_time(
    hazard: &mut Hazard<'_>,
    from: f64,
    until: f64,
    target: f64,
    controls: &SamplingControls,
    time_tol: f64,
) -> Result<Option<f64>> {
    let span = until - from;
    if span <= 0.0 {
        return Ok(None);
    }
    let budget = controls.hazard_rel_tol * (1.0 + target);
    let mut width = span / INITIAL_PANELS;
    let mut a = from;
    let mut acc = 0.0;
    let mut leaves = Vec::new();
    while a < until {
        let b = (a + width).min(until);
        let tol = budget * (b - a) / span;
        leaves.clear();
        let panel = adaptive_simpson_leaves(
            |s| hazard.rate(s),
            a,
            b,
            tol,
            HAZARD_MAX_DEPTH,
            target - acc,
            &mut leaves,
        );
        if !panel.value.is_finite() {
            return Err(Error::Numerical(format!("non-finite hazard on [{a}, {b}]")));
        }
        if !panel.converged && b - a > time_tol {
            // Rate spike, typically near a node of the occupied block.
            width = 0.5 * (b - a);
            continue;
        }
        if acc + panel.value >= target {
            for leaf in &leaves {
                if acc + leaf.value >= target {
                    let leaf_tol = tol * (leaf.b - leaf.a) / (b - a);
                    return Ok(Some(invert_hazard(
                        hazard,
                        leaf.a,
                        leaf.b,
                        target - acc,
                        leaf.value,
                        leaf_tol,
                        time_tol,
                    )));
                }
                acc += leaf.value;
            }
            // Rounding left the target a hair above the summed leaves.
            return Ok(Some(b));
        }
        acc += panel.value;
        a = b;
        width = (2.0 * width).min(span);
    }
    Ok(None)
}

/// Solves `int_a^t hazard = need` for `t` in one accepted quadrature leaf
/// `[a, b]` whose integral is `leaf >= need`. Bisection-safeguarded Newton
/// with the hazard itself as the derivative.
fn invert_hazard(
    hazard: &mut Hazard<'_>,
    a: f64,
    b: f64,
    need: f64,
    leaf: f64,
    tol: f64,
    time_tol: f64,
) -> f64 {
    let (mut lo, mut hi) = (a, b);
    let mut t = if leaf > 0.0 {
        a + (b - a) * (need / leaf).clamp(0.0, 1.0)
    } else {
        0.5 * (a + b)
    };
    for _ in 0..200 {
        if hi - lo <= time_tol {
            break;
        }
        let f = hazard.integral(a, t, tol * (t - a) / (b - a)).value - need;
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let rate = hazard.rate(t);
        let newton = t - f / rate;
        let next = if rate > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= time_tol {
            return next;
        }
        t = next;
    }
    0.5 * (lo + hi)
}

/// Bell jump rates at the state `psi`.
pub fn jump_rates(
    psi: &StateVector,
    h: &HermitianOperator,
    dec: &Decomposition,
) -> Result<RateMatrix> {
    BellProcess::new(h.clone(), dec.clone())?.rates(psi)
}

/// `J(q,q') = 2 Im <Psi|P(q) H P(q')|Psi>`.
pub fn continuous_current(
    psi: &StateVector,
    h: &HermitianOperator,
    dec: &Decomposition,
) -> Result<CurrentMatrix> {
    BellProcess::new(h.clone(), dec.clone())?.current(psi)
}

/// One trajectory on `[0, t_end]` from `psi0`.
pub fn sample_trajectory(
    h: &HermitianOperator,
    dec: &Decomposition,
    psi0: &StateVector,
    start: StartConfig,
    t_end: f64,
    seed: u64,
    controls: &SamplingControls,
) -> Result<Trajectory> {
    let process = BellProcess::new(h.clone(), dec.clone())?;
    process.sample_path(psi0, 0.0, t_end, start, &mut rng::from_seed(seed), controls)
}

pub fn master_equation_evolve(
    h: &HermitianOperator,
    dec: &Decomposition,
    psi0: &StateVector,
    rho0: &ProbabilityVector,
    t_grid: &[f64],
    ode_tol: f64,
) -> Result<Vec<ProbabilityVector>> {
    BellProcess::new(h.clone(), dec.clone())?.master_equation(psi0, rho0, t_grid, ode_tol)
}
