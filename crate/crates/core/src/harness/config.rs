//! TOML experiment configuration and its resolution into concrete systems.
//!
//! ```toml
//! kind = "bell"
//! seed = 7
//! n_runs = 100000
//!
//! [system]
//! preset = "rabi"
//!
//! [run]
//! t_end = 2.0
//! ```
//!
//! Complex matrices are given as `{ re = [[...]], im = [[...]] }` with rows
//! listed top to bottom; `im` may be omitted for real matrices.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::circuits::Circuit;
use crate::current_lab::{UnitarySource, CONDITION_TOL};
use crate::error::{Error, Result};
use crate::hilbert::{
    haar_unitary_from, principal_log_hamiltonian, random_hermitian_from, random_state_from,
    Decomposition, HermitianOperator, StateVector, UnitaryOperator, C64,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Bell,
    Restricted,
    TwoState,
    Iid,
    Circuit,
    ViolationScan,
    Convergence,
}

impl ExperimentKind {
    pub fn is_stochastic(self) -> bool {
        !matches!(self, ExperimentKind::Convergence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `H = [[0, 1], [1, 0]]` on two singleton configurations, start `|0>`.
    Rabi,
    /// Seeded random system: Haar `U`, Gaussian Hermitian `H`, uniform `Psi`.
    Haar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrix {
    fn to_dmatrix(&self, what: &str) -> Result<DMatrix<C64>> {
        let n = self.re.len();
        let bad = |msg: String| Error::Config(format!("{what}: {msg}"));
        if n == 0 {
            return Err(bad("empty matrix".into()));
        }
        if !self.im.is_empty() && self.im.len() != n {
            return Err(bad(format!("im has {} rows, re has {n}", self.im.len())));
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            if self.re[i].len() != n || (!self.im.is_empty() && self.im[i].len() != n) {
                return Err(bad(format!("row {i} is not of length {n}")));
            }
            for j in 0..n {
                let im = if self.im.is_empty() {
                    0.0
                } else {
                    self.im[i][j]
                };
                m[(i, j)] = C64::new(self.re[i][j], im);
            }
        }
        Ok(m)
    }
}

/// Initial state: a basis vector, explicit amplitudes (normalized on load),
/// or a seeded uniform random state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub random: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitary: Option<ComplexMatrix>,
    /// Configuration blocks; singletons when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    /// Circuit file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<PathBuf>,
    /// Seed for random systems and states; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Explicit recording times for continuous runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Number of evenly spaced recording times in `(0, t_end]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_times: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f64>>,
    /// Start of the probed step in convergence runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_probe: Option<f64>,
    /// Source configuration in convergence runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<usize>,
    /// Fixed initial configuration; Born-distributed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_config: Option<usize>,
    /// Write every n-th recording time to the table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSpec {
    pub hazard_rel_tol: f64,
    pub time_tol: f64,
    pub max_jumps: usize,
    pub ode_tol: f64,
    pub quad_tol: f64,
    pub n_max: usize,
    pub condition_tol: f64,
}

impl Default for NumericsSpec {
    fn default() -> Self {
        Self {
            hazard_rel_tol: 1e-9,
            time_tol: 1e-10,
            max_jumps: 1_000_000,
            ode_tol: 1e-10,
            quad_tol: 1e-10,
            n_max: 6,
            condition_tol: CONDITION_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    /// `base:part[:scale]`, e.g. `guess1:real:2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<UnitarySource>,
}

/// Thresholds enforced under `--check`; unset fields take per-kind defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tv_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_runs: Option<usize>,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub numerics: NumericsSpec,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub check: CheckSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: None,
            n_runs: None,
            system: SystemSpec::default(),
            run: RunSpec::default(),
            numerics: NumericsSpec::default(),
            scan: ScanSpec::default(),
            check: CheckSpec::default(),
            output: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; a relative circuit path is taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(c) = cfg.system.circuit.as_mut() {
            if c.is_relative() {
                if let Some(dir) = path.parent() {
                    *c = dir.join(&*c);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Seed for random system data.
    pub fn system_seed(&self) -> u64 {
        self.system.system_seed.or(self.seed).unwrap_or(0)
    }

    /// Checks presence and consistency of the fields the kind needs.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: &str| Err(Error::Config(m.to_string()));
        if self.kind.is_stochastic() {
            if self.seed.is_none() {
                return cfg_err("stochastic experiments need a seed");
            }
            match self.n_runs {
                None => return cfg_err("stochastic experiments need n_runs"),
                Some(0) => return cfg_err("n_runs must be positive"),
                _ => {}
            }
        }
        let positive = |x: Option<f64>, name: &str| match x {
            Some(v) if !(v > 0.0 && v.is_finite()) => {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
            _ => Ok(()),
        };
        positive(self.run.t_end, "t_end")?;
        positive(self.run.tau, "tau")?;
        for &t in self.run.taus.iter().flatten() {
            positive(Some(t), "taus entry")?;
        }
        if self.run.record_every == Some(0) {
            return cfg_err("record_every must be positive");
        }
        let n = &self.numerics;
        for (v, name) in [
            (n.hazard_rel_tol, "hazard_rel_tol"),
            (n.time_tol, "time_tol"),
            (n.ode_tol, "ode_tol"),
            (n.quad_tol, "quad_tol"),
            (n.condition_tol, "condition_tol"),
        ] {
            positive(Some(v), name)?;
        }
        match self.kind {
            ExperimentKind::Bell => {
                if self.run.t_end.is_none() && self.run.times.is_none() {
                    return cfg_err("bell runs need t_end or times");
                }
            }
            ExperimentKind::Restricted | ExperimentKind::TwoState | ExperimentKind::Iid => {
                if self.run.steps.is_none() {
                    return cfg_err("discrete runs need steps");
                }
                if self.run.tau.is_none() && self.system.unitary.is_none() {
                    return cfg_err("discrete runs need tau unless a unitary is given");
                }
            }
            ExperimentKind::Circuit => {
                if self.system.circuit.is_none() {
                    return cfg_err("circuit runs need system.circuit");
                }
            }
            ExperimentKind::ViolationScan | ExperimentKind::Convergence => {}
        }
        Ok(())
    }

    /// Builds the concrete system named by `[system]`.
    pub fn resolve_system(&self) -> Result<ResolvedSystem> {
        let s = &self.system;
        let mut rng = rng::stream(self.system_seed(), u64::MAX);
        let tau = self.run.tau;

        let mut dim = s.dim;
        let mut h = match &s.hamiltonian {
            Some(m) => Some(HermitianOperator::new(m.to_dmatrix("hamiltonian")?)?),
            None => None,
        };
        let mut u = match &s.unitary {
            Some(m) => Some(UnitaryOperator::new(m.to_dmatrix("unitary")?)?),
            None => None,
        };
        let mut psi_default = None;
        let mut circuit = None;
        if let Some(path) = &s.circuit {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read circuit {}: {e}", path.display()))
            })?;
            let c: Circuit = text.parse()?;
            set_dim(&mut dim, c.dim())?;
            circuit = Some(c);
        }
        match s.preset {
            Some(Preset::Rabi) => {
                set_dim(&mut dim, 2)?;
                if h.is_none() && u.is_none() {
                    h = Some(HermitianOperator::from_real(&[&[0.0, 1.0], &[1.0, 0.0]])?);
                }
                psi_default = Some(StateVector::basis(2, 0)?);
            }
            Some(Preset::Haar) => {
                let d = dim.ok_or_else(|| Error::Config("preset haar needs system.dim".into()))?;
                if d == 0 {
                    return Err(Error::InvalidDimension(0));
                }
                if h.is_none() && u.is_none() {
                    if self.kind == ExperimentKind::Bell || self.kind == ExperimentKind::Convergence
                    {
                        h = Some(random_hermitian_from(d, &mut rng));
                    } else {
                        u = Some(haar_unitary_from(d, &mut rng));
                    }
                }
                psi_default = Some(random_state_from(d, &mut rng));
            }
            None => {}
        }
        if let Some(h) = &h {
            set_dim(&mut dim, h.dim())?;
        }
        if let Some(u) = &u {
            set_dim(&mut dim, u.dim())?;
        }
        let dim = dim.ok_or_else(|| Error::Config("cannot infer the system dimension".into()))?;
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if u.is_none() {
            if let (Some(h), Some(tau)) = (&h, tau) {
                u = Some(h.exp_minus_i(tau));
            }
        }
        if h.is_none() {
            if let (Some(u), Some(tau)) = (&u, tau) {
                h = Some(principal_log_hamiltonian(u, tau)?);
            }
        }

        let dec = match &s.blocks {
            Some(b) => Decomposition::new(b.clone())?,
            None => Decomposition::singletons(dim)?,
        };
        dec.check_dim(dim)?;

        let psi0 = match &s.initial {
            Some(init) => resolve_initial(init, dim, &mut rng)?,
            None => match psi_default {
                Some(p) => p,
                None => StateVector::basis(dim, 0)?,
            },
        };
        Ok(ResolvedSystem {
            dim,
            dec,
            h,
            u,
            psi0,
            circuit,
        })
    }
}

fn set_dim(dim: &mut Option<usize>, d: usize) -> Result<()> {
    match *dim {
        Some(existing) if existing != d => Err(Error::DimensionMismatch {
            expected: existing,
            found: d,
        }),
        _ => {
            *dim = Some(d);
            Ok(())
        }
    }
}

fn resolve_initial(
    init: &InitialSpec,
    dim: usize,
    rng: &mut rng::StreamRng,
) -> Result<StateVector> {
    let given = usize::from(init.basis.is_some())
        + usize::from(init.re.is_some())
        + usize::from(init.random);
    if given != 1 {
        return Err(Error::Config(
            "initial state needs exactly one of basis, re/im, random".into(),
        ));
    }
    if init.im.is_some() && init.re.is_none() {
        return Err(Error::Config("initial.im given without initial.re".into()));
    }
    if let Some(k) = init.basis {
        return StateVector::basis(dim, k);
    }
    if init.random {
        return Ok(random_state_from(dim, rng));
    }
    let re = init.re.as_ref().expect("checked above");
    let zeros = vec![0.0; re.len()];
    let im = init.im.as_ref().unwrap_or(&zeros);
    if re.len() != dim || im.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: re.len().max(im.len()),
        });
    }
    StateVector::normalized(DVector::from_iterator(
        dim,
        re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)),
    ))
}

/// Concrete system of an experiment.
#[derive(Debug, Clone)]
pub struct ResolvedSystem {
    pub dim: usize,
    pub dec: Decomposition,
    pub h: Option<HermitianOperator>,
    pub u: Option<UnitaryOperator>,
    pub psi0: StateVector,
    pub circuit: Option<Circuit>,
}
