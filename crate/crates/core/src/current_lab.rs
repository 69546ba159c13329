//! Candidate discrete-time probability currents and their admissibility.
//!
//! A current `J(q, q')` for one step `Psi -> U Psi` defines a Markov chain via
//! `P(q' -> q) = J(q,q')^+ / <Psi|P(q')|Psi>` when it is real, antisymmetric,
//! never moves more weight out of `q'` than `q'` carries, and its column sums
//! reproduce the change of the Born weights. The candidates here are built
//! from `<Psi|U^* P(q) U P(q')|Psi>` or `<Psi|P(q) U P(q')|Psi>` by taking a
//! real or imaginary part, scaling, and antisymmetrizing.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::CurrentMatrix;
use crate::discrete::TransitionMatrix;
use crate::error::{Error, Result};
use crate::hilbert::{
    born_weights, haar_unitary_from, random_state_from, Decomposition, StateVector,
    UnitaryOperator, C64, WEIGHT_EPS,
};
use crate::rng;

/// Tolerance separating algebraic identities from genuine violations.
pub const CONDITION_TOL: f64 = 1e-10;

/// Residuals in `(BORDERLINE_TOL, CONDITION_TOL]` still pass but are counted.
pub const BORDERLINE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Base {
    /// `<Psi|U^* P(q) U P(q')|Psi>`
    Guess1,
    /// `<Psi|P(q) U P(q')|Psi>`
    Guess2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Real,
    Imaginary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateId {
    pub base: Base,
    pub part: Part,
    pub scale: f64,
}

impl CandidateId {
    /// Default scale: 2 for the real part of guess 1, else 1.
    pub fn new(base: Base, part: Part) -> Self {
        let scale = if (base, part) == (Base::Guess1, Part::Real) {
            2.0
        } else {
            1.0
        };
        Self { base, part, scale }
    }

    /// Antisymmetrized `2 Re <Psi|U^* P(q) U P(q')|Psi>`, the only member of
    /// the family whose column sums always match the Born-weight change.
    pub fn antisymmetrized_real_guess1() -> Self {
        Self::new(Base::Guess1, Part::Real)
    }

    pub fn all_default() -> [CandidateId; 4] {
        [
            Self::new(Base::Guess1, Part::Real),
            Self::new(Base::Guess1, Part::Imaginary),
            Self::new(Base::Guess2, Part::Real),
            Self::new(Base::Guess2, Part::Imaginary),
        ]
    }
}

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.base {
            Base::Guess1 => "guess1",
            Base::Guess2 => "guess2",
        };
        let part = match self.part {
            Part::Real => "real",
            Part::Imaginary => "imag",
        };
        write!(f, "{base}:{part}:{}", self.scale)
    }
}

impl FromStr for CandidateId {
    type Err = Error;

    /// Parses `base:part[:scale]`, e.g. `guess1:real:2` or `guess2:imag`.
    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split(':').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::InvalidInput(format!(
                "candidate '{s}' is not base:part[:scale]"
            )));
        }
        let base = match fields[0] {
            "guess1" | "1" => Base::Guess1,
            "guess2" | "2" => Base::Guess2,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown candidate base '{other}'"
                )))
            }
        };
        let part = match fields[1] {
            "real" | "re" => Part::Real,
            "imag" | "imaginary" | "im" => Part::Imaginary,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown candidate part '{other}'"
                )))
            }
        };
        let mut id = CandidateId::new(base, part);
        if let Some(scale) = fields.get(2) {
            id.scale = scale.parse().map_err(|_| {
                Error::InvalidInput(format!("candidate scale '{scale}' is not a number"))
            })?;
        }
        Ok(id)
    }
}

/// Matrix of the base expression, entry `(q, q')`.
pub fn base_matrix(
    psi: &StateVector,
    u: &UnitaryOperator,
    dec: &Decomposition,
    base: Base,
) -> Result<DMatrix<C64>> {
    dec.check_dim(psi.dim())?;
    if u.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: psi.dim(),
            found: u.dim(),
        });
    }
    let n = dec.n_configs();
    let amps = psi.amplitudes();
    let u_psi = u.matrix() * amps;
    let mut out = DMatrix::zeros(n, n);
    for qp in 0..n {
        // U P(q') Psi
        let v = u.matrix() * dec.project(qp, amps);
        for q in 0..n {
            out[(q, qp)] = match base {
                // <U Psi| P(q) |U P(q') Psi>
                Base::Guess1 => dec.block_inner(q, &u_psi, &v),
                // <Psi| P(q) |U P(q') Psi>
                Base::Guess2 => dec.block_inner(q, amps, &v),
            };
        }
    }
    Ok(out)
}

/// `J(q,q') = scale * (part(B(q,q')) - part(B(q',q))) / 2`.
pub fn candidate_current(
    psi: &StateVector,
    u: &UnitaryOperator,
    dec: &Decomposition,
    cand: CandidateId,
) -> Result<CurrentMatrix> {
    let b = base_matrix(psi, u, dec, cand.base)?;
    let part = |z: C64| match cand.part {
        Part::Real => z.re,
        Part::Imaginary => z.im,
    };
    let n = dec.n_configs();
    let j = DMatrix::from_fn(n, n, |q, qp| {
        0.5 * cand.scale * (part(b[(q, qp)]) - part(b[(qp, q)]))
    });
    CurrentMatrix::new(j)
}

/// The four-term operator expression
/// `1/2 <Psi|(U^*P(q)UP(q') + P(q')U^*P(q)U - U^*P(q')UP(q) - P(q)U^*P(q')U)|Psi>`,
/// evaluated with dense projector products. Kept as an independent route to
/// the antisymmetrized real part of guess 1.
pub fn operator_form_current(
    psi: &StateVector,
    u: &UnitaryOperator,
    dec: &Decomposition,
) -> Result<CurrentMatrix> {
    dec.check_dim(psi.dim())?;
    let n = dec.n_configs();
    let um = u.matrix();
    let ua = um.adjoint();
    let amps = psi.amplitudes();
    let projectors: Vec<DMatrix<C64>> = (0..n).map(|q| dec.projector(q)).collect();
    let expect = |m: &DMatrix<C64>| -> C64 { (amps.adjoint() * m * amps)[(0, 0)] };
    let mut j = DMatrix::zeros(n, n);
    for q in 0..n {
        for qp in 0..n {
            let (pq, pqp) = (&projectors[q], &projectors[qp]);
            let op = &ua * pq * um * pqp + pqp * &ua * pq * um
                - &ua * pqp * um * pq
                - pq * &ua * pqp * um;
            j[(q, qp)] = 0.5 * expect(&op).re;
        }
    }
    CurrentMatrix::new(j)
}

/// Residuals of the four admissibility conditions for one current.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    /// Largest imaginary component (reality).
    pub cond1_max_imag: f64,
    /// `max |J(q,q') + J(q',q)|` (antisymmetry).
    pub cond2_max_asym: f64,
    /// Per source `q'`: `sum_q J(q,q')^+ - <P(q')>`; positive means violated.
    pub cond3_excess: Vec<f64>,
    /// Per target `q`: `sum_q' J(q,q') - (<U^*P(q)U> - <P(q)>)`.
    pub cond4_residual: Vec<f64>,
    pub tol: f64,
    pub passes: [bool; 4],
    /// Passing residuals that exceeded [`BORDERLINE_TOL`].
    pub borderline: usize,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|&p| p)
    }

    pub fn cond3_passes_at(&self, q_from: usize) -> bool {
        self.cond3_excess[q_from] <= self.tol
    }

    pub fn max_cond4_residual(&self) -> f64 {
        self.cond4_residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn max_cond3_excess(&self) -> f64 {
        self.cond3_excess
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Checks a possibly complex-valued current.
pub fn check_conditions_complex(
    j: &DMatrix<C64>,
    psi: &StateVector,
    u: &UnitaryOperator,
    dec: &Decomposition,
    tol: f64,
) -> Result<ConditionReport> {
    dec.check_dim(psi.dim())?;
    if u.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: psi.dim(),
            found: u.dim(),
        });
    }
    let n = dec.n_configs();
    if j.nrows() != n || j.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: j.nrows(),
        });
    }
    let before = born_weights(psi.amplitudes(), dec);
    let after = born_weights(&(u.matrix() * psi.amplitudes()), dec);

    let cond1 = j
        .iter()
        .map(|z| {
            if z.im.is_finite() {
                z.im.abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    let mut cond2: f64 = 0.0;
    for q in 0..n {
        for qp in 0..n {
            cond2 = cond2.max((j[(q, qp)].re + j[(qp, q)].re).abs());
        }
    }
    let cond3: Vec<f64> = (0..n)
        .map(|qp| (0..n).map(|q| j[(q, qp)].re.max(0.0)).sum::<f64>() - before[qp])
        .collect();
    let cond4: Vec<f64> = (0..n)
        .map(|q| (0..n).map(|qp| j[(q, qp)].re).sum::<f64>() - (after[q] - before[q]))
        .collect();

    let passes = [
        cond1 <= tol,
        cond2 <= tol,
        cond3.iter().all(|&e| e <= tol),
        cond4.iter().all(|r| r.abs() <= tol),
    ];
    let borderline = [cond1, cond2]
        .into_iter()
        .chain(cond3.iter().copied())
        .chain(cond4.iter().map(|r| r.abs()))
        .filter(|&r| r > BORDERLINE_TOL && r <= tol)
        .count();
    Ok(ConditionReport {
        cond1_max_imag: cond1,
        cond2_max_asym: cond2,
        cond3_excess: cond3,
        cond4_residual: cond4,
        tol,
        passes,
        borderline,
    })
}

pub fn check_conditions(
    j: &CurrentMatrix,
    psi: &StateVector,
    u: &UnitaryOperator,
    dec: &Decomposition,
    tol: f64,
) -> Result<ConditionReport> {
    let complex = j.matrix().map(|x| C64::new(x, 0.0));
    check_conditions_complex(&complex, psi, u, dec, tol)
}

/// Markov transition matrix generated by a current:
/// `P(q' -> q) = J(q,q')^+ / <P(q')>` off the diagonal, stay probability on it.
///
/// Fails when the outflow from some configuration exceeds its weight by more
/// than `tol`. Sources of (numerically) zero weight with no outflow keep an
/// identity column and are flagged.
pub fn transition_from_current(
    j: &CurrentMatrix,
    psi: &StateVector,
    dec: &Decomposition,
    tol: f64,
) -> Result<TransitionMatrix> {
    dec.check_dim(psi.dim())?;
    let n = dec.n_configs();
    if j.n_configs() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: j.n_configs(),
        });
    }
    let weights = born_weights(psi.amplitudes(), dec);
    let mut probs = DMatrix::zeros(n, n);
    let mut flagged = Vec::new();
    for qp in 0..n {
        let outflow: f64 = (0..n)
            .filter(|&q| q != qp)
            .map(|q| j.get(q, qp).max(0.0))
            .sum();
        let excess = outflow - weights[qp];
        if excess > tol {
            return Err(Error::OutflowExceedsWeight { config: qp, excess });
        }
        if weights[qp] < WEIGHT_EPS {
            flagged.push(qp);
            probs[(qp, qp)] = 1.0;
            continue;
        }
        let mut stay = 1.0;
        for q in (0..n).filter(|&q| q != qp) {
            let p = (j.get(q, qp).max(0.0) / weights[qp]).min(1.0);
            probs[(q, qp)] = p;
            stay -= p;
        }
        probs[(qp, qp)] = stay.max(0.0);
    }
    Ok(TransitionMatrix::from_parts(probs, flagged))
}

/// Where the scan draws its unitaries from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitarySource {
    Haar,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSettings {
    pub dim: usize,
    pub dec: Decomposition,
    /// `(q, q')`; the scan watches the outflow condition at source `q'`.
    pub pair: (usize, usize),
    pub candidate: CandidateId,
    pub n_samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub source: UnitarySource,
}

impl ScanSettings {
    /// Singleton decomposition of `C^dim`, pair `(0, 1)`, Haar unitaries.
    pub fn new(dim: usize, candidate: CandidateId, n_samples: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            dim,
            dec: Decomposition::singletons(dim)?,
            pair: (0, 1),
            candidate,
            n_samples,
            seed,
            tol: CONDITION_TOL,
            source: UnitarySource::Haar,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub n_samples: usize,
    pub candidate: String,
    pub pair: (usize, usize),
    /// Samples whose outflow condition fails at the pair's source `q'`.
    pub violation_count: usize,
    /// Samples whose outflow condition fails at any source.
    pub any_violation_count: usize,
    /// Samples failing each of the four conditions.
    pub cond_fail_counts: [usize; 4],
    pub max_cond1: f64,
    pub max_cond2: f64,
    pub max_cond4: f64,
    /// Largest excess at the pair's source over all samples.
    pub worst_pair_excess: f64,
    /// Pair-source excesses of the violating samples, largest first (at most 20).
    pub worst_excesses: Vec<f64>,
    pub borderline: usize,
}

impl ScanReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.violation_count as f64 / self.n_samples as f64
        }
    }

    fn merge(mut self, other: ScanReport) -> ScanReport {
        self.n_samples += other.n_samples;
        self.violation_count += other.violation_count;
        self.any_violation_count += other.any_violation_count;
        for k in 0..4 {
            self.cond_fail_counts[k] += other.cond_fail_counts[k];
        }
        self.max_cond1 = self.max_cond1.max(other.max_cond1);
        self.max_cond2 = self.max_cond2.max(other.max_cond2);
        self.max_cond4 = self.max_cond4.max(other.max_cond4);
        self.worst_pair_excess = self.worst_pair_excess.max(other.worst_pair_excess);
        self.worst_excesses.extend(other.worst_excesses);
        self.worst_excesses.sort_by(|a, b| b.total_cmp(a));
        self.worst_excesses.truncate(20);
        self.borderline += other.borderline;
        self
    }
}

/// Evaluates one scan sample: Haar (or identity) `U` and a uniform `Psi`
/// drawn from stream `index` of the scan seed.
pub fn scan_sample(settings: &ScanSettings, index: u64) -> (UnitaryOperator, StateVector) {
    let mut rng = rng::stream(settings.seed, index);
    let u = match settings.source {
        UnitarySource::Haar => haar_unitary_from(settings.dim, &mut rng),
        UnitarySource::Identity => UnitaryOperator::identity(settings.dim),
    };
    let psi = random_state_from(settings.dim, &mut rng);
    (u, psi)
}

/// Counts admissibility failures of a candidate over random `(U, Psi)`.
pub fn violation_scan(settings: &ScanSettings) -> Result<ScanReport> {
    if settings.dim < 2 {
        return Err(Error::InvalidDimension(settings.dim));
    }
    settings.dec.check_dim(settings.dim)?;
    let n = settings.dec.n_configs();
    let (q, qp) = settings.pair;
    if q >= n || qp >= n || q == qp {
        return Err(Error::InvalidInput(format!(
            "pair ({q}, {qp}) must name two distinct configurations"
        )));
    }
    let empty = ScanReport {
        n_samples: 0,
        candidate: settings.candidate.to_string(),
        pair: settings.pair,
        violation_count: 0,
        any_violation_count: 0,
        cond_fail_counts: [0; 4],
        max_cond1: 0.0,
        max_cond2: 0.0,
        max_cond4: 0.0,
        worst_pair_excess: f64::NEG_INFINITY,
        worst_excesses: Vec::new(),
        borderline: 0,
    };
    (0..settings.n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<ScanReport> {
            let (u, psi) = scan_sample(settings, i);
            let j = candidate_current(&psi, &u, &settings.dec, settings.candidate)?;
            let report = check_conditions(&j, &psi, &u, &settings.dec, settings.tol)?;
            let pair_excess = report.cond3_excess[qp];
            let pair_fail = !report.cond3_passes_at(qp);
            let mut r = empty.clone();
            r.n_samples = 1;
            r.violation_count = usize::from(pair_fail);
            r.any_violation_count = usize::from(!report.passes[2]);
            for k in 0..4 {
                r.cond_fail_counts[k] = usize::from(!report.passes[k]);
            }
            r.max_cond1 = report.cond1_max_imag;
            r.max_cond2 = report.cond2_max_asym;
            r.max_cond4 = report.max_cond4_residual();
            r.worst_pair_excess = pair_excess;
            if pair_fail {
                r.worst_excesses.push(pair_excess);
            }
            r.borderline = report.borderline;
            Ok(r)
        })
        .try_reduce(|| empty.clone(), |a, b| Ok(a.merge(b)))
}
