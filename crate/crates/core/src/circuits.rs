//! Pairwise discrete process driven by a quantum circuit.
//!
//! Configurations are computational basis states, with qubit 0 the least
//! significant bit of the label. Every single-qubit gate and every CNOT
//! couples basis states only in pairs, so each gate is one step of the
//! minimal two-state process applied inside the occupied pair.
//!
//! Text format, one statement per line, `#` starts a comment:
//!
//! ```text
//! qubits 3
//! g H q 0
//! g u 0 0 1 0 1 0 0 0 q 2     # [[a, b], [c, d]] as re/im pairs
//! cnot 0 1                    # control 0, target 1
//! ```

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2};
use rand::Rng;

use crate::bell::StartConfig;
use crate::discrete::{minimal_pair_transition, DiscreteTrajectory};
use crate::error::{Error, Result};
use crate::hilbert::{
    born_weights, evolve_discrete, sample_index, Decomposition, ProbabilityVector, StateVector,
    UnitaryOperator, C64, STRUCTURE_TOL,
};
use crate::rng::{self, StreamRng};

/// Largest supported register; the full unitary of every gate is built densely.
pub const MAX_QUBITS: usize = 12;

/// Tolerance of the per-gate pairwise check.
pub const PAIRWISE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Single {
        name: String,
        matrix: Matrix2<C64>,
        qubit: usize,
    },
    Cnot {
        control: usize,
        target: usize,
    },
}

impl Gate {
    pub fn named(name: &str, qubit: usize) -> Result<Gate> {
        let c = |re: f64, im: f64| C64::new(re, im);
        let matrix = match name {
            "X" => Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)),
            "Y" => Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
            "Z" => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)),
            "H" => Matrix2::new(
                c(FRAC_1_SQRT_2, 0.0),
                c(FRAC_1_SQRT_2, 0.0),
                c(FRAC_1_SQRT_2, 0.0),
                c(-FRAC_1_SQRT_2, 0.0),
            ),
            "S" => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)),
            "T" => Matrix2::new(
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            ),
            other => return Err(Error::InvalidInput(format!("unknown gate '{other}'"))),
        };
        Ok(Gate::Single {
            name: name.to_string(),
            matrix,
            qubit,
        })
    }

    pub fn single(matrix: Matrix2<C64>, qubit: usize) -> Result<Gate> {
        let defect = (matrix * matrix.adjoint() - Matrix2::identity())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if !(defect <= STRUCTURE_TOL) {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Gate::Single {
            name: "u".into(),
            matrix,
            qubit,
        })
    }

    pub fn cnot(control: usize, target: usize) -> Gate {
        Gate::Cnot { control, target }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        match self {
            Gate::Single { qubit, .. } if *qubit >= n_qubits => Err(Error::InvalidInput(format!(
                "qubit {qubit} out of range for {n_qubits} qubits"
            ))),
            Gate::Cnot { control, target } if *control >= n_qubits || *target >= n_qubits => {
                Err(Error::InvalidInput(format!(
                    "CNOT({control}, {target}) out of range for {n_qubits} qubits"
                )))
            }
            Gate::Cnot { control, target } if control == target => Err(Error::InvalidInput(
                format!("CNOT control and target coincide ({control})"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::Single {
                name,
                matrix,
                qubit,
            } if name == "u" => {
                write!(f, "g u")?;
                for z in [
                    matrix[(0, 0)],
                    matrix[(0, 1)],
                    matrix[(1, 0)],
                    matrix[(1, 1)],
                ] {
                    write!(f, " {:e} {:e}", z.re, z.im)?;
                }
                write!(f, " q {qubit}")
            }
            Gate::Single { name, qubit, .. } => write!(f, "g {name} q {qubit}"),
            Gate::Cnot { control, target } => write!(f, "cnot {control} {target}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize, gates: Vec<Gate>) -> Result<Circuit> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::InvalidInput(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        for g in &gates {
            g.validate(n_qubits)?;
        }
        Ok(Circuit { n_qubits, gates })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Product of all gate unitaries, last gate leftmost.
    pub fn unitary(&self) -> UnitaryOperator {
        self.gates
            .iter()
            .fold(UnitaryOperator::identity(self.dim()), |acc, g| {
                UnitaryOperator::from_trusted(
                    gate_unitary(g, self.n_qubits).matrix() * acc.matrix(),
                )
            })
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "qubits {}", self.n_qubits)?;
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Circuit {
    type Err = Error;

    fn from_str(text: &str) -> Result<Circuit> {
        let mut n_qubits: Option<usize> = None;
        let mut gates = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(format!("'{s}' is not a nonnegative integer")))
            };
            match tokens[0] {
                "qubits" => {
                    if n_qubits.is_some() {
                        return Err(err("duplicate 'qubits' line".into()));
                    }
                    if tokens.len() != 2 {
                        return Err(err("expected 'qubits N'".into()));
                    }
                    n_qubits = Some(int(tokens[1])?);
                }
                "g" => {
                    if n_qubits.is_none() {
                        return Err(err("gate before 'qubits' line".into()));
                    }
                    if tokens.len() < 4 || tokens[tokens.len() - 2] != "q" {
                        return Err(err("expected 'g <name|u entries> q <k>'".into()));
                    }
                    let qubit = int(tokens[tokens.len() - 1])?;
                    let gate = if tokens[1] == "u" {
                        let entries = &tokens[2..tokens.len() - 2];
                        if entries.len() != 8 {
                            return Err(err(format!(
                                "'u' needs 8 real numbers, got {}",
                                entries.len()
                            )));
                        }
                        let mut v = [0.0; 8];
                        for (slot, tok) in v.iter_mut().zip(entries) {
                            *slot = tok
                                .parse()
                                .map_err(|_| err(format!("'{tok}' is not a number")))?;
                        }
                        let m = Matrix2::new(
                            C64::new(v[0], v[1]),
                            C64::new(v[2], v[3]),
                            C64::new(v[4], v[5]),
                            C64::new(v[6], v[7]),
                        );
                        Gate::single(m, qubit).map_err(|e| err(e.to_string()))?
                    } else {
                        if tokens.len() != 4 {
                            return Err(err("expected 'g <name> q <k>'".into()));
                        }
                        Gate::named(tokens[1], qubit).map_err(|e| err(e.to_string()))?
                    };
                    gates.push(gate);
                }
                "cnot" => {
                    if n_qubits.is_none() {
                        return Err(err("gate before 'qubits' line".into()));
                    }
                    if tokens.len() != 3 {
                        return Err(err("expected 'cnot <control> <target>'".into()));
                    }
                    gates.push(Gate::cnot(int(tokens[1])?, int(tokens[2])?));
                }
                other => return Err(err(format!("unknown statement '{other}'"))),
            }
        }
        let n = n_qubits.ok_or(Error::Parse {
            line: 0,
            msg: "missing 'qubits' line".into(),
        })?;
        Circuit::new(n, gates)
    }
}

/// Partition of configurations into pairs and singlets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPartition {
    subsets: Vec<Vec<usize>>,
    partner: Vec<Option<usize>>,
}

impl PairPartition {
    pub fn new(subsets: Vec<Vec<usize>>, n_configs: usize) -> Result<PairPartition> {
        let mut partner = vec![None; n_configs];
        let mut seen = vec![false; n_configs];
        for s in &subsets {
            if s.is_empty() || s.len() > 2 {
                return Err(Error::InvalidInput(format!(
                    "subset {s:?} is neither a pair nor a singlet"
                )));
            }
            for &q in s {
                if q >= n_configs || seen[q] {
                    return Err(Error::InvalidInput(format!(
                        "configuration {q} repeated or out of range"
                    )));
                }
                seen[q] = true;
            }
            if let [a, b] = s[..] {
                partner[a] = Some(b);
                partner[b] = Some(a);
            }
        }
        if let Some(q) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "configuration {q} not covered by the partition"
            )));
        }
        let mut subsets: Vec<Vec<usize>> = subsets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s
            })
            .collect();
        subsets.sort();
        Ok(PairPartition { subsets, partner })
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.subsets
            .iter()
            .filter(|s| s.len() == 2)
            .map(|s| (s[0], s[1]))
    }

    pub fn partner(&self, q: usize) -> Option<usize> {
        self.partner[q]
    }

    pub fn n_configs(&self) -> usize {
        self.partner.len()
    }
}

/// Pairs of basis states a gate can mix.
pub fn gate_partition(gate: &Gate, n_qubits: usize) -> PairPartition {
    let dim = 1usize << n_qubits;
    let mut subsets = Vec::new();
    match *gate {
        Gate::Single { qubit, .. } => {
            let bit = 1 << qubit;
            for x in (0..dim).filter(|x| x & bit == 0) {
                subsets.push(vec![x, x | bit]);
            }
        }
        Gate::Cnot { control, target } => {
            let (cbit, tbit) = (1 << control, 1 << target);
            for x in 0..dim {
                if x & cbit == 0 {
                    subsets.push(vec![x]);
                } else if x & tbit == 0 {
                    subsets.push(vec![x, x | tbit]);
                }
            }
        }
    }
    PairPartition::new(subsets, dim).expect("gate partitions are valid by construction")
}

/// Full `2^n x 2^n` unitary of one gate.
pub fn gate_unitary(gate: &Gate, n_qubits: usize) -> UnitaryOperator {
    let dim = 1usize << n_qubits;
    let mut m = DMatrix::zeros(dim, dim);
    match gate {
        Gate::Single { matrix, qubit, .. } => {
            let bit = 1 << qubit;
            for j in 0..dim {
                let jb = usize::from(j & bit != 0);
                for ib in 0..2 {
                    let i = if ib == 1 { j | bit } else { j & !bit };
                    m[(i, j)] = matrix[(ib, jb)];
                }
            }
        }
        Gate::Cnot { control, target } => {
            for x in 0..dim {
                let y = if x & (1 << control) != 0 {
                    x ^ (1 << target)
                } else {
                    x
                };
                m[(y, x)] = C64::new(1.0, 0.0);
            }
        }
    }
    UnitaryOperator::from_trusted(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseCheck {
    pub ok: bool,
    /// Largest Frobenius norm of `P(q) U P(q')` over `q, q'` in different subsets.
    pub max_off_partition: f64,
}

/// Checks that `U` couples configurations only within the partition's subsets.
pub fn verify_pairwise(
    u: &UnitaryOperator,
    partition: &PairPartition,
    dec: &Decomposition,
    tol: f64,
) -> Result<PairwiseCheck> {
    dec.check_dim(u.dim())?;
    let n = dec.n_configs();
    if partition.n_configs() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: partition.n_configs(),
        });
    }
    let mut subset_of = vec![0; n];
    for (k, s) in partition.subsets().iter().enumerate() {
        for &q in s {
            subset_of[q] = k;
        }
    }
    let m = u.matrix();
    let mut worst: f64 = 0.0;
    for q in 0..n {
        for qp in 0..n {
            if subset_of[q] == subset_of[qp] {
                continue;
            }
            let block: f64 = dec
                .block(q)
                .iter()
                .flat_map(|&i| dec.block(qp).iter().map(move |&j| m[(i, j)].norm_sqr()))
                .sum();
            worst = worst.max(block.sqrt());
        }
    }
    Ok(PairwiseCheck {
        ok: worst <= tol,
        max_off_partition: worst,
    })
}

/// Per-gate data of the circuit process.
#[derive(Debug, Clone)]
struct GateStep {
    /// For each configuration: partner in its pair and jump probability.
    jumps: Vec<Option<(usize, f64)>>,
}

/// Deterministic part of the circuit process: the statevector after every
/// gate and each gate's minimal pair transitions.
#[derive(Debug, Clone)]
pub struct CircuitProcess {
    circuit: Circuit,
    states: Vec<StateVector>,
    steps: Vec<GateStep>,
}

impl CircuitProcess {
    pub fn new(circuit: Circuit, psi0: &StateVector) -> Result<CircuitProcess> {
        if psi0.dim() != circuit.dim() {
            return Err(Error::DimensionMismatch {
                expected: circuit.dim(),
                found: psi0.dim(),
            });
        }
        let dec = Decomposition::singletons(circuit.dim())?;
        let mut states = vec![psi0.clone()];
        let mut steps = Vec::with_capacity(circuit.gates().len());
        for (k, gate) in circuit.gates().iter().enumerate() {
            let u = gate_unitary(gate, circuit.n_qubits());
            let partition = gate_partition(gate, circuit.n_qubits());
            let check = verify_pairwise(&u, &partition, &dec, PAIRWISE_TOL)?;
            if !check.ok {
                return Err(Error::NotPairwise {
                    gate: k,
                    magnitude: check.max_off_partition,
                });
            }
            let next = evolve_discrete(&u, &states[k])?;
            let before = born_weights(states[k].amplitudes(), &dec);
            let after = born_weights(next.amplitudes(), &dec);
            let mut jumps = vec![None; circuit.dim()];
            for (a, b) in partition.pairs() {
                let m = minimal_pair_transition(&[before[a], before[b]], &[after[a], after[b]]);
                jumps[a] = Some((b, m.prob(1, 0)));
                jumps[b] = Some((a, m.prob(0, 1)));
            }
            steps.push(GateStep { jumps });
            states.push(next);
        }
        Ok(CircuitProcess {
            circuit,
            states,
            steps,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    /// Statevector after `k` gates.
    pub fn state(&self, k: usize) -> &StateVector {
        &self.states[k]
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("initial state present")
    }

    /// Born weights over basis states after `k` gates.
    pub fn born(&self, k: usize) -> ProbabilityVector {
        ProbabilityVector::from_trusted(
            self.states[k]
                .amplitudes()
                .iter()
                .map(|a| a.norm_sqr())
                .collect(),
        )
    }

    /// Probability of jumping out of `q` at gate `k`, with the destination.
    pub fn jump(&self, k: usize, q: usize) -> Option<(usize, f64)> {
        self.steps[k].jumps[q]
    }

    /// Configuration after every gate; entry 0 is the initial configuration.
    pub fn run(&self, start: StartConfig, rng: &mut StreamRng) -> Result<DiscreteTrajectory> {
        let dim = self.circuit.dim();
        let mut q = match start {
            StartConfig::Fixed(q) if q < dim => q,
            StartConfig::Fixed(q) => {
                return Err(Error::InvalidInput(format!(
                    "configuration {q} out of range 0..{dim}"
                )))
            }
            StartConfig::Born => sample_index(self.born(0).weights(), rng),
        };
        let mut configs = Vec::with_capacity(self.steps.len() + 1);
        configs.push(q);
        for step in &self.steps {
            if let Some((partner, p)) = step.jumps[q] {
                if p > 0.0 && rng.random::<f64>() < p {
                    q = partner;
                }
            }
            configs.push(q);
        }
        DiscreteTrajectory::new(configs, 1.0)
    }
}

/// One trajectory through `circuit` plus the final statevector.
pub fn run_circuit_trajectory(
    circuit: &Circuit,
    psi0: &StateVector,
    start: StartConfig,
    seed: u64,
) -> Result<(DiscreteTrajectory, StateVector)> {
    let process = CircuitProcess::new(circuit.clone(), psi0)?;
    let tr = process.run(start, &mut rng::from_seed(seed))?;
    Ok((tr, process.final_state().clone()))
}

/// Random circuit over `{H, X, T, CNOT}` (no CNOT on a single qubit).
pub fn random_circuit(n_qubits: usize, n_gates: usize, rng: &mut StreamRng) -> Result<Circuit> {
    let mut gates = Vec::with_capacity(n_gates);
    for _ in 0..n_gates {
        let choice = if n_qubits > 1 {
            rng.random_range(0..4)
        } else {
            rng.random_range(0..3)
        };
        let gate = match choice {
            0 => Gate::named("H", rng.random_range(0..n_qubits))?,
            1 => Gate::named("X", rng.random_range(0..n_qubits))?,
            2 => Gate::named("T", rng.random_range(0..n_qubits))?,
            _ => {
                let control = rng.random_range(0..n_qubits);
                let mut target = rng.random_range(0..n_qubits - 1);
                if target >= control {
                    target += 1;
                }
                Gate::cnot(control, target)
            }
        };
        gates.push(gate);
    }
    Circuit::new(n_qubits, gates)
}
