//! Finite-dimensional Hilbert space scaffolding.
//!
//! States, orthogonal decompositions into configuration blocks, Hermitian and
//! unitary operators, exact propagation via eigendecomposition, the principal
//! logarithm of a unitary, and seeded random instances. Units use hbar = 1.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub type C64 = Complex<f64>;

/// Tolerance for the structural checks on states and operators.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Born weights below this are treated as zero when dividing by them.
pub const WEIGHT_EPS: f64 = 1e-12;

/// Eigenphases within this distance of -pi are moved to +pi.
const BRANCH_SNAP: f64 = 1e-14;

/// Normalized complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized within 1e-12.
    pub fn new(amps: DVector<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm = amps.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > STRUCTURE_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amps })
    }

    /// Rescales `amps` to unit norm. Rejects the zero vector.
    pub fn normalized(amps: DVector<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm = amps.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            amps: amps / C64::new(norm, 0.0),
        })
    }

    pub fn from_slice(amps: &[C64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amps))
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if index >= dim {
            return Err(Error::InvalidInput(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amps = DVector::zeros(dim);
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    // Internal constructor for results of unitary maps, where the norm is
    // preserved up to rounding and a hard check would only add noise.
    pub(crate) fn from_unitary_image(amps: DVector<C64>) -> Self {
        Self { amps }
    }
}

/// Orthogonal decomposition of the basis indices into configuration blocks.
///
/// Configuration `q` is the position of its block in `blocks`; `P(q)` is the
/// diagonal projection onto the indices of that block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    blocks: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

impl Decomposition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidDecomposition("no configurations".into()));
        }
        let dim: usize = blocks.iter().map(Vec::len).sum();
        let mut owner = vec![usize::MAX; dim];
        for (q, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidDecomposition(format!("block {q} is empty")));
            }
            for &i in block {
                if i >= dim {
                    return Err(Error::InvalidDecomposition(format!(
                        "index {i} in block {q} outside 0..{dim}"
                    )));
                }
                if owner[i] != usize::MAX {
                    return Err(Error::InvalidDecomposition(format!(
                        "index {i} appears in blocks {} and {q}",
                        owner[i]
                    )));
                }
                owner[i] = q;
            }
        }
        let blocks = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        Ok(Self { blocks, owner })
    }

    /// One configuration per basis vector.
    pub fn singletons(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Self::new((0..dim).map(|i| vec![i]).collect())
    }

    pub fn dim(&self) -> usize {
        self.owner.len()
    }

    pub fn n_configs(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, q: usize) -> &[usize] {
        &self.blocks[q]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Configuration owning basis index `i`.
    pub fn config_of(&self, i: usize) -> usize {
        self.owner[i]
    }

    /// `P(q) v`.
    pub fn project(&self, q: usize, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(v.len());
        for &i in &self.blocks[q] {
            out[i] = v[i];
        }
        out
    }

    /// `<a|P(q)|b>`.
    pub fn block_inner(&self, q: usize, a: &DVector<C64>, b: &DVector<C64>) -> C64 {
        self.blocks[q].iter().map(|&i| a[i].conj() * b[i]).sum()
    }

    /// Dense matrix of `P(q)`.
    pub fn projector(&self, q: usize) -> DMatrix<C64> {
        let mut p = DMatrix::zeros(self.dim(), self.dim());
        for &i in &self.blocks[q] {
            p[(i, i)] = C64::new(1.0, 0.0);
        }
        p
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }
}

/// Self-adjoint matrix, interpreted as a Hamiltonian (units of inverse time).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: DMatrix<C64>,
}

impl HermitianOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        check_square(&matrix)?;
        let dev = max_abs(&(&matrix - matrix.adjoint()));
        if !(dev <= STRUCTURE_TOL) {
            return Err(Error::NotHermitian(dev));
        }
        // Store the exactly Hermitian part.
        let matrix = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { matrix })
    }

    pub fn from_real(rows: &[&[f64]]) -> Result<Self> {
        Self::new(real_matrix(rows)?)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// `e^{-i t H}` via the spectral decomposition.
    pub fn exp_minus_i(&self, t: f64) -> UnitaryOperator {
        Propagator::new(self).unitary(t)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Unitary matrix, interpreted as a one-step propagator.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOperator {
    matrix: DMatrix<C64>,
}

impl UnitaryOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        check_square(&matrix)?;
        let dev = unitarity_defect(&matrix);
        if !(dev <= STRUCTURE_TOL) {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> UnitaryOperator {
        UnitaryOperator {
            matrix: self.matrix.adjoint(),
        }
    }

    /// Product `self * rhs`.
    pub fn compose(&self, rhs: &UnitaryOperator) -> Result<UnitaryOperator> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rhs.dim(),
            });
        }
        Ok(UnitaryOperator {
            matrix: &self.matrix * &rhs.matrix,
        })
    }

    pub(crate) fn from_trusted(matrix: DMatrix<C64>) -> Self {
        Self { matrix }
    }
}

/// Born weights indexed by configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "negative or non-finite probability {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > STRUCTURE_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}")));
        }
        Ok(Self { weights })
    }

    pub fn point_mass(n: usize, q: usize) -> Result<Self> {
        if q >= n {
            return Err(Error::InvalidInput(format!(
                "configuration {q} out of range 0..{n}"
            )));
        }
        let mut w = vec![0.0; n];
        w[q] = 1.0;
        Ok(Self { weights: w })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, q: usize) -> f64 {
        self.weights[q]
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self
            .weights
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Inverse-CDF draw in ascending configuration order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.weights, rng)
    }

    pub(crate) fn from_trusted(weights: Vec<f64>) -> Self {
        Self { weights }
    }
}

/// Inverse-CDF sampling over nonnegative weights (need not be normalized).
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// `<Psi|P(q)|Psi>` for every configuration.
pub fn born_distribution(psi: &StateVector, dec: &Decomposition) -> Result<ProbabilityVector> {
    dec.check_dim(psi.dim())?;
    Ok(ProbabilityVector::from_trusted(born_weights(
        psi.amplitudes(),
        dec,
    )))
}

pub(crate) fn born_weights(amps: &DVector<C64>, dec: &Decomposition) -> Vec<f64> {
    dec.blocks()
        .iter()
        .map(|b| b.iter().map(|&i| amps[i].norm_sqr()).sum())
        .collect()
}

/// Spectral form of a Hamiltonian, `H = V diag(lambda) V^*`.
#[derive(Debug, Clone)]
pub struct Propagator {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<C64>,
}

impl Propagator {
    pub fn new(h: &HermitianOperator) -> Self {
        let eig = h.matrix.clone().symmetric_eigen();
        Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `e^{-i t H}` as a matrix.
    pub fn unitary(&self, t: f64) -> UnitaryOperator {
        let phases = self.eigenvalues.map(|l| C64::from_polar(1.0, -l * t));
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * phases[j]);
        UnitaryOperator::from_trusted(scaled * v.adjoint())
    }

    /// Precomputes eigenbasis coefficients of `psi0` for repeated evaluation.
    pub fn spectral_state(&self, psi0: &StateVector) -> SpectralState<'_> {
        SpectralState {
            prop: self,
            coeffs: self.eigenvectors.adjoint() * psi0.amplitudes(),
        }
    }

    pub fn evolve(&self, psi0: &StateVector, t: f64) -> StateVector {
        if t == 0.0 {
            return psi0.clone();
        }
        self.spectral_state(psi0).at(t)
    }
}

/// A state expressed in the eigenbasis of a fixed Hamiltonian, so that
/// `Psi_t` costs one matrix-vector product for any `t`.
#[derive(Debug, Clone)]
pub struct SpectralState<'a> {
    prop: &'a Propagator,
    coeffs: DVector<C64>,
}

impl SpectralState<'_> {
    pub fn amplitudes_at(&self, t: f64) -> DVector<C64> {
        let rotated = DVector::from_fn(self.coeffs.len(), |k, _| {
            self.coeffs[k] * C64::from_polar(1.0, -self.prop.eigenvalues[k] * t)
        });
        &self.prop.eigenvectors * rotated
    }

    /// Allocation-free form of [`amplitudes_at`](Self::amplitudes_at);
    /// `rot` is scratch of the same length.
    pub fn amplitudes_into(&self, t: f64, rot: &mut DVector<C64>, out: &mut DVector<C64>) {
        for k in 0..self.coeffs.len() {
            let (s, c) = (-self.prop.eigenvalues[k] * t).sin_cos();
            rot[k] = self.coeffs[k] * C64::new(c, s);
        }
        out.gemv(
            C64::new(1.0, 0.0),
            &self.prop.eigenvectors,
            rot,
            C64::new(0.0, 0.0),
        );
    }

    pub fn at(&self, t: f64) -> StateVector {
        StateVector::from_unitary_image(self.amplitudes_at(t))
    }
}

/// `e^{-iHt} psi0`, exact up to rounding.
pub fn evolve_continuous(h: &HermitianOperator, psi0: &StateVector, t: f64) -> Result<StateVector> {
    if h.dim() != psi0.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: psi0.dim(),
        });
    }
    Ok(Propagator::new(h).evolve(psi0, t))
}

/// `U psi`.
pub fn evolve_discrete(u: &UnitaryOperator, psi: &StateVector) -> Result<StateVector> {
    if u.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: psi.dim(),
        });
    }
    Ok(StateVector::from_unitary_image(
        &u.matrix * psi.amplitudes(),
    ))
}

/// Unitary diagonalization `U = Q diag(e^{-i theta}) Q^*` with `theta` in
/// `(-pi, pi]`. Uses the complex Schur form, which for a normal matrix is
/// diagonal and yields an orthonormal eigenbasis even for degenerate spectra.
pub fn unitary_eigenphases(u: &UnitaryOperator) -> (DMatrix<C64>, Vec<f64>) {
    let (q, t) = u.matrix.clone().schur().unpack();
    let phases = t
        .diagonal()
        .iter()
        .map(|lambda| {
            let theta = -lambda.arg();
            if theta <= -std::f64::consts::PI + BRANCH_SNAP {
                std::f64::consts::PI
            } else {
                theta
            }
        })
        .collect();
    (q, phases)
}

/// Reconstruction tolerance used by [`principal_log_hamiltonian`].
pub const LOG_RECONSTRUCTION_TOL: f64 = 1e-12;

/// The Hermitian `H` with `e^{-i tau H} = U` and spectrum in `(-pi/tau, pi/tau]`.
///
/// The result is checked by rebuilding `e^{-i tau H}` from a fresh Hermitian
/// eigendecomposition; a Frobenius residual above
/// [`LOG_RECONSTRUCTION_TOL`] is reported as a numerical failure.
pub fn principal_log_hamiltonian(u: &UnitaryOperator, tau: f64) -> Result<HermitianOperator> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!(
            "time step must be positive, got {tau}"
        )));
    }
    let (q, phases) = unitary_eigenphases(u);
    let d = u.dim();
    let scaled = DMatrix::from_fn(d, d, |i, j| q[(i, j)] * (phases[j] / tau));
    let raw = scaled * q.adjoint();
    let h = HermitianOperator {
        matrix: (&raw + raw.adjoint()) * C64::new(0.5, 0.0),
    };
    let residual = (h.exp_minus_i(tau).matrix - &u.matrix).norm();
    if !(residual <= LOG_RECONSTRUCTION_TOL) {
        return Err(Error::Numerical(format!(
            "principal logarithm reconstruction residual {residual:e} exceeds {LOG_RECONSTRUCTION_TOL:e}"
        )));
    }
    Ok(h)
}

/// Haar-distributed unitary from a seed.
pub fn haar_random_unitary(d: usize, seed: u64) -> Result<UnitaryOperator> {
    if d == 0 {
        return Err(Error::InvalidDimension(d));
    }
    Ok(haar_unitary_from(d, &mut rng::from_seed(seed)))
}

/// QR of a complex Ginibre matrix with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary_from(d: usize, rng: &mut StreamRng) -> UnitaryOperator {
    let z = DMatrix::from_fn(d, d, |_, _| gaussian_c64(rng));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    UnitaryOperator { matrix: q }
}

/// Uniform point on the unit sphere of `C^d` from a seed.
pub fn random_state(d: usize, seed: u64) -> Result<StateVector> {
    if d == 0 {
        return Err(Error::InvalidDimension(d));
    }
    Ok(random_state_from(d, &mut rng::from_seed(seed)))
}

pub fn random_state_from(d: usize, rng: &mut StreamRng) -> StateVector {
    loop {
        let z = DVector::from_fn(d, |_, _| gaussian_c64(rng));
        if let Ok(psi) = StateVector::normalized(z) {
            return psi;
        }
    }
}

/// Random Hermitian matrix with independent Gaussian entries (GUE-like).
pub fn random_hermitian_from(d: usize, rng: &mut StreamRng) -> HermitianOperator {
    let z = DMatrix::from_fn(d, d, |_, _| gaussian_c64(rng));
    HermitianOperator {
        matrix: (&z + z.adjoint()) * C64::new(0.5, 0.0),
    }
}

fn gaussian_c64(rng: &mut StreamRng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub(crate) fn real_matrix(rows: &[&[f64]]) -> Result<DMatrix<C64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput(
            "matrix rows must all have length equal to the row count".into(),
        ));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0)))
}

fn check_square(m: &DMatrix<C64>) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn unitarity_defect(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    max_abs(&(m * m.adjoint() - DMatrix::<C64>::identity(d, d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_x() -> HermitianOperator {
        HermitianOperator::from_real(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    #[test]
    fn born_examples() {
        let dec3 = Decomposition::singletons(3).unwrap();
        let psi = StateVector::basis(3, 0).unwrap();
        assert_eq!(
            born_distribution(&psi, &dec3).unwrap().weights(),
            &[1.0, 0.0, 0.0]
        );

        let dec2 = Decomposition::singletons(2).unwrap();
        let psi = StateVector::from_slice(&[c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)]).unwrap();
        let w = born_distribution(&psi, &dec2).unwrap();
        assert_abs_diff_eq!(w.get(0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w.get(1), 0.5, epsilon = 1e-15);

        let t = PI / 6.0;
        let psi = StateVector::from_slice(&[c(t.cos(), 0.0), c(0.0, -t.sin())]).unwrap();
        let w = born_distribution(&psi, &dec2).unwrap();
        assert_abs_diff_eq!(w.get(0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(w.get(1), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn born_rejects_dimension_mismatch() {
        let dec = Decomposition::singletons(3).unwrap();
        let psi = StateVector::basis(2, 0).unwrap();
        assert!(matches!(
            born_distribution(&psi, &dec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn decomposition_validation() {
        assert!(Decomposition::new(vec![vec![0, 1], vec![2]]).is_ok());
        assert!(Decomposition::new(vec![vec![0, 1], vec![1]]).is_err());
        assert!(Decomposition::new(vec![vec![0], vec![]]).is_err());
        assert!(Decomposition::new(vec![vec![0], vec![3]]).is_err());
        assert!(Decomposition::new(vec![]).is_err());
        let dec = Decomposition::new(vec![vec![2, 0], vec![1]]).unwrap();
        assert_eq!(dec.config_of(2), 0);
        assert_eq!(dec.block(0), &[0, 2]);
    }

    #[test]
    fn rejects_malformed_operators() {
        let m =
            DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            HermitianOperator::new(m.clone()),
            Err(Error::NotHermitian(_))
        ));
        assert!(matches!(UnitaryOperator::new(m), Err(Error::NotUnitary(_))));
        assert!(StateVector::from_slice(&[c(1.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(StateVector::normalized(DVector::zeros(2)).is_err());
    }

    #[test]
    fn evolve_continuous_examples() {
        let psi0 = StateVector::basis(2, 0).unwrap();
        let h = sigma_x();
        assert_eq!(
            evolve_continuous(&h, &psi0, 0.0).unwrap().amplitudes(),
            psi0.amplitudes()
        );
        for &t in &[0.3, 1.0, 2.5] {
            let psi = evolve_continuous(&h, &psi0, t).unwrap();
            assert_abs_diff_eq!(
                (psi.amplitudes()[0] - c(t.cos(), 0.0)).norm(),
                0.0,
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                (psi.amplitudes()[1] - c(0.0, -t.sin())).norm(),
                0.0,
                epsilon = 1e-13
            );
        }
        let h = HermitianOperator::from_real(&[&[1.0, 0.0], &[0.0, 2.0]]).unwrap();
        let psi0 =
            StateVector::from_slice(&[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]).unwrap();
        let psi = evolve_continuous(&h, &psi0, PI).unwrap();
        assert_abs_diff_eq!(
            (psi.amplitudes()[0] - c(-FRAC_1_SQRT_2, 0.0)).norm(),
            0.0,
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            (psi.amplitudes()[1] - c(FRAC_1_SQRT_2, 0.0)).norm(),
            0.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn evolve_discrete_examples() {
        let psi = StateVector::from_slice(&[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]).unwrap();
        let id = UnitaryOperator::identity(2);
        assert_eq!(evolve_discrete(&id, &psi).unwrap(), psi);
        let z = UnitaryOperator::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(1.0, 0.0),
            c(-1.0, 0.0),
        ])))
        .unwrap();
        let out = evolve_discrete(&z, &psi).unwrap();
        assert_abs_diff_eq!(out.amplitudes()[1].re, -FRAC_1_SQRT_2, epsilon = 1e-15);
        // e^{-i theta sigma_x} = cos(theta) I - i sin(theta) sigma_x
        let theta = PI / 2.0;
        let u = UnitaryOperator::new(DMatrix::from_row_slice(
            2,
            2,
            &[
                c(theta.cos(), 0.0),
                c(0.0, -theta.sin()),
                c(0.0, -theta.sin()),
                c(theta.cos(), 0.0),
            ],
        ))
        .unwrap();
        let out = evolve_discrete(&u, &StateVector::basis(2, 0).unwrap()).unwrap();
        assert_abs_diff_eq!((out.amplitudes()[0]).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            (out.amplitudes()[1] - c(0.0, -1.0)).norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn principal_log_examples() {
        let h = principal_log_hamiltonian(&UnitaryOperator::identity(3), 0.7).unwrap();
        assert!(max_abs(h.matrix()) < 1e-15);

        let u = UnitaryOperator::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(1.0, 0.0),
            c(-1.0, 0.0),
        ])))
        .unwrap();
        let h = principal_log_hamiltonian(&u, 1.0).unwrap();
        assert_abs_diff_eq!(h.matrix()[(0, 0)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h.matrix()[(1, 1)].re, PI, epsilon = 1e-15);
        assert_abs_diff_eq!(h.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-15);

        // -1 with a tiny negative imaginary part sits just inside the branch.
        let u = UnitaryOperator::new(DMatrix::from_diagonal(&DVector::from_vec(vec![c(
            -1.0, -0.0,
        )])))
        .unwrap();
        let h = principal_log_hamiltonian(&u, 2.0).unwrap();
        assert_abs_diff_eq!(h.matrix()[(0, 0)].re, PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn principal_log_rejects_bad_tau() {
        assert!(principal_log_hamiltonian(&UnitaryOperator::identity(2), 0.0).is_err());
        assert!(principal_log_hamiltonian(&UnitaryOperator::identity(2), -1.0).is_err());
    }

    #[test]
    fn haar_and_state_basics() {
        let u = haar_random_unitary(1, 9).unwrap();
        assert_abs_diff_eq!(u.matrix()[(0, 0)].norm(), 1.0, epsilon = 1e-14);
        assert_eq!(
            haar_random_unitary(4, 11).unwrap(),
            haar_random_unitary(4, 11).unwrap()
        );
        assert_ne!(
            haar_random_unitary(4, 11).unwrap(),
            haar_random_unitary(4, 12).unwrap()
        );
        let psi = random_state(1, 3).unwrap();
        assert_abs_diff_eq!(psi.amplitudes()[0].norm(), 1.0, epsilon = 1e-14);
        assert_eq!(random_state(5, 1).unwrap(), random_state(5, 1).unwrap());
        assert!(haar_random_unitary(0, 1).is_err());
        assert!(random_state(0, 1).is_err());
    }

    #[test]
    fn haar_first_moment() {
        // E|U_00|^2 = 1/d; per-sample variance of |U_00|^2 is (d-1)/(d^2 (d+1)).
        let n = 10_000;
        let d = 3;
        let mut rng = rng::from_seed(2024);
        let mean = (0..n)
            .map(|_| haar_unitary_from(d, &mut rng).matrix()[(0, 0)].norm_sqr())
            .sum::<f64>()
            / n as f64;
        let var = (d as f64 - 1.0) / ((d * d) as f64 * (d as f64 + 1.0));
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn random_state_first_moment() {
        let n = 10_000;
        let mut rng = rng::from_seed(77);
        let mut sum = 0.0;
        for _ in 0..n {
            let psi = random_state_from(3, &mut rng);
            assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
            sum += psi.amplitudes()[0].norm_sqr();
        }
        let mean = sum / n as f64;
        // |psi_0|^2 ~ Beta(1, 2): variance 1/18.
        let se = (1.0 / 18.0 / n as f64).sqrt();
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn haar_outputs_are_unitary() {
        let mut rng = rng::from_seed(5);
        for d in 1..=8 {
            let u = haar_unitary_from(d, &mut rng);
            assert!(unitarity_defect(u.matrix()) < 1e-13);
        }
    }
}
