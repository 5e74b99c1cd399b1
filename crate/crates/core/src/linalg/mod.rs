//! Dense complex linear algebra for small qubit registers.
//!
//! Conventions used throughout the crate:
//! - `|0⟩` is the ground state and `σz = diag(+1, −1)`, so `σz|0⟩ = +|0⟩`.
//! - Register site 0 is the leftmost (slowest-varying) Kronecker factor, i.e.
//!   the most significant bit of a basis index.

mod register;

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use register::{
    apply_left, apply_right, apply_superop, embed, embed_single_site, partial_trace,
    partial_trace_operator, place_factors, SiteMap,
};

pub type ComplexScalar = Complex64;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Square complex matrix acting on a register (or any square space).
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(DMatrix<Complex64>);

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    /// Wraps a matrix after checking it is square, non-empty and finite.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let z = m[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds a matrix from row-major rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare { rows: n, cols: bad.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    pub fn diagonal(values: &[Complex64]) -> Self {
        let n = values.len();
        Self(DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { ZERO }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Number of qubits if the dimension is a power of two.
    pub fn n_qubits(&self) -> Option<usize> {
        let d = self.dim();
        d.is_power_of_two().then(|| d.trailing_zeros() as usize)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: Complex64) {
        self.0[(i, j)] = z;
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn conjugate(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    pub fn diag(&self) -> Vec<Complex64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = OperatorMatrix(self.0.adjoint() * &self.0);
        prod.max_abs_diff(&OperatorMatrix::identity(self.dim())) <= tol
    }

    /// Hermitian with all eigenvalues ≥ −tol.
    pub fn is_psd(&self, tol: f64) -> bool {
        match hermitian_eig(self) {
            Ok((vals, _)) => vals.first().is_none_or(|&v| v >= -tol),
            Err(_) => false,
        }
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let out = &self.0 * DVector::from_column_slice(v);
        out.iter().copied().collect()
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: Self) -> OperatorMatrix {
        OperatorMatrix(&self.0 - &rhs.0)
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        OperatorMatrix(-&self.0)
    }
}

/// Kronecker product with `a` as the slow index.
pub fn kron(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    OperatorMatrix(a.0.kronecker(&b.0))
}

/// Kronecker product of a sequence; the first factor is the slowest index.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a OperatorMatrix>) -> OperatorMatrix {
    factors
        .into_iter()
        .fold(OperatorMatrix::identity(1), |acc, f| kron(&acc, f))
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending, eigenvectors as columns.
pub fn hermitian_eig(h: &OperatorMatrix) -> Result<(Vec<f64>, OperatorMatrix)> {
    let err = h.hermiticity_error();
    if err > 1e-9 {
        return Err(Error::NotHermitian(err));
    }
    // Symmetrize so that round-off asymmetry does not leak into the solver.
    let sym = (&h.0 + h.0.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(h.dim(), h.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, OperatorMatrix(vectors)))
}

/// Applies a real function to the spectrum of a Hermitian matrix: `V f(λ) V†`.
pub fn hermitian_function(
    h: &OperatorMatrix,
    f: impl Fn(f64) -> Complex64,
) -> Result<OperatorMatrix> {
    let (vals, vecs) = hermitian_eig(h)?;
    let d = h.dim();
    let fv: Vec<Complex64> = vals.iter().map(|&l| f(l)).collect();
    let scaled = DMatrix::from_fn(d, d, |i, j| vecs.0[(i, j)] * fv[j]);
    Ok(OperatorMatrix(scaled * vecs.0.adjoint()))
}

/// Single-qubit Pauli labels in the fixed order I, X, Y, Z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> OperatorMatrix {
        match self {
            Pauli::I => OperatorMatrix::identity(2),
            Pauli::X => pauli::sigma_x(),
            Pauli::Y => pauli::sigma_y(),
            Pauli::Z => pauli::sigma_z(),
        }
    }

    pub fn label(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Single-qubit operators.
pub mod pauli {
    use super::{OperatorMatrix, I, ONE, ZERO};

    pub fn sigma_x() -> OperatorMatrix {
        OperatorMatrix::from_fn(2, |i, j| if i != j { ONE } else { ZERO })
    }

    pub fn sigma_y() -> OperatorMatrix {
        OperatorMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 1) => -I,
            (1, 0) => I,
            _ => ZERO,
        })
    }

    pub fn sigma_z() -> OperatorMatrix {
        OperatorMatrix::diagonal(&[ONE, -ONE])
    }

    /// `σ− = |0⟩⟨1|`, lowering toward the ground state.
    pub fn sigma_minus() -> OperatorMatrix {
        OperatorMatrix::from_fn(2, |i, j| if (i, j) == (0, 1) { ONE } else { ZERO })
    }

    pub fn sigma_plus() -> OperatorMatrix {
        OperatorMatrix::from_fn(2, |i, j| if (i, j) == (1, 0) { ONE } else { ZERO })
    }

    /// Excitation number `a†a = |1⟩⟨1|`.
    pub fn number() -> OperatorMatrix {
        OperatorMatrix::diagonal(&[ZERO, ONE])
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(Vec<Complex64>);

impl StateVector {
    /// Normalizes `amplitudes`; fails on zero norm or non-finite entries.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState("empty amplitude vector".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::InvalidState("zero-norm vector".into()));
        }
        Ok(Self(amplitudes.into_iter().map(|z| z / norm).collect()))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = vec![ZERO; dim];
        v[index] = ONE;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> OperatorMatrix {
        OperatorMatrix::from_fn(self.dim(), |i, j| self.0[i] * self.0[j].conj())
    }

    /// `⟨ψ|A|ψ⟩`
    pub fn expectation(&self, a: &OperatorMatrix) -> Complex64 {
        let av = a.matvec(&self.0);
        self.0.iter().zip(&av).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn kron(&self, other: &StateVector) -> StateVector {
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.0 {
            for b in &other.0 {
                out.push(a * b);
            }
        }
        StateVector(out)
    }

    /// Orthogonal complement of a single-qubit state.
    pub fn qubit_complement(&self) -> Option<StateVector> {
        (self.dim() == 2).then(|| StateVector(vec![-self.0[1].conj(), self.0[0].conj()]))
    }
}

/// `(|00⟩ + |11⟩)/√2`
pub fn phi_plus() -> StateVector {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    StateVector(vec![h, ZERO, ZERO, h])
}

/// The four Bell states in the order Φ+, Ψ+, Φ−, Ψ−.
pub fn bell_basis() -> [StateVector; 4] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [
        StateVector(vec![h, ZERO, ZERO, h]),
        StateVector(vec![ZERO, h, h, ZERO]),
        StateVector(vec![h, ZERO, ZERO, -h]),
        StateVector(vec![ZERO, h, -h, ZERO]),
    ]
}

/// Positive semidefinite, unit-trace Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(OperatorMatrix);

pub const DENSITY_TOL: f64 = 1e-10;

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (all within 1e-10).
    pub fn new(m: OperatorMatrix) -> Result<Self> {
        Self::with_tolerance(m, DENSITY_TOL)
    }

    pub fn with_tolerance(m: OperatorMatrix, tol: f64) -> Result<Self> {
        let herm = m.hermiticity_error();
        if herm > tol {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let (vals, _) = hermitian_eig(&m)?;
        if let Some(&min) = vals.first() {
            if min < -tol {
                return Err(Error::InvalidState(format!(
                    "not positive semidefinite (min eigenvalue {min:.3e})"
                )));
            }
        }
        Ok(Self(m))
    }

    /// Skips validation; for states produced by maps already known to be CPTP.
    pub(crate) fn from_trusted(m: OperatorMatrix) -> Self {
        Self(m)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        Self(psi.projector())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(OperatorMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn n_qubits(&self) -> Option<usize> {
        self.0.n_qubits()
    }

    pub fn operator(&self) -> &OperatorMatrix {
        &self.0
    }

    pub fn into_operator(self) -> OperatorMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn fidelity_with_pure(&self, psi: &StateVector) -> f64 {
        psi.expectation(&self.0).re
    }

    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eig(&self.0).map(|(v, _)| v).unwrap_or_default()
    }
}
