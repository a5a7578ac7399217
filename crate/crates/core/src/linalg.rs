//! Dense complex linear algebra on `H_A ⊗ H_B`.
//!
//! Flat index convention: `|a⟩⊗|b⟩ ↔ a·d_B + b`. Reshaping a state vector
//! with this convention gives the `d_A × d_B` amplitude matrix `M[a, b]`;
//! `(I ⊗ P)ψ` is then `M·Pᵀ` and `Tr_B ψψ†` is `M·M†`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest total dimension `d_A·d_B` accepted.
pub const MAX_DIM: usize = 4096;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Dimensions of the two tensor factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BipartiteSpace {
    d_a: usize,
    d_b: usize,
}

impl BipartiteSpace {
    pub fn new(d_a: usize, d_b: usize) -> Result<Self> {
        if d_a == 0 || d_b == 0 {
            return Err(Error::InvalidDimensions(format!(
                "factor dimensions must be positive (d_A = {d_a}, d_B = {d_b})"
            )));
        }
        match d_a.checked_mul(d_b) {
            Some(d) if d <= MAX_DIM => Ok(Self { d_a, d_b }),
            _ => Err(Error::InvalidDimensions(format!(
                "d_A·d_B = {d_a}·{d_b} exceeds {MAX_DIM}"
            ))),
        }
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    /// Total dimension `d_A·d_B`.
    pub fn dim(&self) -> usize {
        self.d_a * self.d_b
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < self.d_a && b < self.d_b);
        a * self.d_b + b
    }

    #[inline]
    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.d_b, i % self.d_b)
    }

    fn check_same(&self, other: &BipartiteSpace) -> Result<()> {
        if self != other {
            return Err(Error::InvalidDimensions(format!(
                "spaces differ: ({}, {}) vs ({}, {})",
                self.d_a, self.d_b, other.d_a, other.d_b
            )));
        }
        Ok(())
    }
}

/// Amplitude vector on the full space. Branch components are ordinary
/// (unnormalized) state vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: BipartiteSpace,
    amps: CVector,
}

impl StateVector {
    pub fn new(space: BipartiteSpace, amps: Vec<C64>) -> Result<Self> {
        Self::from_dvector(space, CVector::from_vec(amps))
    }

    pub fn from_dvector(space: BipartiteSpace, amps: CVector) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amps.len(),
            });
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument(
                "state amplitudes must be finite".into(),
            ));
        }
        Ok(Self { space, amps })
    }

    pub fn zeros(space: BipartiteSpace) -> Self {
        Self {
            space,
            amps: CVector::zeros(space.dim()),
        }
    }

    /// `|a⟩ ⊗ |b⟩`.
    pub fn basis(space: BipartiteSpace, a: usize, b: usize) -> Result<Self> {
        if a >= space.d_a() || b >= space.d_b() {
            return Err(Error::InvalidArgument(format!(
                "basis index ({a}, {b}) outside ({}, {})",
                space.d_a(),
                space.d_b()
            )));
        }
        let mut s = Self::zeros(space);
        s.amps[space.index(a, b)] = ONE;
        Ok(s)
    }

    /// `ψ_A ⊗ ψ_B`.
    pub fn product(psi_a: &[C64], psi_b: &[C64]) -> Result<Self> {
        let space = BipartiteSpace::new(psi_a.len(), psi_b.len())?;
        let amps = psi_a
            .iter()
            .flat_map(|&x| psi_b.iter().map(move |&y| x * y))
            .collect();
        Self::new(space, amps)
    }

    /// Reshape a `d_A × d_B` amplitude matrix into a state.
    pub fn from_amplitude_matrix(space: BipartiteSpace, m: &CMatrix) -> Result<Self> {
        if m.nrows() != space.d_a() || m.ncols() != space.d_b() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: m.nrows() * m.ncols(),
            });
        }
        let mut amps = CVector::zeros(space.dim());
        for a in 0..space.d_a() {
            for b in 0..space.d_b() {
                amps[space.index(a, b)] = m[(a, b)];
            }
        }
        Ok(Self { space, amps })
    }

    pub fn space(&self) -> BipartiteSpace {
        self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amps
    }

    /// `M[a, b] = ψ[a·d_B + b]`.
    pub fn amplitude_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.space.d_a(), self.space.d_b(), |a, b| {
            self.amps[self.space.index(a, b)]
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroState("normalization"));
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            space: self.space,
            amps: &self.amps * c,
        }
    }

    pub fn add(&self, other: &StateVector) -> Result<Self> {
        self.space.check_same(&other.space)?;
        Ok(Self {
            space: self.space,
            amps: &self.amps + &other.amps,
        })
    }

    pub fn sub(&self, other: &StateVector) -> Result<Self> {
        self.space.check_same(&other.space)?;
        Ok(Self {
            space: self.space,
            amps: &self.amps - &other.amps,
        })
    }

    /// Largest `|ψ_i − φ_i|`.
    pub fn max_abs_diff(&self, other: &StateVector) -> Result<f64> {
        self.space.check_same(&other.space)?;
        Ok(self
            .amps
            .iter()
            .zip(other.amps.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max))
    }

    /// Apply an operator on the full space.
    pub fn apply(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.space.dim() || u.ncols() != self.space.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                found: u.nrows(),
            });
        }
        Ok(Self {
            space: self.space,
            amps: u * &self.amps,
        })
    }
}

/// `⟨φ, ψ⟩`, conjugate-linear in `φ`.
pub fn inner_product(phi: &StateVector, psi: &StateVector) -> Result<C64> {
    if phi.amps.len() != psi.amps.len() {
        return Err(Error::DimensionMismatch {
            expected: phi.amps.len(),
            found: psi.amps.len(),
        });
    }
    phi.space.check_same(&psi.space)?;
    Ok(phi.amps.dotc(&psi.amps))
}

/// Operator on `H_B`; projectors are the main instances.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorB {
    m: CMatrix,
}

impl OperatorB {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDimensions(format!(
                "operator on H_B must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m })
    }

    pub fn identity(d_b: usize) -> Self {
        Self {
            m: CMatrix::identity(d_b, d_b),
        }
    }

    /// `Σ_j |v_j⟩⟨v_j|` for the given vectors (assumed orthonormal).
    pub fn projector_onto<'a, I>(d_b: usize, vectors: I) -> Self
    where
        I: IntoIterator<Item = &'a CVector>,
    {
        let mut m = CMatrix::zeros(d_b, d_b);
        for v in vectors {
            m += v * v.adjoint();
        }
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    /// `Re tr P`, which is the rank for a projector.
    pub fn trace_re(&self) -> f64 {
        self.m.trace().re
    }

    /// Check `P² = P` and `P = P†` to `tol`.
    pub fn validate_projector(&self, tol: f64) -> Result<()> {
        let herm = hermiticity_deviation(&self.m);
        if herm > tol {
            return Err(Error::InvalidProjector(format!(
                "P ≠ P† (deviation {herm:.3e})"
            )));
        }
        let idem = max_abs(&(&self.m * &self.m - &self.m));
        if idem > tol {
            return Err(Error::InvalidProjector(format!(
                "P² ≠ P (deviation {idem:.3e})"
            )));
        }
        Ok(())
    }
}

/// `(I ⊗ O)ψ` for any operator `O` on `H_B`.
pub fn apply_operator_b(psi: &StateVector, op: &OperatorB) -> Result<StateVector> {
    if op.dim() != psi.space.d_b() {
        return Err(Error::DimensionMismatch {
            expected: psi.space.d_b(),
            found: op.dim(),
        });
    }
    let m = psi.amplitude_matrix() * op.m.transpose();
    StateVector::from_amplitude_matrix(psi.space, &m)
}

/// `(I ⊗ P)ψ`.
pub fn apply_projector_b(psi: &StateVector, p: &OperatorB) -> Result<StateVector> {
    apply_operator_b(psi, p)
}

/// Hermitian positive semidefinite operator on `H_A`. Matrices returned as
/// states additionally have unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    /// Wrap a matrix after checking it is a valid state.
    pub fn new(m: CMatrix, tol: &crate::Tolerances) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(m)?;
        rho.validate(tol)?;
        Ok(rho)
    }

    pub fn from_matrix_unchecked(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDimensions(format!(
                "density matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m })
    }

    /// `|v⟩⟨v| / ⟨v,v⟩`.
    pub fn pure(v: &[C64]) -> Result<Self> {
        let v = CVector::from_column_slice(v);
        let n = v.norm_squared();
        if n == 0.0 {
            return Err(Error::ZeroState("pure state"));
        }
        Self::from_matrix_unchecked(&v * v.adjoint() / C64::new(n, 0.0))
    }

    pub fn diagonal(p: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(p.len(), p.iter().map(|&x| C64::new(x, 0.0)));
        Self::from_matrix_unchecked(CMatrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.m)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = hermitian_part(&self.m);
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Hermitian, PSD and unit trace to the given tolerances.
    pub fn validate(&self, tol: &crate::Tolerances) -> Result<()> {
        let herm = self.hermiticity_deviation();
        if herm > tol.hermitian {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let min = self.min_eigenvalue();
        if min < -tol.psd {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::InvalidDensityMatrix(format!(
                "trace {:.12} + {:.3e}i",
                tr.re, tr.im
            )));
        }
        Ok(())
    }

    /// Divide by the trace.
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace().re;
        if tr <= 0.0 {
            return Err(Error::ZeroState("density normalization"));
        }
        Ok(Self {
            m: &self.m / C64::new(tr, 0.0),
        })
    }

    /// Largest entry-wise `|ρ_ij − σ_ij|`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(max_abs(&(&self.m - &other.m)))
    }
}

/// Unnormalized reduced operator `Tr_B ψψ†`; its trace is `‖ψ‖²`.
pub fn partial_trace_b(psi: &StateVector) -> Result<DensityMatrix> {
    if psi.norm_sqr() == 0.0 {
        return Err(Error::ZeroState("partial trace"));
    }
    let m = psi.amplitude_matrix();
    DensityMatrix::from_matrix_unchecked(&m * m.adjoint())
}

/// Normalized reduced state `Tr_B ψψ† / ⟨ψ,ψ⟩`.
pub fn reduced_state(psi: &StateVector) -> Result<DensityMatrix> {
    let n = psi.norm_sqr();
    if n == 0.0 {
        return Err(Error::ZeroState("reduced state"));
    }
    let m = psi.amplitude_matrix();
    DensityMatrix::from_matrix_unchecked(&m * m.adjoint() / C64::new(n, 0.0))
}

/// `½ Σ |λ_i|` over the eigenvalues of `ρ − σ`.
pub fn trace_distance(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    hermitian_tol: f64,
) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    for m in [rho, sigma] {
        let dev = m.hermiticity_deviation();
        if dev > hermitian_tol {
            return Err(Error::NotHermitian { deviation: dev });
        }
    }
    let diff = hermitian_part(&(&rho.m - &sigma.m));
    let eig = SymmetricEigen::try_new(diff, 1e-15, 10_000).ok_or_else(|| {
        Error::Eigendecomposition("trace distance: no convergence".into())
    })?;
    Ok(0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>())
}

pub(crate) fn hermiticity_deviation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `A ⊗ B` with the crate's index convention.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}
