//! Unitary evolution under a piecewise-constant Hamiltonian.
//!
//! Each segment is diagonalized once, `H = V·diag(λ)·V†`, and the spectrum is
//! reused for every interval length, so `exp(−iHΔt) = V·diag(e^{−iλΔt})·V†`
//! is exact up to the eigensolver's rounding.

use std::sync::OnceLock;

use nalgebra::SymmetricEigen;

use crate::linalg::{hermiticity_deviation, max_abs, BipartiteSpace, CMatrix, CVector, StateVector, C64};
use crate::{Error, Result, Tolerances};

/// Slack when comparing a time against the schedule range.
const TIME_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Spectrum {
    energies: Vec<f64>,
    vectors: CMatrix,
}

impl Spectrum {
    fn of(h: &CMatrix) -> Result<Self> {
        let n = h.nrows();
        if h.iter().all(|z| *z == C64::new(0.0, 0.0)) {
            return Ok(Self {
                energies: vec![0.0; n],
                vectors: CMatrix::identity(n, n),
            });
        }
        let eig = SymmetricEigen::try_new(h.clone(), 1e-15, 100_000).ok_or_else(|| {
            Error::Eigendecomposition(format!("{n}x{n} Hermitian solver did not converge"))
        })?;
        let scale = max_abs(h).max(1.0);
        let v = &eig.eigenvectors;
        let lambda = CMatrix::from_diagonal(&eig.eigenvalues.map(|x| C64::new(x, 0.0)));
        let residual = max_abs(&(h * v - v * lambda));
        let unitarity = max_abs(&(v.adjoint() * v - CMatrix::identity(n, n)));
        if !(residual <= 1e-9 * scale) || !(unitarity <= 1e-10) {
            return Err(Error::Eigendecomposition(format!(
                "inaccurate spectrum (residual {residual:.3e}, eigenvector unitarity {unitarity:.3e})"
            )));
        }
        Ok(Self {
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        })
    }

    fn phases(&self, dt: f64) -> CVector {
        CVector::from_iterator(
            self.energies.len(),
            self.energies.iter().map(|&e| C64::from_polar(1.0, -e * dt)),
        )
    }

    fn propagator(&self, dt: f64) -> CMatrix {
        let phases = self.phases(dt);
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        scaled * self.vectors.adjoint()
    }

    fn apply(&self, psi: &CVector, dt: f64) -> CVector {
        let mut coeffs = self.vectors.ad_mul(psi);
        coeffs.component_mul_assign(&self.phases(dt));
        &self.vectors * coeffs
    }
}

/// One constant-Hamiltonian interval. `duration` is infinite for an
/// open-ended final segment.
#[derive(Debug)]
pub struct Segment {
    hamiltonian: CMatrix,
    start: f64,
    duration: f64,
    spectrum: OnceLock<Spectrum>,
}

impl Segment {
    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    fn spectrum(&self) -> Result<&Spectrum> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let s = Spectrum::of(&self.hamiltonian)?;
        Ok(self.spectrum.get_or_init(|| s))
    }
}

impl Clone for Segment {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        Self {
            hamiltonian: self.hamiltonian.clone(),
            start: self.start,
            duration: self.duration,
            spectrum,
        }
    }
}

/// Ordered list of constant-Hamiltonian segments starting at `t = 0`.
#[derive(Debug, Clone)]
pub struct HamiltonianSchedule {
    space: BipartiteSpace,
    segments: Vec<Segment>,
}

/// Incremental construction of a [`HamiltonianSchedule`].
#[derive(Debug, Clone)]
pub struct ScheduleBuilder {
    space: BipartiteSpace,
    pieces: Vec<(CMatrix, f64)>,
    open_ended: bool,
}

impl ScheduleBuilder {
    /// Append a segment of finite positive `duration`.
    pub fn segment(mut self, hamiltonian: CMatrix, duration: f64) -> Self {
        self.pieces.push((hamiltonian, duration));
        self
    }

    /// Append a final segment that never ends.
    pub fn open_segment(mut self, hamiltonian: CMatrix) -> Self {
        self.pieces.push((hamiltonian, f64::INFINITY));
        self.open_ended = true;
        self
    }

    pub fn build(self, tol: &Tolerances) -> Result<HamiltonianSchedule> {
        if self.pieces.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no segments".into()));
        }
        let d = self.space.dim();
        let last = self.pieces.len() - 1;
        let mut segments = Vec::with_capacity(self.pieces.len());
        let mut start = 0.0;
        for (i, (h, duration)) in self.pieces.into_iter().enumerate() {
            if h.nrows() != d || h.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: h.nrows(),
                });
            }
            let dev = hermiticity_deviation(&h);
            if !(dev <= tol.hermitian) {
                return Err(Error::NotHermitian { deviation: dev });
            }
            let open = duration == f64::INFINITY;
            if open && !(self.open_ended && i == last) {
                return Err(Error::InvalidSchedule(format!(
                    "segment {i}: only the final segment may be open-ended"
                )));
            }
            if !open && !(duration.is_finite() && duration > 0.0) {
                return Err(Error::InvalidSchedule(format!(
                    "segment {i}: duration must be positive and finite, got {duration}"
                )));
            }
            segments.push(Segment {
                hamiltonian: h,
                start,
                duration,
                spectrum: OnceLock::new(),
            });
            start += duration;
        }
        Ok(HamiltonianSchedule {
            space: self.space,
            segments,
        })
    }
}

impl HamiltonianSchedule {
    pub fn builder(space: BipartiteSpace) -> ScheduleBuilder {
        ScheduleBuilder {
            space,
            pieces: Vec::new(),
            open_ended: false,
        }
    }

    /// Time-independent, open-ended schedule.
    pub fn constant(space: BipartiteSpace, hamiltonian: CMatrix, tol: &Tolerances) -> Result<Self> {
        Self::builder(space).open_segment(hamiltonian).build(tol)
    }

    pub fn space(&self) -> BipartiteSpace {
        self.space
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Last time covered; infinite for open-ended schedules.
    pub fn horizon(&self) -> f64 {
        self.segments.last().map_or(0.0, Segment::end)
    }

    pub fn is_open_ended(&self) -> bool {
        self.horizon().is_infinite()
    }

    /// Diagonalize every segment now instead of on first use.
    pub fn precompute(&self) -> Result<()> {
        self.segments.iter().try_for_each(|s| s.spectrum().map(|_| ()))
    }

    /// Hamiltonian in force at time `t` (the later segment at a boundary).
    pub fn hamiltonian_at(&self, t: f64) -> Result<&CMatrix> {
        self.check_time(t)?;
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.start <= t)
            .unwrap_or(&self.segments[0]);
        Ok(&seg.hamiltonian)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.horizon();
        if !(t >= -TIME_SLACK) || t > horizon + TIME_SLACK * horizon.max(1.0) {
            return Err(Error::TimeOutOfRange { time: t, horizon });
        }
        Ok(())
    }

    /// Segment pieces `(segment, Δt)` covering `[t1, t2]` in time order.
    fn pieces(&self, t1: f64, t2: f64) -> impl Iterator<Item = (&Segment, f64)> {
        self.segments.iter().filter_map(move |s| {
            let lo = t1.max(s.start);
            let hi = t2.min(s.end());
            (hi > lo).then_some((s, hi - lo))
        })
    }

    /// `U(t2, t1)` as a matrix. Backward intervals (`t2 < t1`) give the adjoint.
    pub fn propagator(&self, t1: f64, t2: f64) -> Result<Propagator> {
        self.check_time(t1)?;
        self.check_time(t2)?;
        let d = self.space.dim();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let mut u = CMatrix::identity(d, d);
        for (seg, dt) in self.pieces(lo, hi) {
            u = seg.spectrum()?.propagator(dt) * u;
        }
        if t2 < t1 {
            u = u.adjoint();
        }
        Ok(Propagator {
            t_from: t1,
            t_to: t2,
            u,
        })
    }

    /// `U(t2, t1)ψ`, applied segment by segment. Backward intervals run the
    /// inverse evolution.
    pub fn propagate(&self, psi: &StateVector, t1: f64, t2: f64) -> Result<StateVector> {
        if psi.space() != self.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                found: psi.space().dim(),
            });
        }
        self.check_time(t1)?;
        self.check_time(t2)?;
        let mut amps = psi.amplitudes().clone();
        if t1 <= t2 {
            for (seg, dt) in self.pieces(t1, t2) {
                amps = seg.spectrum()?.apply(&amps, dt);
            }
        } else {
            let pieces: Vec<_> = self.pieces(t2, t1).collect();
            for (seg, dt) in pieces.into_iter().rev() {
                amps = seg.spectrum()?.apply(&amps, -dt);
            }
        }
        StateVector::from_dvector(self.space, amps)
    }
}

/// `ψ(t2) = U(t2, t1)ψ(t1)` under `schedule`.
pub fn propagate(
    psi: &StateVector,
    t1: f64,
    t2: f64,
    schedule: &HamiltonianSchedule,
) -> Result<StateVector> {
    schedule.propagate(psi, t1, t2)
}

/// Unitary between two times.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub t_from: f64,
    pub t_to: f64,
    pub u: CMatrix,
}

impl Propagator {
    /// Largest entry of `|U†U − I|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.u.nrows();
        max_abs(&(self.u.adjoint() * &self.u - CMatrix::identity(n, n)))
    }
}

/// `exp(−iHΔt)` for a single Hermitian `H`, via its spectrum.
pub fn eigen_propagator(h: &CMatrix, dt: f64, tol: &Tolerances) -> Result<Propagator> {
    if h.nrows() != h.ncols() {
        return Err(Error::InvalidDimensions(format!(
            "Hamiltonian must be square, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let dev = hermiticity_deviation(h);
    if !(dev <= tol.hermitian) {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let u = Spectrum::of(h)?.propagator(dt);
    Ok(Propagator {
        t_from: 0.0,
        t_to: dt,
        u,
    })
}

/// `Re ⟨ψ, Hψ⟩`.
pub fn energy(psi: &StateVector, h: &CMatrix) -> Result<f64> {
    let h_psi = psi.apply(h)?;
    Ok(psi.amplitudes().dotc(h_psi.amplitudes()).re)
}
