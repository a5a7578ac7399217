use serde::{Deserialize, Serialize};

/// Every numerical threshold used by the crate, in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `| ‖ψ‖² − 1 |` allowed for a state tagged normalized.
    pub normalization: f64,
    /// Entry-wise Hermiticity deviation.
    pub hermitian: f64,
    /// Most negative eigenvalue accepted in a density matrix.
    pub psd: f64,
    /// `| tr ρ − 1 |` for a density matrix.
    pub trace: f64,
    /// `P² = P`, `P = P†`, orthogonality and completeness of projector families.
    pub projector: f64,
    /// Orthonormality of user-supplied bases.
    pub orthonormal: f64,
    /// Schmidt coefficients closer than this (consecutive gaps) share a group.
    pub eps_deg: f64,
    /// Schmidt coefficients below this are treated as zero.
    pub schmidt_zero: f64,
    /// Components with squared norm at or below this are dropped.
    pub eps_branch: f64,
    /// Horizon-to-horizon probability change allowed for convergence.
    pub eps_p: f64,
    /// Horizon-to-horizon real-state trace distance allowed for convergence.
    pub eps_rho: f64,
    /// Number of trailing horizon pairs that must be stable.
    pub n_stable: usize,
    /// Overlap gap below which a branch match is flagged ambiguous.
    pub match_ambiguity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            normalization: 1e-12,
            hermitian: 1e-10,
            psd: 1e-10,
            trace: 1e-10,
            projector: 1e-10,
            orthonormal: 1e-10,
            eps_deg: 1e-8,
            schmidt_zero: 1e-12,
            eps_branch: 1e-12,
            eps_p: 1e-9,
            eps_rho: 1e-9,
            n_stable: 3,
            match_ambiguity: 1e-9,
        }
    }
}
