//! Final-time branches, two-time weights and real states.
//!
//! For a horizon `T`, the branches are the nonzero components
//! `ψ_l(T) = (I ⊗ P_l)ψ(T)` with probability `p_l = ‖ψ_l(T)‖²`. At an earlier
//! time `t` the state splits into components `ψ_k(t)`, and branch `l`
//! weights them by
//!
//! ```text
//! q_l(k, t) = |⟨ψ_l(T), U(T, t) ψ_k(t)⟩|²,    p_l(k, t) = q_l(k, t) / Σ_k q_l(k, t)
//! ```
//!
//! The real state of the branch on `H_A` is the `p_l(k, t)`-weighted mixture
//! of the normalized reduced states `Tr_B ψ_k ψ_k† / ⟨ψ_k, ψ_k⟩`.
//!
//! The inner product is evaluated as `⟨U(t, T)ψ_l(T), ψ_k(t)⟩`: one backward
//! propagation per branch instead of one forward propagation per component.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decomposition::DecompositionSpec;
use crate::dynamics::HamiltonianSchedule;
use crate::linalg::{apply_projector_b, inner_product, reduced_state, DensityMatrix, StateVector, C64};
use crate::{Error, ExecMode, Result, Tolerances};

/// Tolerance on the sum of branch probabilities before sampling.
pub const SAMPLING_SUM_TOL: f64 = 1e-6;

/// Nonzero component `(I ⊗ P_k)ψ(t)` at some time.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub label: String,
    pub state: StateVector,
}

/// The decomposition of `ψ(t)` into its nonzero components.
#[derive(Debug, Clone)]
pub struct Decomposed {
    pub time: f64,
    pub state: StateVector,
    pub components: Vec<Component>,
    /// Total squared norm of dropped (near-zero) components.
    pub dropped_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: String,
    pub horizon: f64,
    /// Unnormalized `ψ_l(T)`.
    pub component: StateVector,
    /// `p_l = ‖ψ_l(T)‖²`.
    pub probability: f64,
    /// `⟨ψ_l(T), ψ(T)⟩`; its real part is a second route to `p_l`.
    pub overlap: C64,
}

/// All branches at one horizon, with mass accounting.
#[derive(Debug, Clone)]
pub struct BranchSet {
    pub horizon: f64,
    pub final_state: StateVector,
    pub branches: Vec<Branch>,
    pub dropped_mass: f64,
    pub probability_sum: f64,
}

impl BranchSet {
    pub fn get(&self, label: &str) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.branches.iter().map(|b| b.label.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightEntry {
    pub label: String,
    /// `q_l(k, t)`.
    pub raw: f64,
    /// `p_l(k, t)`.
    pub weight: f64,
}

/// Pre/post-selected weights of the time-`t` components for one branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoTimeWeights {
    pub branch: String,
    pub time: f64,
    pub horizon: f64,
    pub entries: Vec<WeightEntry>,
}

impl TwoTimeWeights {
    pub fn weight(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.weight)
    }

    pub fn raw(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.raw)
    }

    pub fn weight_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealStateTrajectory {
    pub branch: String,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// Components at one time plus their normalized reduced states, shared by
/// every branch evaluated at that time.
struct TimeSlice {
    decomposed: Decomposed,
    reduced: Vec<DensityMatrix>,
}

/// A closed system `(ψ_I, H(t))` together with the preferred decomposition.
#[derive(Debug, Clone)]
pub struct ClosedSystem {
    initial: StateVector,
    schedule: HamiltonianSchedule,
    decomposition: DecompositionSpec,
    tol: Tolerances,
    exec: ExecMode,
}

impl ClosedSystem {
    pub fn new(
        initial: StateVector,
        schedule: HamiltonianSchedule,
        decomposition: DecompositionSpec,
        tol: Tolerances,
    ) -> Result<Self> {
        if initial.space() != schedule.space() {
            return Err(Error::DimensionMismatch {
                expected: schedule.space().dim(),
                found: initial.space().dim(),
            });
        }
        if !initial.is_normalized(tol.normalization) {
            return Err(Error::InvalidArgument(format!(
                "initial state must be normalized (‖ψ‖² = {:.15})",
                initial.norm_sqr()
            )));
        }
        if let DecompositionSpec::Fixed(d) = &decomposition {
            if d.space() != initial.space() {
                return Err(Error::DimensionMismatch {
                    expected: initial.space().dim(),
                    found: d.space().dim(),
                });
            }
        }
        schedule.precompute()?;
        Ok(Self {
            initial,
            schedule,
            decomposition,
            tol,
            exec: ExecMode::default(),
        })
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    pub fn initial(&self) -> &StateVector {
        &self.initial
    }

    pub fn schedule(&self) -> &HamiltonianSchedule {
        &self.schedule
    }

    pub fn decomposition(&self) -> &DecompositionSpec {
        &self.decomposition
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn exec(&self) -> ExecMode {
        self.exec
    }

    /// `ψ(t) = U(t, 0)ψ_I`.
    pub fn state_at(&self, t: f64) -> Result<StateVector> {
        self.schedule.propagate(&self.initial, 0.0, t)
    }

    /// Nonzero components of `ψ(t)`; components with squared norm
    /// `≤ eps_branch` are dropped and their mass recorded.
    pub fn decompose_at(&self, t: f64) -> Result<Decomposed> {
        let state = self.state_at(t)?;
        self.decompose_state(t, state)
    }

    fn decompose_state(&self, t: f64, state: StateVector) -> Result<Decomposed> {
        let family = self.decomposition.at(&state, &self.tol)?;
        let mut components = Vec::with_capacity(family.len());
        let mut dropped_mass = 0.0;
        for p in family.projectors() {
            let c = apply_projector_b(&state, &p.projector)?;
            let n = c.norm_sqr();
            if n > self.tol.eps_branch {
                components.push(Component {
                    label: p.label.clone(),
                    state: c,
                });
            } else {
                dropped_mass += n;
            }
        }
        Ok(Decomposed {
            time: t,
            state,
            components,
            dropped_mass,
        })
    }

    /// Branches at horizon `T`.
    pub fn final_branches(&self, horizon: f64) -> Result<BranchSet> {
        let decomposed = self.decompose_at(horizon)?;
        let final_state = decomposed.state;
        let branches = decomposed
            .components
            .into_iter()
            .map(|c| {
                let overlap = inner_product(&c.state, &final_state)?;
                Ok(Branch {
                    probability: c.state.norm_sqr(),
                    label: c.label,
                    horizon,
                    component: c.state,
                    overlap,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if branches.is_empty() {
            return Err(Error::Numerical {
                operation: "final_branches",
                detail: format!("no nonzero branch at T = {horizon}"),
            });
        }
        let probability_sum: f64 = branches.iter().map(|b| b.probability).sum();
        let bound = branches.len() as f64 * self.tol.eps_branch + decomposed.dropped_mass + 1e-10;
        if (probability_sum - 1.0).abs() > bound {
            return Err(Error::Numerical {
                operation: "final_branches",
                detail: format!("branch probabilities sum to {probability_sum:.15}"),
            });
        }
        Ok(BranchSet {
            horizon,
            final_state,
            branches,
            dropped_mass: decomposed.dropped_mass,
            probability_sum,
        })
    }

    fn check_branch_time(&self, branch: &Branch, t: f64) -> Result<()> {
        if !(0.0..=branch.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                time: t,
                horizon: branch.horizon,
            });
        }
        if branch.probability <= self.tol.eps_branch {
            return Err(Error::InvalidArgument(format!(
                "branch {} has negligible probability {:.3e}",
                branch.label, branch.probability
            )));
        }
        Ok(())
    }

    fn slice(&self, t: f64) -> Result<TimeSlice> {
        let decomposed = self.decompose_at(t)?;
        let reduced = decomposed
            .components
            .iter()
            .map(|c| reduced_state(&c.state))
            .collect::<Result<Vec<_>>>()?;
        Ok(TimeSlice { decomposed, reduced })
    }

    fn weights_in_slice(&self, branch: &Branch, slice: &TimeSlice) -> Result<TwoTimeWeights> {
        let t = slice.decomposed.time;
        let pulled_back = self.schedule.propagate(&branch.component, branch.horizon, t)?;
        let raw = slice
            .decomposed
            .components
            .iter()
            .map(|c| inner_product(&pulled_back, &c.state).map(|z| z.norm_sqr()))
            .collect::<Result<Vec<f64>>>()?;
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical {
                operation: "two_time_weights",
                detail: format!(
                    "Σ_k q = {total:.3e} for branch {} at t = {t} (T = {})",
                    branch.label, branch.horizon
                ),
            });
        }
        let entries = slice
            .decomposed
            .components
            .iter()
            .zip(raw)
            .map(|(c, q)| WeightEntry {
                label: c.label.clone(),
                raw: q,
                weight: q / total,
            })
            .collect();
        Ok(TwoTimeWeights {
            branch: branch.label.clone(),
            time: t,
            horizon: branch.horizon,
            entries,
        })
    }

    fn real_state_in_slice(&self, branch: &Branch, slice: &TimeSlice) -> Result<DensityMatrix> {
        let weights = self.weights_in_slice(branch, slice)?;
        let d = self.initial.space().d_a();
        let mut m = crate::linalg::CMatrix::zeros(d, d);
        for (entry, rho) in weights.entries.iter().zip(&slice.reduced) {
            m += rho.matrix() * C64::new(entry.weight, 0.0);
        }
        let rho = DensityMatrix::from_matrix_unchecked(m)?;
        rho.validate(&self.tol).map_err(|e| Error::Numerical {
            operation: "real_state",
            detail: e.to_string(),
        })?;
        Ok(rho)
    }

    /// `q_l(k, t)` and `p_l(k, t)` over the nonzero components at `t`.
    pub fn two_time_weights(&self, branch: &Branch, t: f64) -> Result<TwoTimeWeights> {
        self.check_branch_time(branch, t)?;
        self.weights_in_slice(branch, &self.slice(t)?)
    }

    /// Real state `ρ_l(t)` on `H_A`.
    pub fn real_state(&self, branch: &Branch, t: f64) -> Result<DensityMatrix> {
        self.check_branch_time(branch, t)?;
        self.real_state_in_slice(branch, &self.slice(t)?)
    }

    /// Real states of one branch at increasing `times`.
    pub fn real_state_trajectory(&self, branch: &Branch, times: &[f64]) -> Result<RealStateTrajectory> {
        let mut out = self.trajectories(std::slice::from_ref(branch), times)?;
        Ok(out.pop().expect("one trajectory per branch"))
    }

    /// Real-state trajectories for several branches of the same horizon.
    /// Each time slice is decomposed once and shared by all branches; slices
    /// are evaluated according to the execution mode.
    pub fn trajectories(&self, branches: &[Branch], times: &[f64]) -> Result<Vec<RealStateTrajectory>> {
        check_increasing(times, "times")?;
        for b in branches {
            for &t in times {
                self.check_branch_time(b, t)?;
            }
        }
        let per_time: Vec<Vec<DensityMatrix>> = self.exec.try_map(times, |&t| {
            let slice = self.slice(t)?;
            branches
                .iter()
                .map(|b| self.real_state_in_slice(b, &slice))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(branches
            .iter()
            .enumerate()
            .map(|(i, b)| RealStateTrajectory {
                branch: b.label.clone(),
                horizon: b.horizon,
                times: times.to_vec(),
                states: per_time.iter().map(|row| row[i].clone()).collect(),
            })
            .collect())
    }
}

pub(crate) fn check_increasing(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} must be finite")));
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(format!("{what} must be strictly increasing")));
    }
    Ok(())
}

/// Categorical distribution over branch labels.
#[derive(Debug, Clone)]
pub struct BranchSampler {
    labels: Vec<String>,
    probabilities: Vec<f64>,
    dist: WeightedIndex<f64>,
    sum: f64,
}

impl BranchSampler {
    /// Branches with probability `≤ eps_branch` get zero weight. The
    /// remaining weights are renormalized; their sum must already be within
    /// [`SAMPLING_SUM_TOL`] of one.
    pub fn new(branches: &[Branch], eps_branch: f64) -> Result<Self> {
        let weights: Vec<f64> = branches
            .iter()
            .map(|b| if b.probability > eps_branch { b.probability } else { 0.0 })
            .collect();
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidArgument(
                "all branch probabilities are negligible".into(),
            ));
        }
        if (sum - 1.0).abs() > SAMPLING_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "branch probabilities sum to {sum}, not 1"
            )));
        }
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self {
            labels: branches.iter().map(|b| b.label.clone()).collect(),
            probabilities: weights.iter().map(|w| w / sum).collect(),
            dist,
            sum,
        })
    }

    /// Sum of the weights before renormalization.
    pub fn probability_sum(&self) -> f64 {
        self.sum
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Index into the branch list.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        &self.labels[self.sample_index(rng)]
    }
}

/// The seeded generator used for branch sampling.
pub fn sampling_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draw the realized branch label with probability `p_l`.
pub fn sample_branch(branches: &[Branch], seed: u64, eps_branch: f64) -> Result<String> {
    let sampler = BranchSampler::new(branches, eps_branch)?;
    Ok(sampler.sample(&mut sampling_rng(seed)).to_string())
}
