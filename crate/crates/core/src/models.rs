//! Toy models: sequential measurement-type interactions between a system
//! qubit (`H_A`) and environment qubits (`H_B`), a recoherence variant that
//! erases its record, a random dense Hamiltonian, and an idle model.
//!
//! Environment qubit `j` is the `j`-th character of a bit label (most
//! significant bit first), so `H_B` index `b` has qubit `j` at bit
//! `n_env − 1 − j`.
//!
//! A recording of qubit `j` switches on `g·|1⟩⟨1|_sys ⊗ X_j` for a time
//! `π/(2g)`, which is `−i·X_j` on the `|1⟩_sys` subspace: a controlled flip
//! up to a phase. An erasure applies `−g·|1⟩⟨1|_sys ⊗ X_j` for the same time
//! and undoes it exactly.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::branching::{ClosedSystem, RealStateTrajectory};
use crate::decomposition::DecompositionSpec;
use crate::dynamics::HamiltonianSchedule;
use crate::linalg::{
    apply_projector_b, kron, trace_distance, BipartiteSpace, CMatrix, DensityMatrix, OperatorB, StateVector, C64, ONE, ZERO,
};
use crate::{Error, Result, Tolerances};

/// Largest environment register accepted (`2·2^n ≤ 4096`).
pub const MAX_ENV_QUBITS: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventKind {
    /// Controlled flip of an environment qubit (records the system value).
    Record { qubit: usize },
    /// Inverse of [`EventKind::Record`].
    Erase { qubit: usize },
    /// `R_y(angle)` on the system qubit.
    RotateSystem { angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    #[serde(flatten)]
    pub kind: EventKind,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModelMetadata {
    /// Interaction events in time order; `None` for models without a
    /// discrete event structure.
    pub events: Option<Vec<Event>>,
    /// Branch labels known analytically to carry nonzero probability.
    pub expected_labels: Vec<String>,
    /// After this time the Hamiltonian commutes with every projector of the
    /// recommended decomposition (`None` if never).
    pub settled_after: Option<f64>,
}

impl ModelMetadata {
    pub fn recording_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .flatten()
            .filter(|e| matches!(e.kind, EventKind::Record { .. }))
            .map(|e| e.start)
            .collect()
    }
}

/// A fully specified closed system.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub space: BipartiteSpace,
    pub initial: StateVector,
    pub schedule: HamiltonianSchedule,
    pub decomposition: DecompositionSpec,
    pub metadata: ModelMetadata,
}

impl ModelSpec {
    /// Check the model invariants: normalized initial state, consistent
    /// spaces, Hermitian segments (checked by the schedule builder).
    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        if self.initial.space() != self.space || self.schedule.space() != self.space {
            return Err(Error::InvalidModel(format!("{}: inconsistent spaces", self.name)));
        }
        if !self.initial.is_normalized(tol.normalization) {
            return Err(Error::InvalidModel(format!(
                "{}: initial state not normalized",
                self.name
            )));
        }
        Ok(())
    }

    /// The model with its recommended decomposition.
    pub fn system(&self, tol: Tolerances) -> Result<ClosedSystem> {
        self.system_with(self.decomposition.clone(), tol)
    }

    pub fn system_with(&self, decomposition: DecompositionSpec, tol: Tolerances) -> Result<ClosedSystem> {
        ClosedSystem::new(self.initial.clone(), self.schedule.clone(), decomposition, tol)
    }
}

fn check_amplitudes(alpha: C64, beta: C64, tol: &Tolerances) -> Result<()> {
    let n = alpha.norm_sqr() + beta.norm_sqr();
    if !((n - 1.0).abs() <= tol.normalization) {
        return Err(Error::InvalidModel(format!("|α|² + |β|² = {n}, expected 1")));
    }
    Ok(())
}

/// Ordered list of interactions on a system qubit and `n_env` environment
/// qubits initially in `|0…0⟩`.
#[derive(Debug, Clone)]
pub struct SequentialMeasurement {
    alpha: C64,
    beta: C64,
    n_env: usize,
    coupling: f64,
    steps: Vec<(EventKind, f64, f64)>,
}

impl SequentialMeasurement {
    pub fn new(alpha: C64, beta: C64, n_env: usize, coupling: f64) -> Self {
        Self {
            alpha,
            beta,
            n_env,
            coupling,
            steps: Vec::new(),
        }
    }

    /// Duration of a record or erase interaction.
    pub fn interaction_time(&self) -> f64 {
        PI / (2.0 * self.coupling)
    }

    pub fn record(mut self, qubit: usize, start: f64) -> Self {
        let d = self.interaction_time();
        self.steps.push((EventKind::Record { qubit }, start, d));
        self
    }

    pub fn erase(mut self, qubit: usize, start: f64) -> Self {
        let d = self.interaction_time();
        self.steps.push((EventKind::Erase { qubit }, start, d));
        self
    }

    pub fn rotate_system(mut self, angle: f64, start: f64, duration: f64) -> Self {
        self.steps.push((EventKind::RotateSystem { angle }, start, duration));
        self
    }

    fn hamiltonian(&self, kind: EventKind, duration: f64) -> CMatrix {
        let d_b = 1usize << self.n_env;
        let flip_qubit = |q: usize, sign: f64| {
            let bit = 1usize << (self.n_env - 1 - q);
            let x = CMatrix::from_fn(d_b, d_b, |r, c| if r ^ c == bit { ONE } else { ZERO });
            let one = CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]);
            kron(&one, &x) * C64::new(sign * self.coupling, 0.0)
        };
        match kind {
            EventKind::Record { qubit } => flip_qubit(qubit, 1.0),
            EventKind::Erase { qubit } => flip_qubit(qubit, -1.0),
            EventKind::RotateSystem { angle } => {
                // exp(−i·(θ/2τ)·σ_y·τ) = R_y(θ)
                let w = angle / (2.0 * duration);
                let sy = CMatrix::from_row_slice(2, 2, &[ZERO, C64::new(0.0, -w), C64::new(0.0, w), ZERO]);
                kron(&sy, &CMatrix::identity(d_b, d_b))
            }
        }
    }

    pub fn build(mut self, name: &str, tol: &Tolerances) -> Result<ModelSpec> {
        check_amplitudes(self.alpha, self.beta, tol)?;
        if self.n_env == 0 || self.n_env > MAX_ENV_QUBITS {
            return Err(Error::InvalidModel(format!(
                "n_env must be in 1..={MAX_ENV_QUBITS}, got {}",
                self.n_env
            )));
        }
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "coupling must be positive, got {}",
                self.coupling
            )));
        }
        self.steps.sort_by(|a, b| a.1.total_cmp(&b.1));
        let space = BipartiteSpace::new(2, 1 << self.n_env)?;
        let d = space.dim();
        let mut builder = HamiltonianSchedule::builder(space);
        let mut events = Vec::with_capacity(self.steps.len());
        let mut clock = 0.0;
        for &(kind, start, duration) in &self.steps {
            match kind {
                EventKind::Record { qubit } | EventKind::Erase { qubit } if qubit >= self.n_env => {
                    return Err(Error::InvalidModel(format!(
                        "event on qubit {qubit} but n_env = {}",
                        self.n_env
                    )))
                }
                _ => {}
            }
            if !(start.is_finite() && duration > 0.0 && duration.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "event at {start} has invalid timing"
                )));
            }
            if start < clock {
                return Err(Error::InvalidModel(format!(
                    "overlapping interaction windows: event at t = {start} starts before the previous one ends (t = {clock})"
                )));
            }
            if start > clock {
                builder = builder.segment(CMatrix::zeros(d, d), start - clock);
            }
            builder = builder.segment(self.hamiltonian(kind, duration), duration);
            clock = start + duration;
            events.push(Event {
                kind,
                start,
                end: clock,
            });
        }
        let schedule = builder.open_segment(CMatrix::zeros(d, d)).build(tol)?;

        let mut env0 = vec![ZERO; 1 << self.n_env];
        env0[0] = ONE;
        let initial = StateVector::product(&[self.alpha, self.beta], &env0)?;

        let expected_labels = expected_record_labels(self.alpha, self.beta, self.n_env, &events);
        let model = ModelSpec {
            name: name.to_string(),
            space,
            initial,
            schedule,
            decomposition: DecompositionSpec::computational(space, true)?,
            metadata: ModelMetadata {
                settled_after: Some(clock),
                events: Some(events),
                expected_labels,
            },
        };
        model.validate(tol)?;
        Ok(model)
    }
}

/// Records-only models end in `0…0` (system 0) or the recorded pattern
/// (system 1); anything with rotations has no two-label answer.
fn expected_record_labels(alpha: C64, beta: C64, n_env: usize, events: &[Event]) -> Vec<String> {
    if events.iter().any(|e| matches!(e.kind, EventKind::RotateSystem { .. })) {
        return Vec::new();
    }
    let mut ones = vec![b'0'; n_env];
    for e in events {
        match e.kind {
            EventKind::Record { qubit } => ones[qubit] ^= 1,
            EventKind::Erase { qubit } => ones[qubit] ^= 1,
            EventKind::RotateSystem { .. } => {}
        }
    }
    let zeros = "0".repeat(n_env);
    let ones = String::from_utf8(ones).expect("ascii");
    let mut labels = Vec::new();
    if alpha.norm_sqr() > 0.0 {
        labels.push(zeros.clone());
    }
    if beta.norm_sqr() > 0.0 && !labels.contains(&ones) {
        labels.push(ones);
    }
    labels
}

/// System qubit `α|0⟩ + β|1⟩` recorded successively into `n_env` environment
/// qubits. Environment qubit `j` is flipped (controlled on the system) during
/// `[t_rec[j], t_rec[j] + π/(2g)]`; `H = 0` elsewhere, including an
/// open-ended tail.
pub fn measurement_chain(
    alpha: C64,
    beta: C64,
    n_env: usize,
    coupling: f64,
    record_times: &[f64],
    tol: &Tolerances,
) -> Result<ModelSpec> {
    if record_times.len() != n_env {
        return Err(Error::InvalidModel(format!(
            "{} recording times for {n_env} environment qubits",
            record_times.len()
        )));
    }
    if record_times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidModel("recording times must be increasing".into()));
    }
    if record_times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidModel("recording times must be ≥ 0".into()));
    }
    record_times
        .iter()
        .enumerate()
        .fold(SequentialMeasurement::new(alpha, beta, n_env, coupling), |m, (j, &t)| {
            m.record(j, t)
        })
        .build("measurement_chain", tol)
}

/// One environment qubit records the system at `t_rec` and the record is
/// erased again at `t_unrec`, leaving a product state.
pub fn recoherence_model(
    alpha: C64,
    beta: C64,
    coupling: f64,
    t_rec: f64,
    t_unrec: f64,
    tol: &Tolerances,
) -> Result<ModelSpec> {
    if !(t_rec < t_unrec) {
        return Err(Error::InvalidModel(format!(
            "erasure time {t_unrec} must follow recording time {t_rec}"
        )));
    }
    if t_rec < 0.0 {
        return Err(Error::InvalidModel("recording time must be ≥ 0".into()));
    }
    SequentialMeasurement::new(alpha, beta, 1, coupling)
        .record(0, t_rec)
        .erase(0, t_unrec)
        .build("recoherence", tol)
}

/// Dense random model: `H = s·(G + G†)/2` with `Re G_ij, Im G_ij` drawn
/// independently from a standard normal distribution, and a normalized
/// complex Gaussian initial state, both from a `ChaCha8Rng` seeded with
/// `seed` (matrix entries row by row first, then the state).
pub fn random_model(
    seed: u64,
    d_a: usize,
    d_b: usize,
    energy_scale: f64,
    tol: &Tolerances,
) -> Result<ModelSpec> {
    let space = BipartiteSpace::new(d_a, d_b)?;
    if !energy_scale.is_finite() {
        return Err(Error::InvalidModel("energy scale must be finite".into()));
    }
    let d = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut g = CMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            g[(r, c)] = C64::new(gauss(), gauss());
        }
    }
    let h = (&g + g.adjoint()) * C64::new(0.5 * energy_scale, 0.0);
    let amps: Vec<C64> = (0..d).map(|_| C64::new(gauss(), gauss())).collect();
    let initial = StateVector::new(space, amps)?.normalized()?;
    let model = ModelSpec {
        name: "random".to_string(),
        space,
        initial,
        schedule: HamiltonianSchedule::constant(space, h, tol)?,
        decomposition: DecompositionSpec::computational(space, false)?,
        metadata: ModelMetadata::default(),
    };
    model.validate(tol)?;
    Ok(model)
}

/// `H = 0` with initial state `|0⟩⊗|0⟩`.
pub fn idle_model(d_a: usize, d_b: usize, tol: &Tolerances) -> Result<ModelSpec> {
    let space = BipartiteSpace::new(d_a, d_b)?;
    let d = space.dim();
    Ok(ModelSpec {
        name: "idle".to_string(),
        space,
        initial: StateVector::basis(space, 0, 0)?,
        schedule: HamiltonianSchedule::constant(space, CMatrix::zeros(d, d), tol)?,
        decomposition: DecompositionSpec::computational(space, false)?,
        metadata: ModelMetadata {
            events: Some(Vec::new()),
            expected_labels: vec!["0".to_string()],
            settled_after: Some(0.0),
        },
    })
}

/// A node of a [`BranchTree`]: a component created at `start` that evolves
/// unitarily until it splits (or forever, for leaves).
#[derive(Debug, Clone)]
pub struct TreeNode {
    /// Environment record pattern accumulated along the path from the root.
    pub label: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub start: f64,
    /// Split time, or `None` for a leaf.
    pub split: Option<f64>,
    pub start_state: StateVector,
    /// `max |Σ children − ψ_node(split)|`, zero for leaves.
    pub split_residual: f64,
}

/// Branching diagram obtained by splitting the evolving component into
/// pointer-basis pieces at the end of each recording event. Branches never
/// merge.
#[derive(Debug, Clone)]
pub struct BranchTree {
    pub horizon: f64,
    pub nodes: Vec<TreeNode>,
}

impl BranchTree {
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &TreeNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.children.is_empty())
    }

    /// `ψ_j(t)` for the branch ending in `leaf`: the component of its
    /// deepest ancestor that already exists at `t`, evolved to `t`.
    pub fn branch_state(&self, leaf: usize, t: f64, schedule: &HamiltonianSchedule) -> Result<StateVector> {
        let mut node = leaf;
        while self.nodes[node].start > t {
            node = self.nodes[node]
                .parent
                .ok_or_else(|| Error::InvalidArgument(format!("time {t} precedes the tree root")))?;
        }
        let n = &self.nodes[node];
        schedule.propagate(&n.start_state, n.start, t)
    }

    pub fn max_split_residual(&self) -> f64 {
        self.nodes.iter().map(|n| n.split_residual).fold(0.0, f64::max)
    }
}

fn pointer_projector(n_env: usize, qubit: usize, outcome: usize) -> OperatorB {
    let d_b = 1usize << n_env;
    let bit = 1usize << (n_env - 1 - qubit);
    let mut m = CMatrix::zeros(d_b, d_b);
    for b in 0..d_b {
        if ((b & bit) != 0) == (outcome == 1) {
            m[(b, b)] = ONE;
        }
    }
    OperatorB::new(m).expect("square")
}

/// Build the branching diagram of an event model up to `horizon`. Each
/// recording event finished by `horizon` splits every live component in the
/// pointer basis of its environment qubit; components with squared norm
/// `≤ eps_branch` are dropped.
pub fn branch_tree(model: &ModelSpec, horizon: f64, tol: &Tolerances) -> Result<BranchTree> {
    let events = model.metadata.events.as_ref().ok_or_else(|| {
        Error::InvalidModel(format!("model {} has no event metadata", model.name))
    })?;
    let n_env = model.space.d_b().trailing_zeros() as usize;
    let mut nodes = vec![TreeNode {
        label: "0".repeat(n_env.max(1)),
        parent: None,
        children: Vec::new(),
        start: 0.0,
        split: None,
        start_state: model.initial.clone(),
        split_residual: 0.0,
    }];
    let mut live = vec![0usize];
    for event in events.iter().filter(|e| e.end <= horizon) {
        let EventKind::Record { qubit } = event.kind else {
            continue;
        };
        let projectors = [pointer_projector(n_env, qubit, 0), pointer_projector(n_env, qubit, 1)];
        let mut next = Vec::new();
        for &idx in &live {
            let parent = &nodes[idx];
            let at_split = model.schedule.propagate(&parent.start_state, parent.start, event.end)?;
            let parent_label = parent.label.clone();
            let mut sum = StateVector::zeros(model.space);
            let mut children = Vec::new();
            for (outcome, p) in projectors.iter().enumerate() {
                let piece = apply_projector_b(&at_split, p)?;
                sum = sum.add(&piece)?;
                if piece.norm_sqr() <= tol.eps_branch {
                    continue;
                }
                let mut label = parent_label.clone().into_bytes();
                label[qubit] = b'0' + outcome as u8;
                children.push(TreeNode {
                    label: String::from_utf8(label).expect("ascii"),
                    parent: Some(idx),
                    children: Vec::new(),
                    start: event.end,
                    split: None,
                    start_state: piece,
                    split_residual: 0.0,
                });
            }
            let residual = sum.max_abs_diff(&at_split)?;
            let first = nodes.len();
            let count = children.len();
            nodes.extend(children);
            let node = &mut nodes[idx];
            node.split = Some(event.end);
            node.split_residual = residual;
            node.children = (first..first + count).collect();
            next.extend(first..first + count);
        }
        live = next;
    }
    Ok(BranchTree { horizon, nodes })
}

/// Distance of a real-state trajectory from the nearest pointer state.
///
/// Pointer states are the `H_A` basis projectors `|a⟩⟨a|`, the states a
/// record of the system value singles out. Each entry is
/// `min_a D(ρ(t), |a⟩⟨a|)`; how small it must stay for a branch to count as
/// quasiclassical is left to the caller.
pub fn pointer_distances(trajectory: &RealStateTrajectory, hermitian_tol: f64) -> Result<Vec<f64>> {
    let Some(first) = trajectory.states.first() else {
        return Ok(Vec::new());
    };
    let d = first.dim();
    let pointers = (0..d)
        .map(|a| DensityMatrix::diagonal(&(0..d).map(|i| if i == a { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    trajectory
        .states
        .iter()
        .map(|rho| {
            pointers.iter().try_fold(f64::INFINITY, |best, p| Ok(best.min(trace_distance(rho, p, hermitian_tol)?)))
        })
        .collect()
}
