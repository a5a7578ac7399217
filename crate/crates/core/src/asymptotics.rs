//! Horizon sweeps: how branch probabilities and real states change as the
//! final time `T` grows.
//!
//! A finite sweep cannot establish a limit. "Converged" here means the last
//! `n_stable` consecutive horizon pairs agree to `ε_p` (probabilities) and
//! `ε_ρ` (trace distance between real states) with an unchanged set of
//! matched branches. Each tracked branch also carries its running min/max
//! probability envelope, so a bounded oscillation can be told apart from a
//! drift.

use serde::Serialize;

use crate::branching::{check_increasing, BranchSet, ClosedSystem, RealStateTrajectory};
use crate::decomposition::{DecompositionKind, DecompositionSpec};
use crate::linalg::{inner_product, trace_distance, DensityMatrix};
use crate::models::{branch_tree, ModelSpec};
use crate::{Error, Result, Tolerances};

/// Caveat attached to every report built from state-dependent projectors.
pub const SCHMIDT_IDENTITY_CAVEAT: &str =
    "branch identity across horizons for Schmidt projectors is assigned by greedy maximum overlap";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSettings {
    pub eps_p: f64,
    pub eps_rho: f64,
    pub n_stable: usize,
}

impl From<&Tolerances> for SweepSettings {
    fn from(t: &Tolerances) -> Self {
        Self {
            eps_p: t.eps_p,
            eps_rho: t.eps_rho,
            n_stable: t.n_stable,
        }
    }
}

impl Default for SweepSettings {
    fn default() -> Self {
        (&Tolerances::default()).into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub from: String,
    pub to: String,
    /// `|⟨ψ_m(T′), U(T′,T)ψ_l(T)⟩|` (label matching leaves it `None`).
    pub overlap: Option<f64>,
    pub ambiguous: bool,
}

/// Pairing of branches at `T` with branches at `T′ > T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchMatching {
    pub from_horizon: f64,
    pub to_horizon: f64,
    pub pairs: Vec<MatchedPair>,
    pub unmatched_from: Vec<String>,
    pub unmatched_to: Vec<String>,
}

impl BranchMatching {
    pub fn is_ambiguous(&self) -> bool {
        self.pairs.iter().any(|p| p.ambiguous)
    }

    pub fn target(&self, from: &str) -> Option<&str> {
        self.pairs.iter().find(|p| p.from == from).map(|p| p.to.as_str())
    }

    fn is_complete(&self) -> bool {
        self.unmatched_from.is_empty() && self.unmatched_to.is_empty()
    }
}

/// Pair branches with identical labels.
pub fn match_by_label(a: &BranchSet, b: &BranchSet) -> BranchMatching {
    let pairs = a
        .branches
        .iter()
        .filter(|x| b.get(&x.label).is_some())
        .map(|x| MatchedPair {
            from: x.label.clone(),
            to: x.label.clone(),
            overlap: None,
            ambiguous: false,
        })
        .collect();
    BranchMatching {
        from_horizon: a.horizon,
        to_horizon: b.horizon,
        pairs,
        unmatched_from: a.labels().filter(|l| b.get(l).is_none()).map(String::from).collect(),
        unmatched_to: b.labels().filter(|l| a.get(l).is_none()).map(String::from).collect(),
    }
}

/// Greedy maximum-overlap pairing on `|⟨ψ_m(T′), U(T′,T)ψ_l(T)⟩|`. Each
/// branch is used at most once; pairs whose overlap is no larger than
/// `√eps_branch` are left unmatched. A pair is flagged ambiguous when a
/// still-available competitor in its row or column comes within
/// `match_ambiguity` of its overlap.
pub fn match_by_overlap(system: &ClosedSystem, a: &BranchSet, b: &BranchSet) -> Result<BranchMatching> {
    let tol = system.tolerances();
    let evolved = a
        .branches
        .iter()
        .map(|x| system.schedule().propagate(&x.component, a.horizon, b.horizon))
        .collect::<Result<Vec<_>>>()?;
    let mut overlaps = Vec::with_capacity(a.branches.len() * b.branches.len());
    for (i, ev) in evolved.iter().enumerate() {
        for (j, y) in b.branches.iter().enumerate() {
            overlaps.push((inner_product(&y.component, ev)?.norm(), i, j));
        }
    }
    // stable order: by overlap, ties broken by position
    overlaps.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let floor = tol.eps_branch.sqrt();
    let mut used_a = vec![false; a.branches.len()];
    let mut used_b = vec![false; b.branches.len()];
    let mut pairs = Vec::new();
    for &(o, i, j) in &overlaps {
        if used_a[i] || used_b[j] || o <= floor {
            continue;
        }
        let competitor = overlaps
            .iter()
            .filter(|&&(_, ii, jj)| (ii == i) != (jj == j) && !used_a[ii] && !used_b[jj])
            .map(|&(oo, _, _)| oo)
            .fold(0.0, f64::max);
        used_a[i] = true;
        used_b[j] = true;
        pairs.push(MatchedPair {
            from: a.branches[i].label.clone(),
            to: b.branches[j].label.clone(),
            overlap: Some(o),
            ambiguous: competitor > floor && o - competitor < tol.match_ambiguity,
        });
    }
    pairs.sort_by(|x, y| {
        let ix = a.branches.iter().position(|z| z.label == x.from);
        let iy = a.branches.iter().position(|z| z.label == y.from);
        ix.cmp(&iy)
    });
    Ok(BranchMatching {
        from_horizon: a.horizon,
        to_horizon: b.horizon,
        pairs,
        unmatched_from: a.branches.iter().zip(&used_a).filter(|(_, u)| !**u).map(|(x, _)| x.label.clone()).collect(),
        unmatched_to: b.branches.iter().zip(&used_b).filter(|(_, u)| !**u).map(|(x, _)| x.label.clone()).collect(),
    })
}

/// Label pairing for fixed decompositions, overlap pairing for Schmidt.
pub fn match_branches(system: &ClosedSystem, a: &BranchSet, b: &BranchSet) -> Result<BranchMatching> {
    if !(a.horizon < b.horizon) {
        return Err(Error::InvalidArgument(format!(
            "matching needs T < T′, got {} and {}",
            a.horizon, b.horizon
        )));
    }
    match system.decomposition() {
        DecompositionSpec::Fixed(_) => Ok(match_by_label(a, b)),
        DecompositionSpec::Schmidt { .. } => match_by_overlap(system, a, b),
    }
}

/// Matrix split into real and imaginary parts, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixParts {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&DensityMatrix> for MatrixParts {
    fn from(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let rows = |f: fn(&crate::C64) -> f64| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
                .collect()
        };
        Self {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }
}

/// One branch followed across horizons through the matchings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchTrack {
    pub id: usize,
    /// Label at each horizon, `None` where the track is absent.
    pub labels: Vec<Option<String>>,
    pub probabilities: Vec<Option<f64>>,
    /// Running minimum / maximum of the probability over present horizons.
    pub envelope_min: Vec<Option<f64>>,
    pub envelope_max: Vec<Option<f64>>,
    /// `δ(t; T_i, T_{i+1})` per consecutive pair (outer) and sample time
    /// (inner), `None` where the track is absent from either horizon.
    pub distances: Vec<Option<Vec<f64>>>,
}

impl BranchTrack {
    /// `max − min` of the probability over all horizons where present.
    pub fn probability_spread(&self) -> f64 {
        match (self.envelope_min.iter().flatten().last(), self.envelope_max.iter().flatten().last()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub from_horizon: f64,
    pub to_horizon: f64,
    pub matching: BranchMatching,
    pub max_probability_change: f64,
    /// `Σ |Δp|` over matched pairs.
    pub total_probability_change: f64,
    pub max_trace_distance: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchEstimate {
    pub track: usize,
    pub label: String,
    /// `p_l` at the last horizon.
    pub probability: f64,
    /// `ρ_l(t)` at the last horizon, one per sample time.
    pub real_states: Vec<MatrixParts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Converged,
    /// Too few horizons for `n_stable` pairs.
    InsufficientHorizons,
    /// Branch set changed within the stable window.
    BranchSetChanged,
    /// Matched values moved by more than the tolerances.
    NotConverged,
}

/// Data at one horizon of a sweep.
#[derive(Debug, Clone)]
pub struct HorizonData {
    pub branches: BranchSet,
    pub trajectories: Vec<RealStateTrajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonReport {
    pub decomposition: DecompositionKind,
    pub horizons: Vec<f64>,
    pub times: Vec<f64>,
    pub settings: SweepSettings,
    pub branch_counts: Vec<usize>,
    pub dropped_mass: Vec<f64>,
    pub probability_sums: Vec<f64>,
    pub tracks: Vec<BranchTrack>,
    pub pairs: Vec<PairSummary>,
    pub converged: bool,
    pub status: ConvergenceStatus,
    /// Last-horizon values; limit estimates only when `converged`.
    pub estimates: Vec<BranchEstimate>,
    pub caveats: Vec<String>,
}

impl HorizonReport {
    pub fn track_for(&self, label_at_last: &str) -> Option<&BranchTrack> {
        self.tracks
            .iter()
            .find(|t| t.labels.last().and_then(|l| l.as_deref()) == Some(label_at_last))
    }

    /// Largest probability spread over all tracks.
    pub fn max_probability_spread(&self) -> f64 {
        self.tracks.iter().map(BranchTrack::probability_spread).fold(0.0, f64::max)
    }
}

/// Evaluate branches and real-state trajectories at each horizon.
pub fn evaluate_horizons(system: &ClosedSystem, horizons: &[f64], times: &[f64]) -> Result<Vec<HorizonData>> {
    check_increasing(horizons, "horizons")?;
    check_increasing(times, "times")?;
    let Some((&first, &last)) = horizons.first().zip(horizons.last()) else {
        return Err(Error::InvalidArgument("at least one horizon is required".into()));
    };
    if first < 0.0 {
        return Err(Error::InvalidArgument("horizons must be ≥ 0".into()));
    }
    if last > system.schedule().horizon() {
        return Err(Error::InvalidSchedule(format!(
            "schedule ends at {} but the sweep reaches T = {last}",
            system.schedule().horizon()
        )));
    }
    if let (Some(&t0), Some(&tn)) = (times.first(), times.last()) {
        if t0 < 0.0 || tn > first {
            return Err(Error::InvalidArgument(format!(
                "sample times must lie in [0, {first}]"
            )));
        }
    }
    system.exec().try_map(horizons, |&h| {
        let branches = system.final_branches(h)?;
        let trajectories = system.trajectories(&branches.branches, times)?;
        Ok(HorizonData {
            branches,
            trajectories,
        })
    })
}

/// Run final-branch extraction and real-state trajectories at every
/// horizon, match branches between consecutive horizons and assess
/// convergence.
pub fn horizon_sweep(
    system: &ClosedSystem,
    horizons: &[f64],
    times: &[f64],
    settings: SweepSettings,
) -> Result<HorizonReport> {
    let data = evaluate_horizons(system, horizons, times)?;
    assemble_report(system, horizons, times, settings, &data)
}

/// Build a [`HorizonReport`] from already evaluated horizons.
pub fn assemble_report(
    system: &ClosedSystem,
    horizons: &[f64],
    times: &[f64],
    settings: SweepSettings,
    data: &[HorizonData],
) -> Result<HorizonReport> {
    let hermitian = system.tolerances().hermitian;
    let n_h = data.len();
    let matchings = data
        .windows(2)
        .map(|w| match_branches(system, &w[0].branches, &w[1].branches))
        .collect::<Result<Vec<_>>>()?;

    // Each track stores its branch index at every horizon.
    let mut slots: Vec<Vec<Option<usize>>> = (0..data[0].branches.branches.len())
        .map(|i| {
            let mut v = vec![None; n_h];
            v[0] = Some(i);
            v
        })
        .collect();
    for (h, m) in matchings.iter().enumerate() {
        let next = &data[h + 1].branches;
        let mut claimed = vec![false; next.branches.len()];
        for slot in slots.iter_mut() {
            let Some(i) = slot[h] else { continue };
            let label = &data[h].branches.branches[i].label;
            if let Some(to) = m.target(label) {
                let j = next.branches.iter().position(|b| b.label == to).expect("matched label exists");
                slot[h + 1] = Some(j);
                claimed[j] = true;
            }
        }
        for (j, c) in claimed.into_iter().enumerate() {
            if !c {
                let mut v = vec![None; n_h];
                v[h + 1] = Some(j);
                slots.push(v);
            }
        }
    }

    let mut tracks = Vec::with_capacity(slots.len());
    for (id, slot) in slots.iter().enumerate() {
        let labels = slot
            .iter()
            .enumerate()
            .map(|(h, i)| i.map(|i| data[h].branches.branches[i].label.clone()))
            .collect();
        let probabilities: Vec<Option<f64>> = slot
            .iter()
            .enumerate()
            .map(|(h, i)| i.map(|i| data[h].branches.branches[i].probability))
            .collect();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut envelope_min = Vec::with_capacity(n_h);
        let mut envelope_max = Vec::with_capacity(n_h);
        for p in &probabilities {
            if let Some(p) = p {
                lo = lo.min(*p);
                hi = hi.max(*p);
            }
            let seen = lo.is_finite();
            envelope_min.push(seen.then_some(lo));
            envelope_max.push(seen.then_some(hi));
        }
        let mut distances = Vec::with_capacity(n_h.saturating_sub(1));
        for h in 0..n_h.saturating_sub(1) {
            distances.push(match (slot[h], slot[h + 1]) {
                (Some(i), Some(j)) => {
                    let a = &data[h].trajectories[i].states;
                    let b = &data[h + 1].trajectories[j].states;
                    Some(
                        a.iter()
                            .zip(b)
                            .map(|(x, y)| trace_distance(x, y, hermitian))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                _ => None,
            });
        }
        tracks.push(BranchTrack {
            id,
            labels,
            probabilities,
            envelope_min,
            envelope_max,
            distances,
        });
    }

    let pairs: Vec<PairSummary> = matchings
        .into_iter()
        .enumerate()
        .map(|(h, matching)| {
            let mut max_dp: f64 = 0.0;
            let mut total_dp = 0.0;
            let mut max_d: f64 = 0.0;
            for t in &tracks {
                if let (Some(a), Some(b)) = (t.probabilities[h], t.probabilities[h + 1]) {
                    max_dp = max_dp.max((a - b).abs());
                    total_dp += (a - b).abs();
                }
                if let Some(ds) = &t.distances[h] {
                    max_d = ds.iter().copied().fold(max_d, f64::max);
                }
            }
            let counts_equal = data[h].branches.branches.len() == data[h + 1].branches.branches.len();
            let stable = counts_equal
                && matching.is_complete()
                && max_dp <= settings.eps_p
                && max_d <= settings.eps_rho;
            PairSummary {
                from_horizon: horizons[h],
                to_horizon: horizons[h + 1],
                matching,
                max_probability_change: max_dp,
                total_probability_change: total_dp,
                max_trace_distance: max_d,
                stable,
            }
        })
        .collect();

    let status = if settings.n_stable == 0 || pairs.len() < settings.n_stable {
        ConvergenceStatus::InsufficientHorizons
    } else {
        let window = &pairs[pairs.len() - settings.n_stable..];
        if window.iter().any(|p| !p.matching.is_complete())
            || window_counts_change(data, settings.n_stable)
        {
            ConvergenceStatus::BranchSetChanged
        } else if window.iter().all(|p| p.stable) {
            ConvergenceStatus::Converged
        } else {
            ConvergenceStatus::NotConverged
        }
    };

    let last = n_h - 1;
    let estimates = tracks
        .iter()
        .filter_map(|t| {
            let i = slots[t.id][last]?;
            let b = &data[last].branches.branches[i];
            Some(BranchEstimate {
                track: t.id,
                label: b.label.clone(),
                probability: b.probability,
                real_states: data[last].trajectories[i].states.iter().map(MatrixParts::from).collect(),
            })
        })
        .collect();

    let mut caveats = vec![
        "convergence is assessed over a finite set of horizons and does not establish a limit".to_string(),
    ];
    if system.decomposition().is_state_dependent() {
        caveats.push(SCHMIDT_IDENTITY_CAVEAT.to_string());
    }

    Ok(HorizonReport {
        decomposition: system.decomposition().kind(),
        horizons: horizons.to_vec(),
        times: times.to_vec(),
        settings,
        branch_counts: data.iter().map(|d| d.branches.branches.len()).collect(),
        dropped_mass: data.iter().map(|d| d.branches.dropped_mass).collect(),
        probability_sums: data.iter().map(|d| d.branches.probability_sum).collect(),
        tracks,
        pairs,
        converged: status == ConvergenceStatus::Converged,
        status,
        estimates,
        caveats,
    })
}

fn window_counts_change(data: &[HorizonData], n_stable: usize) -> bool {
    let counts: Vec<usize> = data[data.len() - n_stable - 1..]
        .iter()
        .map(|d| d.branches.branches.len())
        .collect();
    counts.windows(2).any(|w| w[0] != w[1])
}

/// One leaf of the branching diagram followed across horizons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeBranchSeries {
    pub label: String,
    /// `⟨ψ(T), ψ_j(T)⟩` per horizon as `[re, im]`.
    pub inner_products: Vec<[f64; 2]>,
    /// `p_l` of the final branch with the same label per horizon (0 if absent).
    pub branch_probabilities: Vec<f64>,
    /// Spread of `Re⟨ψ(T), ψ_j(T)⟩` over the horizons.
    pub spread: f64,
}

/// Final-time Born rule check on an event model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FtbornReport {
    pub horizons: Vec<f64>,
    pub leaves: Vec<TreeBranchSeries>,
    /// `max |⟨ψ(T), ψ_j(T)⟩ − p_l^T|` over leaves and horizons (imaginary
    /// part included).
    pub max_probability_deviation: f64,
    /// `max |⟨ψ_j(T), ψ_j′(T)⟩ − p_j δ_jj′|` at the last horizon.
    pub orthogonality_deviation: f64,
    /// `max |ψ(T) − Σ_j ψ_j(T)|` at the last horizon.
    pub reconstruction_residual: f64,
    /// Largest child-sum residual of the tree at the last horizon.
    pub split_residual: f64,
    /// Final branches with no tree leaf of the same label, per horizon.
    pub unmatched_branches: Vec<Vec<String>>,
}

/// Compare the branching diagram of `model` with the final branches of its
/// recommended decomposition at each horizon.
pub fn ftborn_check(model: &ModelSpec, horizons: &[f64], tol: &Tolerances) -> Result<FtbornReport> {
    check_increasing(horizons, "horizons")?;
    if horizons.is_empty() {
        return Err(Error::InvalidArgument("at least one horizon is required".into()));
    }
    let system = model.system(*tol)?;
    let mut leaves: Vec<TreeBranchSeries> = Vec::new();
    let mut max_dev: f64 = 0.0;
    let mut unmatched_branches = Vec::with_capacity(horizons.len());
    let mut orthogonality_deviation = 0.0;
    let mut reconstruction_residual = 0.0;
    let mut split_residual = 0.0;
    for (h, &horizon) in horizons.iter().enumerate() {
        let tree = branch_tree(model, horizon, tol)?;
        let set = system.final_branches(horizon)?;
        let psi = &set.final_state;
        let leaf_states = tree
            .leaves()
            .map(|(i, node)| Ok((node.label.clone(), tree.branch_state(i, horizon, &model.schedule)?)))
            .collect::<Result<Vec<_>>>()?;
        for (label, state) in &leaf_states {
            let z = inner_product(psi, state)?;
            let p = set.get(label).map_or(0.0, |b| b.probability);
            max_dev = max_dev.max((z - crate::C64::new(p, 0.0)).norm());
            let entry = match leaves.iter_mut().find(|l| &l.label == label) {
                Some(e) => e,
                None => {
                    leaves.push(TreeBranchSeries {
                        label: label.clone(),
                        inner_products: vec![[f64::NAN, f64::NAN]; h],
                        branch_probabilities: vec![0.0; h],
                        spread: 0.0,
                    });
                    leaves.last_mut().expect("just pushed")
                }
            };
            entry.inner_products.push([z.re, z.im]);
            entry.branch_probabilities.push(p);
        }
        for l in leaves.iter_mut() {
            if l.inner_products.len() < h + 1 {
                l.inner_products.push([f64::NAN, f64::NAN]);
                l.branch_probabilities.push(set.get(&l.label).map_or(0.0, |b| b.probability));
            }
        }
        unmatched_branches.push(
            set.labels()
                .filter(|l| !leaf_states.iter().any(|(x, _)| x == l))
                .map(String::from)
                .collect(),
        );
        if h + 1 == horizons.len() {
            let mut dev: f64 = 0.0;
            for (i, (_, a)) in leaf_states.iter().enumerate() {
                let p_i = inner_product(psi, a)?.re;
                for (j, (_, b)) in leaf_states.iter().enumerate() {
                    let g = inner_product(a, b)?;
                    let target = if i == j { p_i } else { 0.0 };
                    dev = dev.max((g - crate::C64::new(target, 0.0)).norm());
                }
            }
            orthogonality_deviation = dev;
            let mut sum = crate::linalg::StateVector::zeros(model.space);
            for (_, s) in &leaf_states {
                sum = sum.add(s)?;
            }
            reconstruction_residual = sum.max_abs_diff(psi)?;
            split_residual = tree.max_split_residual();
        }
    }
    for l in leaves.iter_mut() {
        let re = l.inner_products.iter().map(|z| z[0]).filter(|x| x.is_finite());
        let (lo, hi) = re.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        l.spread = if lo.is_finite() { hi - lo } else { f64::NAN };
    }
    Ok(FtbornReport {
        horizons: horizons.to_vec(),
        leaves,
        max_probability_deviation: max_dev,
        orthogonality_deviation,
        reconstruction_residual,
        split_residual,
        unmatched_branches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;
    use crate::models::{idle_model, measurement_chain, random_model};
    use crate::{ExecMode, C64};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn settings_follow_tolerances() {
        let t = Tolerances { eps_p: 1e-5, n_stable: 2, ..tol() };
        let s = SweepSettings::from(&t);
        assert_eq!((s.eps_p, s.eps_rho, s.n_stable), (1e-5, t.eps_rho, 2));
    }

    #[test]
    fn matrix_parts_split_real_and_imaginary() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(1, 1)] = C64::new(0.5, 0.0);
        m[(0, 1)] = C64::new(0.1, 0.2);
        m[(1, 0)] = C64::new(0.1, -0.2);
        let parts = MatrixParts::from(&DensityMatrix::from_matrix_unchecked(m).unwrap());
        assert_eq!(parts.re, vec![vec![0.5, 0.1], vec![0.1, 0.5]]);
        assert_eq!(parts.im, vec![vec![0.0, 0.2], vec![-0.2, 0.0]]);
    }

    #[test]
    fn label_matching_reports_unmatched() {
        let sys = random_model(1, 2, 3, 1.0, &tol()).unwrap().system(tol()).unwrap();
        let a = sys.final_branches(1.0).unwrap();
        let mut b = a.clone();
        b.branches.retain(|x| x.label != "0");
        let m = match_by_label(&a, &b);
        assert_eq!(m.unmatched_from, vec!["0".to_string()]);
        assert!(m.unmatched_to.is_empty());
        assert_eq!(m.target("0"), None);
        assert_eq!(m.target("1"), Some("1"));
    }

    #[test]
    fn envelope_is_running_min_max() {
        let sys = random_model(9, 2, 2, 1.0, &tol()).unwrap().system(tol()).unwrap();
        let report = horizon_sweep(&sys, &[1.0, 2.0, 3.0, 4.0], &[0.0], SweepSettings::default()).unwrap();
        for t in &report.tracks {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (h, p) in t.probabilities.iter().enumerate() {
                if let Some(p) = p {
                    lo = lo.min(*p);
                    hi = hi.max(*p);
                }
                if lo.is_finite() {
                    assert_eq!(t.envelope_min[h], Some(lo));
                    assert_eq!(t.envelope_max[h], Some(hi));
                }
            }
        }
    }

    #[test]
    fn branch_count_change_inside_window() {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        // definite outcome: one branch before and after the record
        let model = measurement_chain(zero, one, 1, 1.0, &[2.0], &tol()).unwrap();
        let sys = model.system(tol()).unwrap();
        let data = evaluate_horizons(&sys, &[1.0, 4.0, 5.0, 6.0], &[0.0]).unwrap();
        assert!(!window_counts_change(&data, 3));
        // superposed outcome: the record adds a branch at t = 2 + π/2
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let model = measurement_chain(C64::new(h, 0.0), C64::new(h, 0.0), 1, 1.0, &[2.0], &tol()).unwrap();
        let sys = model.system(tol()).unwrap();
        let data = evaluate_horizons(&sys, &[1.0, 4.0, 5.0, 6.0], &[0.0]).unwrap();
        assert!(!window_counts_change(&data, 2));
        assert!(window_counts_change(&data, 3));
    }

    #[test]
    fn sequential_and_parallel_sweeps_agree() {
        let model = idle_model(2, 2, &tol()).unwrap();
        let par = model.system(tol()).unwrap().with_exec(ExecMode::Parallel);
        let seq = model.system(tol()).unwrap().with_exec(ExecMode::Sequential);
        let hs = [1.0, 2.0, 3.0, 4.0];
        let a = horizon_sweep(&par, &hs, &[0.0, 0.5], SweepSettings::default()).unwrap();
        let b = horizon_sweep(&seq, &hs, &[0.0, 0.5], SweepSettings::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ftborn_requires_events() {
        let model = random_model(0, 2, 2, 1.0, &tol()).unwrap();
        assert!(ftborn_check(&model, &[1.0], &tol()).is_err());
        let idle = idle_model(2, 2, &tol()).unwrap();
        assert!(ftborn_check(&idle, &[], &tol()).is_err());
    }
}
