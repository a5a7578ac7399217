//! Complete families of orthogonal projectors on `H_B`.
//!
//! Three kinds are supported: a fixed orthonormal basis (the computational
//! basis stands in for position eigenstates), the discrete Fourier basis
//! (a stand-in for momentum eigenstates), and the state-dependent Schmidt
//! projectors, which group Schmidt vectors `f_j` with equal coefficients.

use std::borrow::Cow;
use std::collections::HashSet;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::{
    hermiticity_deviation, max_abs, BipartiteSpace, CMatrix, CVector, OperatorB, StateVector, C64,
};
use crate::{Error, Result, Tolerances};

/// Label of the Schmidt projector onto the complement of the Schmidt support.
pub const NULL_LABEL: &str = "null";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionKind {
    Basis,
    Fourier,
    Schmidt,
}

impl DecompositionKind {
    pub const ALL: [DecompositionKind; 3] = [Self::Basis, Self::Fourier, Self::Schmidt];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Basis => "basis",
            Self::Fourier => "fourier",
            Self::Schmidt => "schmidt",
        }
    }
}

impl std::fmt::Display for DecompositionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledProjector {
    pub label: String,
    pub projector: OperatorB,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectiveDecomposition {
    space: BipartiteSpace,
    kind: DecompositionKind,
    projectors: Vec<LabeledProjector>,
}

impl ProjectiveDecomposition {
    pub fn space(&self) -> BipartiteSpace {
        self.space
    }

    pub fn kind(&self) -> DecompositionKind {
        self.kind
    }

    pub fn projectors(&self) -> &[LabeledProjector] {
        &self.projectors
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.projectors.iter().map(|p| p.label.as_str())
    }

    /// Check idempotence, Hermiticity, pairwise orthogonality, completeness
    /// and label uniqueness.
    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        let d = self.space.d_b();
        let mut seen = HashSet::new();
        for p in &self.projectors {
            if !seen.insert(p.label.as_str()) {
                return Err(Error::InvalidProjector(format!(
                    "duplicate label {:?}",
                    p.label
                )));
            }
            if p.projector.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: p.projector.dim(),
                });
            }
            p.projector.validate_projector(tol.projector)?;
        }
        for (i, p) in self.projectors.iter().enumerate() {
            for q in &self.projectors[i + 1..] {
                let dev = max_abs(&(p.projector.matrix() * q.projector.matrix()));
                if dev > tol.projector {
                    return Err(Error::InvalidProjector(format!(
                        "{} and {} not orthogonal (deviation {dev:.3e})",
                        p.label, q.label
                    )));
                }
            }
        }
        let dev = self.completeness_deviation();
        if dev > tol.projector {
            return Err(Error::InvalidProjector(format!(
                "projectors do not sum to the identity (deviation {dev:.3e})"
            )));
        }
        Ok(())
    }

    /// Largest entry of `|Σ_i P_i − I|`.
    pub fn completeness_deviation(&self) -> f64 {
        let d = self.space.d_b();
        let sum = self
            .projectors
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, p| acc + p.projector.matrix());
        max_abs(&(sum - CMatrix::identity(d, d)))
    }
}

fn rank_one(label: String, v: &CVector) -> LabeledProjector {
    LabeledProjector {
        label,
        projector: OperatorB::projector_onto(v.len(), [v]),
        rank: 1,
    }
}

/// Rank-one projectors onto the columns of `basis`. Default labels are the
/// column indices.
pub fn basis_decomposition(
    space: BipartiteSpace,
    basis: &CMatrix,
    labels: Option<Vec<String>>,
    tol: &Tolerances,
) -> Result<ProjectiveDecomposition> {
    let d = space.d_b();
    if basis.nrows() != d || basis.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: basis.ncols(),
        });
    }
    let dev = max_abs(&(basis.adjoint() * basis - CMatrix::identity(d, d)));
    if !(dev <= tol.orthonormal) {
        return Err(Error::NotOrthonormal { deviation: dev });
    }
    let labels = match labels {
        Some(l) if l.len() != d => {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {d} basis vectors",
                l.len()
            )))
        }
        Some(l) => {
            if l.iter().collect::<HashSet<_>>().len() != l.len() {
                return Err(Error::InvalidArgument("basis labels must be unique".into()));
            }
            l
        }
        None => (0..d).map(|i| i.to_string()).collect(),
    };
    let projectors = labels
        .into_iter()
        .zip(basis.column_iter())
        .map(|(label, col)| rank_one(label, &col.into_owned()))
        .collect();
    Ok(ProjectiveDecomposition {
        space,
        kind: DecompositionKind::Basis,
        projectors,
    })
}

/// Computational basis of `H_B`. With `bit_labels`, `d_B` must be a power of
/// two and each label is the binary string of the index, most significant
/// bit first (one character per environment qubit).
pub fn computational_decomposition(
    space: BipartiteSpace,
    bit_labels: bool,
) -> Result<ProjectiveDecomposition> {
    let d = space.d_b();
    let labels: Vec<String> = if bit_labels {
        if !d.is_power_of_two() || d < 2 {
            return Err(Error::InvalidArgument(format!(
                "bit labels need d_B to be a power of two ≥ 2, got {d}"
            )));
        }
        let n = d.trailing_zeros() as usize;
        (0..d).map(|i| format!("{i:0n$b}")).collect()
    } else {
        (0..d).map(|i| i.to_string()).collect()
    };
    let projectors = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut m = CMatrix::zeros(d, d);
            m[(i, i)] = C64::new(1.0, 0.0);
            LabeledProjector {
                label,
                projector: OperatorB::new(m).expect("square"),
                rank: 1,
            }
        })
        .collect();
    Ok(ProjectiveDecomposition {
        space,
        kind: DecompositionKind::Basis,
        projectors,
    })
}

/// Discrete Fourier vectors `g_m[b] = e^{2πi·mb/d_B}/√d_B`, labeled by `m`.
pub fn fourier_decomposition(space: BipartiteSpace) -> ProjectiveDecomposition {
    let d = space.d_b();
    let norm = 1.0 / (d as f64).sqrt();
    let projectors = (0..d)
        .map(|m| {
            let g = CVector::from_fn(d, |b, _| {
                C64::from_polar(norm, 2.0 * PI * ((m * b) % d) as f64 / d as f64)
            });
            rank_one(m.to_string(), &g)
        })
        .collect();
    ProjectiveDecomposition {
        space,
        kind: DecompositionKind::Fourier,
        projectors,
    }
}

/// Schmidt decomposition `ψ = Σ_j c_j e_j ⊗ f_j` with degeneracy groups.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtData {
    /// Nonzero coefficients `c_j = p_j^{1/2}`, nonincreasing.
    pub coefficients: Vec<f64>,
    pub vectors_a: Vec<CVector>,
    pub vectors_b: Vec<CVector>,
    /// Consecutive index ranges of equal coefficients.
    pub groups: Vec<Vec<usize>>,
}

impl SchmidtData {
    /// `Σ_j c_j e_j ⊗ f_j`.
    pub fn reconstruct(&self, space: BipartiteSpace) -> Result<StateVector> {
        self.reconstruct_indices(space, 0..self.coefficients.len())
    }

    /// `Σ_{j ∈ idx} c_j e_j ⊗ f_j`.
    pub fn reconstruct_indices(
        &self,
        space: BipartiteSpace,
        idx: impl IntoIterator<Item = usize>,
    ) -> Result<StateVector> {
        let mut m = CMatrix::zeros(space.d_a(), space.d_b());
        for j in idx {
            m += &self.vectors_a[j] * self.vectors_b[j].transpose() * C64::new(self.coefficients[j], 0.0);
        }
        StateVector::from_amplitude_matrix(space, &m)
    }
}

/// Singular-value decomposition of the amplitude matrix, sorted and
/// grouped by consecutive gaps `≤ eps_deg`. Coefficients at or below
/// `tol.schmidt_zero` are dropped.
pub fn schmidt(psi: &StateVector, eps_deg: f64, tol: &Tolerances) -> Result<SchmidtData> {
    if psi.norm_sqr() == 0.0 {
        return Err(Error::ZeroState("Schmidt decomposition"));
    }
    if !(eps_deg >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps_deg must be ≥ 0, got {eps_deg}")));
    }
    let m = psi.amplitude_matrix();
    let svd = m
        .try_svd(true, true, 1e-15, 100_000)
        .ok_or_else(|| Error::Numerical {
            operation: "schmidt",
            detail: "SVD did not converge".into(),
        })?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(Error::Numerical {
                operation: "schmidt",
                detail: "SVD returned no singular vectors".into(),
            })
        }
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut data = SchmidtData {
        coefficients: Vec::new(),
        vectors_a: Vec::new(),
        vectors_b: Vec::new(),
        groups: Vec::new(),
    };
    for i in order {
        let c = svd.singular_values[i];
        if c <= tol.schmidt_zero {
            continue;
        }
        data.coefficients.push(c);
        data.vectors_a.push(u.column(i).into_owned());
        // M = U Σ V†, so ψ = Σ σ_j u_j ⊗ (row j of V†)ᵀ.
        data.vectors_b.push(v_t.row(i).transpose());
    }
    for (j, pair) in std::iter::once(None)
        .chain(data.coefficients.windows(2).map(Some))
        .enumerate()
    {
        match pair {
            Some(w) if w[0] - w[1] <= eps_deg => data.groups.last_mut().expect("group").push(j),
            _ => data.groups.push(vec![j]),
        }
    }
    Ok(data)
}

/// One projector per degeneracy group onto `span{f_j}`, labeled `s0, s1, …`
/// in order of decreasing coefficient, plus a [`NULL_LABEL`] projector onto
/// the complement when the groups do not span `H_B`.
pub fn schmidt_projectors(
    psi: &StateVector,
    eps_deg: f64,
    tol: &Tolerances,
) -> Result<ProjectiveDecomposition> {
    let data = schmidt(psi, eps_deg, tol)?;
    Ok(projectors_from_schmidt(psi.space(), &data))
}

pub(crate) fn projectors_from_schmidt(
    space: BipartiteSpace,
    data: &SchmidtData,
) -> ProjectiveDecomposition {
    let d = space.d_b();
    let mut projectors: Vec<LabeledProjector> = data
        .groups
        .iter()
        .enumerate()
        .map(|(g, idx)| LabeledProjector {
            label: format!("s{g}"),
            projector: OperatorB::projector_onto(d, idx.iter().map(|&j| &data.vectors_b[j])),
            rank: idx.len(),
        })
        .collect();
    let support: usize = projectors.iter().map(|p| p.rank).sum();
    if support < d {
        let sum = projectors
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, p| acc + p.projector.matrix());
        let complement = CMatrix::identity(d, d) - sum;
        // symmetrize away rounding so the result is exactly Hermitian
        let complement = (&complement + complement.adjoint()) * C64::new(0.5, 0.0);
        debug_assert!(hermiticity_deviation(&complement) == 0.0);
        projectors.push(LabeledProjector {
            label: NULL_LABEL.to_string(),
            projector: OperatorB::new(complement).expect("square"),
            rank: d - support,
        });
    }
    ProjectiveDecomposition {
        space,
        kind: DecompositionKind::Schmidt,
        projectors,
    }
}

/// How to obtain the projector family at a given time.
#[derive(Debug, Clone)]
pub enum DecompositionSpec {
    /// The same family at every time (basis or Fourier kind).
    Fixed(Arc<ProjectiveDecomposition>),
    /// Schmidt projectors rebuilt from `ψ(t)` at each time.
    Schmidt { eps_deg: f64 },
}

impl DecompositionSpec {
    pub fn computational(space: BipartiteSpace, bit_labels: bool) -> Result<Self> {
        Ok(Self::Fixed(Arc::new(computational_decomposition(space, bit_labels)?)))
    }

    pub fn fourier(space: BipartiteSpace) -> Self {
        Self::Fixed(Arc::new(fourier_decomposition(space)))
    }

    pub fn schmidt(eps_deg: f64) -> Self {
        Self::Schmidt { eps_deg }
    }

    pub fn kind(&self) -> DecompositionKind {
        match self {
            Self::Fixed(d) => d.kind(),
            Self::Schmidt { .. } => DecompositionKind::Schmidt,
        }
    }

    pub fn is_state_dependent(&self) -> bool {
        matches!(self, Self::Schmidt { .. })
    }

    /// Projector family for the state `psi_t` at some time.
    pub fn at<'a>(
        &'a self,
        psi_t: &StateVector,
        tol: &Tolerances,
    ) -> Result<Cow<'a, ProjectiveDecomposition>> {
        match self {
            Self::Fixed(d) => {
                if d.space() != psi_t.space() {
                    return Err(Error::DimensionMismatch {
                        expected: d.space().dim(),
                        found: psi_t.space().dim(),
                    });
                }
                Ok(Cow::Borrowed(d.as_ref()))
            }
            Self::Schmidt { eps_deg } => Ok(Cow::Owned(schmidt_projectors(psi_t, *eps_deg, tol)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::apply_projector_b;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_state(seed: u64, space: BipartiteSpace) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..space.dim())
            .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        StateVector::new(space, amps).unwrap().normalized().unwrap()
    }

    fn random_unitary(seed: u64, d: usize) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(d, d, |_, _| {
            C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        g.qr().q()
    }

    fn bell() -> StateVector {
        let s = BipartiteSpace::new(2, 2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(s, vec![c(h), c(0.0), c(0.0), c(h)]).unwrap()
    }

    fn unequal() -> StateVector {
        let s = BipartiteSpace::new(2, 2).unwrap();
        StateVector::new(s, vec![c(0.3f64.sqrt()), c(0.0), c(0.0), c(0.7f64.sqrt())]).unwrap()
    }

    #[test]
    fn computational_basis_d2() {
        let tol = Tolerances::default();
        let s = BipartiteSpace::new(1, 2).unwrap();
        let d = computational_decomposition(s, false).unwrap();
        assert_eq!(d.labels().collect::<Vec<_>>(), ["0", "1"]);
        assert_eq!(d.projectors()[0].projector.matrix()[(0, 0)], c(1.0));
        assert_eq!(d.projectors()[1].projector.matrix()[(1, 1)], c(1.0));
        d.validate(&tol).unwrap();
        assert_eq!(d.completeness_deviation(), 0.0);

        let bits = computational_decomposition(BipartiteSpace::new(2, 8).unwrap(), true).unwrap();
        assert_eq!(bits.projectors()[3].label, "011");
        assert!(computational_decomposition(BipartiteSpace::new(2, 3).unwrap(), true).is_err());
    }

    #[test]
    fn random_unitary_basis_is_valid() {
        let tol = Tolerances {
            projector: 1e-12,
            ..Tolerances::default()
        };
        let s = BipartiteSpace::new(2, 3).unwrap();
        let u = random_unitary(21, 3);
        let d = basis_decomposition(s, &u, None, &tol).unwrap();
        d.validate(&tol).unwrap();

        let mut skew = u.clone();
        skew[(0, 0)] += c(0.01);
        assert!(matches!(
            basis_decomposition(s, &skew, None, &tol),
            Err(Error::NotOrthonormal { .. })
        ));
        assert!(basis_decomposition(s, &u, Some(vec!["a".into(); 3]), &tol).is_err());
    }

    #[test]
    fn fourier_examples() {
        let tol = Tolerances {
            projector: 1e-12,
            ..Tolerances::default()
        };
        let d2 = fourier_decomposition(BipartiteSpace::new(1, 2).unwrap());
        let plus = d2.projectors()[0].projector.matrix();
        let minus = d2.projectors()[1].projector.matrix();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((plus[(i, j)] - c(0.5)).norm() < 1e-15);
            let sign = if i == j { 0.5 } else { -0.5 };
            assert!((minus[(i, j)] - c(sign)).norm() < 1e-15);
        }
        let d1 = fourier_decomposition(BipartiteSpace::new(3, 1).unwrap());
        assert_eq!(d1.len(), 1);
        assert!((d1.projectors()[0].projector.matrix()[(0, 0)] - c(1.0)).norm() < 1e-15);
        fourier_decomposition(BipartiteSpace::new(2, 4).unwrap())
            .validate(&tol)
            .unwrap();
    }

    #[test]
    fn schmidt_examples() {
        let tol = Tolerances::default();
        let prod = StateVector::product(&[c(0.6), c(0.8)], &[c(0.0), c(2.0)]).unwrap();
        let data = schmidt(&prod, 1e-8, &tol).unwrap();
        assert_eq!(data.coefficients.len(), 1);
        assert!((data.coefficients[0] - 2.0).abs() < 1e-14);
        assert_eq!(data.groups, vec![vec![0]]);

        let data = schmidt(&bell(), 1e-8, &tol).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(data.coefficients.iter().all(|x| (x - h).abs() < 1e-14));
        assert_eq!(data.groups, vec![vec![0, 1]]);

        let data = schmidt(&unequal(), 1e-6, &tol).unwrap();
        assert!((data.coefficients[0] - 0.7f64.sqrt()).abs() < 1e-14);
        assert!((data.coefficients[1] - 0.3f64.sqrt()).abs() < 1e-14);
        assert_eq!(data.groups, vec![vec![0], vec![1]]);

        let zero = StateVector::zeros(BipartiteSpace::new(2, 2).unwrap());
        assert_eq!(schmidt(&zero, 1e-8, &tol), Err(Error::ZeroState("Schmidt decomposition")));
    }

    #[test]
    fn schmidt_projector_examples() {
        let tol = Tolerances::default();
        let d = schmidt_projectors(&bell(), 1e-8, &tol).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.projectors()[0].rank, 2);
        assert!(max_abs(&(d.projectors()[0].projector.matrix() - CMatrix::identity(2, 2))) < 1e-14);

        let d = schmidt_projectors(&unequal(), 1e-6, &tol).unwrap();
        assert_eq!(d.labels().collect::<Vec<_>>(), ["s0", "s1"]);
        let p0 = d.projectors()[0].projector.matrix();
        assert!((p0[(1, 1)] - c(1.0)).norm() < 1e-14 && p0[(0, 0)].norm() < 1e-14);
        d.validate(&tol).unwrap();

        let prod = StateVector::product(&[c(1.0), c(0.0)], &[c(0.6), c(0.8)]).unwrap();
        let d = schmidt_projectors(&prod, 1e-8, &tol).unwrap();
        assert_eq!(d.labels().collect::<Vec<_>>(), ["s0", NULL_LABEL]);
        assert_eq!(d.projectors()[1].rank, 1);
        d.validate(&tol).unwrap();
    }

    #[test]
    fn schmidt_groups_chain_consecutive_gaps() {
        // coefficients 0.5, 0.5+δ/2... chained within eps but endpoints differ by more
        let tol = Tolerances::default();
        let s = BipartiteSpace::new(3, 3).unwrap();
        let raw = [1.0, 1.0 - 0.6e-8, 1.0 - 1.2e-8];
        let mut amps = vec![c(0.0); 9];
        for (i, x) in raw.iter().enumerate() {
            amps[s.index(i, i)] = c(*x);
        }
        let psi = StateVector::new(s, amps).unwrap();
        let data = schmidt(&psi, 1e-8, &tol).unwrap();
        assert_eq!(data.groups, vec![vec![0, 1, 2]]);
        let data = schmidt(&psi, 0.5e-8, &tol).unwrap();
        assert_eq!(data.groups, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn schmidt_group_components_match_expansion() {
        let tol = Tolerances::default();
        for (seed, (da, db)) in [(2, 3), (4, 2), (3, 3), (1, 4)].into_iter().enumerate() {
            let s = BipartiteSpace::new(da, db).unwrap();
            let psi = random_state(seed as u64 + 100, s);
            let data = schmidt(&psi, 1e-8, &tol).unwrap();
            assert!(data.reconstruct(s).unwrap().max_abs_diff(&psi).unwrap() < 1e-10);
            let sq: f64 = data.coefficients.iter().map(|x| x * x).sum();
            assert!((sq - psi.norm_sqr()).abs() < 1e-10);
            let dec = projectors_from_schmidt(s, &data);
            dec.validate(&tol).unwrap();
            for (g, idx) in data.groups.iter().enumerate() {
                let comp = apply_projector_b(&psi, &dec.projectors()[g].projector).unwrap();
                let expect = data.reconstruct_indices(s, idx.iter().copied()).unwrap();
                assert!(comp.max_abs_diff(&expect).unwrap() < 1e-10);
            }
        }
    }
}
