//! Brute-force reference computations for tests.
//!
//! Nothing here calls into `branchsim`: matrices are built with explicit
//! index loops, and time evolution uses a scaled-and-squared Taylor series
//! instead of an eigendecomposition.

use nalgebra::{DMatrix, DVector};

pub type C64 = nalgebra::Complex<f64>;
pub type Mat = DMatrix<C64>;
pub type Vector = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `exp(−iHt)` by Taylor series after scaling `Ht` below 1/2, then squaring.
pub fn expm_evolution(h: &Mat, t: f64) -> Mat {
    let n = h.nrows();
    let a = h * c(0.0, -t);
    let norm: f64 = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a * c(scale, 0.0);
    let mut term = Mat::identity(n, n);
    let mut sum = Mat::identity(n, n);
    for k in 1..40 {
        term = &term * &a * c(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Constant-Hamiltonian pieces `(H, start, end)`; `end` may be infinite.
pub type Pieces = Vec<(Mat, f64, f64)>;

/// `U(t2, t1)` for `t1 ≤ t2` as a product of per-piece exponentials.
pub fn evolution_operator(pieces: &Pieces, t1: f64, t2: f64) -> Mat {
    assert!(t1 <= t2);
    let n = pieces[0].0.nrows();
    let mut u = Mat::identity(n, n);
    for (h, start, end) in pieces {
        let lo = t1.max(*start);
        let hi = t2.min(*end);
        if hi > lo {
            u = expm_evolution(h, hi - lo) * u;
        }
    }
    u
}

pub fn evolve(pieces: &Pieces, psi: &Vector, t1: f64, t2: f64) -> Vector {
    evolution_operator(pieces, t1, t2) * psi
}

/// `I_A ⊗ P` with flat index `a·d_B + b`, built entry by entry.
pub fn embed_b(p: &Mat, d_a: usize) -> Mat {
    let d_b = p.nrows();
    let n = d_a * d_b;
    let mut m = Mat::zeros(n, n);
    for a in 0..d_a {
        for b in 0..d_b {
            for bp in 0..d_b {
                m[(a * d_b + b, a * d_b + bp)] = p[(b, bp)];
            }
        }
    }
    m
}

/// `O_A ⊗ I_B`, entry by entry.
pub fn embed_a(o: &Mat, d_b: usize) -> Mat {
    let d_a = o.nrows();
    let n = d_a * d_b;
    let mut m = Mat::zeros(n, n);
    for a in 0..d_a {
        for ap in 0..d_a {
            for b in 0..d_b {
                m[(a * d_b + b, ap * d_b + b)] = o[(a, ap)];
            }
        }
    }
    m
}

/// `(Tr_B ψψ†)_{a,a'} = Σ_b ψ[a·d_B+b]·conj(ψ[a'·d_B+b])`.
pub fn partial_trace_b(psi: &Vector, d_a: usize, d_b: usize) -> Mat {
    let mut m = Mat::zeros(d_a, d_a);
    for a in 0..d_a {
        for ap in 0..d_a {
            let mut z = c(0.0, 0.0);
            for b in 0..d_b {
                z += psi[a * d_b + b] * psi[ap * d_b + b].conj();
            }
            m[(a, ap)] = z;
        }
    }
    m
}

pub fn inner(phi: &Vector, psi: &Vector) -> C64 {
    phi.iter().zip(psi.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(psi: &Vector) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum()
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rank-one computational-basis projector `|i⟩⟨i|` on a `d`-dimensional space.
pub fn basis_projector(d: usize, i: usize) -> Mat {
    let mut m = Mat::zeros(d, d);
    m[(i, i)] = c(1.0, 0.0);
    m
}

/// Two-time weights computed the direct way: every component is evolved
/// forward to `T` and overlapped with the final branch.
///
/// Returns `(q, p)` over the components at `t` that are nonzero (squared
/// norm above `floor`), in projector order.
#[allow(clippy::too_many_arguments)]
pub fn two_time_weights(
    psi0: &Vector,
    pieces: &Pieces,
    d_a: usize,
    projectors_t: &[Mat],
    final_projector: &Mat,
    t: f64,
    horizon: f64,
    floor: f64,
) -> (Vec<f64>, Vec<f64>) {
    let psi_t = evolve(pieces, psi0, 0.0, t);
    let psi_t_final = evolve(pieces, psi0, 0.0, horizon);
    let branch = embed_b(final_projector, d_a) * psi_t_final;
    let u = evolution_operator(pieces, t, horizon);
    let mut q = Vec::new();
    for p in projectors_t {
        let comp = embed_b(p, d_a) * &psi_t;
        if norm_sqr(&comp) <= floor {
            continue;
        }
        q.push(inner(&branch, &(&u * comp)).norm_sqr());
    }
    let total: f64 = q.iter().sum();
    let p = q.iter().map(|x| x / total).collect();
    (q, p)
}

/// Real state `Σ_k p_k Tr_B(ψ_kψ_k†)/⟨ψ_k,ψ_k⟩` from the direct weights.
#[allow(clippy::too_many_arguments)]
pub fn real_state(
    psi0: &Vector,
    pieces: &Pieces,
    d_a: usize,
    projectors_t: &[Mat],
    final_projector: &Mat,
    t: f64,
    horizon: f64,
    floor: f64,
) -> Mat {
    let d_b = final_projector.nrows();
    let (_, weights) = two_time_weights(psi0, pieces, d_a, projectors_t, final_projector, t, horizon, floor);
    let psi_t = evolve(pieces, psi0, 0.0, t);
    let mut rho = Mat::zeros(d_a, d_a);
    let mut k = 0;
    for p in projectors_t {
        let comp = embed_b(p, d_a) * &psi_t;
        let n = norm_sqr(&comp);
        if n <= floor {
            continue;
        }
        rho += partial_trace_b(&comp, d_a, d_b) * c(weights[k] / n, 0.0);
        k += 1;
    }
    rho
}

/// Hamiltonian `g·|1⟩⟨1|_sys ⊗ X_q` on one system qubit and `n_env`
/// environment qubits (qubit 0 most significant).
pub fn controlled_flip_hamiltonian(n_env: usize, qubit: usize, g: f64) -> Mat {
    let d_b = 1usize << n_env;
    let n = 2 * d_b;
    let bit = 1usize << (n_env - 1 - qubit);
    let mut h = Mat::zeros(n, n);
    for b in 0..d_b {
        h[(d_b + b, d_b + (b ^ bit))] = c(g, 0.0);
    }
    h
}

/// `g·σ_y ⊗ I` on the system qubit.
pub fn system_sigma_y(n_env: usize, g: f64) -> Mat {
    let mut sy = Mat::zeros(2, 2);
    sy[(0, 1)] = c(0.0, -g);
    sy[(1, 0)] = c(0.0, g);
    embed_a(&sy, 1 << n_env)
}

/// Piecewise schedule of a measurement chain: gaps with `H = 0`, a
/// controlled flip of qubit `j` on `[t_j, t_j + π/(2g)]`, then `H = 0`
/// forever.
pub fn chain_pieces(n_env: usize, g: f64, record_times: &[f64]) -> Pieces {
    let n = 2usize << n_env;
    let width = std::f64::consts::PI / (2.0 * g);
    let mut pieces = Vec::new();
    let mut clock = 0.0;
    for (j, &t) in record_times.iter().enumerate() {
        if t > clock {
            pieces.push((Mat::zeros(n, n), clock, t));
        }
        pieces.push((controlled_flip_hamiltonian(n_env, j, g), t, t + width));
        clock = t + width;
    }
    pieces.push((Mat::zeros(n, n), clock, f64::INFINITY));
    pieces
}

/// `(α|0⟩ + β|1⟩) ⊗ |0…0⟩`.
pub fn chain_initial(alpha: C64, beta: C64, n_env: usize) -> Vector {
    let d_b = 1usize << n_env;
    let mut v = Vector::zeros(2 * d_b);
    v[0] = alpha;
    v[d_b] = beta;
    v
}

/// Three-sigma half width of a binomial proportion.
pub fn binomial_three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_pauli_x() {
        let mut x = Mat::zeros(2, 2);
        x[(0, 1)] = c(1.0, 0.0);
        x[(1, 0)] = c(1.0, 0.0);
        let t = 0.37;
        let u = expm_evolution(&x, t);
        assert!((u[(0, 0)] - c(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[(0, 1)] - c(0.0, -t.sin())).norm() < 1e-14);
        let u = expm_evolution(&(x * c(25.0, 0.0)), 1.3);
        assert!((u[(0, 0)] - c((32.5f64).cos(), 0.0)).norm() < 1e-11);
    }

    #[test]
    fn controlled_flip_flips_on_one() {
        let h = controlled_flip_hamiltonian(2, 1, 2.0);
        let u = expm_evolution(&h, std::f64::consts::PI / 4.0);
        // |1⟩|00⟩ (index 4) → −i|1⟩|01⟩ (index 5)
        assert!((u[(5, 4)] - c(0.0, -1.0)).norm() < 1e-13);
        assert!((u[(0, 0)] - c(1.0, 0.0)).norm() < 1e-13);
    }
}
