//! Brute-force reference implementations shared by the integration tests.
//!
//! Everything here is deliberately naive and independent of the library's
//! production code paths: a dense single-excitation Hamiltonian, a dense
//! scaling-and-squaring matrix exponential, and direct Brillouin-zone sums.
//! They exist so the fast engines can be checked against something whose
//! correctness is obvious from inspection.
//!
//! Compiled separately into each test binary; not every binary uses every
//! helper.
#![allow(dead_code)]

use num_complex::Complex64;
use std::f64::consts::PI;

/// Dense single-excitation Hamiltonian on an `N × N` lattice with `M`
/// emitters. Basis ordering: the `M` emitter states first, then the `N²`
/// bath modes row-major as `my·N + mx` — the same ordering the matrix-free
/// engine uses for its momentum amplitudes.
pub struct DenseModel {
    /// Total dimension `M + N²`.
    pub dim: usize,
    /// Row-major dense matrix, `dim × dim`.
    pub h: Vec<Complex64>,
}

/// Builds the dense Hamiltonian for emitters at the given offsets (relative
/// to the lattice centre, matching how the matrix-free engine places them):
///
/// ```text
/// H = Δ Σ_j |e_j⟩⟨e_j| + Σ_k ω(k) |k⟩⟨k|
///   + (g/N) Σ_{j,k} ( e^{i k·s_j} |e_j⟩⟨k| + e^{−i k·s_j} |k⟩⟨e_j| )
/// ```
///
/// with `ω(k) = −2J(cos k_x + cos k_y)`, `k = 2π(m_x, m_y)/N`, and
/// `s_j = (N/2 + offset_j) mod N`.
pub fn dense_hamiltonian(
    n: usize,
    j: f64,
    delta: f64,
    g: f64,
    offsets: &[(i64, i64)],
) -> DenseModel {
    let m = offsets.len();
    let dim = m + n * n;
    let mut h = vec![Complex64::new(0.0, 0.0); dim * dim];
    let ni = n as i64;
    let half = ni / 2;

    for (e, _) in offsets.iter().enumerate() {
        h[e * dim + e] = Complex64::new(delta, 0.0);
    }
    let gn = g / n as f64;
    for my in 0..n {
        let ky = 2.0 * PI * my as f64 / n as f64;
        for mx in 0..n {
            let kx = 2.0 * PI * mx as f64 / n as f64;
            let k = m + my * n + mx;
            let omega = -2.0 * j * (kx.cos() + ky.cos());
            h[k * dim + k] = Complex64::new(omega, 0.0);
            for (e, &(ox, oy)) in offsets.iter().enumerate() {
                let sx = (half + ox).rem_euclid(ni) as f64;
                let sy = (half + oy).rem_euclid(ni) as f64;
                let phase = Complex64::cis(kx * sx + ky * sy);
                h[e * dim + k] = gn * phase;
                h[k * dim + e] = gn * phase.conj();
            }
        }
    }
    DenseModel { dim, h }
}

/// `out ← A·x` for a row-major dense matrix.
fn matvec(a: &[Complex64], dim: usize, x: &[Complex64], out: &mut [Complex64]) {
    for r in 0..dim {
        let row = &a[r * dim..(r + 1) * dim];
        let mut acc = Complex64::new(0.0, 0.0);
        for (av, xv) in row.iter().zip(x) {
            acc += av * xv;
        }
        out[r] = acc;
    }
}

/// `C ← A·B` for row-major dense matrices.
fn matmul(a: &[Complex64], b: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); dim * dim];
    for r in 0..dim {
        for inner in 0..dim {
            let av = a[r * dim + inner];
            if av.norm_sqr() == 0.0 {
                continue;
            }
            let brow = &b[inner * dim..(inner + 1) * dim];
            let crow = &mut c[r * dim..(r + 1) * dim];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// Dense `exp(−i H t)` by scaling-and-squaring with a Taylor series.
///
/// The argument is scaled until its max-row-sum norm is below `1/4`, the
/// exponential of the scaled matrix is summed to machine precision (term
/// norms below `1e−20`), and the result is squared back up. Accurate to
/// near machine epsilon for the small matrices used in tests.
pub fn dense_propagator(model: &DenseModel, t: f64) -> Vec<Complex64> {
    let dim = model.dim;
    // A = −i H t.
    let a: Vec<Complex64> = model.h.iter().map(|v| Complex64::new(0.0, -t) * v).collect();
    let norm = (0..dim)
        .map(|r| a[r * dim..(r + 1) * dim].iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let scale = (0.5f64).powi(s as i32);
    let a_s: Vec<Complex64> = a.iter().map(|v| v * scale).collect();

    // Taylor: U = Σ A_s^p / p!.
    let mut u = vec![Complex64::new(0.0, 0.0); dim * dim];
    for r in 0..dim {
        u[r * dim + r] = Complex64::new(1.0, 0.0);
    }
    let mut term = u.clone();
    for p in 1..60 {
        term = matmul(&term, &a_s, dim);
        for v in term.iter_mut() {
            *v /= p as f64;
        }
        let tnorm: f64 = term.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (uv, tv) in u.iter_mut().zip(&term) {
            *uv += tv;
        }
        if tnorm < 1e-20 {
            break;
        }
    }
    for _ in 0..s {
        u = matmul(&u, &u, dim);
    }
    u
}

/// Applies a dense propagator to a state vector.
pub fn apply_propagator(u: &[Complex64], dim: usize, psi: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    matvec(u, dim, psi, &mut out);
    out
}

/// Direct Brillouin-zone sum for the lattice Green's function at the origin:
/// `(1/N²) Σ_k 1/(z − ω(k))` on an `N × N` momentum grid.
pub fn brute_g00(n: usize, j: f64, z: Complex64) -> Complex64 {
    brute_green_offset(n, j, z, (0, 0))
}

/// Direct Brillouin-zone sum for the off-diagonal lattice Green's function:
/// `(1/N²) Σ_k e^{i k·n12} / (z − ω(k))`.
pub fn brute_green_offset(n: usize, j: f64, z: Complex64, n12: (i64, i64)) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for my in 0..n {
        let ky = 2.0 * PI * my as f64 / n as f64;
        let cy = ky.cos();
        let py = Complex64::cis(ky * n12.1 as f64);
        for mx in 0..n {
            let kx = 2.0 * PI * mx as f64 / n as f64;
            let omega = -2.0 * j * (kx.cos() + cy);
            let phase = Complex64::cis(kx * n12.0 as f64) * py;
            total += phase / (z - omega);
        }
    }
    total / (n * n) as f64
}

/// Worst-case amplitude difference between the matrix-free state and a
/// dense state vector in (emitters, then modes) basis order.
pub fn state_distance(
    state: &emitter2d::dynamics::SingleExcitationState,
    dense: &[Complex64],
) -> f64 {
    let m = state.emitter_amps().len();
    let mut worst = 0.0f64;
    for (i, a) in state.emitter_amps().iter().enumerate() {
        worst = worst.max((a - dense[i]).norm());
    }
    for (i, a) in state.bath_amps_k().iter().enumerate() {
        worst = worst.max((a - dense[m + i]).norm());
    }
    worst
}
