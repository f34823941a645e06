//! Shared numerical kernels.
//!
//! * Globally adaptive Gauss–Kronrod quadrature for complex-valued integrands
//!   of a real variable, with caller-supplied interior breakpoints so that
//!   integrable endpoint singularities are attacked by bisection from the
//!   start.
//! * Neville polynomial extrapolation (used to take boundary values
//!   `f(E + iη) → f(E + i0⁺)` of functions analytic off the real axis).
//! * Exact Fourier moments of piecewise cubic Hermite interpolants, giving a
//!   Filon-type evaluation of `∫ f(E) e^{−iEt} dE` whose accuracy does not
//!   degrade as `t` grows.
//! * The complete elliptic integral of the first kind via the
//!   arithmetic–geometric mean (closed-form cross-check for the lattice
//!   density of states).

use num_complex::Complex64;
use std::collections::BinaryHeap;

/// Abscissae of the 15-point Kronrod rule (positive half; the rule is
/// symmetric about the interval midpoint). Even indices are the points added
/// by Kronrod, odd indices are the embedded 7-point Gauss abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_838_258_73,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.000_000_000_000_000_000_000_000_000_000_00,
];

/// Weights of the 15-point Kronrod rule, matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_20,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];

/// Weights of the embedded 7-point Gauss rule (for `XGK[1], XGK[3], XGK[5]`
/// and the midpoint `XGK[7]`).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];

/// One application of the 15-point Gauss–Kronrod pair on `[a, b]`.
///
/// Returns the Kronrod estimate and an error estimate (the absolute
/// Gauss/Kronrod discrepancy, a deliberately conservative choice).
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let half = 0.5 * (b - a);
    let centre = 0.5 * (a + b);

    let fc = f(centre);
    let mut result_gauss = WG[3] * fc;
    let mut result_kronrod = WGK[7] * fc;

    for j in 0..3 {
        let x = XGK[2 * j + 1];
        let f1 = f(centre - half * x);
        let f2 = f(centre + half * x);
        let sum = f1 + f2;
        result_gauss += WG[j] * sum;
        result_kronrod += WGK[2 * j + 1] * sum;
    }
    for j in 0..4 {
        let x = XGK[2 * j];
        let f1 = f(centre - half * x);
        let f2 = f(centre + half * x);
        result_kronrod += WGK[2 * j] * (f1 + f2);
    }

    let value = result_kronrod * half;
    let err = (result_kronrod - result_gauss).norm() * half.abs();
    (value, err)
}

/// Work item of the global adaptive refinement, ordered by error estimate.
struct Interval {
    err: f64,
    a: f64,
    b: f64,
    value: Complex64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod quadrature of a complex-valued integrand
/// over the union of the panels delimited by `breakpoints`.
///
/// `breakpoints` must be strictly increasing and contain at least two entries
/// (the overall endpoints). Known singular abscissae of the integrand should
/// be supplied as interior breakpoints so that they sit at panel endpoints,
/// where bisection converges even for inverse-square-root singularities.
///
/// Refinement always bisects the panel with the largest error estimate and
/// stops once the summed error estimate drops below `tol_abs` or
/// `max_intervals` panels exist. The returned error estimate is the summed
/// panel estimate; callers that need a guarantee should check it.
pub fn adaptive_quadrature<F: Fn(f64) -> Complex64>(
    f: &F,
    breakpoints: &[f64],
    tol_abs: f64,
    max_intervals: usize,
) -> (Complex64, f64) {
    assert!(breakpoints.len() >= 2, "need at least the two endpoints");
    let mut heap: BinaryHeap<Interval> = BinaryHeap::new();

    // The running error total is maintained incrementally (recomputing it
    // from the heap each iteration would make refinement quadratic in the
    // interval count); the update sequence is identical on every run, so
    // determinism is unaffected.
    let mut total_err = 0.0;
    for pair in breakpoints.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        assert!(b > a, "breakpoints must be strictly increasing");
        let (value, err) = gk15(f, a, b);
        total_err += err;
        heap.push(Interval { err, a, b, value });
    }

    while total_err > tol_abs && heap.len() < max_intervals {
        let worst = heap.pop().expect("heap cannot be empty here");
        let mid = 0.5 * (worst.a + worst.b);
        total_err -= worst.err;
        if mid <= worst.a || mid >= worst.b {
            // Interval has collapsed to machine precision; keep it as is.
            heap.push(Interval {
                err: 0.0,
                ..worst
            });
            continue;
        }
        let (v1, e1) = gk15(f, worst.a, mid);
        let (v2, e2) = gk15(f, mid, worst.b);
        total_err += e1 + e2;
        heap.push(Interval {
            err: e1,
            a: worst.a,
            b: mid,
            value: v1,
        });
        heap.push(Interval {
            err: e2,
            a: mid,
            b: worst.b,
            value: v2,
        });
    }

    // Re-sum in left-to-right order so the result is independent of the heap's
    // internal ordering (bit-for-bit determinism of reruns).
    let mut panels: Vec<Interval> = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = panels.iter().fold(Complex64::new(0.0, 0.0), |acc, p| acc + p.value);
    let err = panels.iter().map(|p| p.err).sum();
    (value, err)
}

/// Neville polynomial extrapolation of the points `(xs[i], ys[i])` to `x`.
///
/// Exact for polynomial data; used to extrapolate regulator sequences such as
/// `η → 0`. `xs` must be pairwise distinct. Runs in `O(n²)`.
pub fn neville_extrapolate(xs: &[f64], ys: &[Complex64], x: f64) -> Complex64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let mut table: Vec<Complex64> = ys.to_vec();
    let n = xs.len();
    for level in 1..n {
        for i in 0..(n - level) {
            let denom = xs[i] - xs[i + level];
            table[i] = ((x - xs[i + level]) * table[i] - (x - xs[i]) * table[i + 1]) / denom;
        }
    }
    table[0]
}

/// Exact moments `I_p(h, t) = ∫₀^h u^p e^{−iut} du` for `p = 0..=3`.
///
/// For small `|ht|` the Taylor series in `(−it)` is used (the upward
/// recurrence loses accuracy there); otherwise the recurrence
/// `I_0 = (1 − e^{−iht})/(it)`, `I_p = (p·I_{p−1} − h^p e^{−iht})/(it)`.
pub fn fourier_segment_moments(h: f64, t: f64) -> [Complex64; 4] {
    let ht = h * t;
    let mut out = [Complex64::new(0.0, 0.0); 4];
    if ht.abs() < 4.0 {
        // I_p = Σ_j (−it)^j h^{p+j+1} / (j! (p+j+1))
        let mit = Complex64::new(0.0, -t);
        for (p, slot) in out.iter_mut().enumerate() {
            let mut term = Complex64::new(h.powi(p as i32 + 1), 0.0);
            let mut sum = term / (p as f64 + 1.0);
            let mut j = 1.0;
            loop {
                term = term * mit * h / j;
                let add = term / (p as f64 + j + 1.0);
                sum += add;
                if add.norm() <= 1e-18 * sum.norm().max(f64::MIN_POSITIVE) || j > 60.0 {
                    break;
                }
                j += 1.0;
            }
            *slot = sum;
        }
    } else {
        let it = Complex64::new(0.0, t);
        let e = Complex64::new(0.0, -ht).exp();
        out[0] = (Complex64::new(1.0, 0.0) - e) / it;
        let mut hp = 1.0;
        for p in 1..4 {
            hp *= h;
            out[p] = (p as f64 * out[p - 1] - hp * e) / it;
        }
    }
    out
}

/// Filon-type evaluation of `∫ f(E) e^{−iEt} dE` for a real function `f`
/// tabulated as a cubic Hermite interpolant on `nodes` (values `f`, slopes
/// `m`).
///
/// Each segment contributes `e^{−i x_j t} Σ_p c_p I_p(h_j, t)` with the exact
/// moments from [`fourier_segment_moments`], so the only error is the Hermite
/// interpolation error of `f` itself — independent of `t`.
pub fn fourier_cubic_hermite(nodes: &[f64], values: &[f64], slopes: &[f64], t: f64) -> Complex64 {
    assert_eq!(nodes.len(), values.len());
    assert_eq!(nodes.len(), slopes.len());
    assert!(nodes.len() >= 2);

    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..nodes.len() - 1 {
        let h = nodes[j + 1] - nodes[j];
        debug_assert!(h > 0.0);
        let f0 = values[j];
        let f1 = values[j + 1];
        let m0 = slopes[j];
        let m1 = slopes[j + 1];
        let d = (f1 - f0) / h;
        let c0 = f0;
        let c1 = m0;
        let c2 = (3.0 * d - 2.0 * m0 - m1) / h;
        let c3 = (m0 + m1 - 2.0 * d) / (h * h);
        let moments = fourier_segment_moments(h, t);
        let segment =
            c0 * moments[0] + c1 * moments[1] + c2 * moments[2] + c3 * moments[3];
        let phase = Complex64::new(0.0, -nodes[j] * t).exp();
        acc += phase * segment;
    }
    acc
}

/// Slopes for a cubic Hermite interpolant of `values` on the (possibly
/// non-uniform) grid `nodes`, from three-point finite differences (one-sided
/// at the ends). Fourth-order-accurate interpolation in the interior for
/// smooth data.
pub fn hermite_slopes(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    assert_eq!(n, values.len());
    assert!(n >= 3);
    let mut m = vec![0.0; n];
    for i in 0..n {
        if i == 0 {
            let h0 = nodes[1] - nodes[0];
            let h1 = nodes[2] - nodes[1];
            let d0 = (values[1] - values[0]) / h0;
            let d1 = (values[2] - values[1]) / h1;
            m[0] = d0 + (d0 - d1) * h0 / (h0 + h1);
        } else if i == n - 1 {
            let h0 = nodes[n - 2] - nodes[n - 3];
            let h1 = nodes[n - 1] - nodes[n - 2];
            let d0 = (values[n - 2] - values[n - 3]) / h0;
            let d1 = (values[n - 1] - values[n - 2]) / h1;
            m[n - 1] = d1 + (d1 - d0) * h1 / (h0 + h1);
        } else {
            let h0 = nodes[i] - nodes[i - 1];
            let h1 = nodes[i + 1] - nodes[i];
            let d0 = (values[i] - values[i - 1]) / h0;
            let d1 = (values[i + 1] - values[i]) / h1;
            // Weighted by the opposite interval: exact for quadratics.
            m[i] = (h1 * d0 + h0 * d1) / (h0 + h1);
        }
    }
    m
}

/// Complete elliptic integral of the first kind `K(k)` as a function of the
/// modulus `k ∈ [0, 1)`, via the arithmetic–geometric mean:
/// `K(k) = π / (2 · agm(1, √(1−k²)))`.
pub fn complete_elliptic_k(k: f64) -> f64 {
    assert!((0.0..1.0).contains(&k), "modulus must lie in [0, 1)");
    let mut a = 1.0;
    let mut b = (1.0 - k * k).sqrt();
    // Quadratic convergence reaches machine precision in < 10 sweeps; the
    // cap guards against the iterates dithering by one ulp around the limit.
    for _ in 0..64 {
        if (a - b).abs() <= 2.0 * f64::EPSILON * a {
            break;
        }
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        a = an;
        b = bn;
    }
    std::f64::consts::PI / (2.0 * a)
}
