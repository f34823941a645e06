//! Lattice Green's functions and emitter self-energies.
//!
//! Everything here concerns the resolvent of the bath band on the infinite
//! lattice (with finite-lattice sums as cross-checks). The central object is
//! the local Green's function
//!
//! ```text
//! g₀₀(z) = (1/2π)² ∬ d²k / (z − ω(k)),
//! ```
//!
//! reduced to a single integral by performing the `kx` integration in closed
//! form: with `w = z + 2J cos ky` and `s(w) = √(w−2J)·√(w+2J)` (principal
//! branches, so the only cut is the segment `[−2J, 2J]` and `s(w) ~ w` at
//! infinity),
//!
//! ```text
//! g₀₀(z) = (1/π) ∫₀^π dky / s(w),
//! ```
//!
//! and more generally, for a site offset `n = (nx, ny)`,
//!
//! ```text
//! G_n(z) = (1/π) ∫₀^π dky cos(ky·ny) · u₊(w)^{|nx|} / s(w),
//! u₊ = (s − w)/(2J)  (the root of J u² + w u + J with |u₊| ≤ 1).
//! ```
//!
//! A single emitter locally coupled with strength `g` acquires the
//! self-energy `Σ_e(z) = g² g₀₀(z)`; a pair at offset `n₁₂` additionally
//! exchanges `Σ₁₂(z) = g² G_{n₁₂}(z)`. Near the band centre the boundary
//! value on the physical sheet has the closed form
//!
//! ```text
//! Σ_e(E + i0⁺) = (g²/4J) [ sgn E + (2i/π) ln(|E|/16J) ],
//! ```
//!
//! whose analytic continuation through the cut (the "second sheet", hosting
//! the decay poles) is
//!
//! ```text
//! Σ_e^{II}(z) = (g²/4J) · (2i/π) · Log(−i z / 16J),
//! ```
//!
//! analytic everywhere except the negative imaginary axis and equal to the
//! boundary value above as `Im z → 0` from either side of `Re z ≠ 0`.
//!
//! Boundary values of the quadrature representations are taken by evaluating
//! at `z = E + iη` for a decreasing triple of regulators `η` and
//! extrapolating polynomially to `η = 0` (the boundary value is real-analytic
//! in `η` with convergence radius set by the distance of `E` to the nearest
//! van Hove point, which fixes the regulator scale).

use crate::bath::LatticeSpec;
use crate::error::{Error, Result};
use crate::quad::{adaptive_quadrature, neville_extrapolate};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Default absolute quadrature tolerance, in units of the returned quantity
/// (Green's functions scale as `1/J`; the tolerance is rescaled internally).
pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

/// Validity radius of the band-centre expansion, in units of `J`.
pub const MIDBAND_VALIDITY_LIMIT_OVER_J: f64 = 0.5;

const MAX_INTERVALS: usize = 30_000;

/// Riemann sheet of a complex energy argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sheet {
    /// The physical sheet, where the resolvent is analytic off the real axis.
    Physical,
    /// The continuation through the band-centre branch cut into the lower
    /// half-plane, reached via the closed-form expansion. Only meaningful
    /// near the band centre.
    Second,
}

/// A complex energy tagged with the Riemann sheet it lives on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEnergy {
    /// The complex energy value.
    pub z: Complex64,
    /// Which sheet to evaluate resolvent quantities on.
    pub sheet: Sheet,
}

impl ComplexEnergy {
    /// An energy on the physical sheet.
    pub fn physical(z: Complex64) -> Self {
        ComplexEnergy { z, sheet: Sheet::Physical }
    }

    /// An energy on the second sheet.
    ///
    /// # Errors
    ///
    /// The continuation is only defined for `Im z < 0` (beneath the cut) and
    /// near the band centre, `|Re z| < 0.5 J`.
    pub fn second_sheet(z: Complex64, j: f64) -> Result<Self> {
        if z.im >= 0.0 {
            return Err(Error::invalid(
                "z",
                format!("second sheet requires Im z < 0, got {z}"),
            ));
        }
        if z.re.abs() >= MIDBAND_VALIDITY_LIMIT_OVER_J * j {
            return Err(Error::invalid(
                "z",
                format!(
                    "second-sheet continuation is restricted to |Re z| < {}J near the band centre, got {z}",
                    MIDBAND_VALIDITY_LIMIT_OVER_J
                ),
            ));
        }
        Ok(ComplexEnergy { z, sheet: Sheet::Second })
    }
}

/// A self-energy value with its conventional decomposition: the level shift
/// `δω_e = Re Σ` and the decay rate `Γ_e = −2 Im Σ`, recorded explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfEnergyValue {
    /// The complex self-energy `Σ`.
    pub value: Complex64,
    /// `Re Σ` — the induced shift of the emitter level.
    pub level_shift: f64,
    /// `−2 Im Σ` — the induced decay rate (non-negative on the band for
    /// boundary values from the upper half-plane).
    pub decay_rate: f64,
}

impl SelfEnergyValue {
    /// Wraps a complex self-energy, recording its decomposition.
    pub fn from_value(value: Complex64) -> Self {
        SelfEnergyValue {
            value,
            level_shift: value.re,
            decay_rate: -2.0 * value.im,
        }
    }
}

/// Band-centre expansion result: the self-energy together with a validity
/// flag (`|E| < 0.5 J`). Outside the validity window the value is still the
/// literal expansion, flagged so callers can warn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidbandSelfEnergy {
    /// The expanded self-energy.
    pub sigma: SelfEnergyValue,
    /// `true` iff `|E| < 0.5 J`, where the expansion is trustworthy.
    pub within_validity: bool,
}

fn validate_j(j: f64) -> Result<()> {
    if !j.is_finite() || j <= 0.0 {
        return Err(Error::invalid("j", format!("hopping must be finite and > 0, got {j}")));
    }
    Ok(())
}

fn validate_g(g: f64) -> Result<()> {
    if !g.is_finite() || g < 0.0 {
        return Err(Error::invalid("g", format!("coupling must be finite and ≥ 0, got {g}")));
    }
    Ok(())
}

/// `s(w) = √(w−2J)·√(w+2J)` with principal square roots: the only branch cut
/// is `w ∈ [−2J, 2J]` and `s(w)/w → 1` at infinity on every ray.
#[inline]
fn s_branch(w: Complex64, j: f64) -> Complex64 {
    ((w - 2.0 * j).sqrt()) * ((w + 2.0 * j).sqrt())
}

/// The root of `J u² + w u + J = 0` with `|u| ≤ 1` (equality only on the
/// cut): `u₊ = (s − w)/(2J)`.
#[inline]
fn u_inner(w: Complex64, s: Complex64, j: f64) -> Complex64 {
    (s - w) / (2.0 * j)
}

/// Interior abscissae `ky ∈ (0, π)` where `w(ky) = Re z + 2J cos ky` meets a
/// branch point `±2J`. Supplying them as panel endpoints lets the adaptive
/// quadrature bisect straight into the (integrable) near-singularities that
/// appear as `Im z → 0`.
fn cut_breakpoints(j: f64, z: Complex64) -> Vec<f64> {
    let mut pts = vec![0.0, PI];
    for sigma in [-1.0f64, 1.0] {
        let c = (sigma * 2.0 * j - z.re) / (2.0 * j);
        if c > -1.0 + 1e-14 && c < 1.0 - 1e-14 {
            pts.push(c.acos());
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts
}

fn check_off_cut(j: f64, z: Complex64) -> Result<()> {
    if z.im == 0.0 && z.re.abs() <= 4.0 * j {
        return Err(Error::invalid(
            "z",
            format!(
                "z = {z} lies on the band [−4J, 4J]; use the boundary-value routines \
                 (g00_on_shell / self_energy_on_shell) for real in-band energies"
            ),
        ));
    }
    Ok(())
}

/// Local lattice Green's function `g₀₀(z)` of the infinite lattice, via the
/// one-dimensional reduction, with absolute tolerance `tol` (in units of
/// `1/J`).
///
/// # Errors
///
/// `z` must not lie exactly on the band `[−4J, 4J]` of the real axis.
pub fn g00_with_tol(j: f64, z: Complex64, tol: f64) -> Result<Complex64> {
    validate_j(j)?;
    check_off_cut(j, z)?;
    let breaks = cut_breakpoints(j, z);
    let f = |ky: f64| {
        let w = z + 2.0 * j * ky.cos();
        1.0 / s_branch(w, j)
    };
    let (value, _err) = adaptive_quadrature(&f, &breaks, tol * PI / j, MAX_INTERVALS);
    Ok(value / PI)
}

/// Local lattice Green's function `g₀₀(z)` at the default tolerance.
pub fn g00(j: f64, z: Complex64) -> Result<Complex64> {
    g00_with_tol(j, z, DEFAULT_QUAD_TOL)
}

/// Finite-lattice local Green's function, the brute momentum sum
/// `(1/N²) Σ_k 1/(z − ω(k))` on the grid of `spec`.
pub fn g00_finite(spec: &LatticeSpec, z: Complex64) -> Result<Complex64> {
    check_off_cut(spec.j(), z)?;
    let n = spec.n();
    let terms: Vec<f64> = (0..n)
        .map(|m| -2.0 * spec.j() * (2.0 * PI * m as f64 / n as f64).cos())
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for &ty in &terms {
        let zy = z - ty;
        for &tx in &terms {
            acc += 1.0 / (zy - tx);
        }
    }
    Ok(acc / (n * n) as f64)
}

/// Non-local lattice Green's function `G_n(z)` of the infinite lattice at
/// site offset `n = (nx, ny)`, via the one-dimensional reduction.
///
/// Symmetric under sign flips and exchange of the offset components.
pub fn lattice_green_offset_with_tol(
    j: f64,
    z: Complex64,
    n12: (i64, i64),
    tol: f64,
) -> Result<Complex64> {
    validate_j(j)?;
    check_off_cut(j, z)?;
    let ax = n12.0.unsigned_abs() as i32;
    let ay = n12.1.unsigned_abs() as f64;
    let breaks = cut_breakpoints(j, z);
    let f = |ky: f64| {
        let w = z + 2.0 * j * ky.cos();
        let s = s_branch(w, j);
        let u = u_inner(w, s, j);
        (ky * ay).cos() * u.powi(ax) / s
    };
    let (value, _err) = adaptive_quadrature(&f, &breaks, tol * PI / j, MAX_INTERVALS);
    Ok(value / PI)
}

/// Non-local lattice Green's function at the default tolerance.
pub fn lattice_green_offset(j: f64, z: Complex64, n12: (i64, i64)) -> Result<Complex64> {
    lattice_green_offset_with_tol(j, z, n12, DEFAULT_QUAD_TOL)
}

/// Regulator ladder for boundary values at `E`: scales with the distance of
/// `E` to the nearest singular point of the boundary function (band centre
/// and band edges), capped to the default `(10⁻³, 10⁻⁴, 10⁻⁵)·J` ladder.
///
/// Close to a singular point the boundary function varies on the scale of
/// that distance, which amplifies the extrapolation error; there the ladder
/// gains a fourth rung, which drops the extrapolation error by the spacing
/// ratio cubed and keeps regulated boundary values usable deep into the
/// neighbourhood of the band centre.
pub(crate) fn boundary_etas(j: f64, e: f64) -> Vec<f64> {
    let d = e.abs().min(4.0 * j - e.abs());
    if d >= 0.05 * j {
        vec![1e-3 * j, 1e-4 * j, 1e-5 * j]
    } else {
        let eta0 = (d / 10.0).clamp(1e-8 * j, 1e-3 * j);
        vec![eta0, eta0 / 10.0, eta0 / 100.0, eta0 / 1000.0]
    }
}

/// Boundary value `g₀₀(E + i0⁺)` for real `E`, by polynomial extrapolation of
/// a regulator triple `η → 0`.
///
/// Outside the band the function is real and evaluated directly. The band
/// edges and the exact band centre are genuine singularities of the boundary
/// value and are rejected.
///
/// # Errors
///
/// `|E| = 4J` (logarithmic edge divergence) and `E = 0` (van Hove
/// singularity; use [`self_energy_midband_expansion`]) are rejected.
pub fn g00_on_shell(j: f64, e: f64) -> Result<Complex64> {
    validate_j(j)?;
    if e.abs() > 4.0 * j {
        return g00_with_tol(j, Complex64::new(e, 0.0), 1e-11);
    }
    if e.abs() >= 4.0 * j - 1e-12 * j {
        return Err(Error::Divergence {
            what: "g00 boundary value",
            detail: format!("logarithmic divergence at the band edge, E = {e}"),
        });
    }
    if e.abs() < 1e-12 * j {
        return Err(Error::Divergence {
            what: "g00 boundary value",
            detail: "van Hove singularity at the band centre (E = 0); use the band-centre expansion".into(),
        });
    }
    let etas = boundary_etas(j, e);
    let mut vals = Vec::with_capacity(etas.len());
    for &eta in &etas {
        vals.push(g00_with_tol(j, Complex64::new(e, eta), 1e-11)?);
    }
    let mut out = neville_extrapolate(&etas, &vals, 0.0);
    // The exact boundary value from above has Im g₀₀ ≤ 0 on the band.
    out.im = out.im.min(0.0);
    Ok(out)
}

/// Single-emitter self-energy `Σ_e(z) = g² g₀₀(z)` on the infinite lattice.
pub fn self_energy(j: f64, g: f64, z: Complex64) -> Result<SelfEnergyValue> {
    validate_g(g)?;
    Ok(SelfEnergyValue::from_value(g * g * g00(j, z)?))
}

/// Single-emitter self-energy from the finite-lattice momentum sum.
pub fn self_energy_finite(spec: &LatticeSpec, g: f64, z: Complex64) -> Result<SelfEnergyValue> {
    validate_g(g)?;
    Ok(SelfEnergyValue::from_value(g * g * g00_finite(spec, z)?))
}

/// Boundary value `Σ_e(E + i0⁺)` for real in-band `E` (regulated and
/// extrapolated as in [`g00_on_shell`]).
pub fn self_energy_on_shell(j: f64, g: f64, e: f64) -> Result<SelfEnergyValue> {
    validate_g(g)?;
    Ok(SelfEnergyValue::from_value(g * g * g00_on_shell(j, e)?))
}

/// Band-centre expansion of the boundary value,
/// `Σ_e(E + i0⁺) = (g²/4J)[sgn E + (2i/π) ln(|E|/16J)]`.
///
/// The real part is the odd step `±g²/4J`; the imaginary part is the
/// negative logarithm that encodes the van-Hove-enhanced decay. Trustworthy
/// for `|E| ≲ 0.5 J` (see [`MidbandSelfEnergy::within_validity`]).
///
/// # Errors
///
/// `E = 0` is the divergence itself; `|E| ≥ 4J` is outside the band and
/// rejected.
pub fn self_energy_midband_expansion(j: f64, g: f64, e: f64) -> Result<MidbandSelfEnergy> {
    validate_j(j)?;
    validate_g(g)?;
    if e == 0.0 {
        return Err(Error::Divergence {
            what: "band-centre self-energy expansion",
            detail: "the decay rate grows logarithmically as E → 0; no finite value exists at E = 0".into(),
        });
    }
    if e.abs() >= 4.0 * j {
        return Err(Error::invalid(
            "e",
            format!("band-centre expansion requested outside the band, E = {e}"),
        ));
    }
    let scale = g * g / (4.0 * j);
    let re = scale * e.signum();
    let im = scale * (2.0 / PI) * (e.abs() / (16.0 * j)).ln();
    Ok(MidbandSelfEnergy {
        sigma: SelfEnergyValue::from_value(Complex64::new(re, im)),
        within_validity: e.abs() < MIDBAND_VALIDITY_LIMIT_OVER_J * j,
    })
}

/// Analytic continuation of the band-centre self-energy through the cut:
/// `Σ_e^{II}(z) = (g²/4J) · (2i/π) · Log(−i z / 16J)` (principal logarithm).
///
/// Analytic except on the negative imaginary axis; on the real axis it
/// reproduces [`self_energy_midband_expansion`] exactly, and its zeros in the
/// lower half-plane are the decay poles of the emitter resolvent.
///
/// # Errors
///
/// Restricted to the expansion's validity disc `|z| < 0.5 J` and rejected on
/// its branch cut (the negative imaginary axis).
pub fn self_energy_second_sheet(j: f64, g: f64, z: Complex64) -> Result<Complex64> {
    validate_j(j)?;
    validate_g(g)?;
    if z.norm() >= MIDBAND_VALIDITY_LIMIT_OVER_J * j {
        return Err(Error::invalid(
            "z",
            format!("second-sheet form is valid only for |z| < {MIDBAND_VALIDITY_LIMIT_OVER_J}J, got {z}"),
        ));
    }
    if z.re == 0.0 && z.im < 0.0 {
        return Err(Error::invalid(
            "z",
            "the continuation has its branch cut on the negative imaginary axis".to_string(),
        ));
    }
    if z.norm() == 0.0 {
        return Err(Error::Divergence {
            what: "second-sheet self-energy",
            detail: "logarithmic branch point at z = 0".into(),
        });
    }
    let scale = g * g / (4.0 * j);
    let arg = Complex64::new(0.0, -1.0) * z / (16.0 * j);
    Ok(scale * Complex64::new(0.0, 2.0 / PI) * arg.ln())
}

/// Derivative `dΣ_e^{II}/dz = (g²/4J)·(2i/π)/z` of the continued self-energy.
pub fn self_energy_second_sheet_derivative(j: f64, g: f64, z: Complex64) -> Result<Complex64> {
    validate_j(j)?;
    validate_g(g)?;
    if z.norm() == 0.0 {
        return Err(Error::Divergence {
            what: "second-sheet self-energy derivative",
            detail: "logarithmic branch point at z = 0".into(),
        });
    }
    let scale = g * g / (4.0 * j);
    Ok(scale * Complex64::new(0.0, 2.0 / PI) / z)
}

/// Pairwise (photon-exchange) self-energy `Σ₁₂(z) = g² G_{n₁₂}(z)` of two
/// emitters at site offset `n₁₂` on the infinite lattice.
///
/// `Σ₁₂((0,0)) = Σ_e` by construction.
pub fn sigma12(j: f64, g: f64, z: Complex64, n12: (i64, i64)) -> Result<Complex64> {
    validate_g(g)?;
    Ok(g * g * lattice_green_offset(j, z, n12)?)
}

/// Pairwise self-energy with explicit tolerance.
pub fn sigma12_with_tol(j: f64, g: f64, z: Complex64, n12: (i64, i64), tol: f64) -> Result<Complex64> {
    validate_g(g)?;
    Ok(g * g * lattice_green_offset_with_tol(j, z, n12, tol)?)
}

/// Pairwise self-energy from the finite-lattice momentum sum
/// `(g²/N²) Σ_k e^{i k·n₁₂} / (z − ω(k))`.
pub fn sigma12_finite(spec: &LatticeSpec, g: f64, z: Complex64, n12: (i64, i64)) -> Result<Complex64> {
    validate_g(g)?;
    check_off_cut(spec.j(), z)?;
    let n = spec.n();
    let omega: Vec<f64> = (0..n)
        .map(|m| -2.0 * spec.j() * (2.0 * PI * m as f64 / n as f64).cos())
        .collect();
    // Only the even (cosine) part survives the full-grid sum.
    let cos_x: Vec<f64> = (0..n)
        .map(|m| (2.0 * PI * m as f64 * n12.0 as f64 / n as f64).cos())
        .collect();
    let cos_y: Vec<f64> = (0..n)
        .map(|m| (2.0 * PI * m as f64 * n12.1 as f64 / n as f64).cos())
        .collect();
    let mut acc = Complex64::new(0.0, 0.0);
    for my in 0..n {
        let zy = z - omega[my];
        let cy = cos_y[my];
        for mx in 0..n {
            acc += (cy * cos_x[mx]) / (zy - omega[mx]);
        }
    }
    Ok(g * g * acc / (n * n) as f64)
}

/// Collective self-energies of the symmetric/antisymmetric two-emitter
/// states: `Σ_±(z) = Σ_e(z) ± Σ₁₂(z)`. Returns `(Σ₊, Σ₋)`.
pub fn sigma_collective_pm(
    j: f64,
    g: f64,
    z: Complex64,
    n12: (i64, i64),
) -> Result<(Complex64, Complex64)> {
    let se = self_energy(j, g, z)?.value;
    let s12 = sigma12(j, g, z, n12)?;
    Ok((se + s12, se - s12))
}

/// Self-energy of the alternating-sign four-emitter state.
///
/// The four emitters sit on the diamond `{(0,2n), (2n,0), (2n,4n), (4n,2n)}`
/// with amplitudes `½(+1, −1, −1, +1)` (signs alternate around the ring, so
/// the two corners displaced along `y` from the centre carry the minus).
/// The squared form factor is `[cos(2n kx) − cos(2n ky)]²`, which vanishes on
/// the whole zero-energy contour `cos kx + cos ky = 0` — the state decouples
/// from every resonant mode. In rotated half-angle coordinates the
/// self-energy becomes the double integral
///
/// ```text
/// Σ₄₋(z) = (4g²/π²) ∬₀^π dqx dqy sin²(2n qx) sin²(2n qy) / (z + 4J cos qx cos qy),
/// ```
///
/// which is evaluated by nested adaptive quadrature with panel endpoints on
/// the `q = π/2` lines (where the denominator's zero lines and the
/// numerator's double zeros meet).
///
/// `Σ₄₋(0) = 0` exactly (the integrand is odd under `qx → π − qx` there) and
/// `dΣ₄₋/dz(0) = −g²n²/J²`, so the state hosts a genuine bound state at the
/// band centre with residue `1/(1 + g²n²/J²)`.
///
/// # Errors
///
/// Real `z` inside the band other than `z = 0` would require a
/// principal-value prescription and is rejected.
pub fn sigma_4minus_with_tol(j: f64, g: f64, n: i64, z: Complex64, tol: f64) -> Result<Complex64> {
    validate_j(j)?;
    validate_g(g)?;
    if n < 1 {
        return Err(Error::invalid("n", format!("diamond scale must be ≥ 1, got {n}")));
    }
    if z.im == 0.0 && z.re != 0.0 && z.re.abs() <= 4.0 * j {
        return Err(Error::invalid(
            "z",
            format!("real in-band z = {z} (≠ 0) requires a principal value; add a regulator"),
        ));
    }
    let two_n = 2.0 * n as f64;
    let prefactor = 4.0 * g * g / (PI * PI);
    let half = PI / 2.0;
    let inner_tol = (tol / (20.0 * PI)).max(1e-15);

    let outer = |qy: f64| {
        let sy = (two_n * qy).sin().powi(2);
        if sy == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let cy4j = 4.0 * j * qy.cos();
        let f = |qx: f64| {
            let sx = (two_n * qx).sin().powi(2);
            sx * sy / (z + cy4j * qx.cos())
        };
        adaptive_quadrature(&f, &[0.0, half, PI], inner_tol, 4000).0
    };
    let (value, _err) = adaptive_quadrature(&outer, &[0.0, half, PI], tol / prefactor, 4000);
    Ok(prefactor * value)
}

/// [`sigma_4minus_with_tol`] at the default tolerance `1e−10` (absolute, in
/// units of `J`), tight enough for the band-centre zero check.
pub fn sigma_4minus(j: f64, g: f64, n: i64, z: Complex64) -> Result<Complex64> {
    sigma_4minus_with_tol(j, g, n, z, 1e-10)
}

/// Central finite-difference estimate of `dΣ₄₋/dz` at the band centre, with
/// steps `±i·step` taken along the imaginary axis.
///
/// Real steps would land on the in-band principal-value region, so the
/// difference is taken along the regulator direction instead, where the
/// integrand stays bounded. Since `Σ₄₋(z̄) = conj Σ₄₋(z)`, the two-sided
/// difference collapses to `Im Σ₄₋(i·step)/step`, which is returned (the
/// derivative is real; its exact value is `−g²n²/J²`).
pub fn sigma_4minus_derivative_at_zero(j: f64, g: f64, n: i64, step: f64) -> Result<f64> {
    if !step.is_finite() || step <= 0.0 || step > 0.1 * j {
        return Err(Error::invalid(
            "step",
            format!("finite-difference step must lie in (0, 0.1J], got {step}"),
        ));
    }
    let scale = (g * g).max(f64::MIN_POSITIVE);
    let value = sigma_4minus_with_tol(j, g, n, Complex64::new(0.0, step), 3e-7 * scale * step)?;
    Ok(value.im / step)
}

/// Band-centre limit of the pairwise-to-single self-energy ratio for a
/// diagonal offset `(n, n)`:
///
/// ```text
/// lim_{η→0⁺} Σ₁₂(iη; (n,n)) / Σ_e(iη) = (−1)ⁿ.
/// ```
///
/// Both self-energies are purely imaginary at `z = iη` (particle–hole plus
/// conjugation symmetry), so the ratio is real for every `η`; it approaches
/// its limit only logarithmically, as `(−1)ⁿ + O(1/ln(16J/η))`. The limit is
/// therefore taken by evaluating on a ladder of regulators and extrapolating
/// polynomially in the variable `x = 1/ln(16J/η)`, in which the remainder is
/// an analytic (geometric-like) series.
pub fn markov_ratio_diagonal(j: f64, n: i64) -> Result<f64> {
    validate_j(j)?;
    if n < 1 {
        return Err(Error::invalid("n", format!("diagonal offset must be ≥ 1, got {n}")));
    }
    // ln(16J/η) = L  ⇔  η = 16J e^{−L}.
    const LS: [f64; 8] = [8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0];
    let mut xs = [0.0; 8];
    let mut ys = [Complex64::new(0.0, 0.0); 8];
    for (i, &l) in LS.iter().enumerate() {
        let eta = 16.0 * j * (-l).exp();
        let z = Complex64::new(0.0, eta);
        let gnn = lattice_green_offset_with_tol(j, z, (n, n), 1e-12)?;
        let g0 = g00_with_tol(j, z, 1e-12)?;
        xs[i] = 1.0 / l;
        ys[i] = Complex64::new(gnn.im / g0.im, 0.0);
    }
    Ok(neville_extrapolate(&xs, &ys, 0.0).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const J: f64 = 1.0;

    /// Brute-force momentum sum for the local Green's function on an `m × m`
    /// grid (test oracle; the production path is the 1D reduction).
    fn g00_brute(j: f64, z: Complex64, m: usize) -> Complex64 {
        let omega: Vec<f64> = (0..m)
            .map(|i| -2.0 * j * (2.0 * PI * i as f64 / m as f64).cos())
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for &ty in &omega {
            let zy = z - ty;
            for &tx in &omega {
                acc += 1.0 / (zy - tx);
            }
        }
        acc / (m * m) as f64
    }

    fn offset_brute(j: f64, z: Complex64, n12: (i64, i64), m: usize) -> Complex64 {
        let omega: Vec<f64> = (0..m)
            .map(|i| -2.0 * j * (2.0 * PI * i as f64 / m as f64).cos())
            .collect();
        let cx: Vec<f64> = (0..m)
            .map(|i| (2.0 * PI * i as f64 * n12.0 as f64 / m as f64).cos())
            .collect();
        let cy: Vec<f64> = (0..m)
            .map(|i| (2.0 * PI * i as f64 * n12.1 as f64 / m as f64).cos())
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for iy in 0..m {
            let zy = z - omega[iy];
            for ix in 0..m {
                acc += (cy[iy] * cx[ix]) / (zy - omega[ix]);
            }
        }
        acc / (m * m) as f64
    }

    #[test]
    fn g00_far_from_band_behaves_like_free_resolvent() {
        let z = Complex64::new(100.0, 0.0);
        let val = g00(J, z).unwrap();
        let free = 1.0 / z;
        assert!(((val - free) / free).norm() < 1e-3);
        // Next correction is ⟨ω²⟩/z³ = 4J²/z³.
        let corrected = free + 4.0 * J * J / (z * z * z);
        assert!(((val - corrected) / corrected).norm() < 1e-6);
    }

    #[test]
    fn g00_conjugate_symmetry() {
        for &(re, im) in &[(0.7, 0.4), (-2.3, 0.05), (3.9, 1.5)] {
            let z = Complex64::new(re, im);
            let a = g00(J, z).unwrap();
            let b = g00(J, z.conj()).unwrap();
            assert!((a.conj() - b).norm() < 1e-10);
        }
    }

    #[test]
    fn g00_matches_brute_momentum_sum() {
        let z = Complex64::new(0.5, 0.5);
        let quad = g00_with_tol(J, z, 1e-10).unwrap();
        let brute = g00_brute(J, z, 512);
        assert!(
            (quad - brute).norm() < 1e-6,
            "quadrature {quad}, brute {brute}"
        );
    }

    #[test]
    fn g00_rejects_on_cut_energies() {
        assert!(g00(J, Complex64::new(1.0, 0.0)).is_err());
        assert!(g00(J, Complex64::new(4.1, 0.0)).is_ok());
    }

    #[test]
    fn g00_pure_imaginary_argument_gives_pure_imaginary_value() {
        // Particle–hole plus conjugation symmetry: Re g₀₀(iη) = 0.
        for &eta in &[1e-2, 1e-4] {
            let v = g00_with_tol(J, Complex64::new(0.0, eta), 1e-11).unwrap();
            assert!(v.re.abs() < 1e-10, "Re g00(i{eta}) = {}", v.re);
            assert!(v.im < 0.0);
        }
    }

    #[test]
    fn on_shell_boundary_value_has_nonpositive_imaginary_part() {
        for &e in &[-3.5, -1.0, 0.05, 2.0] {
            let v = g00_on_shell(J, e).unwrap();
            assert!(v.im <= 0.0, "Im g00({e}) = {}", v.im);
        }
    }

    #[test]
    fn on_shell_imaginary_part_matches_dos() {
        // Optical theorem: Im g₀₀(E + i0⁺) = −π D(E).
        for &e in &[-3.0, -1.0, 1.7] {
            let v = g00_on_shell(J, e).unwrap();
            let d = crate::bath::dos_elliptic(J, e);
            assert_relative_eq!(-v.im / PI, d, max_relative = 1e-5);
        }
    }

    #[test]
    fn on_shell_outside_band_is_real() {
        let v = g00_on_shell(J, 4.5).unwrap();
        assert_eq!(v.im, 0.0);
        assert!(v.re > 0.0);
        let w = g00_on_shell(J, -4.5).unwrap();
        assert!(w.re < 0.0);
    }

    #[test]
    fn on_shell_rejects_band_edge_and_centre() {
        assert!(g00_on_shell(J, 4.0).is_err());
        assert!(g00_on_shell(J, 0.0).is_err());
    }

    #[test]
    fn finite_and_infinite_self_energies_agree_off_axis() {
        let spec = LatticeSpec::new(1024, J).unwrap();
        let z = Complex64::new(-1.2, 0.02);
        let fin = self_energy_finite(&spec, 0.1, z).unwrap().value;
        let inf = self_energy(J, 0.1, z).unwrap().value;
        assert!(
            (fin - inf).norm() / inf.norm() < 1e-4,
            "finite {fin} vs infinite {inf}"
        );
    }

    #[test]
    fn finite_lattice_error_shrinks_with_size() {
        let z = Complex64::new(0.4, 0.05);
        let exact = g00_with_tol(J, z, 1e-11).unwrap();
        let mut previous = f64::INFINITY;
        for &n in &[128usize, 256, 512] {
            let spec = LatticeSpec::new(n, J).unwrap();
            let err = (g00_finite(&spec, z).unwrap() - exact).norm();
            assert!(err < previous, "error not monotone at N = {n}: {err} ≥ {previous}");
            previous = err;
        }
    }

    #[test]
    fn self_energy_decomposition_is_recorded() {
        let v = self_energy(J, 0.1, Complex64::new(0.3, 0.2)).unwrap();
        assert_eq!(v.level_shift, v.value.re);
        assert_eq!(v.decay_rate, -2.0 * v.value.im);
    }

    #[test]
    fn midband_expansion_reference_values() {
        let m = self_energy_midband_expansion(J, 0.1, 0.01).unwrap();
        assert!(m.within_validity);
        assert_relative_eq!(m.sigma.value.re, 2.5e-3, max_relative = 1e-12);
        assert_relative_eq!(m.sigma.value.im, -0.011742, max_relative = 1e-4);
        // Mirror energy flips the real part only.
        let mm = self_energy_midband_expansion(J, 0.1, -0.01).unwrap();
        assert_relative_eq!(mm.sigma.value.re, -2.5e-3, max_relative = 1e-12);
        assert_relative_eq!(mm.sigma.value.im, m.sigma.value.im, max_relative = 1e-14);
    }

    #[test]
    fn midband_expansion_rejects_centre_flags_validity() {
        assert!(matches!(
            self_energy_midband_expansion(J, 0.1, 0.0),
            Err(Error::Divergence { .. })
        ));
        assert!(!self_energy_midband_expansion(J, 0.1, 0.7).unwrap().within_validity);
        assert!(self_energy_midband_expansion(J, 0.1, 4.0).is_err());
    }

    #[test]
    fn midband_expansion_tracks_full_boundary_value() {
        // At E = 0.05 J the expanded imaginary part is within 5% of the full
        // quadrature boundary value; at E = 0.01 J within a few percent.
        for &(e, tol) in &[(0.05, 0.05), (0.01, 0.03)] {
            let full = self_energy_on_shell(J, 0.1, e).unwrap().value;
            let exp = self_energy_midband_expansion(J, 0.1, e).unwrap().sigma.value;
            let rel = ((exp.im - full.im) / full.im).abs();
            assert!(rel < tol, "E = {e}: expansion {} vs full {} (rel {rel})", exp.im, full.im);
        }
    }

    #[test]
    fn second_sheet_matches_boundary_expansion_on_real_axis() {
        for &e in &[0.01, -0.01, 0.2, -0.2] {
            let boundary = self_energy_midband_expansion(J, 0.1, e).unwrap().sigma.value;
            let continued = self_energy_second_sheet(J, 0.1, Complex64::new(e, 0.0)).unwrap();
            assert!((boundary - continued).norm() < 1e-15);
        }
    }

    #[test]
    fn second_sheet_derivative_matches_finite_difference() {
        let z = Complex64::new(0.004, -0.011);
        let h = 1e-7;
        let d = self_energy_second_sheet_derivative(J, 0.1, z).unwrap();
        let fp = self_energy_second_sheet(J, 0.1, z + Complex64::new(h, 0.0)).unwrap();
        let fm = self_energy_second_sheet(J, 0.1, z - Complex64::new(h, 0.0)).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        assert!((d - fd).norm() / d.norm() < 1e-6);
    }

    #[test]
    fn second_sheet_rejects_cut_and_far_points() {
        assert!(self_energy_second_sheet(J, 0.1, Complex64::new(0.0, -0.01)).is_err());
        assert!(self_energy_second_sheet(J, 0.1, Complex64::new(0.6, -0.01)).is_err());
    }

    #[test]
    fn complex_energy_sheet_constructors() {
        assert!(ComplexEnergy::second_sheet(Complex64::new(0.01, -0.01), J).is_ok());
        assert!(ComplexEnergy::second_sheet(Complex64::new(0.01, 0.01), J).is_err());
        assert!(ComplexEnergy::second_sheet(Complex64::new(0.6, -0.01), J).is_err());
    }

    #[test]
    fn offset_green_function_reduces_to_local_at_zero_offset() {
        let z = Complex64::new(0.3, 0.2);
        let a = lattice_green_offset_with_tol(J, z, (0, 0), 1e-11).unwrap();
        let b = g00_with_tol(J, z, 1e-11).unwrap();
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn offset_green_function_matches_brute_sum() {
        let z = Complex64::new(0.3, 0.2);
        let quad = lattice_green_offset_with_tol(J, z, (2, 1), 1e-11).unwrap();
        let brute = offset_brute(J, z, (2, 1), 512);
        assert!((quad - brute).norm() < 1e-6, "quad {quad} vs brute {brute}");
    }

    #[test]
    fn offset_green_function_symmetries() {
        let z = Complex64::new(-0.8, 0.3);
        let base = lattice_green_offset_with_tol(J, z, (3, 1), 1e-11).unwrap();
        for &n12 in &[(1i64, 3i64), (-3, 1), (3, -1), (-1, -3)] {
            let v = lattice_green_offset_with_tol(J, z, n12, 1e-11).unwrap();
            assert!((v - base).norm() < 1e-8, "offset {n12:?}: {v} vs {base}");
        }
    }

    #[test]
    fn pairwise_exchange_never_exceeds_local_self_energy() {
        for &(re, im) in &[(0.0, 0.5), (1.0, 0.3), (-2.0, 1.0)] {
            let z = Complex64::new(re, im);
            let se = self_energy(J, 0.1, z).unwrap().value;
            for &n12 in &[(1i64, 0i64), (1, 1), (2, 1), (4, 3)] {
                let s12 = sigma12(J, 0.1, z, n12).unwrap();
                assert!(
                    s12.norm() <= se.norm() * (1.0 + 1e-9),
                    "|Σ12{n12:?}| = {} > |Σe| = {} at z = {z}",
                    s12.norm(),
                    se.norm()
                );
            }
        }
    }

    #[test]
    fn sigma12_finite_agrees_with_infinite_lattice() {
        let spec = LatticeSpec::new(512, J).unwrap();
        let z = Complex64::new(0.3, 0.2);
        let fin = sigma12_finite(&spec, 0.1, z, (2, 1)).unwrap();
        let inf = sigma12_with_tol(J, 0.1, z, (2, 1), 1e-11).unwrap();
        assert!((fin - inf).norm() < 1e-6);
    }

    #[test]
    fn collective_self_energies_at_zero_offset() {
        let z = Complex64::new(0.2, 0.4);
        let (plus, minus) = sigma_collective_pm(J, 0.1, z, (0, 0)).unwrap();
        let se = self_energy(J, 0.1, z).unwrap().value;
        assert!((plus - 2.0 * se).norm() < 1e-9);
        assert!(minus.norm() < 1e-9);
    }

    #[test]
    fn collective_dark_combinations_fade_near_band_centre() {
        // Even diagonal (6,6): the antisymmetric state decouples; odd
        // diagonal (5,5): the symmetric state decouples. The approach is
        // logarithmic, so test monotone decrease of the relative size.
        let mut prev_minus = f64::INFINITY;
        let mut prev_plus = f64::INFINITY;
        for &eta in &[1e-2, 1e-4, 1e-6] {
            let z = Complex64::new(0.0, eta);
            let se = self_energy(J, 0.05, z).unwrap().value.norm();
            let (_, minus66) = sigma_collective_pm(J, 0.05, z, (6, 6)).unwrap();
            let (plus55, minus55) = sigma_collective_pm(J, 0.05, z, (5, 5)).unwrap();
            let r_minus = minus66.norm() / se;
            let r_plus = plus55.norm() / se;
            assert!(r_minus < prev_minus, "Σ₋(6,6) not shrinking: {r_minus}");
            assert!(r_plus < prev_plus, "Σ₊(5,5) not shrinking: {r_plus}");
            // The partner combination stays O(2Σe).
            assert!(minus55.norm() / se > 1.0);
            prev_minus = r_minus;
            prev_plus = r_plus;
        }
    }

    #[test]
    fn markov_ratio_alternates_sign_on_the_diagonal() {
        for n in 1..=2 {
            let r = markov_ratio_diagonal(J, n).unwrap();
            let expect = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!(
                (r - expect).abs() < 1e-3,
                "diagonal ({n},{n}): ratio {r}, expected {expect}"
            );
        }
    }

    #[test]
    fn four_emitter_self_energy_matches_brute_sum_off_axis() {
        // Brute sum over the original momentum grid with the squared form
        // factor [cos(2n kx) − cos(2n ky)]², cross-validating the rotated
        // double-integral representation.
        let g = 0.05;
        let n = 3;
        let z = Complex64::new(0.0, 2.0);
        let quad = sigma_4minus_with_tol(J, g, n, z, 1e-11).unwrap();

        let m = 512;
        let omega: Vec<f64> = (0..m)
            .map(|i| -2.0 * J * (2.0 * PI * i as f64 / m as f64).cos())
            .collect();
        let c2n: Vec<f64> = (0..m)
            .map(|i| (2.0 * PI * i as f64 * 2.0 * n as f64 / m as f64).cos())
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for iy in 0..m {
            for ix in 0..m {
                let f = c2n[ix] - c2n[iy];
                acc += f * f / (z - omega[ix] - omega[iy]);
            }
        }
        let brute = g * g * acc / (m * m) as f64;
        assert!((quad - brute).norm() < 1e-6, "quad {quad} vs brute {brute}");
    }

    #[test]
    fn four_emitter_self_energy_vanishes_at_band_centre() {
        let v = sigma_4minus(J, 0.05, 3, Complex64::new(0.0, 0.0)).unwrap();
        assert!(v.norm() < 1e-8, "Σ₄₋(0) = {v}");
    }

    #[test]
    fn four_emitter_derivative_matches_closed_form() {
        let g = 0.05;
        let n = 3;
        let d = sigma_4minus_derivative_at_zero(J, g, n, 1e-4).unwrap();
        let exact = -g * g * (n * n) as f64 / (J * J);
        assert_abs_diff_eq!(d, exact, epsilon = 1e-4);
        assert_relative_eq!(d, -0.0225, max_relative = 5e-3);
    }

    #[test]
    fn four_emitter_self_energy_rejects_in_band_real_energy() {
        assert!(sigma_4minus(J, 0.05, 3, Complex64::new(0.5, 0.0)).is_err());
    }
}
