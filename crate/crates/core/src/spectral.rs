//! Resolvent-based spectral analysis of emitters coupled to the lattice.
//!
//! The emitter amplitude is analyzed through the retarded resolvent
//!
//! ```text
//! G(z) = 1 / (z − Δ − Σ(z)),
//! ```
//!
//! where `Σ` is the self-energy of the chosen emitter configuration (single,
//! symmetric/antisymmetric pair, or alternating four-emitter diamond; see
//! [`StateSelector`]). Everything observable follows from boundary and
//! continuation values of `G`:
//!
//! * **Golden-rule decay**: `Γ(Δ) = 2π g² D(Δ)` from the bath density of
//!   states — valid away from the band centre, divergent at `Δ = 0`.
//! * **Unstable poles**: near the band centre the continuation of `G`
//!   through the cut has a pair of complex zeros of `z − Δ − Σ^{II}(z)`,
//!   whose real parts sit at `≈ ±g²/2J` and whose imaginary parts set the
//!   non-perturbative decay; the corresponding rate scale is
//!   `λ = (g²/πJ) ln(32πJ²/g²)`.
//! * **Time dependence**: `C(t) = ∫ A(E) e^{−iEt} dE` with the spectral
//!   density `A(E) = −Im G(E+i0⁺)/π ≥ 0`; the integral is evaluated by a
//!   Filon-type transform ([`SpectralTable`]) whose accuracy is independent
//!   of `t`.
//! * **Asymptotic bath amplitudes**: after the emitter has decayed, mode `k`
//!   is left with `|C_k(∞)| = (g/N)·|G(ω(k)+i0⁺)|`, concentrated on the
//!   resonant contour `ω(k) = Δ`.
//! * **Long-time tails**: the band-centre cut forces a subexponential
//!   remnant `|C_e|² ∝ [t ln²(16Jt)]^{−2}`, which [`long_time_tail_exponent`]
//!   fits (and refuses to fit while the window is still exponential).
//!
//! Boundary values are produced by the regulated `η → 0⁺` extrapolation from
//! the Green's-function layer; the continuation `Σ^{II}` is the closed-form
//! band-centre expression, valid for `|z| < 0.5 J`.

use crate::bath::{self, LatticeSpec};
use crate::error::{Error, Result};
use crate::greens::{
    self, self_energy_second_sheet, self_energy_second_sheet_derivative, ComplexEnergy, Sheet,
};
use crate::quad::{fourier_cubic_hermite, hermite_slopes, neville_extrapolate};
use num_complex::Complex64;
use std::f64::consts::PI;

/// A set of emitters, all sharing one detuning and one coupling strength.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterSet {
    positions: Vec<(i64, i64)>,
    delta: f64,
    g: f64,
}

impl EmitterSet {
    /// Builds an emitter set from explicit lattice positions.
    ///
    /// # Errors
    ///
    /// Positions must be non-empty and pairwise distinct; `g ≥ 0` and `Δ`
    /// finite. (The in-band requirement `|Δ| < 4J` is checked by the
    /// operations, which know `J`.)
    pub fn new(positions: Vec<(i64, i64)>, delta: f64, g: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("positions", "emitter set must not be empty".to_string()));
        }
        for (i, a) in positions.iter().enumerate() {
            for b in positions.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::invalid(
                        "positions",
                        format!("emitter positions must be distinct; {a:?} appears twice"),
                    ));
                }
            }
        }
        if !delta.is_finite() {
            return Err(Error::invalid("delta", format!("detuning must be finite, got {delta}")));
        }
        if !g.is_finite() || g < 0.0 {
            return Err(Error::invalid("g", format!("coupling must be finite and ≥ 0, got {g}")));
        }
        Ok(EmitterSet { positions, delta, g })
    }

    /// A single emitter at the origin.
    pub fn single(delta: f64, g: f64) -> Result<Self> {
        EmitterSet::new(vec![(0, 0)], delta, g)
    }

    /// An emitter pair at the origin and at offset `n12`.
    pub fn pair(n12: (i64, i64), delta: f64, g: f64) -> Result<Self> {
        EmitterSet::new(vec![(0, 0), n12], delta, g)
    }

    /// The four-emitter diamond `{(0,2n), (2n,0), (2n,4n), (4n,2n)}`.
    pub fn diamond(n: i64, delta: f64, g: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("n", format!("diamond scale must be ≥ 1, got {n}")));
        }
        EmitterSet::new(
            vec![(0, 2 * n), (2 * n, 0), (2 * n, 4 * n), (4 * n, 2 * n)],
            delta,
            g,
        )
    }

    /// Emitter lattice positions.
    pub fn positions(&self) -> &[(i64, i64)] {
        &self.positions
    }

    /// Shared detuning `Δ` of the emitters relative to the band centre.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Shared coupling strength `g`.
    pub fn g(&self) -> f64 {
        self.g
    }

    /// Number of emitters.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    /// True if the set is empty (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Pair offset `n₂ − n₁` (pairs only).
    pub fn pair_offset(&self) -> Result<(i64, i64)> {
        if self.positions.len() != 2 {
            return Err(Error::invalid(
                "positions",
                format!("pair offset requested for {} emitter(s)", self.positions.len()),
            ));
        }
        let (a, b) = (self.positions[0], self.positions[1]);
        Ok((b.0 - a.0, b.1 - a.1))
    }

    /// Diamond scale `n` (four-emitter sets in the canonical arrangement).
    pub fn diamond_scale(&self) -> Result<i64> {
        if self.positions.len() == 4 {
            let n = self.positions[0].1 / 2;
            if n >= 1 && self.positions == [(0, 2 * n), (2 * n, 0), (2 * n, 4 * n), (4 * n, 2 * n)] {
                return Ok(n);
            }
        }
        Err(Error::invalid(
            "positions",
            "not a canonical four-emitter diamond {(0,2n),(2n,0),(2n,4n),(4n,2n)}".to_string(),
        ))
    }
}

/// Which collective amplitude a resolvent/spectral operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSelector {
    /// The lone emitter of a single-emitter set.
    Single,
    /// Symmetric pair combination `(σ¹ + σ²)/√2`.
    TwoPlus,
    /// Antisymmetric pair combination `(σ¹ − σ²)/√2`.
    TwoMinus,
    /// Alternating four-emitter combination `½(σ¹ − σ² − σ³ + σ⁴)` on the
    /// canonical diamond.
    FourMinus,
}

/// Convention used when a complex pole `z` is reported as a decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateConvention {
    /// Rates describe the population `|C|²`, which decays at `2·|Im z|`.
    Population,
    /// Rates describe the amplitude `|C|`, which decays at `|Im z|`.
    Amplitude,
}

impl RateConvention {
    /// Decay rate of a pole at `z` under this convention.
    pub fn pole_rate(self, z: Complex64) -> f64 {
        match self {
            RateConvention::Population => 2.0 * z.im.abs(),
            RateConvention::Amplitude => z.im.abs(),
        }
    }

    /// Human-readable name for reports.
    pub fn describe(self) -> &'static str {
        match self {
            RateConvention::Population => "population",
            RateConvention::Amplitude => "amplitude",
        }
    }
}

/// Summary of the spectral structure of one emitter configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    /// Complex poles with their residues (second-sheet decay poles).
    pub poles: Vec<(ComplexEnergy, Complex64)>,
    /// Golden-rule rate `2πg²D(Δ)`; `+∞` at the band centre where the
    /// formula diverges, `0` outside the band.
    pub fgr_rate: f64,
    /// Band-centre non-perturbative rate scale `λ = (g²/πJ) ln(32πJ²/g²)`.
    pub nonperturbative_rate: f64,
    /// Long-time surviving population; zero when every pole is complex.
    pub steady_population: f64,
    /// Convention under which fitted decay rates are compared against pole
    /// imaginary parts (`2·|Im z|` for population decay).
    pub rate_convention: RateConvention,
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

/// Checks that `selector` matches the shape of `emitters`.
fn validate_selector(emitters: &EmitterSet, selector: StateSelector) -> Result<()> {
    match selector {
        StateSelector::Single => {
            if emitters.len() != 1 {
                return Err(Error::invalid(
                    "selector",
                    format!("selector Single needs one emitter, got {}", emitters.len()),
                ));
            }
        }
        StateSelector::TwoPlus | StateSelector::TwoMinus => {
            emitters.pair_offset()?;
        }
        StateSelector::FourMinus => {
            emitters.diamond_scale()?;
        }
    }
    Ok(())
}

/// Golden-rule decay rate `Γ(Δ) = 2π g² D(Δ)`, with the density of states
/// taken from the default histogram estimator.
///
/// # Errors
///
/// `Δ = 0` is rejected: the van Hove divergence of `D` makes the golden rule
/// predict an infinite rate there (the physical rate is the finite
/// band-centre scale, [`nonperturbative_rate_scale`]). Outside the band the
/// rate is exactly `0`.
pub fn fgr_rate(j: f64, g: f64, delta: f64) -> Result<f64> {
    validate_j(j)?;
    validate_g(g)?;
    if !delta.is_finite() {
        return Err(Error::invalid("delta", format!("detuning must be finite, got {delta}")));
    }
    if delta == 0.0 {
        return Err(Error::Divergence {
            what: "golden-rule rate",
            detail: "D(E) diverges logarithmically at the band centre; the golden rule predicts an infinite rate at Δ = 0".into(),
        });
    }
    if delta.abs() > 4.0 * j {
        return Ok(0.0);
    }
    Ok(2.0 * PI * g * g * bath::unit_dos_density(delta / j) / j)
}

/// Band-centre non-perturbative rate scale
/// `λ = (g²/πJ) · ln(32πJ²/g²)`.
///
/// This is the decay scale that replaces the divergent golden rule at
/// `Δ = 0`. It approximates the **population** rate `2·|Im z|` of the
/// unstable pole pair up to a slowly varying logarithmic factor (the
/// convention is recorded in [`SpectralResult::rate_convention`]).
pub fn nonperturbative_rate_scale(j: f64, g: f64) -> Result<f64> {
    validate_j(j)?;
    validate_g(g)?;
    if g == 0.0 {
        return Ok(0.0);
    }
    Ok(g * g / (PI * j) * (32.0 * PI * j * j / (g * g)).ln())
}

/// Damped Newton iteration for a zero of `F(z) = z − Δ − Σ^{II}(z)`.
///
/// Steps that would leave the continuation's validity region (or increase
/// `|F|`) are halved rather than taken, which keeps the iterates on the
/// second sheet.
fn damped_newton_pole(j: f64, g: f64, delta: f64, seed: Complex64) -> Result<Complex64> {
    let f = |z: Complex64| -> Result<Complex64> {
        Ok(z - delta - self_energy_second_sheet(j, g, z)?)
    };
    let mut z = seed;
    let mut fz = f(z)?;
    for _ in 0..200 {
        let deriv = 1.0 - self_energy_second_sheet_derivative(j, g, z)?;
        if deriv.norm() < 1e-14 {
            return Err(Error::ConvergenceFailure {
                what: "pole search",
                detail: format!("Newton derivative vanished at z = {z}"),
            });
        }
        let mut step = fz / deriv;
        let mut halvings = 0;
        let (zn, fzn) = loop {
            let candidate = z - step;
            match f(candidate) {
                Ok(fc) if fc.norm() <= fz.norm() => break (candidate, fc),
                _ => {
                    step *= 0.5;
                    halvings += 1;
                    if halvings > 60 {
                        return Err(Error::ConvergenceFailure {
                            what: "pole search",
                            detail: format!("damping stalled at z = {z} (|F| = {})", fz.norm()),
                        });
                    }
                }
            }
        };
        let converged = step.norm() <= 1e-12 * j || fzn.norm() <= 1e-14 * j;
        z = zn;
        fz = fzn;
        if converged {
            return Ok(z);
        }
    }
    Err(Error::ConvergenceFailure {
        what: "pole search",
        detail: format!("no convergence after 200 iterations (last z = {z}, |F| = {})", fz.norm()),
    })
}

/// The pair of unstable (second-sheet) poles of the single-emitter resolvent
/// near the band centre, as `(z₊, z₋)` ordered by the sign of `Re z`.
///
/// The poles are the complex roots of `z − Δ − Σ^{II}(z) = 0`, found by a
/// damped Newton search seeded at `Δ ± g²/2J − iλ` (the known real-part
/// scale and the band-centre rate scale). At `Δ = 0` the pair is exactly
/// mirror symmetric: `z₋ = −conj(z₊)`.
///
/// # Errors
///
/// Requires the two-pole regime `|Δ| ≤ g²/2J` and `g > 0`. A root that
/// converges onto the wrong half-plane or the wrong side of the branch cut
/// is rejected as a sheet violation rather than returned.
pub fn unstable_poles(j: f64, g: f64, delta: f64) -> Result<(ComplexEnergy, ComplexEnergy)> {
    validate_j(j)?;
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::invalid("g", format!("pole search requires g > 0, got {g}")));
    }
    let half_width = g * g / (2.0 * j);
    if !delta.is_finite() || delta.abs() > half_width * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "delta",
            format!("two-pole regime requires |Δ| ≤ g²/2J = {half_width}, got {delta}"),
        ));
    }
    let lambda = nonperturbative_rate_scale(j, g)?;
    let mut roots = [Complex64::new(0.0, 0.0); 2];
    for (slot, side) in roots.iter_mut().zip([1.0f64, -1.0]) {
        let seed = Complex64::new(delta + side * half_width, -lambda);
        let z = damped_newton_pole(j, g, delta, seed)?;
        if z.im >= 0.0 {
            return Err(Error::ConvergenceFailure {
                what: "pole search",
                detail: format!("root {z} lies on the physical sheet (Im z ≥ 0); rejected"),
            });
        }
        if z.re * side <= 0.0 {
            return Err(Error::ConvergenceFailure {
                what: "pole search",
                detail: format!(
                    "root {z} crossed to the wrong side of the branch cut (expected sign {side} of Re z)"
                ),
            });
        }
        *slot = z;
    }
    if (roots[0] - roots[1]).norm() < 1e-10 * j {
        return Err(Error::ConvergenceFailure {
            what: "pole search",
            detail: format!("both seeds converged to the same root {}", roots[0]),
        });
    }
    Ok((
        ComplexEnergy::second_sheet(roots[0], j)?,
        ComplexEnergy::second_sheet(roots[1], j)?,
    ))
}

/// Residue of the single-emitter resolvent at a second-sheet pole `z`:
/// `R = 1 / (1 − dΣ^{II}/dz)`.
pub fn pole_residue(j: f64, g: f64, z: Complex64) -> Result<Complex64> {
    Ok(1.0 / (1.0 - self_energy_second_sheet_derivative(j, g, z)?))
}

/// Full spectral summary of a single in-band emitter: golden-rule and
/// band-centre rates, the unstable pole pair with residues (when `Δ` lies in
/// the two-pole window), and the resolved rate convention.
pub fn characterize_single_emitter(j: f64, g: f64, delta: f64) -> Result<SpectralResult> {
    validate_j(j)?;
    let fgr = if delta == 0.0 {
        f64::INFINITY
    } else {
        fgr_rate(j, g, delta)?
    };
    let lambda = nonperturbative_rate_scale(j, g)?;
    let mut poles = Vec::new();
    if g > 0.0 && delta.abs() <= g * g / (2.0 * j) {
        let (zp, zm) = unstable_poles(j, g, delta)?;
        for ce in [zp, zm] {
            let residue = pole_residue(j, g, ce.z)?;
            poles.push((ce, residue));
        }
    }
    Ok(SpectralResult {
        poles,
        fgr_rate: fgr,
        nonperturbative_rate: lambda,
        steady_population: 0.0,
        rate_convention: RateConvention::Population,
    })
}

/// Long-time amplitude and population of the alternating four-emitter state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourEmitterSteadyState {
    /// Surviving amplitude, the residue `1/(1 + g²n²/J²)` of the bound state
    /// that the alternating combination forms at the band centre.
    pub amplitude: f64,
    /// Steady population `amplitude²`.
    pub population: f64,
}

/// Steady state of the alternating four-emitter diamond of scale `n`: the
/// combination decouples from its resonant modes and keeps the amplitude
/// `1/(1 + g²n²/J²)` forever, so the population plateaus at its square.
pub fn four_emitter_steady_population(j: f64, g: f64, n: i64) -> Result<FourEmitterSteadyState> {
    validate_j(j)?;
    validate_g(g)?;
    if n < 1 {
        return Err(Error::invalid("n", format!("diamond scale must be ≥ 1, got {n}")));
    }
    let amplitude = 1.0 / (1.0 + g * g * (n * n) as f64 / (j * j));
    Ok(FourEmitterSteadyState { amplitude, population: amplitude * amplitude })
}

/// Quadrature tolerance per Green's function for a requested self-energy
/// tolerance: the `g²` prefactor relaxes the demand on `G`, floored where
/// near-cut quadrature stops converging economically and capped so loose
/// requests still return meaningful values.
fn green_tol(g: f64, sigma_tol: f64) -> f64 {
    (sigma_tol / (g * g)).clamp(1e-9, 1e-5)
}

/// Self-energy of `selector` at a complex argument off the real band, as a
/// combination of lattice Green's functions; `tol` is an absolute tolerance
/// on the self-energy (units of `J`).
///
/// The four-emitter combination expands into three Green's functions,
/// `Σ₄₋ = g² [G₀ − 2·G_{(2n,2n)} + G_{(4n,0)}]`, from the pairwise offsets of
/// the diamond and the `±½` amplitudes of the alternating state.
fn sigma_complex(
    j: f64,
    emitters: &EmitterSet,
    selector: StateSelector,
    z: Complex64,
    tol: f64,
) -> Result<Complex64> {
    let g2 = emitters.g() * emitters.g();
    if g2 == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let gt = green_tol(emitters.g(), tol);
    match selector {
        StateSelector::Single => Ok(g2 * greens::g00_with_tol(j, z, gt)?),
        StateSelector::TwoPlus | StateSelector::TwoMinus => {
            let n12 = emitters.pair_offset()?;
            let local = greens::g00_with_tol(j, z, gt)?;
            let exchange = greens::lattice_green_offset_with_tol(j, z, n12, gt)?;
            let sign = if matches!(selector, StateSelector::TwoPlus) { 1.0 } else { -1.0 };
            Ok(g2 * (local + sign * exchange))
        }
        StateSelector::FourMinus => {
            let n = emitters.diamond_scale()?;
            let local = greens::g00_with_tol(j, z, gt)?;
            let diag = greens::lattice_green_offset_with_tol(j, z, (2 * n, 2 * n), gt)?;
            let axial = greens::lattice_green_offset_with_tol(j, z, (4 * n, 0), gt)?;
            Ok(g2 * (local - 2.0 * diag + axial))
        }
    }
}

/// A boundary self-energy value together with the uncertainty of the
/// regulator extrapolation that produced it.
#[derive(Debug, Clone, Copy)]
struct OnShellSigma {
    /// Extrapolated `Σ(E + i0⁺)`, imaginary part clamped to `≤ 0`.
    value: Complex64,
    /// Uncertainty estimate: the change of the extrapolation when its
    /// coarsest regulator rung is dropped, plus the quadrature budget.
    spread: f64,
}

/// Boundary value `Σ(E + i0⁺)` of `selector`'s self-energy, by regulated
/// extrapolation, with an honest noise estimate attached.
fn sigma_on_shell(
    j: f64,
    emitters: &EmitterSet,
    selector: StateSelector,
    e: f64,
    tol: f64,
) -> Result<OnShellSigma> {
    let etas = greens::boundary_etas(j, e);
    let mut vals = Vec::with_capacity(etas.len());
    for &eta in &etas {
        vals.push(sigma_complex(j, emitters, selector, Complex64::new(e, eta), tol)?);
    }
    let full = neville_extrapolate(&etas, &vals, 0.0);
    let reduced = neville_extrapolate(&etas[1..], &vals[1..], 0.0);
    let green_terms = match selector {
        StateSelector::Single => 1.0,
        StateSelector::TwoPlus | StateSelector::TwoMinus => 2.0,
        StateSelector::FourMinus => 3.0,
    };
    let quad_noise =
        green_terms * emitters.g() * emitters.g() * green_tol(emitters.g(), tol);
    let spread = (full - reduced).norm() + quad_noise;
    let mut value = full;
    value.im = value.im.min(0.0);
    Ok(OnShellSigma { value, spread })
}

/// Spectral density `A(E) = −Im G(E+i0⁺)/π` from a boundary self-energy.
fn spectral_density(e: f64, delta: f64, sigma: Complex64) -> f64 {
    let dr = e - delta - sigma.re;
    let a = -sigma.im / (PI * (dr * dr + sigma.im * sigma.im));
    a.max(0.0)
}

/// Bound on the density noise at one node: how far `A` moves when `Σ` is
/// perturbed by the extrapolation spread.
fn density_noise(e: f64, delta: f64, s: &OnShellSigma) -> f64 {
    let a0 = spectral_density(e, delta, s.value);
    let probe = Complex64::new(s.spread, s.spread);
    let hi = spectral_density(e, delta, s.value + probe);
    let lo = spectral_density(e, delta, s.value - probe);
    (hi - a0).abs().max((lo - a0).abs())
}

/// Retarded resolvent of the selected collective amplitude,
/// `G(z) = 1/(z − Δ − Σ_sel(z))`.
///
/// On the physical sheet a real in-band `z` is evaluated as the boundary
/// value from above. On the second sheet the closed-form band-centre
/// continuation of the single-emitter self-energy is used (single emitters
/// only).
pub fn resolvent(
    j: f64,
    emitters: &EmitterSet,
    selector: StateSelector,
    energy: ComplexEnergy,
) -> Result<Complex64> {
    validate_j(j)?;
    validate_selector(emitters, selector)?;
    if emitters.delta().abs() >= 4.0 * j {
        return Err(Error::invalid(
            "delta",
            format!("in-band analysis requires |Δ| < 4J, got {}", emitters.delta()),
        ));
    }
    let sigma = match energy.sheet {
        Sheet::Physical => {
            if emitters.g() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else if energy.z.im == 0.0 && energy.z.re.abs() <= 4.0 * j {
                sigma_on_shell(j, emitters, selector, energy.z.re, 1e-10)?.value
            } else {
                sigma_complex(j, emitters, selector, energy.z, 1e-10)?
            }
        }
        Sheet::Second => {
            if !matches!(selector, StateSelector::Single) {
                return Err(Error::invalid(
                    "selector",
                    "the second-sheet continuation is implemented for single emitters only".to_string(),
                ));
            }
            self_energy_second_sheet(j, emitters.g(), energy.z)?
        }
    };
    Ok(1.0 / (energy.z - emitters.delta() - sigma))
}

/// Single-emitter resolvent `G_e(z)`.
pub fn resolvent_e(j: f64, emitters: &EmitterSet, energy: ComplexEnergy) -> Result<Complex64> {
    resolvent(j, emitters, StateSelector::Single, energy)
}

/// Tabulated boundary data of one collective resolvent on an adaptive energy
/// mesh, supporting Fourier synthesis of the amplitude with `t`-independent
/// accuracy and fast pointwise queries of `Σ(E+i0⁺)`.
///
/// The mesh stacks geometrically into the band edges `±4J` and the band
/// centre (singular points of the boundary self-energy) and around the
/// resonance at `Δ`, then bisects every segment whose cubic-Hermite
/// interpolant misses the midpoint value of the spectral density or the
/// self-energy by more than the build tolerance. Segments whose midpoint
/// error is within the noise floor of the regulator extrapolation are
/// accepted as converged — bisection cannot reduce noise, only genuine
/// interpolation error.
#[derive(Debug, Clone)]
pub struct SpectralTable {
    j: f64,
    delta: f64,
    g: f64,
    /// Weight of the discrete part of the spectral measure (band-centre
    /// bound state for the four-emitter selector, the whole measure for a
    /// decoupled emitter).
    bound_amplitude: f64,
    nodes: Vec<f64>,
    a_vals: Vec<f64>,
    a_slopes: Vec<f64>,
    sig_re: Vec<f64>,
    sig_re_slopes: Vec<f64>,
    sig_im: Vec<f64>,
    sig_im_slopes: Vec<f64>,
    achieved: f64,
}

/// Innermost mesh offset from the singular points, in units of `J`.
const MESH_FLOOR: f64 = 1e-9;
/// Default midpoint-interpolation tolerance of [`SpectralTable::build`].
pub const DEFAULT_TABLE_TOL: f64 = 1e-7;
/// Node budget for the adaptive mesh.
const MAX_NODES: usize = 20_000;
/// Refinement passes (each bisects every failing segment once). Passes that
/// split nothing new are cheap — midpoint evaluations are cached — so this
/// mostly bounds the bisection depth.
const MAX_PASSES: usize = 64;

impl SpectralTable {
    /// Builds the table at the default tolerance.
    pub fn build(j: f64, emitters: &EmitterSet, selector: StateSelector) -> Result<Self> {
        SpectralTable::build_with_tol(j, emitters, selector, DEFAULT_TABLE_TOL)
    }

    /// Builds the table, refining until the midpoint interpolation error of
    /// the spectral density (in `1/J` units) drops below `tol` on every
    /// segment (or below the extrapolation noise floor where that is
    /// larger).
    ///
    /// # Errors
    ///
    /// Besides parameter validation, reports a convergence failure —
    /// including the tolerance actually achieved — if the node budget is
    /// exhausted while genuine interpolation error above `tol` remains.
    pub fn build_with_tol(
        j: f64,
        emitters: &EmitterSet,
        selector: StateSelector,
        tol: f64,
    ) -> Result<Self> {
        validate_j(j)?;
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid("tol", format!("tolerance must be > 0, got {tol}")));
        }
        validate_selector(emitters, selector)?;
        let delta = emitters.delta();
        let g = emitters.g();
        if delta.abs() >= 4.0 * j {
            return Err(Error::invalid(
                "delta",
                format!("in-band analysis requires |Δ| < 4J, got {delta}"),
            ));
        }
        if matches!(selector, StateSelector::FourMinus) && delta != 0.0 {
            return Err(Error::invalid(
                "delta",
                "the four-emitter bound-state analysis is defined at Δ = 0".to_string(),
            ));
        }

        let mut table = SpectralTable {
            j,
            delta,
            g,
            bound_amplitude: 0.0,
            nodes: Vec::new(),
            a_vals: Vec::new(),
            a_slopes: Vec::new(),
            sig_re: Vec::new(),
            sig_re_slopes: Vec::new(),
            sig_im: Vec::new(),
            sig_im_slopes: Vec::new(),
            achieved: 0.0,
        };
        if g == 0.0 {
            // Decoupled emitter: the spectral measure is a point mass at Δ.
            table.bound_amplitude = 1.0;
            return Ok(table);
        }
        if matches!(selector, StateSelector::FourMinus) {
            let n = emitters.diamond_scale()?;
            table.bound_amplitude = four_emitter_steady_population(j, g, n)?.amplitude;
        }

        // Quadrature budget well below the interpolation tolerance: near a
        // resonance the density magnifies self-energy errors by up to the
        // inverse square of the decay rate (~10³–10⁴ here).
        let node_tol = (tol * 1e-4).clamp(1e-13, 1e-6);
        let mut nodes = initial_mesh(j, delta);
        let mut a_vals = Vec::with_capacity(nodes.len());
        let mut sig = Vec::with_capacity(nodes.len());
        let mut noise = Vec::with_capacity(nodes.len());
        for &e in &nodes {
            let s = sigma_on_shell(j, emitters, selector, e, node_tol)?;
            a_vals.push(spectral_density(e, delta, s.value));
            noise.push(density_noise(e, delta, &s));
            sig.push(s);
        }

        // Midpoint-driven refinement of both A(E) and Σ(E). Each segment's
        // midpoint is evaluated once and cached: a bisection promotes the
        // cached midpoint to a node and leaves two fresh child segments, and
        // re-checking an unchanged segment against updated endpoint slopes
        // costs no quadrature.
        struct MidCache {
            mid: f64,
            a: f64,
            sig: OnShellSigma,
            noise: f64,
        }
        let mut cache: Vec<Option<MidCache>> = Vec::new();
        cache.resize_with(nodes.len() - 1, || None);
        // `worst` tracks genuine failures (error above both tolerance and
        // noise gate); `residual` tracks every checked segment, including
        // noise-limited ones that refinement rightly leaves alone.
        let mut worst: f64 = 0.0;
        let mut residual: f64 = 0.0;
        for _pass in 0..MAX_PASSES {
            if nodes.len() >= MAX_NODES {
                break;
            }
            let a_slopes = hermite_slopes(&nodes, &a_vals);
            let re: Vec<f64> = sig.iter().map(|s| s.value.re).collect();
            let im: Vec<f64> = sig.iter().map(|s| s.value.im).collect();
            let re_slopes = hermite_slopes(&nodes, &re);
            let im_slopes = hermite_slopes(&nodes, &im);

            let mut fails = vec![false; nodes.len() - 1];
            worst = 0.0;
            residual = 0.0;
            for i in 0..nodes.len() - 1 {
                let h = nodes[i + 1] - nodes[i];
                if h < 4.0 * MESH_FLOOR * j {
                    continue;
                }
                if cache[i].is_none() {
                    let mid = nodes[i] + 0.5 * h;
                    let s_mid = sigma_on_shell(j, emitters, selector, mid, node_tol)?;
                    cache[i] = Some(MidCache {
                        mid,
                        a: spectral_density(mid, delta, s_mid.value),
                        sig: s_mid,
                        noise: density_noise(mid, delta, &s_mid),
                    });
                }
                let c = cache[i].as_ref().expect("cache was just filled");
                let predict = |f0: f64, f1: f64, m0: f64, m1: f64| {
                    0.5 * (f0 + f1) + 0.125 * h * (m0 - m1)
                };
                let err_a =
                    (predict(a_vals[i], a_vals[i + 1], a_slopes[i], a_slopes[i + 1]) - c.a).abs()
                        * j;
                let err_s = {
                    let er = (predict(re[i], re[i + 1], re_slopes[i], re_slopes[i + 1])
                        - c.sig.value.re)
                        .abs();
                    let ei = (predict(im[i], im[i + 1], im_slopes[i], im_slopes[i + 1])
                        - c.sig.value.im)
                        .abs();
                    10.0 * er.max(ei) / j
                };
                let gate_a = 3.0 * j * noise[i].max(noise[i + 1]).max(c.noise);
                let gate_s = 30.0 * sig[i].spread.max(sig[i + 1].spread).max(c.sig.spread) / j;
                let err = err_a.max(err_s);
                residual = residual.max(err);
                let a_fails = err_a > tol && err_a > gate_a;
                let s_fails = err_s > tol && err_s > gate_s;
                if a_fails || s_fails {
                    worst = worst.max(err);
                    fails[i] = true;
                }
            }
            if !fails.iter().any(|&f| f) {
                worst = 0.0;
                break;
            }
            let old_nodes = std::mem::take(&mut nodes);
            let old_a = std::mem::take(&mut a_vals);
            let old_sig = std::mem::take(&mut sig);
            let old_noise = std::mem::take(&mut noise);
            let old_cache = std::mem::take(&mut cache);
            for (i, c) in old_cache.into_iter().enumerate() {
                nodes.push(old_nodes[i]);
                a_vals.push(old_a[i]);
                sig.push(old_sig[i]);
                noise.push(old_noise[i]);
                if fails[i] {
                    let c = c.expect("failing segments have evaluated midpoints");
                    nodes.push(c.mid);
                    a_vals.push(c.a);
                    sig.push(c.sig);
                    noise.push(c.noise);
                    cache.push(None);
                    cache.push(None);
                } else {
                    cache.push(c);
                }
            }
            nodes.push(*old_nodes.last().expect("mesh is never empty"));
            a_vals.push(*old_a.last().expect("mesh is never empty"));
            sig.push(*old_sig.last().expect("mesh is never empty"));
            noise.push(*old_noise.last().expect("mesh is never empty"));
        }
        table.achieved = residual.max(tol);
        if worst > 100.0 * tol {
            return Err(Error::ConvergenceFailure {
                what: "spectral table refinement",
                detail: format!(
                    "node budget exhausted with genuine interpolation error remaining: requested midpoint tolerance {tol}, achieved {worst} with {} nodes",
                    nodes.len()
                ),
            });
        }

        table.a_slopes = hermite_slopes(&nodes, &a_vals);
        table.sig_re = sig.iter().map(|s| s.value.re).collect();
        table.sig_im = sig.iter().map(|s| s.value.im).collect();
        table.sig_re_slopes = hermite_slopes(&nodes, &table.sig_re);
        table.sig_im_slopes = hermite_slopes(&nodes, &table.sig_im);
        table.nodes = nodes;
        table.a_vals = a_vals;
        Ok(table)
    }

    /// Number of mesh nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Largest midpoint interpolation error left on the final mesh, floored
    /// at the requested tolerance. This includes segments whose error is
    /// noise-limited (refinement leaves those alone once bisection can no
    /// longer help), so near a sharp resonance it can sit above the build
    /// tolerance.
    pub fn achieved_tolerance(&self) -> f64 {
        self.achieved
    }

    /// Weight of the discrete (bound-state) part of the spectral measure.
    pub fn bound_amplitude(&self) -> f64 {
        self.bound_amplitude
    }

    /// Collective amplitude `C(t) = C_b·e^{−iE_b t} + ∫ A(E) e^{−iEt} dE`.
    ///
    /// The continuous part uses exact oscillatory moments per mesh segment,
    /// so the accuracy is set by the mesh interpolation error alone,
    /// uniformly in `t`.
    pub fn amplitude(&self, t: f64) -> Complex64 {
        let mut c = Complex64::new(0.0, 0.0);
        if self.bound_amplitude != 0.0 {
            // A decoupled emitter carries its point mass at Δ; the
            // four-emitter bound state sits at the band centre (Δ = 0 is
            // enforced at build time).
            let e_bound = if self.g == 0.0 { self.delta } else { 0.0 };
            c += self.bound_amplitude * Complex64::new(0.0, -e_bound * t).exp();
        }
        if !self.nodes.is_empty() {
            c += fourier_cubic_hermite(&self.nodes, &self.a_vals, &self.a_slopes, t);
        }
        c
    }

    /// Integral of the spectral measure (continuous part plus bound weight);
    /// equals 1 up to mesh accuracy (completeness).
    pub fn norm_integral(&self) -> f64 {
        let mut total = self.bound_amplitude;
        for i in 0..self.nodes.len().saturating_sub(1) {
            let h = self.nodes[i + 1] - self.nodes[i];
            total += 0.5 * h * (self.a_vals[i] + self.a_vals[i + 1])
                + h * h / 12.0 * (self.a_slopes[i] - self.a_slopes[i + 1]);
        }
        total
    }

    /// Interpolated boundary self-energy `Σ(E + i0⁺)` at an in-band energy.
    /// Energies beyond the outermost nodes clamp to the end values.
    pub fn sigma_at(&self, e: f64) -> Complex64 {
        if self.nodes.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let n = self.nodes.len();
        if e <= self.nodes[0] {
            return Complex64::new(self.sig_re[0], self.sig_im[0]);
        }
        if e >= self.nodes[n - 1] {
            return Complex64::new(self.sig_re[n - 1], self.sig_im[n - 1]);
        }
        let idx = match self.nodes.binary_search_by(|x| x.total_cmp(&e)) {
            Ok(i) => return Complex64::new(self.sig_re[i], self.sig_im[i]),
            Err(i) => i - 1,
        };
        let h = self.nodes[idx + 1] - self.nodes[idx];
        let s = (e - self.nodes[idx]) / h;
        let hermite = |f0: f64, f1: f64, m0: f64, m1: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            f0 * (2.0 * s3 - 3.0 * s2 + 1.0)
                + f1 * (3.0 * s2 - 2.0 * s3)
                + h * (m0 * (s3 - 2.0 * s2 + s) + m1 * (s3 - s2))
        };
        Complex64::new(
            hermite(
                self.sig_re[idx],
                self.sig_re[idx + 1],
                self.sig_re_slopes[idx],
                self.sig_re_slopes[idx + 1],
            ),
            hermite(
                self.sig_im[idx],
                self.sig_im[idx + 1],
                self.sig_im_slopes[idx],
                self.sig_im_slopes[idx + 1],
            ),
        )
    }

    /// Hopping strength the table was built with.
    pub fn j(&self) -> f64 {
        self.j
    }

    /// Detuning the table was built with.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Coupling the table was built with.
    pub fn g(&self) -> f64 {
        self.g
    }
}

/// Geometric stacks into every singular point plus a uniform backbone.
fn initial_mesh(j: f64, delta: f64) -> Vec<f64> {
    let band = 4.0 * j;
    let mut pts = Vec::new();
    // Band-centre stacks (the boundary self-energy has a log singularity).
    let mut off = MESH_FLOOR * j;
    while off < 0.7 * j {
        pts.push(off);
        pts.push(-off);
        off *= 2.0;
    }
    // Band-edge stacks.
    let mut off = MESH_FLOOR * j;
    while off < 1.2 * j {
        pts.push(band - off);
        pts.push(-band + off);
        off *= 2.0;
    }
    // Resonance stack around Δ (near-vanishing real part of the resolvent's
    // denominator).
    if delta != 0.0 {
        let mut off = 1e-5 * j;
        while off < 0.4 * j {
            for s in [-1.0, 1.0] {
                let e = delta + s * off;
                if e.abs() < band - 2.0 * MESH_FLOOR * j {
                    pts.push(e);
                }
            }
            off *= 2.0;
        }
    }
    // Uniform backbone.
    let step = 0.04 * j;
    let mut e = -band + 0.25 * j;
    while e < band - 0.25 * j + 0.5 * step {
        pts.push(e);
        e += step;
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 0.5 * MESH_FLOOR * j);
    pts
}

/// Collective amplitude at time `t` through the resolvent's spectral
/// representation. Builds a fresh [`SpectralTable`] per call — for repeated
/// evaluation construct the table once and call [`SpectralTable::amplitude`].
///
/// # Errors
///
/// Propagates table construction failures (which report the tolerance
/// actually achieved).
pub fn amplitude_via_resolvent(
    j: f64,
    emitters: &EmitterSet,
    selector: StateSelector,
    t: f64,
) -> Result<Complex64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("t", format!("time must be finite and ≥ 0, got {t}")));
    }
    Ok(SpectralTable::build(j, emitters, selector)?.amplitude(t))
}

/// Boundary self-energy for single-mode asymptotics: the band-centre closed
/// form near the centre (where regulated quadrature cannot resolve the
/// resonant-contour modes), the regulated quadrature elsewhere.
fn mode_sigma(j: f64, emitters: &EmitterSet, omega: f64) -> Result<Complex64> {
    // Modes with ω = 0 to the last bit sit exactly on the van Hove point;
    // the measure-zero patch keeps them finite without visible weight error.
    let e = if omega == 0.0 { 1e-12 * j } else { omega };
    if e.abs() < 0.4 * j {
        Ok(greens::self_energy_midband_expansion(j, emitters.g(), e)?.sigma.value)
    } else if e.abs() >= 4.0 * j {
        // Band extrema (measure-zero corner modes): reuse the innermost
        // in-band boundary value.
        let inner = (4.0 * j - 1e-6 * j).copysign(e);
        Ok(sigma_on_shell(j, emitters, StateSelector::Single, inner, 1e-9)?.value)
    } else {
        Ok(sigma_on_shell(j, emitters, StateSelector::Single, e, 1e-9)?.value)
    }
}

/// Asymptotic modulus of bath-mode `k`'s amplitude after a single in-band
/// emitter has fully decayed, with the free phase `e^{−iω(k)t}` and the
/// `1/N` mode normalization factored out:
/// `N·|C_k(∞)| = g·|G_e(ω(k) + i0⁺)|`.
///
/// The `1/N²`-weighted sum of the squares of this quantity over all modes is
/// 1 (see [`bath_momentum_population_sum`]).
pub fn asymptotic_bath_amplitude(
    spec: &LatticeSpec,
    emitters: &EmitterSet,
    k: &bath::KPoint,
) -> Result<f64> {
    if emitters.len() != 1 {
        return Err(Error::invalid(
            "emitters",
            format!(
                "asymptotic bath amplitudes are defined for a single emitter, got {}",
                emitters.len()
            ),
        ));
    }
    let j = spec.j();
    if emitters.delta().abs() >= 4.0 * j {
        return Err(Error::invalid(
            "delta",
            format!("in-band emitter required, got Δ = {}", emitters.delta()),
        ));
    }
    let omega = bath::dispersion(spec, k);
    let sigma = mode_sigma(j, emitters, omega)?;
    let denom = Complex64::new(omega - emitters.delta() - sigma.re, -sigma.im);
    Ok(emitters.g() / denom.norm())
}

/// `1/N²`-weighted sum of the squared asymptotic mode amplitudes of a single
/// in-band emitter — equals 1 (all excitation ends in the bath) up to mode
/// discretization.
///
/// The discretization error depends strongly on the detuning. Near a generic
/// resonant contour the sum self-averages and converges rapidly in `N`. A
/// band-centre emitter is special: the grid's mode energies near the saddle
/// contour come in sheets spaced `4πJ/N`, and the weight function peaks
/// between the first two sheets, so the deficit decays only a little faster
/// than `1/N` (measured: −8.1e-2 at N = 1024 down to −6.2e-3 at N = 8192 for
/// g = 0.1J, Δ = 0).
///
/// Uses an interpolation table for the boundary self-energy away from the
/// band centre and the closed form near it: the resonant-contour modes land
/// within the innermost mesh cells, where only the closed form resolves the
/// logarithmic growth of the decay rate mode by mode.
pub fn bath_momentum_population_sum(spec: &LatticeSpec, emitters: &EmitterSet) -> Result<f64> {
    if emitters.len() != 1 {
        return Err(Error::invalid(
            "emitters",
            "the unitarity sum is defined for a single emitter".to_string(),
        ));
    }
    let j = spec.j();
    let delta = emitters.delta();
    let g = emitters.g();
    if delta.abs() >= 4.0 * j {
        return Err(Error::invalid("delta", format!("in-band emitter required, got Δ = {delta}")));
    }
    if g == 0.0 {
        return Ok(0.0);
    }
    let table = SpectralTable::build_with_tol(j, emitters, StateSelector::Single, 1e-6)?;
    let n = spec.n();
    let half: Vec<f64> = (0..n)
        .map(|m| -2.0 * j * (2.0 * PI * m as f64 / n as f64).cos())
        .collect();
    let centre_cut = 1e-5 * j;
    let scale = g * g / ((n * n) as f64);
    let mut total = 0.0;
    for &ty in &half {
        let mut row = 0.0;
        for &tx in &half {
            let omega = tx + ty;
            let sigma = if omega.abs() < centre_cut {
                mode_sigma(j, emitters, omega)?
            } else {
                table.sigma_at(omega)
            };
            let dr = omega - delta - sigma.re;
            row += 1.0 / (dr * dr + sigma.im * sigma.im);
        }
        total += row * scale;
    }
    Ok(total)
}

/// Report of a long-time tail fit of population samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    /// Slope of `ln p` against `ln[t·ln²(16Jt)]` (the tail law gives −2).
    pub exponent: f64,
    /// `max/min − 1` of the compensated product `p·[t·ln²(16Jt)]²` over the
    /// window (0 for a perfect tail).
    pub drift: f64,
    /// Mean compensated product (the tail-law amplitude).
    pub amplitude: f64,
}

/// Fits population samples `p(t) = |C_e(t)|²` against the band-centre tail
/// law `p ∝ [t·ln²(16Jt)]⁻²`.
///
/// Returns the fitted exponent, the relative drift of the compensated
/// product (`max/min − 1`), and its mean amplitude.
///
/// # Errors
///
/// Refuses (with [`Error::AnalysisRefused`]) when the window is still in the
/// exponential stage: on the tail axes an exponential is strongly curved, so
/// the fit is rejected whenever a straight line in plain `t` explains `ln p`
/// better than a straight line in `ln[t·ln²(16Jt)]`.
pub fn long_time_tail_exponent(j: f64, times: &[f64], pops: &[f64]) -> Result<TailFit> {
    validate_j(j)?;
    if times.len() != pops.len() {
        return Err(Error::invalid(
            "samples",
            format!("times ({}) and populations ({}) differ in length", times.len(), pops.len()),
        ));
    }
    if times.len() < 8 {
        return Err(Error::invalid(
            "samples",
            format!("tail fit needs at least 8 samples, got {}", times.len()),
        ));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid(
                "times",
                "sample times must be strictly increasing".to_string(),
            ));
        }
    }
    if times[0] * j <= 1.0 / 16.0 {
        return Err(Error::invalid(
            "times",
            format!("tail variable ln(16Jt) needs 16Jt > 1, got t = {}", times[0]),
        ));
    }
    if pops.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
        return Err(Error::invalid("pops", "populations must be finite and > 0".to_string()));
    }

    let y: Vec<f64> = pops.iter().map(|&p| p.ln()).collect();
    let x_tail: Vec<f64> = times
        .iter()
        .map(|&t| {
            let l = (16.0 * j * t).ln();
            (t * l * l).ln()
        })
        .collect();

    let (slope_tail, ss_tail) = linear_fit_residual(&x_tail, &y);
    let (_, ss_exp) = linear_fit_residual(times, &y);
    if ss_exp < ss_tail {
        return Err(Error::AnalysisRefused {
            reason: format!(
                "window still exponential: ln p is straighter in t (residual {ss_exp:.3e}) than in the tail variable ln[t·ln²(16Jt)] (residual {ss_tail:.3e})"
            ),
        });
    }

    let mut q_min = f64::INFINITY;
    let mut q_max = f64::NEG_INFINITY;
    let mut q_sum = 0.0;
    for (&t, &p) in times.iter().zip(pops.iter()) {
        let l = (16.0 * j * t).ln();
        let q = p * (t * l * l).powi(2);
        q_min = q_min.min(q);
        q_max = q_max.max(q);
        q_sum += q;
    }
    Ok(TailFit {
        exponent: slope_tail,
        drift: q_max / q_min - 1.0,
        amplitude: q_sum / times.len() as f64,
    })
}

/// Least-squares line `y = a + b·x`; returns `(b, residual sum of squares)`.
fn linear_fit_residual(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y.iter()) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss = x
        .iter()
        .zip(y.iter())
        .map(|(&xi, &yi)| {
            let r = yi - a - b * xi;
            r * r
        })
        .sum::<f64>();
    (b, ss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::sync::OnceLock;

    const J: f64 = 1.0;

    /// Shared Δ = 0, g = 0.1 single-emitter table (the expensive fixture).
    fn table_centre() -> &'static SpectralTable {
        static TABLE: OnceLock<SpectralTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let em = EmitterSet::single(0.0, 0.1).unwrap();
            SpectralTable::build(J, &em, StateSelector::Single).unwrap()
        })
    }

    /// Shared Δ = −2J, g = 0.1 single-emitter table.
    fn table_detuned() -> &'static SpectralTable {
        static TABLE: OnceLock<SpectralTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let em = EmitterSet::single(-2.0, 0.1).unwrap();
            SpectralTable::build(J, &em, StateSelector::Single).unwrap()
        })
    }

    #[test]
    fn emitter_set_validation() {
        assert!(EmitterSet::new(vec![], 0.0, 0.1).is_err());
        assert!(EmitterSet::new(vec![(0, 0), (0, 0)], 0.0, 0.1).is_err());
        assert!(EmitterSet::new(vec![(0, 0)], 0.0, -0.1).is_err());
        let pair = EmitterSet::pair((6, 6), 0.0, 0.05).unwrap();
        assert_eq!(pair.pair_offset().unwrap(), (6, 6));
        let four = EmitterSet::diamond(3, 0.0, 0.05).unwrap();
        assert_eq!(four.diamond_scale().unwrap(), 3);
        assert_eq!(four.positions(), &[(0, 6), (6, 0), (6, 12), (12, 6)]);
        assert!(EmitterSet::single(0.0, 0.1).unwrap().diamond_scale().is_err());
    }

    #[test]
    fn golden_rule_reference_values() {
        for &(delta, expect) in &[(-3.0, 0.0057438), (-2.0, 0.0068646), (-1.0, 0.0089171)] {
            let rate = fgr_rate(J, 0.1, delta).unwrap();
            assert!(
                (rate - expect).abs() / expect < 0.02,
                "Γ({delta}) = {rate}, expected ≈ {expect}"
            );
        }
    }

    #[test]
    fn golden_rule_edge_plateau_and_boundaries() {
        let rate = fgr_rate(J, 0.1, -3.9).unwrap();
        assert!((rate - 0.005).abs() / 0.005 < 0.05, "Γ(−3.9J) = {rate}");
        assert_eq!(fgr_rate(J, 0.1, 4.7).unwrap(), 0.0);
        assert!(matches!(fgr_rate(J, 0.1, 0.0), Err(Error::Divergence { .. })));
    }

    #[test]
    fn golden_rule_satisfies_optical_theorem() {
        // 2πg²D(Δ) must equal −2·Im Σ(Δ+i0⁺): histogram density of states
        // against the quadrature boundary value.
        for &delta in &[-3.0, -2.0, -1.0] {
            let rate = fgr_rate(J, 0.1, delta).unwrap();
            let gamma = greens::self_energy_on_shell(J, 0.1, delta).unwrap().decay_rate;
            assert!(
                (rate - gamma).abs() / gamma < 0.01,
                "Δ = {delta}: golden rule {rate} vs optical theorem {gamma}"
            );
        }
    }

    #[test]
    fn rate_scale_reference_value() {
        let lambda = nonperturbative_rate_scale(J, 0.1).unwrap();
        assert_relative_eq!(lambda, 0.029334, max_relative = 1e-4);
        assert_eq!(nonperturbative_rate_scale(J, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn unstable_pole_pair_structure() {
        let (zp, zm) = unstable_poles(J, 0.1, 0.0).unwrap();
        assert_eq!(zp.sheet, Sheet::Second);
        // Mirror symmetry at Δ = 0.
        assert!((zm.z + zp.z.conj()).norm() < 1e-10, "z− = {}, z+ = {}", zm.z, zp.z);
        // Real parts at ±g²/2J within 20%.
        let half_width = 0.005;
        assert!((zp.z.re - half_width).abs() / half_width < 0.2, "Re z+ = {}", zp.z.re);
        assert!(zp.z.im < 0.0);
        // Population rate 2|Im z| tracks the band-centre scale λ up to the
        // slowly varying logarithmic factor.
        let lambda = nonperturbative_rate_scale(J, 0.1).unwrap();
        let ratio = 2.0 * zp.z.im.abs() / lambda;
        assert!((0.6..=1.0).contains(&ratio), "2|Im z|/λ = {ratio}");
        // The root actually solves the pole equation.
        let f = zp.z - self_energy_second_sheet(J, 0.1, zp.z).unwrap();
        assert!(f.norm() < 1e-10, "|F(z+)| = {}", f.norm());
    }

    #[test]
    fn unstable_poles_respect_two_pole_window() {
        assert!(unstable_poles(J, 0.1, 0.004).is_ok());
        assert!(unstable_poles(J, 0.1, 0.02).is_err());
        assert!(unstable_poles(J, 0.0, 0.0).is_err());
    }

    #[test]
    fn pole_residue_reference_value() {
        let (zp, _) = unstable_poles(J, 0.1, 0.0).unwrap();
        let r = pole_residue(J, 0.1, zp.z).unwrap();
        assert!((r - Complex64::new(0.8873, 0.0372)).norm() < 5e-3, "residue {r}");
    }

    #[test]
    fn characterization_bundles_rates_and_poles() {
        let res = characterize_single_emitter(J, 0.1, 0.0).unwrap();
        assert!(res.fgr_rate.is_infinite());
        assert_eq!(res.poles.len(), 2);
        assert_eq!(res.steady_population, 0.0);
        assert_eq!(res.rate_convention, RateConvention::Population);
        assert_relative_eq!(
            res.rate_convention.pole_rate(res.poles[0].0.z),
            2.0 * res.poles[0].0.z.im.abs()
        );
        let detuned = characterize_single_emitter(J, 0.1, -2.0).unwrap();
        assert!(detuned.poles.is_empty());
        assert!(detuned.fgr_rate > 0.0 && detuned.fgr_rate.is_finite());
    }

    #[test]
    fn resolvent_limits() {
        let free = EmitterSet::single(-1.5, 0.0).unwrap();
        let z = Complex64::new(0.7, 0.4);
        let g_free = resolvent_e(J, &free, ComplexEnergy::physical(z)).unwrap();
        assert!((g_free - 1.0 / (z - free.delta())).norm() < 1e-14);

        let coupled = EmitterSet::single(0.0, 0.1).unwrap();
        let far = Complex64::new(120.0, 0.0);
        let g_far = resolvent_e(J, &coupled, ComplexEnergy::physical(far)).unwrap();
        assert!(((g_far - 1.0 / far) / (1.0 / far)).norm() < 1e-3);
    }

    #[test]
    fn resolvent_composes_with_self_energy() {
        let em = EmitterSet::single(0.0, 0.1).unwrap();
        let z = Complex64::new(0.0, 1.0);
        let lhs = resolvent_e(J, &em, ComplexEnergy::physical(z)).unwrap();
        let sigma = greens::self_energy(J, 0.1, z).unwrap().value;
        let rhs = 1.0 / (z - sigma);
        assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn pair_self_energy_matches_collective_combination() {
        let em = EmitterSet::pair((2, 1), 0.0, 0.1).unwrap();
        let z = Complex64::new(0.4, 0.3);
        let (plus, minus) = greens::sigma_collective_pm(J, 0.1, z, (2, 1)).unwrap();
        let sp = sigma_complex(J, &em, StateSelector::TwoPlus, z, 1e-10).unwrap();
        let sm = sigma_complex(J, &em, StateSelector::TwoMinus, z, 1e-10).unwrap();
        assert!((sp - plus).norm() < 1e-9, "Σ₊ {sp} vs {plus}");
        assert!((sm - minus).norm() < 1e-9, "Σ₋ {sm} vs {minus}");
    }

    #[test]
    fn four_emitter_combination_matches_double_integral() {
        // The three-Green's-function expansion of the alternating diamond
        // self-energy against the direct double momentum integral.
        let em = EmitterSet::diamond(2, 0.0, 0.05).unwrap();
        for &z in &[Complex64::new(0.3, 0.2), Complex64::new(0.0, 2.0)] {
            let combo = sigma_complex(J, &em, StateSelector::FourMinus, z, 1e-10).unwrap();
            let direct = greens::sigma_4minus(J, 0.05, 2, z).unwrap();
            assert!(
                (combo - direct).norm() < 1e-7,
                "z = {z}: combination {combo} vs direct {direct}"
            );
        }
    }

    #[test]
    fn spectral_table_is_complete_and_bounded() {
        let table = table_centre();
        let c0 = table.amplitude(0.0);
        assert!((c0 - Complex64::new(1.0, 0.0)).norm() < 1e-6, "C(0) = {c0}");
        assert_abs_diff_eq!(table.norm_integral(), 1.0, epsilon = 1e-6);
        for &t in &[0.5, 5.0, 50.0, 400.0] {
            let c = table.amplitude(t);
            assert!(c.norm() <= 1.0 + 1e-9, "|C({t})| = {}", c.norm());
        }
    }

    #[test]
    fn spectral_table_free_emitter_is_exact() {
        let em = EmitterSet::single(-1.5, 0.0).unwrap();
        let table = SpectralTable::build(J, &em, StateSelector::Single).unwrap();
        let t = 37.5;
        let c = table.amplitude(t);
        let exact = Complex64::new(0.0, 1.5 * t).exp();
        assert!((c - exact).norm() < 1e-14);
        assert_eq!(table.node_count(), 0);
        assert_abs_diff_eq!(table.norm_integral(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spectral_table_detuned_decay_matches_golden_rule() {
        let table = table_detuned();
        let rate = fgr_rate(J, 0.1, -2.0).unwrap();
        let t = 60.0;
        let pop = table.amplitude(t).norm_sqr();
        let predicted = (-rate * t).exp();
        assert!(
            (pop.ln() - predicted.ln()).abs() < 0.1 * rate * t,
            "population {pop} vs golden-rule prediction {predicted}"
        );
    }

    #[test]
    fn spectral_table_amplitude_phase_follows_detuning() {
        // Short-time evolution: C(t) ≈ e^{−iΔt} up to O(Γt) corrections;
        // catches any sign slip in the Fourier convention.
        let table = table_detuned();
        let t = 0.3;
        let c = table.amplitude(t);
        let free = Complex64::new(0.0, 2.0 * t).exp();
        assert!((c - free).norm() < 0.05, "C({t}) = {c} vs free {free}");
    }

    #[test]
    fn spectral_table_sigma_lookup_matches_direct_evaluation() {
        let em = EmitterSet::single(-2.0, 0.1).unwrap();
        let table = table_detuned();
        for &e in &[-3.1, -1.7, 0.4, 2.9] {
            let direct = sigma_on_shell(J, &em, StateSelector::Single, e, 1e-10).unwrap().value;
            let interp = table.sigma_at(e);
            assert!(
                (interp - direct).norm() < 1e-6,
                "Σ({e}): table {interp} vs direct {direct}"
            );
        }
    }

    #[test]
    fn amplitude_via_resolvent_free_case() {
        let em = EmitterSet::single(0.7, 0.0).unwrap();
        let c = amplitude_via_resolvent(J, &em, StateSelector::Single, 11.0).unwrap();
        assert!((c - Complex64::new(0.0, -0.7 * 11.0).exp()).norm() < 1e-12);
    }

    #[test]
    fn four_emitter_steady_state_reference() {
        let s = four_emitter_steady_population(J, 0.05, 3).unwrap();
        assert_relative_eq!(s.amplitude, 1.0 / 1.0225, max_relative = 1e-12);
        assert_relative_eq!(s.population, 0.956475, max_relative = 1e-4);
        // Strictly decreasing in g·n.
        let mut prev = four_emitter_steady_population(J, 0.02, 1).unwrap().population;
        for &(g, n) in &[(0.05, 1), (0.05, 2), (0.1, 2), (0.1, 4)] {
            let p = four_emitter_steady_population(J, g, n).unwrap().population;
            assert!(p < prev, "population not decreasing at g = {g}, n = {n}");
            prev = p;
        }
        assert_relative_eq!(
            four_emitter_steady_population(J, 0.0, 3).unwrap().population,
            1.0
        );
    }

    #[test]
    fn asymptotic_amplitudes_focus_on_resonant_contour() {
        let spec = LatticeSpec::new(64, J).unwrap();
        let em = EmitterSet::single(0.0, 0.1).unwrap();
        // (π/2, π/2) lies on the resonant contour kx + ky = π of Δ = 0.
        let on = bath::KPoint::from_indices(&spec, 16, 16).unwrap();
        let off = bath::KPoint::from_indices(&spec, 10, 10).unwrap();
        let a_on = asymptotic_bath_amplitude(&spec, &em, &on).unwrap();
        let a_off = asymptotic_bath_amplitude(&spec, &em, &off).unwrap();
        assert!(
            a_on > 5.0 * a_off,
            "contour mode {a_on} not dominant over off-contour {a_off}"
        );
    }

    #[test]
    fn unitarity_sum_approaches_one() {
        // Detuned emitter: the resonant contour is generic, so the mode sum
        // self-averages to the continuum identity quickly (measured error
        // +3.6e-5 at this size; +5.2e-3 at N = 1024).
        let spec = LatticeSpec::new(4096, J).unwrap();
        let em = EmitterSet::single(-2.0, 0.1).unwrap();
        let total = bath_momentum_population_sum(&spec, &em).unwrap();
        assert!((total - 1.0).abs() < 1e-3, "mode sum {total}");
    }

    #[test]
    fn tail_fit_confirms_synthetic_tail() {
        let times: Vec<f64> = (0..40).map(|i| 200.0 * (1.06_f64).powi(i)).collect();
        let pops: Vec<f64> = times
            .iter()
            .map(|&t| {
                let l = (16.0 * t).ln();
                3.0 / (t * l * l).powi(2)
            })
            .collect();
        let fit = long_time_tail_exponent(J, &times, &pops).unwrap();
        assert!(fit.drift < 1e-10, "drift {}", fit.drift);
        assert_relative_eq!(fit.exponent, -2.0, max_relative = 1e-10);
        assert_relative_eq!(fit.amplitude, 3.0, max_relative = 1e-10);
    }

    #[test]
    fn tail_fit_refuses_exponential_window() {
        let times: Vec<f64> = (0..40).map(|i| 10.0 + i as f64).collect();
        let pops: Vec<f64> = times.iter().map(|&t| (-0.03 * t).exp()).collect();
        match long_time_tail_exponent(J, &times, &pops) {
            Err(Error::AnalysisRefused { reason }) => {
                assert!(reason.contains("exponential"), "reason: {reason}");
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn tail_fit_validates_input() {
        assert!(long_time_tail_exponent(J, &[1.0, 2.0], &[0.1, 0.2]).is_err());
        let times: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        let mut pops = vec![1e-6; 10];
        pops[3] = -1e-6;
        assert!(long_time_tail_exponent(J, &times, &pops).is_err());
    }
}
