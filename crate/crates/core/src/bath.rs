//! Lattice bath: geometry, dispersion, density of states, mode transforms.
//!
//! The bath is a single bosonic band on an `N × N` square lattice with
//! periodic boundaries and nearest-neighbour hopping `J > 0`:
//!
//! ```text
//! ω(k) = −2J (cos kx + cos ky),   band: [−4J, 4J],
//! ```
//!
//! with wave vectors on the discrete grid `k = (2π/N)·m`, components
//! `m ∈ {−N/2, …, N/2 − 1}` (the grid contains `−π` and excludes `+π`).
//! All energies are measured from the band centre; the emitter transition
//! frequency is absorbed into the detuning `Δ`, so the reference frequency
//! stored on the lattice is identically zero.
//!
//! The density of states is estimated by a brute-force histogram over a dense
//! momentum grid; it integrates to one exactly by construction and exhibits
//! the logarithmic van Hove singularity at the band centre and the jump at
//! the band edges (value `≈ 1/(4πJ)` on the inner plateau near the edges).

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Geometry and energy scale of the bath lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    n: usize,
    j: f64,
    omega_a: f64,
}

impl LatticeSpec {
    /// Creates a lattice with `n × n` sites and hopping `j`.
    ///
    /// # Errors
    ///
    /// `n` must be even and at least 2 (the momentum grid pairs `−π` with the
    /// missing `+π`); `j` must be finite and strictly positive.
    pub fn new(n: usize, j: f64) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::invalid("n", format!("lattice size must be even and ≥ 2, got {n}")));
        }
        if !j.is_finite() || j <= 0.0 {
            return Err(Error::invalid("j", format!("hopping must be finite and > 0, got {j}")));
        }
        Ok(LatticeSpec { n, j, omega_a: 0.0 })
    }

    /// Linear size `N` of the lattice.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Hopping amplitude `J` (the energy unit of the toolkit).
    pub fn j(&self) -> f64 {
        self.j
    }

    /// Reference frequency of the emitters in the rotating frame. Fixed at
    /// zero: detunings are always quoted relative to the band centre.
    pub fn omega_a(&self) -> f64 {
        self.omega_a
    }

    /// Number of momentum modes, `N²`.
    pub fn mode_count(&self) -> usize {
        self.n * self.n
    }
}

/// Earliest time at which an emitted wavepacket can wrap around the periodic
/// boundary and return to its source: `t_rev = N / (2√2 J)` (the maximal
/// group velocity on the band is `|∇ω|_max = 2√2 J`).
///
/// Simulations are trustworthy only for `t ≲ 0.8 · t_rev`.
pub fn revival_time(spec: &LatticeSpec) -> f64 {
    spec.n() as f64 / (2.0 * std::f64::consts::SQRT_2 * spec.j())
}

/// A point of the discrete momentum grid, stored by integer indices
/// `(mx, my)` with `m ∈ [−N/2, N/2)` so that `k = (2π/N)·m` is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KPoint {
    mx: i64,
    my: i64,
    n: usize,
}

impl KPoint {
    /// Builds a grid point from integer indices.
    ///
    /// # Errors
    ///
    /// Each index must lie in `[−N/2, N/2)`.
    pub fn from_indices(spec: &LatticeSpec, mx: i64, my: i64) -> Result<Self> {
        let half = spec.n() as i64 / 2;
        for (name, m) in [("mx", mx), ("my", my)] {
            if m < -half || m >= half {
                return Err(Error::invalid(
                    "k-index",
                    format!("{name} = {m} outside grid range [{}, {})", -half, half),
                ));
            }
        }
        Ok(KPoint { mx, my, n: spec.n() })
    }

    /// Integer indices `(mx, my)`.
    pub fn indices(&self) -> (i64, i64) {
        (self.mx, self.my)
    }

    /// Component `kx = 2π mx / N`.
    pub fn kx(&self) -> f64 {
        2.0 * PI * self.mx as f64 / self.n as f64
    }

    /// Component `ky = 2π my / N`.
    pub fn ky(&self) -> f64 {
        2.0 * PI * self.my as f64 / self.n as f64
    }
}

/// Band dispersion at a continuous wave vector: `−2J (cos kx + cos ky)`.
pub fn dispersion_at(j: f64, kx: f64, ky: f64) -> f64 {
    -2.0 * j * (kx.cos() + ky.cos())
}

/// Band dispersion at a grid point.
///
/// Extremes: `k = (0,0) → −4J`, saddle `k = (π,0) → 0`, `k = (π,π) → +4J`
/// (the grid represents `+π` by `−π`; the dispersion is even, so the value is
/// unaffected).
pub fn dispersion(spec: &LatticeSpec, k: &KPoint) -> f64 {
    dispersion_at(spec.j(), k.kx(), k.ky())
}

/// Histogram estimator of the bath density of states.
///
/// Counts dispersion values of a dense `grid × grid` momentum mesh into bins
/// of width `resolution` covering `[−4J, 4J]` and normalises by the total
/// count times the bin width, so `∫ D(E) dE = 1` holds exactly by
/// construction.
#[derive(Debug, Clone)]
pub struct DosEstimator {
    j: f64,
    resolution: f64,
    grid: usize,
    bins: Vec<f64>,
}

impl DosEstimator {
    /// Default linear size of the dense momentum mesh.
    pub const DEFAULT_GRID: usize = 4096;
    /// Default bin width in units of `J`.
    pub const DEFAULT_RESOLUTION_OVER_J: f64 = 0.01;

    /// Builds the histogram (cost: `grid²` dispersion evaluations).
    ///
    /// # Errors
    ///
    /// `j` must be positive, `resolution` in `(0, 8J]`, `grid ≥ 64`.
    pub fn new(j: f64, resolution: f64, grid: usize) -> Result<Self> {
        if !j.is_finite() || j <= 0.0 {
            return Err(Error::invalid("j", format!("hopping must be > 0, got {j}")));
        }
        if !resolution.is_finite() || resolution <= 0.0 || resolution > 8.0 * j {
            return Err(Error::invalid(
                "resolution",
                format!("bin width must lie in (0, 8J], got {resolution}"),
            ));
        }
        if grid < 64 {
            return Err(Error::invalid("grid", format!("mesh size must be ≥ 64, got {grid}")));
        }

        let nbins = (8.0 * j / resolution).ceil() as usize + 1;
        let mut counts = vec![0u64; nbins];
        let inv_res = 1.0 / resolution;
        let lo = -4.0 * j;

        // −2J cos(2π m / grid), tabulated once per axis.
        let half_terms: Vec<f64> = (0..grid)
            .map(|m| -2.0 * j * (2.0 * PI * m as f64 / grid as f64).cos())
            .collect();

        for &ty in &half_terms {
            for &tx in &half_terms {
                let omega = tx + ty;
                let mut idx = ((omega - lo) * inv_res) as usize;
                if idx >= nbins {
                    idx = nbins - 1;
                }
                counts[idx] += 1;
            }
        }

        let norm = 1.0 / (grid as f64 * grid as f64 * resolution);
        let bins = counts.into_iter().map(|c| c as f64 * norm).collect();
        Ok(DosEstimator { j, resolution, grid, bins })
    }

    /// Density of states at energy `e`. Exactly zero outside the band
    /// `[−4J, 4J]`.
    pub fn density(&self, e: f64) -> f64 {
        if e.abs() > 4.0 * self.j {
            return 0.0;
        }
        let mut idx = ((e + 4.0 * self.j) / self.resolution) as usize;
        if idx >= self.bins.len() {
            idx = self.bins.len() - 1;
        }
        self.bins[idx]
    }

    /// Bin width of the histogram.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Linear size of the momentum mesh used to build the histogram.
    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Numerical check of the sum rule `∫ D(E) dE = 1` (should be exact up to
    /// floating-point accumulation).
    pub fn integral(&self) -> f64 {
        self.bins.iter().sum::<f64>() * self.resolution
    }
}

/// Density of states of the lattice at energy `e`, using a fresh
/// default-sized histogram ([`DosEstimator::DEFAULT_GRID`]) with bin width
/// `resolution`.
///
/// This is a convenience wrapper; it rebuilds the histogram on every call.
/// Scans should construct a [`DosEstimator`] once and query
/// [`DosEstimator::density`].
pub fn dos(spec: &LatticeSpec, e: f64, resolution: f64) -> Result<f64> {
    let est = DosEstimator::new(spec.j(), resolution, DosEstimator::DEFAULT_GRID)?;
    Ok(est.density(e))
}

/// Cached unit-hopping density of states at default resolution.
///
/// `D_J(E) = D_1(E/J)/J` for any `J > 0`, so one unit-`J` histogram serves
/// every energy scale.
pub(crate) fn unit_dos_density(e_over_j: f64) -> f64 {
    static UNIT: OnceLock<DosEstimator> = OnceLock::new();
    let est = UNIT.get_or_init(|| {
        DosEstimator::new(
            1.0,
            DosEstimator::DEFAULT_RESOLUTION_OVER_J,
            DosEstimator::DEFAULT_GRID,
        )
        .expect("default histogram parameters are valid")
    });
    est.density(e_over_j)
}

/// Closed-form density of states of the infinite lattice,
/// `D(E) = K(√(1 − (E/4J)²)) / (2π²J)`, with `K` the complete elliptic
/// integral of the first kind. Used as an independent cross-check of the
/// histogram estimator.
pub fn dos_elliptic(j: f64, e: f64) -> f64 {
    let x = e / (4.0 * j);
    if x.abs() >= 1.0 {
        return 0.0;
    }
    let k = (1.0 - x * x).sqrt();
    crate::quad::complete_elliptic_k(k) / (2.0 * PI * PI * j)
}

/// Unitary transform between lattice-site and momentum-mode amplitudes.
///
/// Conventions (both directions carry `1/N` so each is unitary):
///
/// ```text
/// a_k = (1/N) Σ_n e^{−i k·n} a_n,     a_n = (1/N) Σ_k e^{+i k·n} a_k.
/// ```
///
/// Amplitude grids are row-major `N × N` slices indexed `iy·N + ix`; momentum
/// bins use the FFT-natural layout `k = 2π·(jx, jy)/N`, `j ∈ [0, N)`, which
/// covers the same torus as the signed index convention of [`KPoint`]
/// (`m = j` for `j < N/2`, `m = j − N` otherwise).
pub struct ModeTransform {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transpose_buf: Vec<Complex64>,
}

impl ModeTransform {
    /// Plans forward and inverse transforms for an `n × n` lattice.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::invalid("n", format!("lattice size must be even and ≥ 2, got {n}")));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(ModeTransform {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            transpose_buf: vec![Complex64::new(0.0, 0.0); n * n],
        })
    }

    fn transpose(&mut self, data: &mut [Complex64]) {
        let n = self.n;
        for iy in 0..n {
            for ix in 0..n {
                self.transpose_buf[ix * n + iy] = data[iy * n + ix];
            }
        }
        data.copy_from_slice(&self.transpose_buf);
    }

    fn fft_2d(&mut self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.n * self.n, "amplitude grid must be N×N");
        let fft = if forward { self.forward.clone() } else { self.inverse.clone() };
        for row in data.chunks_exact_mut(self.n) {
            fft.process_with_scratch(row, &mut self.scratch);
        }
        self.transpose(data);
        for row in data.chunks_exact_mut(self.n) {
            fft.process_with_scratch(row, &mut self.scratch);
        }
        self.transpose(data);
        let scale = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// In-place site → momentum transform (`a_k = (1/N) Σ_n e^{−ik·n} a_n`).
    pub fn to_momentum(&mut self, data: &mut [Complex64]) {
        self.fft_2d(data, true);
    }

    /// In-place momentum → site transform (`a_n = (1/N) Σ_k e^{+ik·n} a_k`).
    pub fn to_real_space(&mut self, data: &mut [Complex64]) {
        self.fft_2d(data, false);
    }
}

/// Global cache of planned transforms, keyed by lattice size. FFT planning is
/// cheap but not free, and tests touch the same handful of sizes repeatedly.
fn with_mode_transform<R>(n: usize, f: impl FnOnce(&mut ModeTransform) -> R) -> Result<R> {
    static CACHE: OnceLock<Mutex<Vec<ModeTransform>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
    let mut guard = cache.lock().expect("mode-transform cache poisoned");
    if let Some(t) = guard.iter_mut().find(|t| t.n == n) {
        return Ok(f(t));
    }
    let mut fresh = ModeTransform::new(n)?;
    let out = f(&mut fresh);
    guard.push(fresh);
    Ok(out)
}

/// Site → momentum transform of a full amplitude grid (row-major `N×N`).
pub fn k_transform(spec: &LatticeSpec, real_space: &[Complex64]) -> Result<Vec<Complex64>> {
    if real_space.len() != spec.mode_count() {
        return Err(Error::invalid(
            "real_space",
            format!("expected {} amplitudes, got {}", spec.mode_count(), real_space.len()),
        ));
    }
    let mut data = real_space.to_vec();
    with_mode_transform(spec.n(), |t| t.to_momentum(&mut data))?;
    Ok(data)
}

/// Momentum → site transform of a full amplitude grid (row-major `N×N`).
pub fn real_space_transform(spec: &LatticeSpec, momentum: &[Complex64]) -> Result<Vec<Complex64>> {
    if momentum.len() != spec.mode_count() {
        return Err(Error::invalid(
            "momentum",
            format!("expected {} amplitudes, got {}", spec.mode_count(), momentum.len()),
        ));
    }
    let mut data = momentum.to_vec();
    with_mode_transform(spec.n(), |t| t.to_real_space(&mut data))?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Deterministic pseudo-random stream for test amplitudes.
    struct Lcg(u64);
    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
        fn next_c64(&mut self) -> Complex64 {
            Complex64::new(self.next_f64(), self.next_f64())
        }
    }

    #[test]
    fn lattice_spec_validation() {
        assert!(LatticeSpec::new(0, 1.0).is_err());
        assert!(LatticeSpec::new(3, 1.0).is_err());
        assert!(LatticeSpec::new(4, 0.0).is_err());
        assert!(LatticeSpec::new(4, -1.0).is_err());
        let spec = LatticeSpec::new(4, 2.0).unwrap();
        assert_eq!(spec.n(), 4);
        assert_eq!(spec.j(), 2.0);
        assert_eq!(spec.omega_a(), 0.0);
    }

    #[test]
    fn kpoint_range_validation() {
        let spec = LatticeSpec::new(8, 1.0).unwrap();
        assert!(KPoint::from_indices(&spec, -4, 3).is_ok());
        assert!(KPoint::from_indices(&spec, 4, 0).is_err());
        assert!(KPoint::from_indices(&spec, 0, -5).is_err());
    }

    #[test]
    fn dispersion_extremes_and_saddle() {
        let spec = LatticeSpec::new(16, 1.0).unwrap();
        let gamma = KPoint::from_indices(&spec, 0, 0).unwrap();
        let saddle = KPoint::from_indices(&spec, -8, 0).unwrap(); // (−π, 0) ≡ (π, 0)
        let corner = KPoint::from_indices(&spec, -8, -8).unwrap(); // (−π, −π) ≡ (π, π)
        assert_abs_diff_eq!(dispersion(&spec, &gamma), -4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dispersion(&spec, &saddle), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dispersion(&spec, &corner), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn dispersion_symmetries() {
        // Evenness ω(k) = ω(−k) and particle–hole ω(k + (π,π)) = −ω(k),
        // sampled across the grid.
        let spec = LatticeSpec::new(64, 1.3).unwrap();
        let mut rng = Lcg(7);
        for _ in 0..200 {
            let mx = ((rng.next_f64() * 64.0) as i64).clamp(-32, 31);
            let my = ((rng.next_f64() * 64.0) as i64).clamp(-32, 31);
            let k = KPoint::from_indices(&spec, mx, my).unwrap();
            let minus =
                KPoint::from_indices(&spec, if mx == -32 { -32 } else { -mx }, if my == -32 { -32 } else { -my })
                    .unwrap();
            assert_abs_diff_eq!(dispersion(&spec, &k), dispersion(&spec, &minus), epsilon = 1e-12);

            let shift = |m: i64| if m >= 0 { m - 32 } else { m + 32 };
            let ph = KPoint::from_indices(&spec, shift(mx), shift(my)).unwrap();
            assert_abs_diff_eq!(dispersion(&spec, &ph), -dispersion(&spec, &k), epsilon = 1e-12);
        }
    }

    #[test]
    fn dos_vanishes_outside_band_and_integrates_to_one() {
        let est = DosEstimator::new(1.0, 0.01, 1024).unwrap();
        assert_eq!(est.density(4.0001), 0.0);
        assert_eq!(est.density(-5.0), 0.0);
        assert_abs_diff_eq!(est.integral(), 1.0, epsilon = 1e-3);
        // Histogram normalisation is exact by construction; the tolerance
        // above is the contract, the actual accumulation error is ~1e−12.
        assert_abs_diff_eq!(est.integral(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn dos_matches_edge_plateau_value() {
        // Near the band edge the 2D DOS approaches the plateau 1/(4πJ).
        let est = DosEstimator::new(1.0, 0.01, 2048).unwrap();
        let plateau = 1.0 / (4.0 * PI);
        let d = est.density(-3.9);
        assert!(
            (d - plateau).abs() / plateau < 0.05,
            "D(−3.9J) = {d}, plateau = {plateau}"
        );
    }

    #[test]
    fn dos_matches_elliptic_closed_form() {
        // A single 0.01J bin on a 2048² mesh holds only ~5·10³ modes, so its
        // count carries ~1.5% commensuration noise. Averaging histogram and
        // closed form over the same 0.1J window suppresses the noise (and the
        // slope bias) without weakening the comparison.
        let res = 0.01;
        let window = 10;
        let est = DosEstimator::new(1.0, res, 2048).unwrap();
        for &e in &[-3.0, -2.0, -1.0, 1.5, 2.5] {
            let mut hist = 0.0;
            let mut exact = 0.0;
            for i in 0..window {
                let centre = e + (i as f64 + 0.5) * res;
                hist += est.density(centre);
                exact += dos_elliptic(1.0, centre);
            }
            assert!(
                (hist - exact).abs() / exact < 0.01,
                "E={e}: windowed histogram {hist} vs elliptic {exact}"
            );
        }
    }

    #[test]
    fn dos_scales_with_hopping() {
        let a = DosEstimator::new(1.0, 0.01, 512).unwrap();
        let b = DosEstimator::new(2.0, 0.02, 512).unwrap();
        assert_relative_eq!(a.density(-3.0), 2.0 * b.density(-6.0), max_relative = 1e-12);
    }

    #[test]
    fn transform_round_trip_is_identity() {
        let spec = LatticeSpec::new(16, 1.0).unwrap();
        let mut rng = Lcg(42);
        let original: Vec<Complex64> = (0..spec.mode_count()).map(|_| rng.next_c64()).collect();
        let k = k_transform(&spec, &original).unwrap();
        let back = real_space_transform(&spec, &k).unwrap();
        let max_dev = original
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-12, "round trip deviation {max_dev}");
    }

    #[test]
    fn transform_preserves_norm() {
        let spec = LatticeSpec::new(12, 1.0).unwrap();
        let mut rng = Lcg(3);
        let site: Vec<Complex64> = (0..spec.mode_count()).map(|_| rng.next_c64()).collect();
        let momentum = k_transform(&spec, &site).unwrap();
        let n1: f64 = site.iter().map(|a| a.norm_sqr()).sum();
        let n2: f64 = momentum.iter().map(|a| a.norm_sqr()).sum();
        assert_abs_diff_eq!(n1, n2, epsilon = 1e-12 * n1);
    }

    #[test]
    fn delta_site_spreads_uniformly_over_modes() {
        let spec = LatticeSpec::new(8, 1.0).unwrap();
        let mut site = vec![Complex64::new(0.0, 0.0); spec.mode_count()];
        site[0] = Complex64::new(1.0, 0.0);
        let momentum = k_transform(&spec, &site).unwrap();
        for v in &momentum {
            assert_abs_diff_eq!(v.re, 1.0 / 8.0, epsilon = 1e-13);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn plane_wave_maps_to_single_mode() {
        let spec = LatticeSpec::new(8, 1.0).unwrap();
        let n = spec.n();
        let (jx0, jy0) = (3usize, 5usize);
        // Unit-norm plane wave a_n = (1/N) e^{i k0·n}.
        let mut site = vec![Complex64::new(0.0, 0.0); spec.mode_count()];
        for iy in 0..n {
            for ix in 0..n {
                let phase = 2.0 * PI * (jx0 * ix + jy0 * iy) as f64 / n as f64;
                site[iy * n + ix] = Complex64::new(0.0, phase).exp() / n as f64;
            }
        }
        let momentum = k_transform(&spec, &site).unwrap();
        for jy in 0..n {
            for jx in 0..n {
                let v = momentum[jy * n + jx];
                if (jx, jy) == (jx0, jy0) {
                    assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-12);
                    assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
                } else {
                    assert!(v.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn revival_time_matches_group_velocity_bound() {
        let spec = LatticeSpec::new(512, 1.0).unwrap();
        assert_relative_eq!(
            revival_time(&spec),
            512.0 / (2.0 * std::f64::consts::SQRT_2),
            max_relative = 1e-15
        );
    }
}
