//! Simulator and analytic toolkit for the single-excitation sector of quantum
//! emitters coupled to a two-dimensional square-lattice bosonic bath.
//!
//! The bath is a tight-binding boson field with nearest-neighbour hopping `J`
//! on an `N × N` periodic square lattice,
//!
//! ```text
//! ω(k) = −2J (cos kx + cos ky),    k ∈ (2π/N)·{−N/2, …, N/2−1}²,
//! ```
//!
//! and each emitter couples locally to one lattice site with strength `g`.
//! In the frame rotating at the bath band centre the emitter detuning is `Δ`.
//! Everything in this crate works inside the subspace with exactly one
//! excitation shared between the emitters and the bath, where the dynamics
//! closes on the emitter amplitudes `C_e^j(t)` and the mode amplitudes
//! `C_k(t)`.
//!
//! Module map:
//!
//! * [`bath`] — lattice geometry, dispersion, density of states, mode transforms.
//! * [`greens`] — lattice Green's functions, emitter self-energies (single,
//!   pairwise, collective), boundary values on the real axis and the analytic
//!   continuation used for decay poles.
//! * [`spectral`] — resolvent-based analysis: golden-rule and log-corrected
//!   decay rates, unstable poles, spectral function, long-time amplitudes,
//!   steady populations.
//! * [`dynamics`] — momentum-space time evolution of the coupled
//!   emitter–bath amplitudes with norm and revival-time safeguards.
//! * [`scenarios`] — reproducible experiment pipelines binding the analytic
//!   and dynamic engines together, with machine-parseable comparison reports.

pub mod bath;
pub mod dynamics;
pub mod error;
pub mod greens;
pub mod quad;
pub mod scenarios;
pub mod spectral;

pub use error::{Error, Result};
