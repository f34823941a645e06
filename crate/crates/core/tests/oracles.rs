//! Cross-checks of the fast engines against brute-force references: the
//! matrix-free time-domain propagator against a dense matrix exponential,
//! the adaptive Green's-function quadrature against direct Brillouin-zone
//! sums, and composite self-energies against their pairwise decomposition.

mod common;

use emitter2d::bath::LatticeSpec;
use emitter2d::dynamics::{self, EvolvePlan, InitialState, Sign};
use emitter2d::greens;
use emitter2d::spectral::{self, EmitterSet};
use num_complex::Complex64;

use common::state_distance;

#[test]
fn time_domain_single_emitter_matches_dense_exponential() {
    let (n, j, delta, g) = (6usize, 1.0, -1.0, 0.3);
    let spec = LatticeSpec::new(n, j).unwrap();
    let emitters = EmitterSet::single(delta, g).unwrap();
    let action = dynamics::build_hamiltonian_action(&spec, &emitters).unwrap();
    let state0 = dynamics::initial_state(&spec, &emitters, &InitialState::SingleExcited).unwrap();

    let t = 5.0;
    let mut plan = EvolvePlan::new(t, j).unwrap();
    plan.dt = 0.002; // tightened so integrator error sits below the gate
    let evo = dynamics::evolve(&state0, &action, &plan).unwrap();

    let model = common::dense_hamiltonian(n, j, delta, g, emitters.positions());
    let mut psi0 = vec![Complex64::new(0.0, 0.0); model.dim];
    psi0[0] = Complex64::new(1.0, 0.0);
    let u = common::dense_propagator(&model, t);
    let psi_t = common::apply_propagator(&u, model.dim, &psi0);

    let dist = state_distance(&evo.final_state, &psi_t);
    assert!(dist < 1e-8, "single-emitter dense mismatch: {dist:.3e}");
}

#[test]
fn time_domain_pair_state_matches_dense_exponential() {
    let (n, j, delta, g) = (6usize, 1.0, 0.5, 0.4);
    let n12 = (1, 1);
    let spec = LatticeSpec::new(n, j).unwrap();
    let emitters = EmitterSet::pair(n12, delta, g).unwrap();
    let action = dynamics::build_hamiltonian_action(&spec, &emitters).unwrap();
    let initial = InitialState::TwoPm { sign: Sign::Minus, n12 };
    let state0 = dynamics::initial_state(&spec, &emitters, &initial).unwrap();

    let t = 4.0;
    let mut plan = EvolvePlan::new(t, j).unwrap();
    plan.dt = 0.002;
    let evo = dynamics::evolve(&state0, &action, &plan).unwrap();

    let model = common::dense_hamiltonian(n, j, delta, g, emitters.positions());
    let mut psi0 = vec![Complex64::new(0.0, 0.0); model.dim];
    let amps = initial.emitter_amplitudes();
    psi0[..2].copy_from_slice(&amps);
    let u = common::dense_propagator(&model, t);
    let psi_t = common::apply_propagator(&u, model.dim, &psi0);

    let dist = state_distance(&evo.final_state, &psi_t);
    assert!(dist < 1e-8, "pair dense mismatch: {dist:.3e}");
}

#[test]
fn time_domain_diamond_matches_dense_exponential_on_tiny_lattice() {
    // The canonical diamond with scale 1 spans offsets up to (4, 2); the
    // smallest even lattice that admits it without wrapping is N = 10, but a
    // dense 104-dimensional exponential is still instant.
    let (n, j, delta, g) = (10usize, 1.0, 0.0, 0.25);
    let spec = LatticeSpec::new(n, j).unwrap();
    let emitters = EmitterSet::diamond(1, delta, g).unwrap();
    let action = dynamics::build_hamiltonian_action(&spec, &emitters).unwrap();
    let initial = InitialState::FourPm { sign: Sign::Minus, n: 1 };
    let state0 = dynamics::initial_state(&spec, &emitters, &initial).unwrap();

    let t = 3.0;
    let mut plan = EvolvePlan::new(t, j).unwrap();
    plan.dt = 0.002;
    let evo = dynamics::evolve(&state0, &action, &plan).unwrap();

    let model = common::dense_hamiltonian(n, j, delta, g, emitters.positions());
    let mut psi0 = vec![Complex64::new(0.0, 0.0); model.dim];
    psi0[..4].copy_from_slice(&initial.emitter_amplitudes());
    let u = common::dense_propagator(&model, t);
    let psi_t = common::apply_propagator(&u, model.dim, &psi0);

    let dist = state_distance(&evo.final_state, &psi_t);
    assert!(dist < 1e-8, "diamond dense mismatch: {dist:.3e}");
}

#[test]
fn green_function_quadrature_matches_brute_force_k_sum() {
    let j = 1.0;
    let nk = 2048;
    // Off-axis probes spanning mid-band, band interior, band edge and
    // outside the band; all at |Im z| ≥ 0.1 J where the trapezoidal k-sum
    // is converged far past the gate.
    let probes = [
        Complex64::new(0.0, 0.25),
        Complex64::new(0.5, 0.3),
        Complex64::new(-2.0, 0.1),
        Complex64::new(3.7, -0.5),
        Complex64::new(-4.5, 0.1),
    ];
    for z in probes {
        let fast = greens::g00(j, z).unwrap();
        let brute = common::brute_g00(nk, j, z);
        let diff = (fast - brute).norm();
        assert!(diff < 1e-6, "g00 mismatch at z = {z}: {diff:.3e}");
    }
}

#[test]
fn offset_green_function_matches_brute_force_k_sum() {
    let j = 1.0;
    let nk = 2048;
    let offsets = [(1, 1), (2, 2), (3, 0), (0, 2)];
    let probes = [Complex64::new(0.0, 0.25), Complex64::new(-1.5, 0.2)];
    for z in probes {
        for n12 in offsets {
            let fast = greens::lattice_green_offset(j, z, n12).unwrap();
            let brute = common::brute_green_offset(nk, j, z, n12);
            let diff = (fast - brute).norm();
            assert!(diff < 1e-6, "offset {n12:?} mismatch at z = {z}: {diff:.3e}");
        }
    }
}

#[test]
fn unstable_poles_satisfy_the_pole_equation_and_mirror_symmetry() {
    let j = 1.0;
    for g in [0.1, 0.2] {
        let sr = spectral::characterize_single_emitter(j, g, 0.0).unwrap();
        assert_eq!(sr.poles.len(), 2, "expected a pole pair at g = {g}");
        let zs: Vec<Complex64> = sr.poles.iter().map(|(ce, _)| ce.z).collect();
        let z_plus = zs.iter().find(|z| z.re >= 0.0).unwrap();
        let z_minus = zs.iter().find(|z| z.re < 0.0).unwrap();
        // Mid-band poles come in the mirror pair z₋ = −conj(z₊).
        let mirror = (z_minus + z_plus.conj()).norm();
        assert!(mirror < 1e-9, "mirror symmetry broken at g = {g}: {mirror:.3e}");
        // Each pole solves z = Σ_II(z) on the lower sheet (Δ = 0).
        for z in &zs {
            let sigma = greens::self_energy_second_sheet(j, g, *z).unwrap();
            let residual = (z - sigma).norm();
            assert!(
                residual < 1e-8,
                "pole equation residual {residual:.3e} at z = {z}, g = {g}"
            );
        }
    }
}

#[test]
fn four_emitter_self_energy_decomposes_into_pairwise_terms() {
    // Σ₄₋ must equal Σ_{ab} v_a v_b g² G(s_a − s_b; z) with v = ½(+,−,−,+)
    // on the canonical diamond — the same interference sum assembled from
    // the generic off-diagonal Green's function.
    let (j, g, nd) = (1.0, 0.05, 3i64);
    let emitters = EmitterSet::diamond(nd, 0.0, g).unwrap();
    let pos = emitters.positions();
    let v = [0.5, -0.5, -0.5, 0.5];
    for z in [Complex64::new(0.0, 0.3), Complex64::new(0.2, 0.15)] {
        let mut pairwise = Complex64::new(0.0, 0.0);
        for (a, &pa) in pos.iter().enumerate() {
            for (b, &pb) in pos.iter().enumerate() {
                let sep = (pa.0 - pb.0, pa.1 - pb.1);
                let green = greens::lattice_green_offset(j, z, sep).unwrap();
                pairwise += v[a] * v[b] * g * g * green;
            }
        }
        let direct = greens::sigma_4minus(j, g, nd, z).unwrap();
        let diff = (direct - pairwise).norm();
        assert!(diff < 1e-6, "four-emitter decomposition mismatch at z = {z}: {diff:.3e}");
    }
}

#[test]
fn density_of_states_histogram_matches_elliptic_form() {
    // The histogram estimator and the closed elliptic-integral form are
    // independent routes to the same band density.
    let j = 1.0;
    for e in [-3.0, -2.0, -1.0, 1.5, 2.5] {
        let hist = emitter2d::bath::dos(&LatticeSpec::new(1024, j).unwrap(), e, 0.05).unwrap();
        let exact = emitter2d::bath::dos_elliptic(j, e);
        let rel = (hist - exact).abs() / exact;
        assert!(rel < 0.02, "DOS mismatch at E = {e}: hist {hist:.6} vs exact {exact:.6}");
    }
}
