//! Validates the nonlinear solver against the linear theory of the system:
//! a small single-mode perturbation must grow at the rate given by the
//! dominant eigenvalue of the linearized 2x2 system for that wavevector.

use heap_solver::{simulate_with, total_energy, SolverParams, Spectral};

/// Complex 2x2 eigenvalue with the largest real part, by the quadratic formula.
fn max_growth_rate(m: [[(f64, f64); 2]; 2]) -> f64 {
    let add = |a: (f64, f64), b: (f64, f64)| (a.0 + b.0, a.1 + b.1);
    let sub = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0, a.1 - b.1);
    let mul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let sqrt = |a: (f64, f64)| {
        let r = (a.0 * a.0 + a.1 * a.1).sqrt();
        let theta = a.1.atan2(a.0);
        (r.sqrt() * (theta / 2.0).cos(), r.sqrt() * (theta / 2.0).sin())
    };
    let tr = add(m[0][0], m[1][1]);
    let det = sub(mul(m[0][0], m[1][1]), mul(m[0][1], m[1][0]));
    let half_tr = (tr.0 / 2.0, tr.1 / 2.0);
    let disc = sqrt(sub(mul(half_tr, half_tr), det));
    (half_tr.0 + disc.0).max(half_tr.0 - disc.0)
}

/// Linearization of the implemented equations around `n = phi = 0` for a mode
/// with wavenumbers `(kx, ky)`:
///
///   dn/dt   = (-alpha - d_n k^4) n + (alpha - i kappa ky) phi
///   dphi/dt = (alpha / k^2) n + (-alpha / k^2 - d_p k^4) phi
fn oracle_growth_rate(p: &SolverParams, kx: f64, ky: f64) -> f64 {
    let k2 = kx * kx + ky * ky;
    let k4 = k2 * k2;
    let m = [
        [(-p.alpha - p.d_n * k4, 0.0), (p.alpha, -p.kappa * ky)],
        [(p.alpha / k2, 0.0), (-p.alpha / k2 - p.d_p * k4, 0.0)],
    ];
    max_growth_rate(m)
}

#[test]
fn single_mode_growth_matches_dispersion_relation() {
    // Fast-growing parameter point so the test runs in seconds; the box is
    // 2*pi so mode integers are wavenumbers directly.
    let params = SolverParams {
        alpha: 1.0,
        kappa: 1.0,
        d_n: 1e-6,
        d_p: 1e-6,
        nx: 32,
        ny: 32,
        box_length: std::f64::consts::TAU,
        dt_internal: 0.01,
        output_stride: 100,
        seed: 5,
        ..Default::default()
    };
    let ky = 1.0;
    let gamma = oracle_growth_rate(&params, 0.0, ky);
    assert!(gamma > 0.05, "test mode should be unstable, gamma = {gamma}");

    // The seeded white noise contains the (0, 1) mode among others; all modes
    // evolve independently in the linear phase and the fastest-growing one
    // dominates the energy once transients die out. For these parameters the
    // (0, +-1) pair is the fastest.
    for my in 2..=15 {
        let g = oracle_growth_rate(&params, 0.0, my as f64);
        assert!(g < gamma, "mode (0,{my}) grows faster ({g} vs {gamma})");
    }

    let mut energies = Vec::new();
    let sp = Spectral::new(params.nx, params.ny, params.box_length).unwrap();
    let n_outputs = 60;
    simulate_with(&params, n_outputs, |_, state| {
        energies.push(total_energy(state, &sp));
    })
    .unwrap();

    // Energy of a pure mode grows as exp(2 gamma t). Fit the log slope over a
    // late window where the dominant mode has taken over but the amplitude is
    // still far below nonlinear saturation.
    let t0 = 35;
    let t1 = 55;
    assert!(energies[t1] < 1e-2, "run left the linear regime: E = {}", energies[t1]);
    let slope = (energies[t1].ln() - energies[t0].ln()) / (t1 - t0) as f64;
    let measured_gamma = slope / 2.0;
    let rel = (measured_gamma - gamma).abs() / gamma;
    assert!(
        rel < 0.02,
        "growth rate {measured_gamma:.5} vs dispersion-relation {gamma:.5} (rel err {rel:.4})"
    );
}
