//! Brute-force oracles for the metric implementations: naive O(n^2)-per-mode
//! DFT summation for the spectra and a naive neighbor scan for extrema.

use heap_pipeline::metrics::{
    count_extrema, radial_bin, spatial_spectrum, temporal_spectrum, Channel,
};
use heap_solver::{Field2D, SystemState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_state(nx: usize, rng: &mut ChaCha20Rng) -> SystemState {
    let f = Field2D::from_fn(nx, nx, |_, _| rng.gen_range(-1.0..1.0));
    let g = Field2D::from_fn(nx, nx, |_, _| rng.gen_range(-1.0..1.0));
    SystemState { n: f, phi: g }
}

/// Direct-summation 2D DFT power, binned with the same floor-radius rule.
fn spatial_oracle(field: &Field2D) -> Vec<f64> {
    let n = field.nx();
    let n_bins = n / 2;
    let mut bins = vec![0.0f64; n_bins];
    for ky in 0..n {
        for kx in 0..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for y in 0..n {
                for x in 0..n {
                    let phase = -2.0 * std::f64::consts::PI * ((kx * x + ky * y) as f64)
                        / n as f64;
                    re += field.at(x, y) * phase.cos();
                    im += field.at(x, y) * phase.sin();
                }
            }
            let power = (re * re + im * im) / (n * n) as f64;
            let mx = if kx <= n / 2 { kx as isize } else { kx as isize - n as isize };
            let my = if ky <= n / 2 { ky as isize } else { ky as isize - n as isize };
            bins[radial_bin(mx, my, n_bins)] += power;
        }
    }
    bins
}

#[test]
fn spatial_spectrum_matches_brute_force() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let state = random_state(16, &mut rng);
    let fast = spatial_spectrum(std::slice::from_ref(&state), Channel::Density).unwrap();
    let oracle = spatial_oracle(&state.n);
    assert_eq!(fast.power.len(), oracle.len());
    for (i, (a, b)) in fast.power.iter().zip(&oracle).enumerate() {
        let rel = (a - b).abs() / b.abs().max(1e-12);
        assert!(rel < 1e-12, "bin {i}: {a} vs oracle {b} (rel {rel:e})");
    }
}

/// Per-point direct DFT over the time axis on 4x4 x 32 steps.
#[test]
fn temporal_spectrum_matches_direct_dft() {
    let mut rng = ChaCha20Rng::seed_from_u64(32);
    let t_len = 32;
    let nx = 4;
    let states: Vec<SystemState> = (0..t_len).map(|_| random_state(nx, &mut rng)).collect();
    let fast = temporal_spectrum(&states, Channel::Potential).unwrap();

    let mut oracle = vec![0.0f64; t_len / 2 + 1];
    for idx in 0..nx * nx {
        for (f, o) in oracle.iter_mut().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, s) in states.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (f * t) as f64 / t_len as f64;
                let v = s.phi.values()[idx];
                re += v * phase.cos();
                im += v * phase.sin();
            }
            *o += (re * re + im * im) / t_len as f64;
        }
    }
    for o in oracle.iter_mut() {
        *o /= (nx * nx) as f64;
    }

    for (i, (a, b)) in fast.power.iter().zip(&oracle).enumerate() {
        let rel = (a - b).abs() / b.abs().max(1e-12);
        assert!(rel < 1e-10, "bin {i}: {a} vs oracle {b}");
    }
}

/// Naive double-loop neighbor scan agrees with the counting implementation
/// on random fields.
#[test]
fn extrema_counts_match_naive_scan() {
    let mut rng = ChaCha20Rng::seed_from_u64(33);
    for _ in 0..10 {
        let nx = 12;
        let f = Field2D::from_fn(nx, nx, |_, _| rng.gen_range(-1.0..1.0));
        let (fast_min, fast_max) = count_extrema(&f);

        let mut slow_min = 0;
        let mut slow_max = 0;
        for y in 0..nx {
            for x in 0..nx {
                let c = f.at(x, y);
                let mut higher = 0;
                let mut lower = 0;
                for dy in [-1i32, 0, 1] {
                    for dx in [-1i32, 0, 1] {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let xx = ((x as i32 + dx).rem_euclid(nx as i32)) as usize;
                        let yy = ((y as i32 + dy).rem_euclid(nx as i32)) as usize;
                        let v = f.at(xx, yy);
                        if v > c {
                            higher += 1;
                        }
                        if v < c {
                            lower += 1;
                        }
                    }
                }
                if lower == 8 {
                    slow_max += 1;
                }
                if higher == 8 {
                    slow_min += 1;
                }
            }
        }
        assert_eq!((fast_min, fast_max), (slow_min, slow_max));
    }
}
