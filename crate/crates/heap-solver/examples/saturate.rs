//! Energy-history probe: runs the solver and prints `output_index,energy`
//! lines so saturation behavior can be inspected for a parameter point.
//!
//! Usage: saturate [nx] [n_outputs] [d_hyper] [seed]

use heap_solver::{running_mean_drift, simulate_with, total_energy, SolverParams, Spectral};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let nx: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(64);
    let n_outputs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(400);
    let d: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);

    let params = SolverParams { nx, ny: nx, d_n: d, d_p: d, seed, ..Default::default() };
    let sp = Spectral::new(nx, nx, params.box_length).unwrap();

    let mut energies = Vec::with_capacity(n_outputs);
    let start = std::time::Instant::now();
    let blowup = simulate_with(&params, n_outputs, |idx, state| {
        let e = total_energy(state, &sp);
        energies.push(e);
        println!("{idx},{e:.6e}");
        if idx % 100 == 0 {
            eprintln!("[{:.1}s] output {idx}: E = {e:.4e}", start.elapsed().as_secs_f64());
        }
    })
    .unwrap();

    if let Some(b) = blowup {
        eprintln!(
            "BLOWUP at internal step {}, last valid output {}",
            b.internal_step, b.last_valid_output
        );
        std::process::exit(1);
    }
    if energies.len() >= 1000 {
        let tail = &energies[energies.len() - 1000..];
        eprintln!("tail drift (window 200 over last 1000): {:.4}", running_mean_drift(tail, 200));
    }
    eprintln!("done in {:.1}s", start.elapsed().as_secs_f64());
}
