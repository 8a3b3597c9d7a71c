//! Prints per-level mean/variance of an embedding store, plus the one-step
//! difference variance (the scale a persistence predictor would score).

use heap_pipeline::persist::read_embedding_store;

fn main() {
    let path = std::env::args().nth(1).expect("usage: storestats <store.bin>");
    let store = read_embedding_store(&path, None).unwrap();
    println!("steps {}, cutoff {}", store.len(), store.transient_cutoff);
    for (i, l) in store.levels.clone().iter().enumerate() {
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        let mut dsq = 0.0f64;
        let mut n = 0usize;
        for step in 0..store.len() {
            let s = store.level_slice(i, step);
            for &v in s {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
                n += 1;
            }
            if step + 1 < store.len() {
                let t = store.level_slice(i, step + 1);
                for (&a, &b) in s.iter().zip(t) {
                    let d = (b - a) as f64;
                    dsq += d * d;
                }
            }
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let step_var = dsq / (n - s_len(&store, i)) as f64;
        println!(
            "level {} (stage {}, {}ch @{}): mean {:+.3}, var {:.3}, one-step diff var {:.4}",
            i + 1,
            l.stage,
            l.channels,
            l.size,
            mean,
            var,
            step_var
        );
    }
}

fn s_len(store: &heap_pipeline::persist::EmbeddingStore, level: usize) -> usize {
    store.level_slice(level, 0).len()
}
