//! Rough conv throughput probe used to size training runs.

use heap_tensor::{backward, ops, Tensor};

fn bench(label: &str, b: usize, ci: usize, co: usize, hw: usize, k: usize, stride: usize, iters: usize) {
    let x = Tensor::<f32>::leaf(&[b, ci, hw, hw], vec![0.1; b * ci * hw * hw]);
    let kern = Tensor::<f32>::leaf(&[co, ci, k, k], vec![0.05; co * ci * k * k]);
    let bias = Tensor::<f32>::leaf(&[co], vec![0.0; co]);
    let start = std::time::Instant::now();
    for _ in 0..iters {
        let y = ops::conv2d_periodic(&x, &kern, Some(&bias), stride).unwrap();
        let loss = ops::mean(&y);
        backward(&loss);
        x.zero_grad();
        kern.zero_grad();
        bias.zero_grad();
    }
    let dt = start.elapsed().as_secs_f64() / iters as f64;
    let macs = (b * co * (hw / stride) * (hw / stride) * ci * k * k) as f64;
    // forward + dinput + dkernel
    let flops = 3.0 * 2.0 * macs;
    println!("{label}: {:.2} ms/iter, ~{:.2} Gflop/s", dt * 1e3, flops / dt / 1e9);
}

fn main() {
    // Predictor lateral conv at desk scale (expanded channels, level 1).
    bench("pred lat 32x32 3x3 @16^2 b32", 32, 32, 32, 16, 3, 1, 20);
    // Encoder stage-1 down conv at desk scale.
    bench("enc down 2->16 4x4 s2 @64^2 b32", 32, 2, 16, 64, 4, 2, 20);
    // Encoder stage-2 down conv.
    bench("enc down 16->32 4x4 s2 @32^2 b32", 32, 16, 32, 32, 4, 2, 20);
    // Full-scale check: stage-1 at 128^2.
    bench("enc down 2->16 4x4 s2 @128^2 b32", 32, 2, 16, 128, 4, 2, 5);
}
