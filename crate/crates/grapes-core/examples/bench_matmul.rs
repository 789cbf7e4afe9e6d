use grapes_core::{Matrix, RandomStream};
use std::time::Instant;

fn main() {
    let mut rng = RandomStream::new(1);
    let a = Matrix::from_fn(256, 784, |_, _| rng.uniform_in(-1.0, 1.0));
    let b = Matrix::from_fn(784, 64, |_, _| rng.uniform_in(-1.0, 1.0));
    // warmup
    for _ in 0..3 { let _ = a.matmul(&b).unwrap(); }
    let iters = 200;
    let t = Instant::now();
    let mut sink = 0.0;
    for _ in 0..iters {
        sink += a.matmul(&b).unwrap().get(0, 0);
    }
    let dt = t.elapsed().as_secs_f64();
    let flops = 2.0 * 256.0 * 784.0 * 64.0 * iters as f64;
    println!("256x784x64: {:.2} GFLOP/s (sink {sink:.3})", flops / dt / 1e9);

    let c = Matrix::from_fn(256, 256, |_, _| rng.uniform_in(-1.0, 1.0));
    let d = Matrix::from_fn(256, 64, |_, _| rng.uniform_in(-1.0, 1.0));
    for _ in 0..3 { let _ = c.matmul(&d).unwrap(); }
    let t = Instant::now();
    let mut sink = 0.0;
    for _ in 0..iters {
        sink += c.matmul(&d).unwrap().get(0, 0);
    }
    let dt = t.elapsed().as_secs_f64();
    let flops = 2.0 * 256.0 * 256.0 * 64.0 * iters as f64;
    println!("256x256x64: {:.2} GFLOP/s (sink {sink:.3})", flops / dt / 1e9);
}
