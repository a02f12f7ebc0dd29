//! Raw kernel timing without tape overhead.

use nle_core::numerics::tape::matmul_acc;
use std::hint::black_box;
use std::time::Instant;

fn main() {
    let reps = 5000;

    // attn*v shape
    let (m, k, n) = (150, 150, 16);
    let a = vec![0.5f32; m * k];
    let b = vec![0.25f32; k * n];
    let mut c = vec![0.0f32; m * n];
    let start = Instant::now();
    for _ in 0..reps {
        matmul_acc(black_box(&a), black_box(&b), m, k, n, &mut c);
    }
    let dt = start.elapsed().as_secs_f64();
    println!(
        "matmul_acc 150x150x16: {:.1} us, {:.1} GFLOPS",
        dt * 1e6 / reps as f64,
        2.0 * (m * k * n) as f64 * reps as f64 / dt / 1e9
    );

    // raw tanh f32
    let xs: Vec<f32> = (0..38400).map(|i| (i as f32 * 0.001) - 19.0).collect();
    let start = Instant::now();
    let mut sink = 0.0f32;
    for _ in 0..200 {
        for &x in &xs {
            sink += black_box(x).tanh();
        }
    }
    let dt = start.elapsed().as_secs_f64();
    println!("tanh f32: {:.1} ns/call (sink {sink})", dt * 1e9 / (200.0 * xs.len() as f64));

    // raw exp f32
    let start = Instant::now();
    let mut sink = 0.0f32;
    for _ in 0..200 {
        for &x in &xs {
            sink += black_box(x * 0.01).exp();
        }
    }
    let dt = start.elapsed().as_secs_f64();
    println!("exp f32: {:.1} ns/call (sink {sink})", dt * 1e9 / (200.0 * xs.len() as f64));

    // raw exp f964
    let xs64: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
    let start = Instant::now();
    let mut sink = 0.0f64;
    for _ in 0..200 {
        for &x in &xs64 {
            sink += black_box(x * 0.01).exp();
        }
    }
    let dt = start.elapsed().as_secs_f64();
    println!("exp f64: {:.1} ns/call (sink {sink})", dt * 1e9 / (200.0 * xs64.len() as f64));
}
