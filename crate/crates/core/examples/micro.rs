//! Micro-timing of individual tape ops at editor shapes.

use nle_core::numerics::tape::Tape;
use nle_core::numerics::rng::{labeled, normal_f64};
use std::time::Instant;

fn randv(n: usize, label: &str) -> Vec<f32> {
    let mut rng = labeled(1, label);
    (0..n).map(|_| normal_f64(&mut rng) as f32).collect()
}

fn main() {
    let l = 150usize;
    let d = 64usize;
    let reps = 3000;

    macro_rules! time_op {
        ($name:expr, $setup:expr, $body:expr) => {{
            let start = Instant::now();
            for _ in 0..reps {
                let mut t = Tape::<f32>::new();
                let x = $setup(&mut t);
                let _ = $body(&mut t, x);
            }
            println!("{}: {:.1} us/op", $name, start.elapsed().as_secs_f64() * 1e6 / reps as f64);
        }};
    }

    let xd = randv(l * d, "x");
    let wd = randv(d * d, "w");
    let gd = randv(d, "g");

    time_op!("leaf [150x64]", |t: &mut Tape<f32>| {
        t.leaf(&[l, d], xd.clone(), true).unwrap()
    }, |_t: &mut Tape<f32>, x| x);

    time_op!("matmul [150x64][64x64]", |t: &mut Tape<f32>| {
        let x = t.leaf(&[l, d], xd.clone(), true).unwrap();
        let w = t.leaf(&[d, d], wd.clone(), true).unwrap();
        (x, w)
    }, |t: &mut Tape<f32>, (x, w)| t.matmul(x, w).unwrap());

    time_op!("layer_norm [150x64]", |t: &mut Tape<f32>| {
        let x = t.leaf(&[l, d], xd.clone(), true).unwrap();
        let g = t.leaf(&[d], gd.clone(), true).unwrap();
        let b = t.leaf(&[d], gd.clone(), true).unwrap();
        (x, g, b)
    }, |t: &mut Tape<f32>, (x, g, b)| t.layer_norm(x, g, b, 1e-5).unwrap());

    time_op!("gelu [150x256]", |t: &mut Tape<f32>| {
        t.leaf(&[l, 4*d], randv(l*4*d, "ff"), true).unwrap()
    }, |t: &mut Tape<f32>, x| t.gelu(x));

    time_op!("softmax [150x150]", |t: &mut Tape<f32>| {
        t.leaf(&[l, l], randv(l*l, "s"), true).unwrap()
    }, |t: &mut Tape<f32>, x| t.softmax_rows(x));

    time_op!("slice_cols [150x64]->16", |t: &mut Tape<f32>| {
        t.leaf(&[l, d], xd.clone(), true).unwrap()
    }, |t: &mut Tape<f32>, x| t.slice_cols(x, 0, 16).unwrap());

    time_op!("matmul_nt [150x16][150x16]", |t: &mut Tape<f32>| {
        let a = t.leaf(&[l, 16], randv(l*16, "a"), true).unwrap();
        let b = t.leaf(&[l, 16], randv(l*16, "b"), true).unwrap();
        (a, b)
    }, |t: &mut Tape<f32>, (a, b)| t.matmul_nt(a, b).unwrap());

    time_op!("matmul attn*v [150x150][150x16]", |t: &mut Tape<f32>| {
        let a = t.leaf(&[l, l], randv(l*l, "aa"), true).unwrap();
        let b = t.leaf(&[l, 16], randv(l*16, "vv"), true).unwrap();
        (a, b)
    }, |t: &mut Tape<f32>, (a, b)| t.matmul(a, b).unwrap());

    time_op!("embedding 150 ids", |t: &mut Tape<f32>| {
        t.leaf(&[30, d], randv(30*d, "emb"), true).unwrap()
    }, |t: &mut Tape<f32>, e| t.embedding(e, &vec![5usize; l]).unwrap());

    // pos table leaf (the big clone)
    let pos = randv(512 * d, "pos");
    let start = Instant::now();
    for _ in 0..reps {
        let mut t = Tape::<f32>::new();
        let p = t.leaf(&[512, d], pos.clone(), true).unwrap();
        let _ = t.slice_rows(p, 0, l).unwrap();
    }
    println!("pos leaf clone+slice: {:.1} us/op", start.elapsed().as_secs_f64() * 1e6 / reps as f64);
}
