use cubeformer::tensor::Element;
use std::time::Instant;
fn main() {
    let xs: Vec<f32> = (0..1_000_000).map(|i| -(i % 80) as f32 / 3.0).collect();
    let mut out = vec![0.0f32; xs.len()];
    let t0 = Instant::now();
    for _ in 0..30 { for (o, &x) in out.iter_mut().zip(&xs) { *o = x.exp(); } }
    let s1: f32 = out.iter().sum();
    println!("std exp: {:.2} ns/call ({s1})", t0.elapsed().as_secs_f64() * 1e9 / 30e6);
    let t1 = Instant::now();
    for _ in 0..30 { for (o, &x) in out.iter_mut().zip(&xs) { *o = x.exp_fast(); } }
    let s2: f32 = out.iter().sum();
    println!("exp_fast: {:.2} ns/call ({s2})", t1.elapsed().as_secs_f64() * 1e9 / 30e6);
    let mut worst = 0.0f64;
    for i in 0..4_000_000 {
        let x = -86.5 + i as f32 * (173.0 / 4_000_000.0);
        let rel = ((x.exp_fast() as f64 - (x as f64).exp()) / (x as f64).exp()).abs();
        if rel > worst { worst = rel; }
    }
    println!("max rel err on [-86.5, 86.5]: {worst:.2e}");
}
