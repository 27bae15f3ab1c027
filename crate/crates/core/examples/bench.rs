use cubeformer::gradcheck::probe_tensor;
use cubeformer::model::{Model, ModelConfig};
use cubeformer::tensor::{backward, Tensor};
use cubeformer::train::total_loss;
use std::time::Instant;

fn main() {
    let cfg = ModelConfig { n_groups: 2, channels: 32, ..ModelConfig::default() };
    let model: Model<f32> = Model::new(&cfg, 1).unwrap();
    let x: Tensor<f32> = probe_tensor(&[3, 64, 64], 3).cast();
    let x = x.add_scalar(0.5).unwrap().detach();
    let gt: Tensor<f32> = probe_tensor(&[3, 128, 128], 4).cast();
    let gt = gt.add_scalar(0.5).unwrap().detach();

    // forward only (no grad): inputs not tracked, params tracked...
    let t0 = Instant::now();
    for _ in 0..3 { let _ = model.forward(&x).unwrap(); }
    println!("forward+graph: {:.0} ms/iter", t0.elapsed().as_secs_f64() * 1000.0 / 3.0);

    let t1 = Instant::now();
    for _ in 0..3 {
        let pred = model.forward(&x).unwrap();
        let loss = total_loss(&pred, &gt, 0.01).unwrap();
        backward(&loss).unwrap();
    }
    println!("fwd+loss+bwd: {:.0} ms/iter", t1.elapsed().as_secs_f64() * 1000.0 / 3.0);
}
