use cubeformer::cube::{cube_attention_batch, multi_head_cube_attention, CubeSpec};
use cubeformer::gradcheck::probe_tensor;
use cubeformer::tensor::{self, backward, Tensor};
use std::time::Instant;

fn main() {
    // smoke-scale attention: per head (8,64,64), 4 heads, cubes 8x8x4 -> n=256
    let q: Tensor<f32> = probe_tensor(&[512, 256], 1).cast();
    let k: Tensor<f32> = probe_tensor(&[512, 256], 2).cast();
    let v: Tensor<f32> = probe_tensor(&[512, 256], 3).cast();
    let t0 = Instant::now();
    for _ in 0..5 { let _ = cube_attention_batch(&q, &k, &v, false).unwrap(); }
    println!("attention fwd (512 cubes n=256): {:.0} ms", t0.elapsed().as_secs_f64()*1000.0/5.0);

    let qp = Tensor::param(&[512, 256], q.data().to_vec()).unwrap();
    let kp = Tensor::param(&[512, 256], k.data().to_vec()).unwrap();
    let vp = Tensor::param(&[512, 256], v.data().to_vec()).unwrap();
    let t1 = Instant::now();
    for _ in 0..5 {
        let out = cube_attention_batch(&qp, &kp, &vp, false).unwrap();
        backward(&tensor::sum(&out).unwrap()).unwrap();
    }
    println!("attention fwd+bwd: {:.0} ms", t1.elapsed().as_secs_f64()*1000.0/5.0);

    // conv at smoke scale: 32->96 1x1 on 64x64 + depthwise + 96->32
    let x: Tensor<f32> = probe_tensor(&[32, 64, 64], 4).cast();
    let w1: Tensor<f32> = probe_tensor(&[96, 32, 1, 1], 5).cast();
    let b1 = Tensor::<f32>::zeros(&[96]);
    let w3: Tensor<f32> = probe_tensor(&[32, 32, 3, 3], 6).cast();
    let b3 = Tensor::<f32>::zeros(&[32]);
    let t2 = Instant::now();
    for _ in 0..20 { let _ = tensor::conv2d(&x, &w3, &b3, 1, 1).unwrap(); }
    println!("conv3x3 32->32 @64x64 fwd: {:.1} ms", t2.elapsed().as_secs_f64()*1000.0/20.0);
    let t3 = Instant::now();
    for _ in 0..20 { let _ = tensor::conv2d(&x, &w1, &b1, 1, 0).unwrap(); }
    println!("conv1x1 32->96 @64x64 fwd: {:.1} ms", t3.elapsed().as_secs_f64()*1000.0/20.0);

    let mh = multi_head_cube_attention(&probe_tensor(&[32,64,64],7).cast::<f32>(), &probe_tensor(&[32,64,64],8).cast(), &probe_tensor(&[32,64,64],9).cast(), 4, &CubeSpec::block(8,8,4), false).unwrap();
    let _ = mh;
    let t4 = Instant::now();
    for _ in 0..5 {
        let _ = multi_head_cube_attention(&x, &x, &x, 4, &CubeSpec::block(8,8,4), false).unwrap();
    }
    println!("multi_head fwd @32x64x64: {:.0} ms", t4.elapsed().as_secs_f64()*1000.0/5.0);
}
