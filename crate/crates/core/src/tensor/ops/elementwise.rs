//! Elementwise arithmetic, activations, and full reductions.

use super::same_shape;
use crate::error::Result;
use crate::tensor::{Element, Tensor};

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_op(
        "add",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |g, _| vec![Some(g.to_vec()), Some(g.to_vec())],
    ))
}

pub fn sub<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
    Ok(Tensor::from_op(
        "sub",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |g, _| vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())],
    ))
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Ok(Tensor::from_op(
        "mul",
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        |g, parents| {
            let a = parents[0].data();
            let b = parents[1].data();
            let ga = g.iter().zip(b).map(|(&gi, &bi)| gi * bi).collect();
            let gb = g.iter().zip(a).map(|(&gi, &ai)| gi * ai).collect();
            vec![Some(ga), Some(gb)]
        },
    ))
}

pub fn add_scalar<T: Element>(a: &Tensor<T>, v: f64) -> Result<Tensor<T>> {
    let c = T::from_f64(v);
    let data = a.data().iter().map(|&x| x + c).collect();
    Ok(Tensor::from_op(
        "add_scalar",
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        |g, _| vec![Some(g.to_vec())],
    ))
}

pub fn mul_scalar<T: Element>(a: &Tensor<T>, v: f64) -> Result<Tensor<T>> {
    let c = T::from_f64(v);
    let data = a.data().iter().map(|&x| x * c).collect();
    Ok(Tensor::from_op(
        "mul_scalar",
        a.shape().to_vec(),
        data,
        vec![a.clone()],
        move |g, _| vec![Some(g.iter().map(|&gi| gi * c).collect())],
    ))
}

fn unary<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    f: impl Fn(T) -> T,
    df: impl Fn(T) -> T + Send + Sync + 'static,
) -> Tensor<T> {
    let data = a.data().iter().map(|&x| f(x)).collect();
    Tensor::from_op(op, a.shape().to_vec(), data, vec![a.clone()], move |g, parents| {
        let x = parents[0].data();
        vec![Some(g.iter().zip(x).map(|(&gi, &xi)| gi * df(xi)).collect())]
    })
}

/// GELU with the tanh approximation.
pub fn gelu<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(unary("gelu", a, gelu_value, gelu_derivative))
}

fn gelu_value<T: Element>(x: T) -> T {
    let half = T::from_f64(0.5);
    let k = T::from_f64(0.7978845608028654); // sqrt(2/pi)
    let c = T::from_f64(0.044715);
    let u = k * (x + c * x * x * x);
    half * x * (T::one() + u.tanh_fast())
}

fn gelu_derivative<T: Element>(x: T) -> T {
    let half = T::from_f64(0.5);
    let k = T::from_f64(0.7978845608028654);
    let c = T::from_f64(0.044715);
    let three = T::from_f64(3.0);
    let u = k * (x + c * x * x * x);
    let t = u.tanh_fast();
    let du = k * (T::one() + three * c * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

pub fn sigmoid<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(unary("sigmoid", a, sigmoid_value, |x| {
        let s = sigmoid_value(x);
        s * (T::one() - s)
    }))
}

fn sigmoid_value<T: Element>(x: T) -> T {
    // Evaluate on the negative half-line only, so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp_fast())
    } else {
        let e = x.exp_fast();
        e / (T::one() + e)
    }
}

pub fn relu<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(unary(
        "relu",
        a,
        |x| if x > T::zero() { x } else { T::zero() },
        |x| if x > T::zero() { T::one() } else { T::zero() },
    ))
}

pub fn abs<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(unary("abs", a, |x| x.abs(), |x| {
        if x > T::zero() {
            T::one()
        } else if x < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    }))
}

pub fn sum<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let mut acc = T::zero();
    for &v in a.data() {
        acc += v;
    }
    Ok(Tensor::from_op("sum", vec![1], vec![acc], vec![a.clone()], |g, parents| {
        vec![Some(vec![g[0]; parents[0].len()])]
    }))
}

pub fn mean<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let n = T::from_usize(a.len());
    let mut acc = T::zero();
    for &v in a.data() {
        acc += v;
    }
    Ok(Tensor::from_op(
        "mean",
        vec![1],
        vec![acc / n],
        vec![a.clone()],
        move |g, parents| {
            let scale = g[0] / n;
            vec![Some(vec![scale; parents[0].len()])]
        },
    ))
}

#[cfg(test)]
mod tests {
    use crate::tensor::{self, Tensor};

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor::<f32>::zeros(&[2, 2]);
        let b = Tensor::<f32>::zeros(&[4]);
        assert!(tensor::add(&a, &b).is_err());
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        let x = Tensor::<f32>::new(&[2], vec![1000.0, -1000.0]).unwrap();
        let y = tensor::sigmoid(&x).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-7);
        assert!(y.data()[1].abs() < 1e-30);
        assert!(y.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gelu_reference_values() {
        // torch.nn.functional.gelu(x, approximate='tanh')
        let x = Tensor::<f64>::new(&[3], vec![-1.0, 0.0, 1.0]).unwrap();
        let y = tensor::gelu(&x).unwrap();
        assert!((y.data()[0] - (-0.15880800939172324)).abs() < 1e-12);
        assert_eq!(y.data()[1], 0.0);
        assert!((y.data()[2] - 0.8411919906082768).abs() < 1e-12);
    }

    #[test]
    fn mean_of_constant() {
        let x = Tensor::<f64>::full(&[3, 5], 2.5);
        assert_eq!(tensor::mean(&x).unwrap().item().unwrap(), 2.5);
    }
}
