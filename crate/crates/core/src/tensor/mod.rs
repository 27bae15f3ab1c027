//! Dense n-dimensional tensors with reverse-mode differentiation.
//!
//! Tensors are immutable once produced by an operation; the only mutable
//! state is the gradient accumulator on leaf tensors. Operations on
//! gradient-tracking inputs record a node (parent handles plus a backward
//! closure) so that [`backward`] can replay the tape in reverse
//! topological order.

mod autodiff;
mod fft;
mod ops;

pub use autodiff::backward;
pub use fft::{fft2, ifft2};
pub use ops::*;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// Element type of a tensor. Training uses `f32`; gradient checks and
/// numeric oracles run in `f64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DType::F32 => write!(f, "f32"),
            DType::F64 => write!(f, "f64"),
        }
    }
}

/// Scalar types tensors can hold.
pub trait Element:
    num_traits::Float
    + num_traits::NumAssignOps
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + Default
    + 'static
{
    const DTYPE: DType;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }

    /// Exponential on the training hot path. `f64` keeps the exact
    /// libm call (oracles and gradient checks run there); `f32` uses a
    /// vectorizable polynomial accurate to ~2e-7 relative.
    fn exp_fast(self) -> Self {
        self.exp()
    }

    fn tanh_fast(self) -> Self {
        self.tanh()
    }
}

impl Element for f32 {
    const DTYPE: DType = DType::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn exp_fast(self) -> f32 {
        // Cephes-style expf: 2^z * P(r) with x = z*ln2 + r. Branchless,
        // so 8-lane blocks of it vectorize.
        const L2E: f32 = 1.442_695_04;
        const C1: f32 = 0.693_359_375;
        const C2: f32 = -2.121_944_4e-4;
        let x = self.max(-87.0).min(88.0);
        let z = (x * L2E + 0.5).floor();
        let r = (x - z * C1) - z * C2;
        let mut p = 1.987_569_15e-4f32;
        p = p * r + 1.398_199_95e-3;
        p = p * r + 8.333_451_9e-3;
        p = p * r + 4.166_579_6e-2;
        p = p * r + 1.666_666_55e-1;
        p = p * r + 5.000_000_1e-1;
        let p = p * r * r + r + 1.0;
        f32::from_bits(((z as i32).wrapping_add(127) as u32) << 23) * p
    }

    #[inline(always)]
    fn tanh_fast(self) -> f32 {
        // |x| >= 9 already saturates within f32 precision
        let x = self.max(-9.0).min(9.0);
        let e = (2.0 * x).exp_fast();
        (e - 1.0) / (e + 1.0)
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::F64;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

type BackwardFn<T> = Box<dyn Fn(&[T], &[Tensor<T>]) -> Vec<Option<Vec<T>>> + Send + Sync>;

/// A recorded operation: the inputs it consumed and how to push the
/// output gradient back to them.
pub(crate) struct Node<T: Element> {
    pub(crate) parents: Vec<Tensor<T>>,
    pub(crate) backward: BackwardFn<T>,
    pub(crate) op: &'static str,
}

struct Inner<T: Element> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    node: Option<Node<T>>,
}

/// Dense row-major n-dimensional array. Cloning is cheap (shared storage).
pub struct Tensor<T: Element> {
    inner: Arc<Inner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Arc::clone(&self.inner) }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, dtype={}, requires_grad={})",
            self.inner.shape,
            T::DTYPE,
            self.inner.requires_grad
        )
    }
}

pub(crate) fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let expect: usize = shape.iter().product();
    if expect != len {
        return Err(Error::shape(format!(
            "shape {shape:?} implies {expect} elements, buffer holds {len}"
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::shape(format!("shape {shape:?} has a zero extent")));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, node: Option<Node<T>>) -> Self {
        Tensor {
            inner: Arc::new(Inner {
                shape,
                data: Arc::new(data),
                requires_grad,
                grad: Mutex::new(None),
                node,
            }),
        }
    }

    /// Constant leaf tensor (not tracked by the graph).
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Trainable leaf tensor: participates in the graph and accumulates
    /// gradients across backward passes.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Self::build(shape.to_vec(), data, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![T::zero(); n], false, None)
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![v; n], false, None)
    }

    pub fn scalar(v: T) -> Self {
        Self::build(vec![1], vec![v], false, None)
    }

    /// Output of an operation. Records a graph node when any parent is
    /// gradient-tracking; otherwise the parents are dropped and the result
    /// is a plain constant.
    pub(crate) fn from_op<F>(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: F,
    ) -> Self
    where
        F: Fn(&[T], &[Tensor<T>]) -> Vec<Option<Vec<T>>> + Send + Sync + 'static,
    {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "op {op} shape/buffer mismatch");
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "op {op} produced a non-finite element"
        );
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let node = if requires_grad {
            Some(Node { parents, backward: Box::new(backward), op })
        } else {
            None
        };
        Self::build(shape, data, requires_grad, node)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.node.is_none()
    }

    /// Extract the single element of a scalar tensor.
    pub fn item(&self) -> Result<T> {
        if self.len() != 1 {
            return Err(Error::usage(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    /// Snapshot of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().unwrap() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.inner.grad.lock().unwrap();
        match slot.as_mut() {
            Some(acc) => {
                for (a, &b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn id(&self) -> usize {
        Arc::as_ptr(&self.inner) as usize
    }

    pub(crate) fn node(&self) -> Option<&Node<T>> {
        self.inner.node.as_ref()
    }

    /// Detach from the graph: same storage, no history, no grad tracking.
    pub fn detach(&self) -> Tensor<T> {
        Tensor {
            inner: Arc::new(Inner {
                shape: self.inner.shape.clone(),
                data: Arc::clone(&self.inner.data),
                requires_grad: false,
                grad: Mutex::new(None),
                node: None,
            }),
        }
    }

    /// Copy into the other element type (used by oracles that promote to f64).
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self.data().iter().map(|&v| <U as Element>::from_f64(v.as_f64())).collect();
        Tensor::build(self.inner.shape.clone(), data, false, None)
    }
}

/// Multiset equality helper used by data-movement invariants in tests.
pub fn element_multiset<T: Element>(t: &Tensor<T>) -> HashMap<u64, usize> {
    let mut m = HashMap::new();
    for v in t.data() {
        *m.entry(v.as_f64().to_bits()).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_send_sync<X: Send + Sync>() {}

    #[test]
    fn tensor_is_send_sync() {
        assert_send_sync::<Tensor<f32>>();
        assert_send_sync::<Tensor<f64>>();
    }

    #[test]
    fn shape_buffer_mismatch_rejected() {
        assert!(Tensor::<f32>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn grad_accumulates_across_backward_calls() {
        let x = Tensor::<f64>::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let loss = sum(&x).unwrap();
        backward(&loss).unwrap();
        backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0, 2.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }
}
