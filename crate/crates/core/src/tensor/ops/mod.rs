//! Primitive differentiable operations.

mod conv;
mod elementwise;
mod norm;
mod pool;
mod shape;

pub use conv::{conv2d, depthwise_conv2d, matmul};
pub use elementwise::{
    abs, add, add_scalar, gelu, mean, mul, mul_scalar, relu, sigmoid, sub, sum,
};
pub use norm::{layer_norm, scale_channels, softmax};
pub use pool::{adaptive_avg_pool2d, max_pool2d, upsample_bilinear, upsample_nearest};
pub use shape::{
    channel_shuffle, concat, gather_permutation, pad, permute, pixel_shuffle, pixel_unshuffle,
    reshape, slice, split,
};

use super::{Element, Tensor};
use crate::error::{Error, Result};

pub(crate) fn same_shape<T: Element>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: operands differ, {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub(crate) fn expect_rank<T: Element>(op: &str, t: &Tensor<T>, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::shape(format!(
            "{op}: expected rank {rank}, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        add(self, other)
    }
    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        sub(self, other)
    }
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        mul(self, other)
    }
    pub fn add_scalar(&self, v: f64) -> Result<Tensor<T>> {
        add_scalar(self, v)
    }
    pub fn mul_scalar(&self, v: f64) -> Result<Tensor<T>> {
        mul_scalar(self, v)
    }
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        reshape(self, shape)
    }
    pub fn sum(&self) -> Result<Tensor<T>> {
        sum(self)
    }
    pub fn mean(&self) -> Result<Tensor<T>> {
        mean(self)
    }
}
