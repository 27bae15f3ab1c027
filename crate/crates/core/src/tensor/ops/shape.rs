//! Data-movement operations: every one of these is a bijection or a
//! padded embedding, so backward is the inverse movement.

use std::sync::Arc;

use super::expect_rank;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub fn reshape<T: Element>(a: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    let n: usize = shape.iter().product();
    if n != a.len() {
        return Err(Error::shape(format!(
            "reshape: {:?} has {} elements, target {shape:?} needs {n}",
            a.shape(),
            a.len()
        )));
    }
    Ok(Tensor::from_op(
        "reshape",
        shape.to_vec(),
        a.data().to_vec(),
        vec![a.clone()],
        |g, _| vec![Some(g.to_vec())],
    ))
}

/// Row-major strides for a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Reorder axes: output axis `i` is input axis `axes[i]`.
pub fn permute<T: Element>(a: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>> {
    if axes.len() != a.rank() {
        return Err(Error::shape(format!(
            "permute: {} axes given for rank {}",
            axes.len(),
            a.rank()
        )));
    }
    let mut seen = vec![false; axes.len()];
    for &ax in axes {
        if ax >= axes.len() || seen[ax] {
            return Err(Error::shape(format!("permute: invalid axis list {axes:?}")));
        }
        seen[ax] = true;
    }
    let in_shape = a.shape();
    let out_shape: Vec<usize> = axes.iter().map(|&ax| in_shape[ax]).collect();
    let in_strides = strides(in_shape);
    let out_strides = strides(&out_shape);

    let mut perm = vec![0usize; a.len()];
    for (out_idx, p) in perm.iter_mut().enumerate() {
        let mut rem = out_idx;
        let mut src = 0;
        for (k, &os) in out_strides.iter().enumerate() {
            let coord = rem / os;
            rem %= os;
            src += coord * in_strides[axes[k]];
        }
        *p = src;
    }
    gather_permutation("permute", a, Arc::new(perm), out_shape)
}

/// out[i] = in[perm[i]]; `perm` must be a bijection on indices.
pub fn gather_permutation<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    perm: Arc<Vec<usize>>,
    out_shape: Vec<usize>,
) -> Result<Tensor<T>> {
    if perm.len() != a.len() || out_shape.iter().product::<usize>() != a.len() {
        return Err(Error::shape(format!(
            "{op}: permutation of {} entries against {} elements",
            perm.len(),
            a.len()
        )));
    }
    let src = a.data();
    let data: Vec<T> = perm.iter().map(|&i| src[i]).collect();
    let back_perm = Arc::clone(&perm);
    Ok(Tensor::from_op(op, out_shape, data, vec![a.clone()], move |g, parents| {
        let mut gx = vec![T::zero(); parents[0].len()];
        for (out_idx, &src_idx) in back_perm.iter().enumerate() {
            gx[src_idx] += g[out_idx];
        }
        vec![Some(gx)]
    }))
}

/// Contiguous sub-range along one axis.
pub fn slice<T: Element>(a: &Tensor<T>, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
    let shape = a.shape();
    if axis >= shape.len() || start + len > shape[axis] || len == 0 {
        return Err(Error::shape(format!(
            "slice: [{start}, {}) on axis {axis} of {:?}",
            start + len,
            shape
        )));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let axis_len = shape[axis];

    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let mut data = Vec::with_capacity(outer * len * inner);
    let src = a.data();
    for o in 0..outer {
        let base = (o * axis_len + start) * inner;
        data.extend_from_slice(&src[base..base + len * inner]);
    }
    Ok(Tensor::from_op("slice", out_shape, data, vec![a.clone()], move |g, parents| {
        let mut gx = vec![T::zero(); parents[0].len()];
        for o in 0..outer {
            let dst = (o * axis_len + start) * inner;
            let srcb = o * len * inner;
            gx[dst..dst + len * inner].copy_from_slice(&g[srcb..srcb + len * inner]);
        }
        vec![Some(gx)]
    }))
}

/// Concatenate along one axis; all other extents must agree.
pub fn concat<T: Element>(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(Error::usage("concat: empty input list".to_string()));
    }
    let rank = parts[0].rank();
    if axis >= rank {
        return Err(Error::shape(format!("concat: axis {axis} out of rank {rank}")));
    }
    let mut out_shape = parts[0].shape().to_vec();
    let mut axis_total = 0;
    for p in parts {
        if p.rank() != rank {
            return Err(Error::shape("concat: rank mismatch".to_string()));
        }
        for (d, (&a, &b)) in p.shape().iter().zip(&out_shape).enumerate() {
            if d != axis && a != b {
                return Err(Error::shape(format!(
                    "concat: extent mismatch on axis {d}: {a} vs {b}"
                )));
            }
        }
        axis_total += p.shape()[axis];
    }
    out_shape[axis] = axis_total;

    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let part_lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();

    let mut data = vec![T::zero(); outer * axis_total * inner];
    let mut offset = 0;
    for (p, &plen) in parts.iter().zip(&part_lens) {
        let src = p.data();
        for o in 0..outer {
            let dst = (o * axis_total + offset) * inner;
            let sb = o * plen * inner;
            data[dst..dst + plen * inner].copy_from_slice(&src[sb..sb + plen * inner]);
        }
        offset += plen;
    }

    Ok(Tensor::from_op(
        "concat",
        out_shape,
        data,
        parts.to_vec(),
        move |g, parents| {
            let mut out = Vec::with_capacity(parents.len());
            let mut offset = 0;
            for (p, &plen) in parents.iter().zip(&part_lens) {
                let mut gp = vec![T::zero(); p.len()];
                for o in 0..outer {
                    let src = (o * axis_total + offset) * inner;
                    let db = o * plen * inner;
                    gp[db..db + plen * inner].copy_from_slice(&g[src..src + plen * inner]);
                }
                out.push(Some(gp));
                offset += plen;
            }
            out
        },
    ))
}

/// Split into `parts` equal chunks along an axis.
pub fn split<T: Element>(a: &Tensor<T>, axis: usize, parts: usize) -> Result<Vec<Tensor<T>>> {
    let shape = a.shape();
    if axis >= shape.len() || parts == 0 || shape[axis] % parts != 0 {
        return Err(Error::config(format!(
            "split: axis {axis} extent {} not divisible into {parts} parts",
            shape.get(axis).copied().unwrap_or(0)
        )));
    }
    let chunk = shape[axis] / parts;
    (0..parts).map(|i| slice(a, axis, i * chunk, chunk)).collect()
}

/// Zero padding: `pads[d] = (before, after)` per axis.
pub fn pad<T: Element>(a: &Tensor<T>, pads: &[(usize, usize)]) -> Result<Tensor<T>> {
    if pads.len() != a.rank() {
        return Err(Error::shape(format!(
            "pad: {} pad pairs for rank {}",
            pads.len(),
            a.rank()
        )));
    }
    let in_shape = a.shape().to_vec();
    let out_shape: Vec<usize> = in_shape
        .iter()
        .zip(pads)
        .map(|(&d, &(b, e))| d + b + e)
        .collect();
    let in_strides = strides(&in_shape);
    let out_strides = strides(&out_shape);
    let befores: Vec<usize> = pads.iter().map(|&(b, _)| b).collect();

    let mut data = vec![T::zero(); out_shape.iter().product()];
    let src = a.data();
    for (in_idx, &v) in src.iter().enumerate() {
        let mut rem = in_idx;
        let mut dst = 0;
        for (k, &is) in in_strides.iter().enumerate() {
            let coord = rem / is;
            rem %= is;
            dst += (coord + befores[k]) * out_strides[k];
        }
        data[dst] = v;
    }
    let in_strides_b = in_strides.clone();
    let out_strides_b = out_strides.clone();
    Ok(Tensor::from_op("pad", out_shape, data, vec![a.clone()], move |g, parents| {
        let n = parents[0].len();
        let mut gx = vec![T::zero(); n];
        for (in_idx, gi) in gx.iter_mut().enumerate() {
            let mut rem = in_idx;
            let mut dst = 0;
            for (k, &is) in in_strides_b.iter().enumerate() {
                let coord = rem / is;
                rem %= is;
                dst += (coord + befores[k]) * out_strides_b[k];
            }
            *gi = g[dst];
        }
        vec![Some(gx)]
    }))
}

/// Group-transpose channel permutation: output channel `i` reads input
/// channel `(i % g) * (C/g) + i / g`.
pub fn channel_shuffle<T: Element>(a: &Tensor<T>, groups: usize) -> Result<Tensor<T>> {
    expect_rank("channel_shuffle", a, 3)?;
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    if groups == 0 || c % groups != 0 {
        return Err(Error::config(format!(
            "channel_shuffle: {c} channels not divisible by {groups} groups"
        )));
    }
    let per = c / groups;
    let plane = h * w;
    let mut perm = Vec::with_capacity(a.len());
    for i in 0..c {
        let src_c = (i % groups) * per + i / groups;
        for p in 0..plane {
            perm.push(src_c * plane + p);
        }
    }
    gather_permutation("channel_shuffle", a, Arc::new(perm), vec![c, h, w])
}

/// Rearrange `[C*s^2, H, W]` into `[C, s*H, s*W]`; element
/// `(c*s^2 + u*s + v, i, j)` lands at `(c, i*s + u, j*s + v)`.
pub fn pixel_shuffle<T: Element>(a: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    expect_rank("pixel_shuffle", a, 3)?;
    let (c_in, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    if s == 0 || c_in % (s * s) != 0 {
        return Err(Error::config(format!(
            "pixel_shuffle: {c_in} channels not divisible by s^2 = {}",
            s * s
        )));
    }
    let c_out = c_in / (s * s);
    let (oh, ow) = (h * s, w * s);
    let mut perm = Vec::with_capacity(a.len());
    for c in 0..c_out {
        for oy in 0..oh {
            let (i, u) = (oy / s, oy % s);
            for ox in 0..ow {
                let (j, v) = (ox / s, ox % s);
                let src_c = c * s * s + u * s + v;
                perm.push((src_c * h + i) * w + j);
            }
        }
    }
    gather_permutation("pixel_shuffle", a, Arc::new(perm), vec![c_out, oh, ow])
}

/// Exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Element>(a: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    expect_rank("pixel_unshuffle", a, 3)?;
    let (c, oh, ow) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    if s == 0 || oh % s != 0 || ow % s != 0 {
        return Err(Error::config(format!(
            "pixel_unshuffle: spatial {oh}x{ow} not divisible by {s}"
        )));
    }
    let (h, w) = (oh / s, ow / s);
    let c_in = c * s * s;
    let mut perm = Vec::with_capacity(a.len());
    for src_c in 0..c_in {
        let cc = src_c / (s * s);
        let u = (src_c / s) % s;
        let v = src_c % s;
        for i in 0..h {
            for j in 0..w {
                perm.push((cc * oh + i * s + u) * ow + j * s + v);
            }
        }
    }
    gather_permutation("pixel_unshuffle", a, Arc::new(perm), vec![c_in, h, w])
}

#[cfg(test)]
mod tests {
    use crate::tensor::{self, element_multiset, Tensor};

    #[test]
    fn permute_roundtrip_preserves_elements() {
        let x = Tensor::<f64>::new(&[2, 3, 4], (0..24).map(|v| v as f64).collect()).unwrap();
        let y = tensor::permute(&x, &[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), &[4, 2, 3]);
        let back = tensor::permute(&y, &[1, 2, 0]).unwrap();
        assert_eq!(back.data(), x.data());
        assert_eq!(element_multiset(&x), element_multiset(&y));
    }

    #[test]
    fn slice_concat_roundtrip() {
        let x = Tensor::<f32>::new(&[4, 3], (0..12).map(|v| v as f32).collect()).unwrap();
        let parts = tensor::split(&x, 0, 2).unwrap();
        assert_eq!(parts[0].shape(), &[2, 3]);
        let back = tensor::concat(&parts, 0).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn channel_shuffle_definition() {
        // C=4, g=2: channel order (0,1,2,3) -> (0,2,1,3)
        let x = Tensor::<f32>::new(&[4, 1, 1], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = tensor::channel_shuffle(&x, 2).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 1.0, 3.0]);
        // shuffle by g then by C/g is the identity
        let z = tensor::channel_shuffle(&y, 2).unwrap();
        assert_eq!(z.data(), x.data());
    }

    #[test]
    fn pixel_shuffle_definition_and_inverse() {
        let x = Tensor::<f32>::new(&[4, 1, 1], vec![10.0, 11.0, 12.0, 13.0]).unwrap();
        let y = tensor::pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[10.0, 11.0, 12.0, 13.0]);
        let back = tensor::pixel_unshuffle(&y, 2).unwrap();
        assert_eq!(back.shape(), x.shape());
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn pad_places_interior() {
        let x = Tensor::<f64>::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let y = tensor::pad(&x, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert_eq!(y.data(), &[0.0, 1.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn split_rejects_odd() {
        let x = Tensor::<f32>::zeros(&[3, 2]);
        assert!(tensor::split(&x, 0, 2).is_err());
    }
}
