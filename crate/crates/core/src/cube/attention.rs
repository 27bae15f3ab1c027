//! Per-cube affinity attention.
//!
//! Voxels inside a cube act as scalar tokens: the affinity matrix of a
//! cube of n voxels is the full n x n outer product of the flattened
//! query and key cubes, row-softmaxed, then applied to the value cube.
//! No temperature scaling (token feature dimension is 1).

use rayon::prelude::*;

use super::{partition, CubeSpec};
use crate::error::{Error, Result};
use crate::tensor::{concat, split, Element, Tensor};

/// Attention over a batch of flattened cubes.
///
/// `q`, `k`, `v` are `[n_cubes, n]`. With `transposed` false the output
/// row is `out_i = sum_j softmax_j(q_i k_j) v_j`; the transposed variant
/// follows the row-vector reading `out_j = sum_i A_ij v_i` instead.
pub fn cube_attention_batch<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    transposed: bool,
) -> Result<Tensor<T>> {
    if q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape() {
        return Err(Error::shape(format!(
            "cube attention: q {:?}, k {:?}, v {:?} must be identical [n_cubes, n]",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let (m, n) = (q.shape()[0], q.shape()[1]);

    let qs = q.data();
    let ks = k.data();
    let vs = v.data();
    let mut out = vec![T::zero(); m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(cube, dst)| {
        let base = cube * n;
        forward_cube(&qs[base..base + n], &ks[base..base + n], &vs[base..base + n], dst, transposed);
    });

    Ok(Tensor::from_op(
        "cube_attention",
        vec![m, n],
        out,
        vec![q.clone(), k.clone(), v.clone()],
        move |g, parents| {
            let qs = parents[0].data();
            let ks = parents[1].data();
            let vs = parents[2].data();
            let mut gq = vec![T::zero(); m * n];
            let mut gk = vec![T::zero(); m * n];
            let mut gv = vec![T::zero(); m * n];
            // one thread owns one cube across all three gradients
            gq.par_chunks_mut(n)
                .zip(gk.par_chunks_mut(n))
                .zip(gv.par_chunks_mut(n))
                .enumerate()
                .for_each(|(cube, ((gq, gk), gv))| {
                    let base = cube * n;
                    backward_cube(
                        &qs[base..base + n],
                        &ks[base..base + n],
                        &vs[base..base + n],
                        &g[base..base + n],
                        gq,
                        gk,
                        gv,
                        transposed,
                    );
                });
            vec![Some(gq), Some(gk), Some(gv)]
        },
    ))
}

/// Attention inside a single flattened cube (`[n]` vectors).
pub fn cube_affinity_attention<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Tensor<T>> {
    if q.rank() != 1 || q.shape() != k.shape() || q.shape() != v.shape() {
        return Err(Error::shape(format!(
            "cube_affinity_attention: q {:?}, k {:?}, v {:?} must be equal-length vectors",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let n = q.len();
    let out = cube_attention_batch(&q.reshape(&[1, n])?, &k.reshape(&[1, n])?, &v.reshape(&[1, n])?, false)?;
    out.reshape(&[n])
}

const LANES: usize = 8;

/// `row[j] = exp(q_i k_j - max_j)`; returns the row sum. Normalizing by
/// the returned sum yields the softmax row. Fixed-width lane blocks with
/// a fixed reduction order keep results bit-reproducible while letting
/// the blocks vectorize.
#[inline]
fn exp_row<T: Element>(qi: T, k: &[T], row: &mut [T]) -> T {
    let n = k.len();
    let main = n - n % LANES;
    let mut mxv = [T::neg_infinity(); LANES];
    for (rc, kc) in row[..main].chunks_exact_mut(LANES).zip(k[..main].chunks_exact(LANES)) {
        for l in 0..LANES {
            let val = qi * kc[l];
            rc[l] = val;
            mxv[l] = mxv[l].max(val);
        }
    }
    let mut mx = mxv.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    for (r, &kj) in row[main..].iter_mut().zip(&k[main..]) {
        let val = qi * kj;
        *r = val;
        mx = mx.max(val);
    }

    let mut sumv = [T::zero(); LANES];
    for rc in row[..main].chunks_exact_mut(LANES) {
        for l in 0..LANES {
            let e = (rc[l] - mx).exp_fast();
            rc[l] = e;
            sumv[l] += e;
        }
    }
    let mut sum = sumv.iter().fold(T::zero(), |a, &b| a + b);
    for r in row[main..].iter_mut() {
        *r = (*r - mx).exp_fast();
        sum += *r;
    }
    sum
}

#[inline]
fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    let n = a.len();
    let main = n - n % LANES;
    let mut accv = [T::zero(); LANES];
    for (ac, bc) in a[..main].chunks_exact(LANES).zip(b[..main].chunks_exact(LANES)) {
        for l in 0..LANES {
            accv[l] += ac[l] * bc[l];
        }
    }
    let mut acc = accv.iter().fold(T::zero(), |x, &y| x + y);
    for (&x, &y) in a[main..].iter().zip(&b[main..]) {
        acc += x * y;
    }
    acc
}

fn forward_cube<T: Element>(q: &[T], k: &[T], v: &[T], out: &mut [T], transposed: bool) {
    let n = q.len();
    let mut row = vec![T::zero(); n];
    if transposed {
        out.fill(T::zero());
        for i in 0..n {
            let sum = exp_row(q[i], k, &mut row);
            let scale = v[i] / sum;
            for (o, &e) in out.iter_mut().zip(&row) {
                *o += scale * e;
            }
        }
    } else {
        for i in 0..n {
            let sum = exp_row(q[i], k, &mut row);
            out[i] = dot(&row, v) / sum;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_cube<T: Element>(
    q: &[T],
    k: &[T],
    v: &[T],
    g: &[T],
    gq: &mut [T],
    gk: &mut [T],
    gv: &mut [T],
    transposed: bool,
) {
    let n = q.len();
    let mut row = vec![T::zero(); n];
    let main = n - n % LANES;
    if transposed {
        for i in 0..n {
            let sum = exp_row(q[i], k, &mut row);
            let inv = T::one() / sum;
            // r_i = sum_j A_ij g_j is also dv_i
            let r = dot(&row, g) * inv;
            gv[i] = r;
            let vi = v[i];
            let qi = q[i];
            let mut dqv = [T::zero(); LANES];
            for (((rc, gc), kc), gkc) in row[..main]
                .chunks_exact(LANES)
                .zip(g[..main].chunks_exact(LANES))
                .zip(k[..main].chunks_exact(LANES))
                .zip(gk[..main].chunks_exact_mut(LANES))
            {
                for l in 0..LANES {
                    let dl = rc[l] * inv * vi * (gc[l] - r);
                    dqv[l] += dl * kc[l];
                    gkc[l] += dl * qi;
                }
            }
            let mut dq = dqv.iter().fold(T::zero(), |a, &b| a + b);
            for j in main..n {
                let dl = row[j] * inv * vi * (g[j] - r);
                dq += dl * k[j];
                gk[j] += dl * qi;
            }
            gq[i] = dq;
        }
    } else {
        for i in 0..n {
            let sum = exp_row(q[i], k, &mut row);
            let inv = T::one() / sum;
            let gi = g[i];
            // s_i = g_i * out_i
            let s = gi * dot(&row, v) * inv;
            let qi = q[i];
            let mut dqv = [T::zero(); LANES];
            for ((((rc, vc), kc), gkc), gvc) in row[..main]
                .chunks_exact(LANES)
                .zip(v[..main].chunks_exact(LANES))
                .zip(k[..main].chunks_exact(LANES))
                .zip(gk[..main].chunks_exact_mut(LANES))
                .zip(gv[..main].chunks_exact_mut(LANES))
            {
                for l in 0..LANES {
                    let a = rc[l] * inv;
                    gvc[l] += a * gi;
                    let dl = a * (gi * vc[l] - s);
                    dqv[l] += dl * kc[l];
                    gkc[l] += dl * qi;
                }
            }
            let mut dq = dqv.iter().fold(T::zero(), |a, &b| a + b);
            for j in main..n {
                let a = row[j] * inv;
                gv[j] += a * gi;
                let dl = a * (gi * v[j] - s);
                dq += dl * k[j];
                gk[j] += dl * qi;
            }
            gq[i] = dq;
        }
    }
}

/// Cube attention over a full `[C, H, W]` volume with the channel axis
/// split into `heads` groups; each head is partitioned by `spec` and the
/// merged heads are concatenated back. This is the pre-projection core
/// shared by the intra (block) and inter (grid) layers.
pub fn multi_head_cube_attention<T: Element>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
    spec: &CubeSpec,
    transposed: bool,
) -> Result<Tensor<T>> {
    if q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape() {
        return Err(Error::shape(format!(
            "multi_head_cube_attention: mismatched volumes {:?} / {:?} / {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let c = q.shape()[0];
    if heads == 0 || c % heads != 0 {
        return Err(Error::config(format!(
            "multi_head_cube_attention: {c} channels not divisible into {heads} heads"
        )));
    }
    let qh = split(q, 0, heads)?;
    let kh = split(k, 0, heads)?;
    let vh = split(v, 0, heads)?;
    let mut merged = Vec::with_capacity(heads);
    for ((qh, kh), vh) in qh.iter().zip(&kh).zip(&vh) {
        let pq = partition(qh, spec)?;
        let pk = partition(kh, spec)?;
        let pv = partition(vh, spec)?;
        let out = cube_attention_batch(&pq.cubes, &pk.cubes, &pv.cubes, transposed)?;
        merged.push(pq.merge_with(&out)?);
    }
    concat(&merged, 0)
}
