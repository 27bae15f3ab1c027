//! Reverse-mode replay over the recorded graph.

use std::collections::{HashMap, HashSet};

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Populate `grad` on every gradient-tracking leaf reachable from `loss`.
///
/// The graph is walked in reverse topological order so each recorded node
/// runs exactly once; gradients flowing into a tensor from several
/// consumers are summed before that tensor's own node runs. Leaf
/// gradients accumulate across calls until [`Tensor::zero_grad`].
pub fn backward<T: Element>(loss: &Tensor<T>) -> Result<()> {
    if loss.len() != 1 {
        return Err(Error::usage(format!(
            "backward requires a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }

    let order = topo_order(loss);
    let mut grads: HashMap<usize, Vec<T>> = HashMap::new();
    grads.insert(loss.id(), vec![T::one()]);

    for t in order.iter().rev() {
        let Some(g) = grads.remove(&t.id()) else { continue };
        match t.node() {
            Some(node) => {
                let parent_grads = (node.backward)(&g, &node.parents);
                debug_assert_eq!(parent_grads.len(), node.parents.len(), "op {}", node.op);
                for (p, pg) in node.parents.iter().zip(parent_grads) {
                    if !p.requires_grad() {
                        continue;
                    }
                    let Some(pg) = pg else { continue };
                    debug_assert_eq!(pg.len(), p.len(), "op {} parent grad len", node.op);
                    match grads.get_mut(&p.id()) {
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(pg) {
                                *a += b;
                            }
                        }
                        None => {
                            grads.insert(p.id(), pg);
                        }
                    }
                }
            }
            None => {
                if t.requires_grad() {
                    t.accumulate_grad(&g);
                }
            }
        }
    }
    Ok(())
}

/// Iterative DFS post-order: every tensor appears after all tensors that
/// depend on it have been pushed (so reversing yields consumers-first).
fn topo_order<T: Element>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    // Stack entries: (tensor, child_cursor).
    let mut stack: Vec<(Tensor<T>, usize)> = vec![(root.clone(), 0)];
    visited.insert(root.id());

    while let Some((t, cursor)) = stack.pop() {
        let parents = t.node().map(|n| n.parents.as_slice()).unwrap_or(&[]);
        if cursor < parents.len() {
            let child = parents[cursor].clone();
            stack.push((t, cursor + 1));
            if child.requires_grad() && visited.insert(child.id()) {
                stack.push((child, 0));
            }
        } else {
            order.push(t);
        }
    }
    order
}
