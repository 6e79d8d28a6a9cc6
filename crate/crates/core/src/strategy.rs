//! Deterministic adaptive adversaries restricted to GRR choices.
//!
//! A strategy for `k` mechanisms is a complete binary tree of depth `k`
//! stored in heap order: node `n` holds the offset used after the outcome
//! prefix leading to it, outcome `0` moves to `2n + 1` and outcome `1` to
//! `2n + 2`. The tree has `2^k - 1` nodes.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grr::GrrMechanism;
use crate::numeric::{exp_times_expm1, CompensatedSum};

/// Largest depth for which a strategy tree is materialized.
pub const MAX_TREE_DEPTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryStrategy {
    eps_list: Vec<f64>,
    nodes: Vec<f64>,
}

impl AdversaryStrategy {
    /// `nodes` in heap order; node at depth `d` must lie in `[0, eps_list[d]]`.
    pub fn new(eps_list: Vec<f64>, nodes: Vec<f64>) -> Result<Self> {
        let k = eps_list.len();
        if k > MAX_TREE_DEPTH {
            return Err(Error::SizeCap {
                what: "strategy depth",
                got: k,
                max: MAX_TREE_DEPTH,
            });
        }
        if nodes.len() != (1usize << k) - 1 {
            return Err(Error::Dimension(format!(
                "a depth-{k} strategy needs {} nodes, got {}",
                (1usize << k) - 1,
                nodes.len()
            )));
        }
        if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(domain(format!(
                "every eps must be positive and finite, got {e}"
            )));
        }
        for (n, &t) in nodes.iter().enumerate() {
            let eps = eps_list[depth_of(n)];
            if !(0.0..=eps).contains(&t) {
                return Err(domain(format!("node {n}: t = {t} outside [0, {eps}]")));
            }
        }
        Ok(Self { eps_list, nodes })
    }

    /// The nonadaptive strategy using `t_list[d]` at depth `d`.
    pub fn constant(eps_list: Vec<f64>, t_list: &[f64]) -> Result<Self> {
        if t_list.len() != eps_list.len() {
            return Err(Error::Dimension(format!(
                "{} offsets for {} mechanisms",
                t_list.len(),
                eps_list.len()
            )));
        }
        let k = eps_list.len().min(MAX_TREE_DEPTH + 1);
        let n = (1usize << k).saturating_sub(1);
        let nodes = (0..n).map(|i| t_list[depth_of(i)]).collect();
        Self::new(eps_list, nodes)
    }

    pub fn depth(&self) -> usize {
        self.eps_list.len()
    }

    pub fn eps_list(&self) -> &[f64] {
        &self.eps_list
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Offset chosen after `prefix` (outcomes `0`/`1`), `prefix.len() < k`.
    pub fn t_after(&self, prefix: &[u8]) -> f64 {
        let mut n = 0usize;
        for &b in prefix {
            n = 2 * n + 1 + usize::from(b != 0);
        }
        self.nodes[n]
    }

    /// Exact privacy loss distribution by enumerating every outcome path:
    /// `(ln P_x'(path), loss)` pairs.
    pub fn paths(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(1usize << self.depth());
        self.walk(0, 0, 0.0, 0.0, &mut out);
        out
    }

    fn walk(&self, n: usize, d: usize, ln_w: f64, loss: f64, out: &mut Vec<(f64, f64)>) {
        if d == self.depth() {
            out.push((ln_w, loss));
            return;
        }
        let eps = self.eps_list[d];
        let m = GrrMechanism::new_unchecked(eps, self.nodes[n]);
        self.walk(2 * n + 1, d + 1, ln_w + m.ln_p(), loss + m.t(), out);
        self.walk(
            2 * n + 2,
            d + 1,
            ln_w + m.ln_one_minus_p(),
            loss + m.t() - eps,
            out,
        );
    }
}

#[inline]
fn depth_of(node: usize) -> usize {
    (usize::BITS - 1 - (node + 1).leading_zeros()) as usize
}

/// Exact hockey-stick `delta` at `eps_g` of the composed view produced by
/// `strategy`: `sum_paths P_x'(path) max{e^{L} - e^{eps_g}, 0}`.
pub fn evaluate_strategy(strategy: &AdversaryStrategy, eps_g: f64) -> f64 {
    let mut s = CompensatedSum::new();
    for (ln_w, loss) in strategy.paths() {
        if loss > eps_g && ln_w > f64::NEG_INFINITY {
            s.add(exp_times_expm1(ln_w + eps_g, loss - eps_g));
        }
    }
    s.value().clamp(0.0, 1.0)
}
