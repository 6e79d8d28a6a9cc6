//! Adaptive composition: certified lower bounds on the optimal `delta` via
//! the recursive game, closed forms in the edge regions, and gap
//! certificates against the nonadaptive optimum.
//!
//! Every value returned by [`delta_adaptive_lb`] is the exact value of an
//! explicit adversary strategy, which is returned alongside it; the lower
//! bound holds because the strategy is feasible, not because the search
//! converged.
//!
//! Homogeneous lists are solved on a lattice anchored at the target: with
//! `h = eps / (t_grid - 1)`, the state `x = anchor + m h` moves to
//! `x - s h` or `x - s h + eps` when the adversary plays `t = s h`, so both
//! children stay on the lattice and no value is ever interpolated. The cost
//! is `O(k^2 t_grid^2)`. Heterogeneous lists use a per-node grid search
//! with cost `O((t_grid + refine_iters)^(k-1))`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grr::GrrMechanism;
use crate::nonadaptive::{delta_opt_nonadaptive_hom_with, trivial_delta, HomogeneousQuery};
use crate::numeric::{golden_max, ln_one_minus_exp, LnFactorials};
use crate::par::{map_indexed, Exec};
use crate::strategy::{evaluate_strategy, AdversaryStrategy, MAX_TREE_DEPTH};

/// A gap is reported as strict only above this margin.
pub const GAP_TOL: f64 = 1e-7;

/// Work cap for the heterogeneous tree recursion, in objective evaluations.
pub const HET_EVAL_CAP: f64 = 2e8;

/// Slack on the edge-region preconditions.
const EDGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSolverConfig {
    /// Grid points per level over `[0, eps]`, at least 2.
    pub t_grid: usize,
    /// Golden-section steps refining the first offset.
    pub refine_iters: usize,
    /// Largest number of mechanisms accepted.
    pub depth_cap: usize,
    /// Also consider, at every state, the exact nonadaptive continuation
    /// (and the exact single-mechanism optimum at depth one).
    pub exact_subgames: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for AdaptiveSolverConfig {
    fn default() -> Self {
        Self {
            t_grid: 64,
            refine_iters: 20,
            depth_cap: 6,
            exact_subgames: true,
            exec: Exec::Parallel,
        }
    }
}

impl AdaptiveSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_grid < 2 {
            return Err(Error::Config(format!(
                "t_grid must be at least 2, got {}",
                self.t_grid
            )));
        }
        if self.depth_cap == 0 || self.depth_cap > MAX_TREE_DEPTH {
            return Err(Error::Config(format!(
                "depth_cap must be in 1..={MAX_TREE_DEPTH}, got {}",
                self.depth_cap
            )));
        }
        Ok(())
    }
}

/// Solver parameters reported with every adaptive value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub solver: String,
    pub t_grid: usize,
    pub refine_iters: usize,
    pub exact_subgames: bool,
}

impl fmt::Display for SolverMeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "solver={};t_grid={};refine={};exact_subgames={}",
            self.solver, self.t_grid, self.refine_iters, self.exact_subgames
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveLowerBound {
    pub delta: f64,
    pub strategy: AdversaryStrategy,
    pub meta: SolverMeta,
}

/// Certified lower bound on the optimal adaptive `delta`.
pub fn delta_adaptive_lb(
    eps_list: &[f64],
    eps_g: f64,
    cfg: &AdaptiveSolverConfig,
) -> Result<AdaptiveLowerBound> {
    cfg.validate()?;
    if eps_g.is_nan() {
        return Err(domain("eps_g is NaN"));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(domain(format!(
            "every eps must be positive and finite, got {e}"
        )));
    }
    if eps_list.len() > cfg.depth_cap {
        return Err(Error::SizeCap {
            what: "number of mechanisms for the adaptive recursion",
            got: eps_list.len(),
            max: cfg.depth_cap,
        });
    }
    if eps_list.is_empty() {
        return Ok(AdaptiveLowerBound {
            delta: trivial_delta(eps_g),
            strategy: AdversaryStrategy::new(vec![], vec![])?,
            meta: meta("base", cfg),
        });
    }
    let homogeneous = eps_list.iter().all(|&e| e == eps_list[0]);
    if homogeneous {
        Ok(lattice_solve(eps_list[0], eps_list.len(), eps_g, cfg))
    } else {
        tree_solve(eps_list, eps_g, cfg)
    }
}

/// [`delta_adaptive_lb`] for `k` copies of `eps`.
pub fn delta_adaptive_lb_hom(
    eps: f64,
    k: usize,
    eps_g: f64,
    cfg: &AdaptiveSolverConfig,
) -> Result<AdaptiveLowerBound> {
    delta_adaptive_lb(&vec![eps; k], eps_g, cfg)
}

fn meta(solver: &str, cfg: &AdaptiveSolverConfig) -> SolverMeta {
    SolverMeta {
        solver: solver.to_string(),
        t_grid: cfg.t_grid,
        refine_iters: cfg.refine_iters,
        exact_subgames: cfg.exact_subgames,
    }
}

#[derive(Debug, Clone, Copy)]
enum Choice {
    /// Play `t = s h`.
    Grid(u32),
    /// Play this offset here and at every descendant.
    Fixed(f64),
    /// Every strategy has the same value.
    Any,
}

struct Level {
    lo: i64,
    vals: Vec<f64>,
    choice: Vec<Choice>,
}

impl Level {
    #[inline]
    fn idx(&self, m: i64) -> usize {
        (m - self.lo) as usize
    }

    #[inline]
    fn val(&self, m: i64) -> f64 {
        self.vals[self.idx(m)]
    }
}

struct LatticeCtx {
    eps: f64,
    n: usize,
    h: f64,
    q: Vec<f64>,
    one_minus_q: Vec<f64>,
    lf: LnFactorials,
    exact: bool,
    exec: Exec,
}

impl LatticeCtx {
    fn new(eps: f64, k: usize, cfg: &AdaptiveSolverConfig) -> Self {
        let n = cfg.t_grid - 1;
        let h = eps / n as f64;
        let mechs: Vec<GrrMechanism> = (0..=n)
            .map(|s| GrrMechanism::new_unchecked(eps, if s == n { eps } else { s as f64 * h }))
            .collect();
        Self {
            eps,
            n,
            h,
            q: mechs.iter().map(GrrMechanism::q).collect(),
            one_minus_q: mechs.iter().map(GrrMechanism::one_minus_q).collect(),
            lf: LnFactorials::new(k),
            exact: cfg.exact_subgames,
            exec: cfg.exec,
        }
    }

    fn t_of(&self, s: u32) -> f64 {
        if s as usize == self.n {
            self.eps
        } else {
            f64::from(s) * self.h
        }
    }

    /// Value and choice at state `x` with `j >= 1` mechanisms left.
    fn node(&self, prev: &Level, j: usize, x: f64, m: i64) -> (f64, Choice) {
        let total = j as f64 * self.eps;
        if x >= total {
            return (0.0, Choice::Any);
        }
        if x <= -total {
            return (trivial_delta(x), Choice::Any);
        }
        let n = self.n as i64;
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0u32;
        for s in 0..=n {
            let v = self.q[s as usize] * prev.val(m - s)
                + self.one_minus_q[s as usize] * prev.val(m - s + n);
            if v > best {
                best = v;
                arg = s as u32;
            }
        }
        if self.exact {
            let q = HomogeneousQuery {
                eps: self.eps,
                k: j,
                eps_g: x,
            };
            let na = delta_opt_nonadaptive_hom_with(&q, &self.lf);
            if na.delta > best {
                return (na.delta, Choice::Fixed(na.argmax_t));
            }
        }
        (best, Choice::Grid(arg))
    }
}

/// Value tables for `j = 0..=top` mechanisms left; level `top` covers
/// `m in [lo, hi]` and each level below widens by `n` on both sides.
struct Lattice<'c> {
    ctx: &'c LatticeCtx,
    anchor: f64,
    levels: Vec<Level>,
}

impl<'c> Lattice<'c> {
    fn build(ctx: &'c LatticeCtx, anchor: f64, top: usize, lo: i64, hi: i64) -> Self {
        let n = ctx.n as i64;
        let range = |j: usize| {
            let w = (top - j) as i64 * n;
            (lo - w, hi + w)
        };
        let x_of = |m: i64| anchor + m as f64 * ctx.h;
        let mut levels = Vec::with_capacity(top + 1);
        let (l0, h0) = range(0);
        levels.push(Level {
            lo: l0,
            vals: (l0..=h0).map(|m| trivial_delta(x_of(m))).collect(),
            choice: vec![Choice::Any; (h0 - l0 + 1) as usize],
        });
        for j in 1..=top {
            let (lj, hj) = range(j);
            let prev = &levels[j - 1];
            let cells = map_indexed(ctx.exec, (hj - lj + 1) as usize, |i| {
                let m = lj + i as i64;
                ctx.node(prev, j, x_of(m), m)
            });
            let (vals, choice) = cells.into_iter().unzip();
            levels.push(Level {
                lo: lj,
                vals,
                choice,
            });
        }
        Self {
            ctx,
            anchor,
            levels,
        }
    }

    fn val(&self, j: usize, m: i64) -> f64 {
        self.levels[j].val(m)
    }

    /// Writes the subtree rooted at heap node `node`, state `(j, m)`.
    fn fill(&self, j: usize, m: i64, node: usize, nodes: &mut [f64]) {
        if j == 0 {
            return;
        }
        let lvl = &self.levels[j];
        match lvl.choice[lvl.idx(m)] {
            Choice::Grid(s) => {
                nodes[node] = self.ctx.t_of(s);
                let s = i64::from(s);
                let n = self.ctx.n as i64;
                self.fill(j - 1, m - s, 2 * node + 1, nodes);
                self.fill(j - 1, m - s + n, 2 * node + 2, nodes);
            }
            Choice::Fixed(t) => fill_constant(node, j, t, nodes),
            Choice::Any => fill_constant(node, j, 0.0, nodes),
        }
    }
}

fn fill_constant(node: usize, j: usize, t: f64, nodes: &mut [f64]) {
    if j == 0 {
        return;
    }
    nodes[node] = t;
    fill_constant(2 * node + 1, j - 1, t, nodes);
    fill_constant(2 * node + 2, j - 1, t, nodes);
}

fn lattice_solve(eps: f64, k: usize, eps_g: f64, cfg: &AdaptiveSolverConfig) -> AdaptiveLowerBound {
    let ctx = LatticeCtx::new(eps, k, cfg);
    let n = ctx.n as i64;
    let main = Lattice::build(&ctx, eps_g, k, 0, 0);
    let mut best = main.val(k, 0);
    let mut nodes = vec![0.0; (1usize << k) - 1];
    main.fill(k, 0, 0, &mut nodes);

    if cfg.refine_iters > 0 && eps_g < k as f64 * eps && eps_g > -(k as f64) * eps {
        // grid argmax of the first offset, whichever choice won at the root
        let below = &main.levels[k - 1];
        let s_star = (0..=n)
            .max_by(|&a, &b| {
                let va = ctx.q[a as usize] * below.val(-a)
                    + ctx.one_minus_q[a as usize] * below.val(n - a);
                let vb = ctx.q[b as usize] * below.val(-b)
                    + ctx.one_minus_q[b as usize] * below.val(n - b);
                va.total_cmp(&vb).then(b.cmp(&a))
            })
            .unwrap_or(0);
        let lo = ((s_star - 1).max(0)) as f64 * ctx.h;
        let hi = (((s_star + 1).min(n)) as f64 * ctx.h).min(eps);
        let root_value = |t1: f64| {
            let sub = Lattice::build(&ctx, eps_g - t1, k - 1, 0, n);
            let m = GrrMechanism::new_unchecked(eps, t1);
            m.q() * sub.val(k - 1, 0) + m.one_minus_q() * sub.val(k - 1, n)
        };
        let r = golden_max(root_value, lo, hi, 1e-14, cfg.refine_iters);
        if r.value > best {
            best = r.value;
            let sub = Lattice::build(&ctx, eps_g - r.x, k - 1, 0, n);
            nodes[0] = r.x;
            if k > 1 {
                sub.fill(k - 1, 0, 1, &mut nodes);
                sub.fill(k - 1, n, 2, &mut nodes);
            }
            let _ = sub.anchor;
        }
    }
    let strategy =
        AdversaryStrategy::new(vec![eps; k], nodes).expect("lattice offsets lie in [0, eps]");
    AdaptiveLowerBound {
        delta: best.clamp(0.0, 1.0),
        strategy,
        meta: meta("lattice", cfg),
    }
}

struct TreeCtx<'a> {
    eps: &'a [f64],
    suffix: Vec<f64>,
    cfg: &'a AdaptiveSolverConfig,
}

impl TreeCtx<'_> {
    /// Value and chosen offset at depth `d`, state `x`.
    fn value(&self, d: usize, x: f64) -> (f64, f64) {
        let j = self.eps.len() - d;
        if j == 0 {
            return (trivial_delta(x), 0.0);
        }
        let total = self.suffix[d];
        if x >= total {
            return (0.0, 0.0);
        }
        if x <= -total {
            return (trivial_delta(x), 0.0);
        }
        let eps = self.eps[d];
        if j == 1 && self.cfg.exact_subgames {
            let q = HomogeneousQuery {
                eps,
                k: 1,
                eps_g: x,
            };
            let o = delta_opt_nonadaptive_hom_with(&q, &LnFactorials::new(1));
            return (o.delta, o.argmax_t);
        }
        let f = |t: f64| {
            let m = GrrMechanism::new_unchecked(eps, t);
            m.q() * self.value(d + 1, x - t).0 + m.one_minus_q() * self.value(d + 1, x + eps - t).0
        };
        let g = self.cfg.t_grid;
        let step = eps / (g - 1) as f64;
        let t_at = |i: usize| if i == g - 1 { eps } else { i as f64 * step };
        let exec = if d == 0 {
            self.cfg.exec
        } else {
            Exec::Sequential
        };
        let grid = map_indexed(exec, g, |i| f(t_at(i)));
        let (mut bi, mut bv) = (0, f64::NEG_INFINITY);
        for (i, &v) in grid.iter().enumerate() {
            if v > bv {
                bi = i;
                bv = v;
            }
        }
        let mut best = (bv, t_at(bi));
        if self.cfg.refine_iters > 0 {
            let lo = t_at(bi.saturating_sub(1));
            let hi = t_at((bi + 1).min(g - 1));
            let r = golden_max(f, lo, hi, 1e-14, self.cfg.refine_iters);
            if r.value > best.0 {
                best = (r.value, r.x);
            }
        }
        best
    }

    fn fill(&self, d: usize, x: f64, node: usize, nodes: &mut [f64]) {
        if d == self.eps.len() {
            return;
        }
        let (_, t) = self.value(d, x);
        nodes[node] = t;
        self.fill(d + 1, x - t, 2 * node + 1, nodes);
        self.fill(d + 1, x + self.eps[d] - t, 2 * node + 2, nodes);
    }
}

fn tree_solve(
    eps_list: &[f64],
    eps_g: f64,
    cfg: &AdaptiveSolverConfig,
) -> Result<AdaptiveLowerBound> {
    let k = eps_list.len();
    let per_level = (cfg.t_grid + cfg.refine_iters + 2) as f64;
    let work = per_level.powi(k as i32 - 1);
    if work > HET_EVAL_CAP {
        return Err(Error::SizeCap {
            what: "heterogeneous recursion work (evaluations, in millions)",
            got: (work / 1e6).ceil() as usize,
            max: (HET_EVAL_CAP / 1e6) as usize,
        });
    }
    let mut suffix = vec![0.0; k + 1];
    for d in (0..k).rev() {
        suffix[d] = suffix[d + 1] + eps_list[d];
    }
    let ctx = TreeCtx {
        eps: eps_list,
        suffix,
        cfg,
    };
    let (delta, _) = ctx.value(0, eps_g);
    let mut nodes = vec![0.0; (1usize << k) - 1];
    ctx.fill(0, eps_g, 0, &mut nodes);
    Ok(AdaptiveLowerBound {
        delta: delta.clamp(0.0, 1.0),
        strategy: AdversaryStrategy::new(eps_list.to_vec(), nodes)?,
        meta: meta("tree", cfg),
    })
}

fn check_hom(eps: f64, k: usize, eps_g: f64) -> Result<()> {
    HomogeneousQuery::new(eps, k, eps_g).map(|_| ())
}

/// `ln(e^u - 1)` for `u > 0`.
#[inline]
fn ln_expm1(u: f64) -> f64 {
    u + ln_one_minus_exp(-u)
}

/// Adaptive optimum for `eps_g >= (k-1) eps`:
/// `sup prod q_{t_i} max{1 - e^{eps_g - sum t_i}, 0}`, solved over the total
/// offset `s` with equal offsets `s/k`.
pub fn adaptive_edge_high(eps: f64, k: usize, eps_g: f64) -> Result<f64> {
    check_hom(eps, k, eps_g)?;
    let kf = k as f64;
    if eps_g < (kf - 1.0) * eps - EDGE_SLACK {
        return Err(Error::Precondition(format!(
            "eps_g = {eps_g} is below (k-1) eps = {}",
            (kf - 1.0) * eps
        )));
    }
    if eps_g >= kf * eps {
        return Ok(0.0);
    }
    let lo = eps_g.max(0.0);
    let hi = kf * eps;
    let obj = |s: f64| {
        if s <= eps_g {
            return f64::NEG_INFINITY;
        }
        let m = GrrMechanism::new_unchecked(eps, (s / kf).min(eps));
        kf * m.ln_q() + ln_one_minus_exp(eps_g - s)
    };
    let r = golden_max(obj, lo, hi, 1e-15 * hi.max(1.0), 400);
    Ok(r.value.exp().clamp(0.0, 1.0))
}

/// Adaptive optimum for `eps_g <= -(k-1) eps`:
/// `1 - e^{eps_g} + sup prod(1 - q_{t_i}) (e^{eps_g + k eps - sum t_i} - 1)`,
/// with the same equal-offset reduction.
pub fn adaptive_edge_low(eps: f64, k: usize, eps_g: f64) -> Result<f64> {
    check_hom(eps, k, eps_g)?;
    let kf = k as f64;
    if eps_g > -(kf - 1.0) * eps + EDGE_SLACK {
        return Err(Error::Precondition(format!(
            "eps_g = {eps_g} is above -(k-1) eps = {}",
            -(kf - 1.0) * eps
        )));
    }
    let base = trivial_delta(eps_g);
    let c = eps_g + kf * eps;
    if c <= 0.0 {
        return Ok(base);
    }
    let obj = |s: f64| {
        if s <= 0.0 || s >= c {
            return f64::NEG_INFINITY;
        }
        let m = GrrMechanism::new_unchecked(eps, (s / kf).min(eps));
        kf * m.ln_one_minus_q() + ln_expm1(c - s)
    };
    let r = golden_max(obj, 0.0, c, 1e-15 * c.max(1.0), 400);
    Ok((base + r.value.exp()).clamp(0.0, 1.0))
}

/// Certified comparison of the adaptive lower bound with the exact
/// nonadaptive optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub eps: f64,
    pub k: usize,
    pub eps_g: f64,
    pub delta_nonadaptive: f64,
    /// Maximizing nonadaptive offset.
    pub nonadaptive_t: f64,
    pub delta_adaptive_lb: f64,
    /// Exact value of the returned strategy, by path enumeration.
    pub strategy_value: f64,
    pub gap: f64,
    pub strict: bool,
    pub tolerance: f64,
    pub solver: SolverMeta,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<AdversaryStrategy>,
}

/// Computes the adaptive lower bound and the nonadaptive optimum at the
/// same point. `strict` means the gap exceeds [`GAP_TOL`] even after
/// re-evaluating the strategy by exact path enumeration.
pub fn gap_certificate(
    eps: f64,
    k: usize,
    eps_g: f64,
    cfg: &AdaptiveSolverConfig,
) -> Result<GapCertificate> {
    if k < 2 {
        return Err(Error::Precondition(format!(
            "gap certificate needs k >= 2, got {k}"
        )));
    }
    let q = HomogeneousQuery::new(eps, k, eps_g)?;
    let na = crate::nonadaptive::delta_opt_nonadaptive_hom(&q)?;
    let lb = delta_adaptive_lb_hom(eps, k, eps_g, cfg)?;
    let strategy_value = evaluate_strategy(&lb.strategy, eps_g);
    let certified = lb.delta.min(strategy_value);
    let gap = certified - na.delta;
    Ok(GapCertificate {
        eps,
        k,
        eps_g,
        delta_nonadaptive: na.delta,
        nonadaptive_t: na.argmax_t,
        delta_adaptive_lb: lb.delta,
        strategy_value,
        gap,
        strict: gap > GAP_TOL,
        tolerance: GAP_TOL,
        solver: lb.meta,
        strategy: Some(lb.strategy),
    })
}
