//! Exact optimal nonadaptive composition of bounded-range mechanisms and the
//! differential-privacy optimal-composition baselines.
//!
//! Every mechanism in a nonadaptive composition is a GRR with a fixed
//! offset; the composed privacy loss is then a sum of independent two-point
//! variables and `delta` is an explicit binomial (or subset) sum.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grr::GrrMechanism;
use crate::numeric::{exp_times_expm1, CompensatedSum, LnFactorials};

/// Subset-enumeration cap for heterogeneous exact formulas.
pub const SUBSET_CAP: usize = 25;

/// Values within this distance of the best candidate count as tied maximizers.
pub const TIE_TOL: f64 = 1e-12;

/// `k` identical `eps`-BR mechanisms at global `eps_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousQuery {
    pub eps: f64,
    pub k: usize,
    pub eps_g: f64,
}

impl HomogeneousQuery {
    pub fn new(eps: f64, k: usize, eps_g: f64) -> Result<Self> {
        let q = Self { eps, k, eps_g };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(domain(format!(
                "eps must be positive and finite, got {}",
                self.eps
            )));
        }
        if self.k == 0 {
            return Err(domain("k must be at least 1"));
        }
        if self.eps_g.is_nan() {
            return Err(domain("eps_g is NaN"));
        }
        Ok(())
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(0.0..=self.eps).contains(&t) {
            return Err(domain(format!("t = {t} outside [0, {}]", self.eps)));
        }
        Ok(())
    }

    /// `max{1 - e^{eps_g}, 0}`, the value outside `(-k eps, k eps)`.
    pub fn trivial_delta(&self) -> f64 {
        trivial_delta(self.eps_g)
    }

    pub fn total_eps(&self) -> f64 {
        self.eps * self.k as f64
    }
}

/// `max{1 - e^{eps_g}, 0}`.
#[inline]
pub fn trivial_delta(eps_g: f64) -> f64 {
    if eps_g >= 0.0 {
        0.0
    } else {
        -eps_g.exp_m1()
    }
}

#[inline]
fn times_ln(n: usize, ln_x: f64) -> f64 {
    if n == 0 {
        0.0
    } else {
        n as f64 * ln_x
    }
}

/// Binomial-sum kernel shared by the homogeneous evaluators.
struct HomKernel<'a> {
    q: &'a HomogeneousQuery,
    lf: &'a LnFactorials,
    m: GrrMechanism,
}

impl<'a> HomKernel<'a> {
    fn new(q: &'a HomogeneousQuery, lf: &'a LnFactorials, t: f64) -> Self {
        Self {
            q,
            lf,
            m: GrrMechanism::new_unchecked(q.eps, t),
        }
    }

    /// `ln(C(k,i) p^{k-i} (1-p)^i)`.
    #[inline]
    fn ln_weight(&self, i: usize) -> f64 {
        let k = self.q.k;
        self.lf.ln_binom(k, i)
            + times_ln(k - i, self.m.ln_p())
            + times_ln(i, self.m.ln_one_minus_p())
    }

    /// Signed term `C(k,i) p^{k-i}(1-p)^i (e^{kt - i eps} - e^{eps_g})`.
    #[inline]
    fn term(&self, i: usize) -> f64 {
        let lw = self.ln_weight(i);
        if lw == f64::NEG_INFINITY {
            return 0.0;
        }
        let expo = self.q.k as f64 * self.m.t() - i as f64 * self.q.eps - self.q.eps_g;
        exp_times_expm1(lw + self.q.eps_g, expo)
    }

    /// Sum of the terms `i = 0..=last` that are positive.
    fn positive_sum(&self) -> f64 {
        let k = self.q.k as f64;
        // term i positive iff k t - i eps > eps_g
        let bound = (k * self.m.t() - self.q.eps_g) / self.q.eps;
        if bound <= 0.0 {
            return 0.0;
        }
        let last = if bound.fract() == 0.0 {
            bound as usize - 1
        } else {
            bound.floor() as usize
        }
        .min(self.q.k);
        let mut s = CompensatedSum::new();
        for i in 0..=last {
            let v = self.term(i);
            if v > 0.0 {
                s.add(v);
            }
        }
        s.value()
    }
}

/// `delta` of `k`-fold composition of `GRR(eps, t)` at `eps_g`.
pub fn delta_hom_fixed_t(q: &HomogeneousQuery, t: f64) -> Result<f64> {
    q.validate()?;
    q.check_t(t)?;
    let lf = LnFactorials::new(q.k);
    Ok(delta_hom_fixed_t_with(q, &lf, t))
}

/// As [`delta_hom_fixed_t`] with a caller-supplied factorial table and no
/// validation.
pub(crate) fn delta_hom_fixed_t_with(q: &HomogeneousQuery, lf: &LnFactorials, t: f64) -> f64 {
    if q.eps_g >= q.total_eps() {
        return 0.0;
    }
    if q.eps_g <= -q.total_eps() {
        return q.trivial_delta();
    }
    HomKernel::new(q, lf, t).positive_sum().clamp(0.0, 1.0)
}

fn check_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(domain("empty eps list"));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(domain(format!(
            "every eps must be positive and finite, got {e}"
        )));
    }
    Ok(())
}

fn check_cap(k: usize) -> Result<()> {
    if k > SUBSET_CAP {
        return Err(Error::SizeCap {
            what: "number of mechanisms for subset enumeration",
            got: k,
            max: SUBSET_CAP,
        });
    }
    Ok(())
}

/// `delta` of composing `GRR(eps_i, t_i)` at `eps_g`, by exact subset
/// enumeration over outcome vectors.
pub fn delta_het_fixed_t(eps_list: &[f64], eps_g: f64, t_list: &[f64]) -> Result<f64> {
    check_list(eps_list)?;
    check_cap(eps_list.len())?;
    if t_list.len() != eps_list.len() {
        return Err(Error::Dimension(format!(
            "{} offsets for {} mechanisms",
            t_list.len(),
            eps_list.len()
        )));
    }
    if eps_g.is_nan() {
        return Err(domain("eps_g is NaN"));
    }
    let mechs = eps_list
        .iter()
        .zip(t_list)
        .map(|(&e, &t)| GrrMechanism::new(e, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(delta_het_fixed_t_mechs(&mechs, eps_g))
}

/// Subset-enumeration kernel on validated mechanisms.
pub(crate) fn delta_het_fixed_t_mechs(mechs: &[GrrMechanism], eps_g: f64) -> f64 {
    let total: f64 = mechs.iter().map(|m| m.eps()).sum();
    if eps_g >= total {
        return 0.0;
    }
    if eps_g <= -total {
        return trivial_delta(eps_g);
    }
    let sum_t: f64 = mechs.iter().map(|m| m.t()).sum();
    let mut acc = CompensatedSum::new();
    het_dfs(mechs, eps_g, 0, 0.0, sum_t, &mut acc);
    acc.value().clamp(0.0, 1.0)
}

/// `ln_w`: log-probability of the path under `x'`. `loss`: the largest loss
/// reachable from here, i.e. with all remaining outcomes `0`.
fn het_dfs(
    mechs: &[GrrMechanism],
    eps_g: f64,
    depth: usize,
    ln_w: f64,
    loss: f64,
    acc: &mut CompensatedSum,
) {
    if loss <= eps_g || ln_w == f64::NEG_INFINITY {
        return;
    }
    if depth == mechs.len() {
        acc.add(exp_times_expm1(ln_w + eps_g, loss - eps_g));
        return;
    }
    let m = &mechs[depth];
    het_dfs(mechs, eps_g, depth + 1, ln_w + m.ln_p(), loss, acc);
    het_dfs(
        mechs,
        eps_g,
        depth + 1,
        ln_w + m.ln_one_minus_p(),
        loss - m.eps(),
        acc,
    );
}

/// Candidate offsets `t*_l = (eps_g + (l+1) eps)/(k+1)`, `l = 0..=k`,
/// clamped to `[0, eps]`.
pub fn candidate_points(q: &HomogeneousQuery) -> Vec<(usize, f64)> {
    let k1 = (q.k + 1) as f64;
    (0..=q.k)
        .map(|l| {
            let t = (q.eps_g + (l as f64 + 1.0) * q.eps) / k1;
            (l, t.clamp(0.0, q.eps))
        })
        .collect()
}

/// The nonadaptive optimum and where it is attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonadaptiveOptimum {
    pub delta: f64,
    /// Maximizing offset; the candidate with the smallest index on ties.
    pub argmax_t: f64,
    /// Candidate index of `argmax_t`, `None` for an endpoint or a trivial
    /// region.
    pub ell: Option<usize>,
    /// Every distinct offset whose value is within [`TIE_TOL`] of the best.
    pub maximizers: Vec<f64>,
}

/// Exact optimal `delta` over all nonadaptive compositions of `k`
/// `eps`-BR mechanisms, `O(k^2)`.
pub fn delta_opt_nonadaptive_hom(q: &HomogeneousQuery) -> Result<NonadaptiveOptimum> {
    q.validate()?;
    let lf = LnFactorials::new(q.k);
    Ok(delta_opt_nonadaptive_hom_with(q, &lf))
}

pub(crate) fn delta_opt_nonadaptive_hom_with(
    q: &HomogeneousQuery,
    lf: &LnFactorials,
) -> NonadaptiveOptimum {
    if q.eps_g >= q.total_eps() || q.eps_g <= -q.total_eps() {
        let t = candidate_points(q)[0].1;
        return NonadaptiveOptimum {
            delta: q.trivial_delta(),
            argmax_t: t,
            ell: None,
            maximizers: vec![t],
        };
    }
    let mut evals: Vec<(Option<usize>, f64, f64)> = candidate_points(q)
        .into_iter()
        .map(|(l, t)| (Some(l), t, delta_hom_fixed_t_with(q, lf, t)))
        .collect();
    for t in [0.0, q.eps] {
        evals.push((None, t, delta_hom_fixed_t_with(q, lf, t)));
    }
    let best = evals.iter().map(|e| e.2).fold(f64::NEG_INFINITY, f64::max);
    let mut maximizers: Vec<f64> = Vec::new();
    let mut first: Option<(Option<usize>, f64)> = None;
    for &(l, t, v) in &evals {
        if v >= best - TIE_TOL {
            if first.is_none() {
                first = Some((l, t));
            }
            if maximizers.iter().all(|m| (m - t).abs() > 1e-12) {
                maximizers.push(t);
            }
        }
    }
    let (ell, argmax_t) = first.expect("nonempty candidate set");
    NonadaptiveOptimum {
        delta: best,
        argmax_t,
        ell,
        maximizers,
    }
}

fn check_ell(q: &HomogeneousQuery, ell: usize, t: f64) -> Result<()> {
    q.validate()?;
    q.check_t(t)?;
    if ell > q.k {
        return Err(domain(format!("ell = {ell} exceeds k = {}", q.k)));
    }
    Ok(())
}

/// `F_l(t)`: the first `l + 1` binomial terms, signs included.
pub fn f_ell(q: &HomogeneousQuery, ell: usize, t: f64) -> Result<f64> {
    check_ell(q, ell, t)?;
    let lf = LnFactorials::new(q.k);
    let kern = HomKernel::new(q, &lf, t);
    let s: CompensatedSum = (0..=ell).map(|i| kern.term(i)).collect();
    Ok(s.value())
}

/// Closed-form `dF_l/dt`.
pub fn df_ell_dt(q: &HomogeneousQuery, ell: usize, t: f64) -> Result<f64> {
    check_ell(q, ell, t)?;
    if ell == q.k {
        return Ok(0.0);
    }
    let lf = LnFactorials::new(q.k);
    let m = GrrMechanism::new_unchecked(q.eps, t);
    let k = q.k;
    let ln_coef = ((k - ell) as f64).ln()
        + lf.ln_binom(k, ell)
        + times_ln(k - 1 - ell, m.ln_p())
        + times_ln(ell, m.ln_one_minus_p())
        - (-(-q.eps).exp_m1()).ln();
    if ln_coef == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let a = q.eps_g - t;
    let b = k as f64 * t - (ell as f64 + 1.0) * q.eps;
    // e^a - e^b = e^a (1 - e^{b-a})
    Ok(-exp_times_expm1(ln_coef + a, b - a))
}

/// Optimal `delta` for `k`-fold composition of `eps_dp`-DP mechanisms: the
/// fixed-offset BR sum at BR parameter `2 eps_dp` and `t = eps_dp`.
pub fn dp_optcomp_hom(eps_dp: f64, k: usize, eps_g: f64) -> Result<f64> {
    let q = HomogeneousQuery::new(2.0 * eps_dp, k, eps_g)?;
    let lf = LnFactorials::new(k);
    if eps_g >= eps_dp * k as f64 {
        return Ok(0.0);
    }
    Ok(delta_hom_fixed_t_with(&q, &lf, eps_dp))
}

/// Optimal `delta` for heterogeneous DP composition by direct enumeration of
/// the subset formula
/// `prod(1 + e^{e_j})^{-1} sum_S max{e^{sum_S e} - e^{eps_g} e^{sum_{not S} e}, 0}`.
pub fn dp_optcomp_het(eps_list: &[f64], eps_g: f64) -> Result<f64> {
    check_list(eps_list)?;
    check_cap(eps_list.len())?;
    if eps_g.is_nan() {
        return Err(domain("eps_g is NaN"));
    }
    let total: f64 = eps_list.iter().sum();
    if eps_g >= total {
        return Ok(0.0);
    }
    let ln_norm: f64 = eps_list.iter().map(|&e| e + (-e).exp().ln_1p()).sum();
    // suffix sums of eps for pruning
    let mut suffix = vec![0.0; eps_list.len() + 1];
    for j in (0..eps_list.len()).rev() {
        suffix[j] = suffix[j + 1] + eps_list[j];
    }
    let mut acc = CompensatedSum::new();
    mv_dfs(eps_list, &suffix, eps_g, ln_norm, 0, 0.0, 0.0, &mut acc);
    Ok(acc.value().clamp(0.0, 1.0))
}

#[allow(clippy::too_many_arguments)]
fn mv_dfs(
    eps: &[f64],
    suffix: &[f64],
    eps_g: f64,
    ln_norm: f64,
    j: usize,
    in_s: f64,
    out_s: f64,
    acc: &mut CompensatedSum,
) {
    // best case: every remaining index joins S
    if in_s + suffix[j] - out_s <= eps_g {
        return;
    }
    if j == eps.len() {
        let a = in_s - ln_norm;
        let b = eps_g + out_s - ln_norm;
        acc.add(-exp_times_expm1(a, b - a));
        return;
    }
    mv_dfs(
        eps,
        suffix,
        eps_g,
        ln_norm,
        j + 1,
        in_s + eps[j],
        out_s,
        acc,
    );
    mv_dfs(
        eps,
        suffix,
        eps_g,
        ln_norm,
        j + 1,
        in_s,
        out_s + eps[j],
        acc,
    );
}
