//! Efficiently computable upper bounds for adaptive composition, built from
//! per-mechanism bounds `U(eps, lambda)` on the log-moment-generating
//! function of the privacy loss.
//!
//! For any such `U`, `delta(eps_g) <= inf_lambda exp(-lambda eps_g +
//! sum_i U(eps_i, lambda))`. Its inverse has the exact dual form
//! `eps_g(delta) = inf_lambda (sum_i U(eps_i, lambda) - ln delta) / lambda`,
//! which is unimodal in `lambda` because every `U` is convex with `U(0) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::grr::GrrMechanism;
use crate::numeric::{golden_min, grid_then_golden_max};

/// Below this `eps`, [`maxkl`] switches to its Taylor series.
pub const MAXKL_SERIES_BELOW: f64 = 1e-6;

/// Grid points for the inner supremum of [`h_eps`].
pub const H_GRID: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UFunctionKind {
    /// `eps^2 (lambda^2 + lambda) / 2`.
    ImprovedDrv10,
    /// `eps^2 (lambda^2 / 4 + lambda) / 2`.
    Dr19,
    /// `eps^2 lambda^2 / 8 + lambda maxkl(eps)`.
    KlImprovedDr19,
    /// Exact worst-case per-step log-MGF, [`h_eps`].
    GeneralMgf,
}

impl UFunctionKind {
    pub const ALL: [UFunctionKind; 4] = [
        UFunctionKind::GeneralMgf,
        UFunctionKind::KlImprovedDr19,
        UFunctionKind::Dr19,
        UFunctionKind::ImprovedDrv10,
    ];

    /// `(a, b)` with `U = a lambda^2 + b lambda`, for the quadratic kinds.
    fn quadratic(self, eps: f64) -> Option<(f64, f64)> {
        let e2 = eps * eps;
        match self {
            UFunctionKind::ImprovedDrv10 => Some((0.5 * e2, 0.5 * e2)),
            UFunctionKind::Dr19 => Some((0.125 * e2, 0.5 * e2)),
            UFunctionKind::KlImprovedDr19 => Some((0.125 * e2, maxkl(eps))),
            UFunctionKind::GeneralMgf => None,
        }
    }
}

/// Search domain for `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lambda_max: f64,
    pub rel_tol: f64,
}

impl Default for LambdaSearch {
    fn default() -> Self {
        Self {
            lambda_max: 1e6,
            rel_tol: 1e-10,
        }
    }
}

impl LambdaSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max > 0.0) || !self.lambda_max.is_finite() {
            return Err(domain(format!(
                "lambda_max must be positive, got {}",
                self.lambda_max
            )));
        }
        if !(self.rel_tol > 0.0) {
            return Err(domain(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

/// A bound together with the `lambda` attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub lambda: f64,
    /// The optimum sits on `lambda_max`; a larger ceiling may tighten it.
    pub at_ceiling: bool,
    /// The value was replaced by the basic-composition bound.
    pub capped: bool,
}

/// `expm1(x) - x` for `x >= 0` without cancellation.
fn expm1_minus_x(x: f64) -> f64 {
    if x > 0.5 {
        return x.exp_m1() - x;
    }
    let mut term = x * x / 2.0;
    let mut sum = term;
    for n in 3..30 {
        term *= x / n as f64;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

/// `u - ln(1 + u)` without cancellation for small `|u|`.
fn u_minus_ln1p(u: f64) -> f64 {
    if u.abs() > 1e-2 {
        return u - u.ln_1p();
    }
    let mut sum = 0.0;
    let mut pow = u * u;
    for n in 2..16 {
        let term = pow / n as f64;
        sum += if n % 2 == 0 { term } else { -term };
        pow *= u;
    }
    sum
}

/// Largest KL divergence between the two output distributions of an
/// `eps`-BR GRR, over all offsets: `r - 1 - ln r` with `r = eps/(e^eps - 1)`.
pub fn maxkl(eps: f64) -> f64 {
    if eps <= 0.0 {
        return 0.0;
    }
    if eps < MAXKL_SERIES_BELOW {
        let e2 = eps * eps;
        return e2 / 8.0 - e2 * e2 / 576.0;
    }
    // r - 1 = (eps - expm1(eps)) / expm1(eps)
    let u = -expm1_minus_x(eps) / eps.exp_m1();
    u_minus_ln1p(u)
}

/// Value of the inner objective of [`h_eps`] at offset `t`.
#[inline]
pub fn h_objective(eps: f64, lambda: f64, t: f64) -> f64 {
    let m = GrrMechanism::new_unchecked(eps, t);
    lambda * (eps - t) + (m.p() * (-lambda * eps).exp_m1()).ln_1p()
}

/// `h_eps(lambda) = sup_t lambda (eps - t) + ln(1 + p_t (e^{-lambda eps} - 1))`.
pub fn h_eps(eps: f64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let e = grid_then_golden_max(
        |t| h_objective(eps, lambda, t),
        0.0,
        eps,
        H_GRID,
        1e-15 * eps,
        80,
    );
    e.value.max(0.0)
}

/// `U(kind, eps, lambda)`.
pub fn u_function(kind: UFunctionKind, eps: f64, lambda: f64) -> f64 {
    match kind.quadratic(eps) {
        Some((a, b)) => a * lambda * lambda + b * lambda,
        None => h_eps(eps, lambda),
    }
}

/// Groups equal entries: `(eps, multiplicity)`.
fn group(eps_list: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = eps_list.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = Vec::new();
    for e in v {
        match out.last_mut() {
            Some((x, n)) if *x == e => *n += 1.0,
            _ => out.push((e, 1.0)),
        }
    }
    out
}

fn check(eps_list: &[f64]) -> Result<()> {
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

/// `sum_i U(kind, eps_i, lambda)`.
pub fn u_sum(kind: UFunctionKind, eps_list: &[f64], lambda: f64) -> f64 {
    group(eps_list)
        .iter()
        .map(|&(e, n)| n * u_function(kind, e, lambda))
        .sum()
}

/// Minimizes a unimodal `g` over `(0, lambda_max]`: bracket by doubling or
/// halving from `lambda = 1`, then golden section.
fn minimize_lambda<G: FnMut(f64) -> f64>(mut g: G, search: &LambdaSearch) -> (f64, f64, bool) {
    let cap = search.lambda_max;
    let mut mid = 1.0f64.min(cap);
    let mut gm = g(mid);
    let (lo, hi);
    let up = if mid < cap {
        g((2.0 * mid).min(cap)) < gm
    } else {
        false
    };
    if up {
        let mut l = mid;
        loop {
            let next = (2.0 * mid).min(cap);
            let gn = g(next);
            if gn >= gm {
                lo = l;
                hi = next;
                break;
            }
            l = mid;
            mid = next;
            gm = gn;
            if mid >= cap {
                lo = l;
                hi = cap;
                break;
            }
        }
    } else {
        let mut h = (2.0 * mid).min(cap);
        loop {
            let next = 0.5 * mid;
            if next < 1e-300 {
                lo = 0.0;
                hi = h;
                break;
            }
            let gn = g(next);
            if gn >= gm {
                lo = next;
                hi = h;
                break;
            }
            h = mid;
            mid = next;
            gm = gn;
        }
    }
    let r = golden_min(&mut g, lo, hi, search.rel_tol * hi, 400);
    let (x, v) = if r.value <= gm {
        (r.x, r.value)
    } else {
        (mid, gm)
    };
    let at_ceiling = x >= cap * (1.0 - 1e-6);
    (x, v, at_ceiling)
}

/// `inf_lambda exp(-lambda eps_g + sum_i U(kind, eps_i, lambda))`, clamped
/// to `[0, 1]`.
pub fn generic_delta_from_u(
    kind: UFunctionKind,
    eps_list: &[f64],
    eps_g: f64,
    search: &LambdaSearch,
) -> Result<BoundValue> {
    check(eps_list)?;
    search.validate()?;
    if eps_g.is_nan() {
        return Err(domain("eps_g is NaN"));
    }
    let groups = group(eps_list);
    let g = |lambda: f64| {
        let s: f64 = groups
            .iter()
            .map(|&(e, n)| n * u_function(kind, e, lambda))
            .sum();
        s - lambda * eps_g
    };
    let (lambda, v, at_ceiling) = minimize_lambda(g, search);
    Ok(BoundValue {
        value: v.min(0.0).exp().clamp(0.0, 1.0),
        lambda,
        at_ceiling,
        capped: false,
    })
}

/// `inf_lambda (sum_i U(kind, eps_i, lambda) - ln delta_g) / lambda`,
/// capped at basic composition.
pub fn generic_epsilon_from_u(
    kind: UFunctionKind,
    eps_list: &[f64],
    delta_g: f64,
    search: &LambdaSearch,
) -> Result<BoundValue> {
    check(eps_list)?;
    search.validate()?;
    if !(delta_g > 0.0 && delta_g < 1.0) {
        return Err(domain(format!("delta_g must lie in (0, 1), got {delta_g}")));
    }
    let basic = basic_composition(eps_list);
    let c = -delta_g.ln();
    let groups = group(eps_list);
    let (lambda, v, at_ceiling) = if groups.iter().all(|&(e, _)| kind.quadratic(e).is_some()) {
        // a lambda^2 + b lambda + c over lambda is minimized at sqrt(c / a)
        let (a, b) = groups.iter().fold((0.0, 0.0), |(a, b), &(e, n)| {
            let (ai, bi) = kind.quadratic(e).expect("quadratic kind");
            (a + n * ai, b + n * bi)
        });
        let l = (c / a).sqrt();
        if l <= search.lambda_max {
            (l, b + 2.0 * (a * c).sqrt(), false)
        } else {
            let l = search.lambda_max;
            (l, a * l + b + c / l, true)
        }
    } else {
        let g = |lambda: f64| {
            let s: f64 = groups
                .iter()
                .map(|&(e, n)| n * u_function(kind, e, lambda))
                .sum();
            (s + c) / lambda
        };
        minimize_lambda(g, search)
    };
    Ok(if v >= basic {
        BoundValue {
            value: basic,
            lambda,
            at_ceiling,
            capped: true,
        }
    } else {
        BoundValue {
            value: v,
            lambda,
            at_ceiling,
            capped: false,
        }
    })
}

/// `min{sum eps_i, sum maxkl(eps_i) + sqrt(sum eps_i^2 ln(1/delta_g) / 2)}`.
pub fn optkl_epsilon(eps_list: &[f64], delta_g: f64) -> Result<f64> {
    check(eps_list)?;
    if !(delta_g > 0.0 && delta_g < 1.0) {
        return Err(domain(format!("delta_g must lie in (0, 1), got {delta_g}")));
    }
    let groups = group(eps_list);
    let kl: f64 = groups.iter().map(|&(e, n)| n * maxkl(e)).sum();
    let sq: f64 = groups.iter().map(|&(e, n)| n * e * e).sum();
    let v = kl + (0.5 * sq * (1.0 / delta_g).ln()).sqrt();
    Ok(v.min(basic_composition(eps_list)))
}

/// Upper bound on the adaptive `delta` at `eps_g` from the exact per-step
/// log-MGF.
pub fn mgf_delta(eps_list: &[f64], eps_g: f64, search: &LambdaSearch) -> Result<BoundValue> {
    generic_delta_from_u(UFunctionKind::GeneralMgf, eps_list, eps_g, search)
}

/// Smallest `eps_g` certified by [`mgf_delta`] at `delta_g`.
pub fn mgf_epsilon(eps_list: &[f64], delta_g: f64, search: &LambdaSearch) -> Result<BoundValue> {
    generic_epsilon_from_u(UFunctionKind::GeneralMgf, eps_list, delta_g, search)
}

/// `sum_i eps_i`.
pub fn basic_composition(eps_list: &[f64]) -> f64 {
    eps_list.iter().sum()
}
