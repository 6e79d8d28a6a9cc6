//! Method dispatch for `delta` and `eps_g` queries, curve tables and query
//! budgets.
//!
//! All methods take a list of per-mechanism BR parameters. Entries equal to
//! zero describe data-independent mechanisms and are dropped before
//! dispatch. Adaptive upper bounds are capped by basic composition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptive::{
    adaptive_edge_high, adaptive_edge_low, delta_adaptive_lb, AdaptiveSolverConfig,
};
use crate::error::{domain, Error, Result};
use crate::mgf::{
    basic_composition, generic_delta_from_u, generic_epsilon_from_u, optkl_epsilon, LambdaSearch,
    UFunctionKind,
};
use crate::nonadaptive::{
    delta_opt_nonadaptive_hom, dp_optcomp_het, dp_optcomp_hom, trivial_delta, HomogeneousQuery,
};
use crate::numeric::root_nonincreasing;
use crate::oracle::{brute_force_nonadaptive, BRUTE_FORCE_MAX_K};
use crate::par::{map_indexed, Exec};

/// Largest `k` accepted for `br-optcomp` curves.
pub const BR_CURVE_MAX_K: usize = 100_000;

/// Absolute tolerance on inverted `eps_g` values.
pub const EPS_G_TOL: f64 = 1e-12;

/// Floor applied to `ln delta` while inverting, keeping secant steps finite.
const LN_DELTA_FLOOR: f64 = -745.0;

/// Values this small print as zero and are flagged.
pub const UNDERFLOW: f64 = 1e-300;

/// Grid used for heterogeneous `br-optcomp` within the brute-force size.
pub const HET_BR_GRID: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    Basic,
    DpOptcomp,
    DpOptcompHalf,
    BrOptcomp,
    AdaptiveLb,
    Dr19,
    Drv10,
    Optkl,
    Mgf,
    EdgeHigh,
    EdgeLow,
}

impl MethodId {
    pub const ALL: [MethodId; 11] = [
        MethodId::Basic,
        MethodId::DpOptcomp,
        MethodId::DpOptcompHalf,
        MethodId::BrOptcomp,
        MethodId::AdaptiveLb,
        MethodId::Dr19,
        MethodId::Drv10,
        MethodId::Optkl,
        MethodId::Mgf,
        MethodId::EdgeHigh,
        MethodId::EdgeLow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Basic => "basic",
            MethodId::DpOptcomp => "dp-optcomp",
            MethodId::DpOptcompHalf => "dp-optcomp-half",
            MethodId::BrOptcomp => "br-optcomp",
            MethodId::AdaptiveLb => "adaptive-lb",
            MethodId::Dr19 => "dr19",
            MethodId::Drv10 => "drv10",
            MethodId::Optkl => "optkl",
            MethodId::Mgf => "mgf",
            MethodId::EdgeHigh => "edge-high",
            MethodId::EdgeLow => "edge-low",
        }
    }

    fn u_kind(self) -> Option<UFunctionKind> {
        match self {
            MethodId::Dr19 => Some(UFunctionKind::Dr19),
            MethodId::Drv10 => Some(UFunctionKind::ImprovedDrv10),
            MethodId::Optkl => Some(UFunctionKind::KlImprovedDr19),
            MethodId::Mgf => Some(UFunctionKind::GeneralMgf),
            _ => None,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = MethodId::ALL.iter().map(|m| m.name()).collect();
                domain(format!(
                    "unknown method '{s}'; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Solver settings shared by all methods.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AccountantOptions {
    pub adaptive: AdaptiveSolverConfig,
    pub lambda: LambdaSearch,
    pub exec: Exec,
}

/// A computed quantity with solver metadata (`key=value` pairs joined by
/// `;`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Computed {
    pub value: f64,
    pub meta: String,
}

impl Computed {
    fn new(value: f64, meta: impl Into<String>) -> Self {
        Self {
            value,
            meta: meta.into(),
        }
    }
}

/// One row of a curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub k: usize,
    pub method: MethodId,
    pub eps: f64,
    pub delta_g: f64,
    pub eps_g: f64,
    pub solver_meta: String,
}

fn clean(eps_list: &[f64]) -> Result<Vec<f64>> {
    if let Some(e) = eps_list.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(domain(format!(
            "every eps must be finite and nonnegative, got {e}"
        )));
    }
    Ok(eps_list.iter().copied().filter(|&e| e > 0.0).collect())
}

fn homogeneous(list: &[f64]) -> Option<(f64, usize)> {
    let first = *list.first()?;
    list.iter()
        .all(|&e| e == first)
        .then_some((first, list.len()))
}

fn refuse_heterogeneous(method: MethodId, k: usize) -> Error {
    Error::Unsupported(format!(
        "{method} for {k} mechanisms with different eps: no efficient exact algorithm is known \
         for heterogeneous optimal BR composition (it is an open problem); exact evaluation is \
         limited to {BRUTE_FORCE_MAX_K} mechanisms"
    ))
}

fn require_homogeneous(method: MethodId, list: &[f64]) -> Result<(f64, usize)> {
    homogeneous(list).ok_or_else(|| {
        Error::Unsupported(format!("{method} is defined for identical eps values only"))
    })
}

/// `delta` at `eps_g` for `method`.
pub fn delta(
    method: MethodId,
    eps_list: &[f64],
    eps_g: f64,
    opts: &AccountantOptions,
) -> Result<Computed> {
    if eps_g.is_nan() {
        return Err(domain("eps_g is NaN"));
    }
    let list = clean(eps_list)?;
    if list.is_empty() {
        return Ok(Computed::new(trivial_delta(eps_g), "no-mechanisms"));
    }
    let total = basic_composition(&list);
    let k = list.len();
    let out = match method {
        MethodId::Basic => {
            if eps_g >= total {
                Computed::new(0.0, "basic")
            } else {
                Computed::new(1.0, "basic;vacuous_below_sum_eps")
            }
        }
        MethodId::DpOptcomp | MethodId::DpOptcompHalf => {
            let scale = if method == MethodId::DpOptcompHalf {
                0.5
            } else {
                1.0
            };
            match homogeneous(&list) {
                Some((e, k)) => Computed::new(dp_optcomp_hom(scale * e, k, eps_g)?, "binomial"),
                None => {
                    let scaled: Vec<f64> = list.iter().map(|e| scale * e).collect();
                    Computed::new(dp_optcomp_het(&scaled, eps_g)?, "subset-sum")
                }
            }
        }
        MethodId::BrOptcomp => match homogeneous(&list) {
            Some((e, k)) => {
                let o = delta_opt_nonadaptive_hom(&HomogeneousQuery::new(e, k, eps_g)?)?;
                let half = dp_optcomp_hom(0.5 * e, k, eps_g)?;
                let mut meta = format!("candidates;argmax_t={}", format_sig(o.argmax_t));
                if (o.delta - half).abs() <= 1e-12 {
                    meta.push_str(";equals_dp_half=true");
                }
                Computed::new(o.delta, meta)
            }
            None if k <= BRUTE_FORCE_MAX_K => {
                let r = brute_force_nonadaptive(&list, eps_g, HET_BR_GRID, opts.exec)?;
                Computed::new(
                    r.delta,
                    format!(
                        "brute-force;grid={};resolution={}",
                        HET_BR_GRID,
                        format_sig(r.resolution_error)
                    ),
                )
            }
            None => return Err(refuse_heterogeneous(method, k)),
        },
        MethodId::AdaptiveLb => {
            let cfg = AdaptiveSolverConfig {
                exec: opts.exec,
                ..opts.adaptive
            };
            let lb = delta_adaptive_lb(&list, eps_g, &cfg)?;
            Computed::new(lb.delta, format!("lower-bound;{}", lb.meta))
        }
        MethodId::Dr19 | MethodId::Drv10 | MethodId::Optkl | MethodId::Mgf => {
            if eps_g >= total {
                Computed::new(0.0, "capped=basic")
            } else {
                let kind = method.u_kind().expect("U-function method");
                let b = generic_delta_from_u(kind, &list, eps_g, &opts.lambda)?;
                let mut meta = format!("lambda={}", format_sig(b.lambda));
                if b.at_ceiling {
                    meta.push_str(";lambda_at_ceiling");
                }
                Computed::new(b.value, meta)
            }
        }
        MethodId::EdgeHigh => {
            let (e, k) = require_homogeneous(method, &list)?;
            Computed::new(adaptive_edge_high(e, k, eps_g)?, "equal-offset")
        }
        MethodId::EdgeLow => {
            let (e, k) = require_homogeneous(method, &list)?;
            Computed::new(adaptive_edge_low(e, k, eps_g)?, "equal-offset")
        }
    };
    Ok(out)
}

fn check_delta_g(delta_g: f64) -> Result<()> {
    if !(delta_g > 0.0 && delta_g < 1.0) {
        return Err(domain(format!("delta_g must lie in (0, 1), got {delta_g}")));
    }
    Ok(())
}

/// Smallest `eps_g` with `delta(eps_g) <= delta_g` for `method`.
pub fn epsilon(
    method: MethodId,
    eps_list: &[f64],
    delta_g: f64,
    opts: &AccountantOptions,
) -> Result<Computed> {
    check_delta_g(delta_g)?;
    let list = clean(eps_list)?;
    if list.is_empty() {
        return Ok(Computed::new((-delta_g).ln_1p().max(0.0), "no-mechanisms"));
    }
    let total = basic_composition(&list);
    match method {
        MethodId::Basic => return Ok(Computed::new(total, "closed-form")),
        MethodId::Optkl => return Ok(Computed::new(optkl_epsilon(&list, delta_g)?, "closed-form")),
        MethodId::Dr19 | MethodId::Drv10 | MethodId::Mgf => {
            let kind = method.u_kind().expect("U-function method");
            let b = generic_epsilon_from_u(kind, &list, delta_g, &opts.lambda)?;
            let mut meta = format!("dual;lambda={}", format_sig(b.lambda));
            if b.capped {
                meta.push_str(";capped=basic");
            }
            if b.at_ceiling {
                meta.push_str(";lambda_at_ceiling");
            }
            return Ok(Computed::new(b.value, meta));
        }
        _ => {}
    }
    // delta is constant 1 - e^{eps_g} below -sum eps
    if delta_g >= 1.0 - (-total).exp() {
        let (lo_ok, hi_ok) = edge_window(method, &list);
        let x = (-delta_g).ln_1p();
        if x >= lo_ok && x <= hi_ok {
            return Ok(Computed::new(x, "trivial-region"));
        }
    }
    let (lo, hi) = edge_window(method, &list);
    let lo = lo.max(-total);
    let hi = hi.min(total);
    let f = |x: f64| {
        delta(method, &list, x, opts)
            .map(|c| c.value)
            .unwrap_or(f64::NAN)
    };
    let d_lo = f(lo);
    if d_lo.is_nan() {
        return Err(domain(format!(
            "{method} delta is not a number at eps_g = {lo}"
        )));
    }
    if d_lo < delta_g {
        return Err(Error::Unreachable {
            target: delta_g,
            boundary: d_lo,
        });
    }
    let d_hi = f(hi);
    if d_hi > delta_g {
        return Err(Error::Unreachable {
            target: delta_g,
            boundary: d_hi,
        });
    }
    // ln delta is far closer to linear in eps_g than delta itself
    let r = if delta_g > 0.0 {
        let floor = LN_DELTA_FLOOR.min(delta_g.ln() - 1.0);
        root_nonincreasing(|x| f(x).ln().max(floor), lo, hi, delta_g.ln(), EPS_G_TOL)
    } else {
        root_nonincreasing(f, lo, hi, delta_g, EPS_G_TOL)
    };
    let meta = delta(method, &list, r.x, opts)?.meta;
    Ok(Computed::new(
        r.x,
        format!("inverted;iters={};{meta}", r.iterations),
    ))
}

/// Range of `eps_g` on which `method` is defined.
fn edge_window(method: MethodId, list: &[f64]) -> (f64, f64) {
    let k = list.len() as f64;
    let e = list[0];
    match method {
        MethodId::EdgeHigh => ((k - 1.0) * e, f64::INFINITY),
        MethodId::EdgeLow => (f64::NEG_INFINITY, -(k - 1.0) * e),
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

/// `eps_g` at `delta_g` for every `(method, k)` with `k = 1..=k_max`, rows
/// sorted by method name then `k`.
pub fn curve(
    eps: f64,
    k_max: usize,
    delta_g: f64,
    methods: &[MethodId],
    opts: &AccountantOptions,
) -> Result<Vec<CurveRow>> {
    check_delta_g(delta_g)?;
    if k_max == 0 {
        return Err(domain("k_max must be at least 1"));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(domain(format!(
            "eps must be positive and finite, got {eps}"
        )));
    }
    if methods.contains(&MethodId::BrOptcomp) && k_max > BR_CURVE_MAX_K {
        return Err(Error::SizeCap {
            what: "k_max for br-optcomp",
            got: k_max,
            max: BR_CURVE_MAX_K,
        });
    }
    if methods.contains(&MethodId::AdaptiveLb) && k_max > opts.adaptive.depth_cap {
        return Err(Error::SizeCap {
            what: "k_max for adaptive-lb",
            got: k_max,
            max: opts.adaptive.depth_cap,
        });
    }
    let mut ms: Vec<MethodId> = methods.to_vec();
    ms.sort_by_key(|m| m.name());
    ms.dedup();
    let jobs: Vec<(MethodId, usize)> = ms
        .iter()
        .flat_map(|&m| (1..=k_max).map(move |k| (m, k)))
        .collect();
    // inner solvers run sequentially; the sweep itself is the parallel axis
    let inner = AccountantOptions {
        exec: Exec::Sequential,
        adaptive: AdaptiveSolverConfig {
            exec: Exec::Sequential,
            ..opts.adaptive
        },
        ..*opts
    };
    let rows = map_indexed(opts.exec, jobs.len(), |i| {
        let (m, k) = jobs[i];
        epsilon(m, &vec![eps; k], delta_g, &inner).map(|c| CurveRow {
            k,
            method: m,
            eps,
            delta_g,
            eps_g: c.value,
            solver_meta: c.meta,
        })
    });
    rows.into_iter().collect()
}

/// Largest `k` such that `k` copies of `eps` stay within `(budget, delta_g)`
/// under `method`; `0` if even one does not.
pub fn max_k_within_budget(
    method: MethodId,
    eps: f64,
    delta_g: f64,
    budget: f64,
    opts: &AccountantOptions,
) -> Result<usize> {
    check_delta_g(delta_g)?;
    const LIMIT: usize = 1 << 24;
    let fits = |k: usize| -> Result<bool> {
        Ok(delta(method, &vec![eps; k], budget, opts)?.value <= delta_g)
    };
    if !fits(1)? {
        return Ok(0);
    }
    let mut lo = 1;
    let mut hi = 2;
    while fits(hi)? {
        lo = hi;
        hi *= 2;
        if hi > LIMIT {
            return Err(Error::SizeCap {
                what: "query budget search",
                got: hi,
                max: LIMIT,
            });
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Formats with 12 significant digits, `%g` style.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        // rounding may carry into a new digit; reformat once
        if s.replace(['-', '.'], "").trim_start_matches('0').len() > 12 {
            return format_sci(x);
        }
        s
    } else {
        format_sci(x)
    }
}

fn format_sci(x: f64) -> String {
    let s = format!("{x:.11e}");
    let (mant, exp) = s.split_once('e').expect("scientific format");
    let mant = if mant.contains('.') {
        mant.trim_end_matches('0').trim_end_matches('.')
    } else {
        mant
    };
    let e: i32 = exp.parse().expect("exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

/// Formats a probability; values below [`UNDERFLOW`] print as `0` and the
/// flag is set.
pub fn format_delta(x: f64) -> (String, bool) {
    if x != 0.0 && x.abs() < UNDERFLOW {
        ("0".into(), true)
    } else {
        (format_sig(x), false)
    }
}
