//! Self-check suite comparing closed forms with independent oracles.

use serde::{Deserialize, Serialize};

use crate::adaptive::{adaptive_edge_high, gap_certificate, AdaptiveSolverConfig};
use crate::grr::{counting_query_mech, cq_t_value, grr_probs, GrrMechanism};
use crate::mgf::{generic_epsilon_from_u, optkl_epsilon, LambdaSearch, UFunctionKind};
use crate::nonadaptive::{
    delta_hom_fixed_t, delta_opt_nonadaptive_hom, df_ell_dt, dp_optcomp_het, f_ell,
    HomogeneousQuery,
};
use crate::oracle::{
    brute_force_nonadaptive, finite_diff_check, hockey_stick, simulate_adaptive_game,
};
use crate::par::Exec;
use crate::strategy::AdversaryStrategy;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationLevel {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub check: String,
    pub params: String,
    pub expected: f64,
    pub got: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ValidationRecord {
    fn close(check: &str, params: String, expected: f64, got: f64, tol: f64) -> Self {
        Self {
            check: check.into(),
            params,
            expected,
            got,
            tol,
            pass: (got - expected).abs() <= tol,
        }
    }

    /// Passes when `got > expected + tol`.
    fn above(check: &str, params: String, expected: f64, got: f64, tol: f64) -> Self {
        Self {
            check: check.into(),
            params,
            expected,
            got,
            tol,
            pass: got > expected + tol,
        }
    }
}

/// Runs the suite. Deterministic for a fixed `seed`.
pub fn run_validation(
    level: ValidationLevel,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ValidationRecord>> {
    let mut out = Vec::new();
    let full = level == ValidationLevel::Full;

    let (p, q) = grr_probs(1.0, 0.5)?;
    out.push(ValidationRecord::close(
        "grr-half-offset",
        "eps=1 t=0.5".into(),
        1.0 / (1.0 + (-0.5f64).exp()),
        q,
        1e-12,
    ));
    out.push(ValidationRecord::close(
        "grr-ratio",
        "eps=1 t=0.5".into(),
        0.5f64.exp() * p,
        q,
        1e-12,
    ));

    let m = GrrMechanism::new(1.0, 0.5)?;
    out.push(ValidationRecord::close(
        "hockey-stick-vs-binomial",
        "eps=1 k=1 t=0.5 eps_g=0".into(),
        hockey_stick(&m.pair(), 0.0),
        delta_hom_fixed_t(&HomogeneousQuery::new(1.0, 1, 0.0)?, 0.5)?,
        1e-12,
    ));

    let bf_cases: &[(f64, usize, f64, usize)] = if full {
        &[(1.0, 2, 0.3, 400), (0.1, 3, 0.05, 400), (1.0, 3, -1.2, 400)]
    } else {
        &[(1.0, 2, 0.3, 200), (1.0, 3, 0.8, 60)]
    };
    for &(eps, k, g, grid) in bf_cases {
        let exact = delta_opt_nonadaptive_hom(&HomogeneousQuery::new(eps, k, g)?)?.delta;
        let bf = brute_force_nonadaptive(&vec![eps; k], g, grid, exec)?.delta;
        out.push(ValidationRecord::close(
            "nonadaptive-vs-brute-force",
            format!("eps={eps} k={k} eps_g={g} grid={grid}"),
            exact,
            bf,
            1e-5,
        ));
    }

    for &(eps, k, g) in &[(0.6, 5, 0.4), (1.3, 8, -0.9)] {
        let half: Vec<f64> = vec![eps / 2.0; k];
        out.push(ValidationRecord::close(
            "dp-correspondence",
            format!("eps={eps} k={k} eps_g={g}"),
            dp_optcomp_het(&half, g)?,
            delta_hom_fixed_t(&HomogeneousQuery::new(eps, k, g)?, eps / 2.0)?,
            1e-10,
        ));
    }

    {
        let q = HomogeneousQuery::new(0.7, 9, 0.8)?;
        let mut worst: f64 = 0.0;
        for ell in 0..9 {
            let e = finite_diff_check(
                |t| f_ell(&q, ell, t).unwrap_or(f64::NAN),
                |t| df_ell_dt(&q, ell, t).unwrap_or(f64::NAN),
                &[0.1, 0.25, 0.4, 0.55],
            );
            worst = worst.max(e);
        }
        out.push(ValidationRecord::close(
            "derivative-identity",
            "eps=0.7 k=9 eps_g=0.8".into(),
            0.0,
            worst,
            1e-6,
        ));
    }

    let cfg = AdaptiveSolverConfig {
        exec,
        ..Default::default()
    };
    let gap_cases: &[(usize, f64)] = if full {
        &[(2, 0.0), (4, 0.5), (5, 1.0)]
    } else {
        &[(2, 0.0), (4, 0.5)]
    };
    for &(k, g) in gap_cases {
        let c = gap_certificate(1.0, k, g, &cfg)?;
        out.push(ValidationRecord::above(
            "adaptive-gap-strict",
            format!("eps=1 k={k} eps_g={g}"),
            c.delta_nonadaptive,
            c.delta_adaptive_lb.min(c.strategy_value),
            c.tolerance,
        ));
    }

    {
        let (k, g) = (3, 2.2);
        out.push(ValidationRecord::close(
            "edge-high-vs-nonadaptive",
            format!("eps=1 k={k} eps_g={g}"),
            delta_opt_nonadaptive_hom(&HomogeneousQuery::new(1.0, k, g)?)?.delta,
            adaptive_edge_high(1.0, k, g)?,
            1e-8,
        ));
    }

    {
        let list = [0.05, 0.2, 0.1, 0.4, 0.3];
        let closed = optkl_epsilon(&list, 1e-6)?;
        let dual = generic_epsilon_from_u(
            UFunctionKind::KlImprovedDr19,
            &list,
            1e-6,
            &LambdaSearch::default(),
        )?;
        out.push(ValidationRecord::close(
            "optkl-dual",
            "eps=[0.05,0.2,0.1,0.4,0.3] delta=1e-6".into(),
            closed,
            dual.value,
            1e-9 * closed,
        ));
    }

    {
        let n: u64 = if full { 10_000_000 } else { 200_000 };
        let s = AdversaryStrategy::constant(vec![1.0, 1.0], &[0.5, 0.5])?;
        let r = simulate_adaptive_game(&s, 0.0, n, seed, exec)?;
        let exact = crate::strategy::evaluate_strategy(&s, 0.0);
        out.push(ValidationRecord::close(
            "monte-carlo-fixed-offset",
            format!("eps=1 k=2 t=0.5 eps_g=0 n={n} seed={seed}"),
            exact,
            r.delta_hat,
            4.0 * r.half_width_95,
        ));
        if full {
            let c = gap_certificate(1.0, 4, 0.5, &cfg)?;
            let strat = c.strategy.expect("strategy returned");
            let r = simulate_adaptive_game(&strat, 0.5, n, seed, exec)?;
            out.push(ValidationRecord::close(
                "monte-carlo-adaptive-strategy",
                format!("eps=1 k=4 eps_g=0.5 n={n} seed={seed}"),
                c.strategy_value,
                r.delta_hat,
                4.0 * r.half_width_95,
            ));
        }
    }

    {
        let x = vec![vec![1u8, 0, 1, 1], vec![0, 1, 1, 0]];
        let mut xp = x.clone();
        xp.push(vec![1, 1, 0, 0]);
        let eps = 0.9;
        let t = cq_t_value(&x, &xp, 4, eps)?;
        let a = counting_query_mech(&x, 4, eps)?;
        let b = counting_query_mech(&xp, 4, eps)?;
        let worst = a
            .iter()
            .zip(&b)
            .map(|(u, v)| {
                let lr = u.ln() - v.ln();
                (lr - t).abs().min((lr - t + eps).abs())
            })
            .fold(0.0, f64::max);
        out.push(ValidationRecord::close(
            "counting-query-two-point",
            "n=2 d=4 eps=0.9".into(),
            0.0,
            worst,
            1e-12,
        ));
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suite_passes() {
        let r = run_validation(ValidationLevel::Fast, 1, Exec::Parallel).unwrap();
        for rec in &r {
            assert!(rec.pass, "{rec:?}");
        }
        let again = run_validation(ValidationLevel::Fast, 1, Exec::Sequential).unwrap();
        assert_eq!(r, again);
    }
}
