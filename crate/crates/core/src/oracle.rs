//! First-principles oracles used to validate the closed forms: hockey-stick
//! divergence on finite distributions, brute-force offset grids, Monte Carlo
//! play of the adaptive composition game and finite-difference derivative
//! checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grr::{FiniteMechanismPair, GrrMechanism};
use crate::numeric::{golden_max, CompensatedSum};
use crate::par::{map_indexed, Exec};
use crate::strategy::AdversaryStrategy;

pub use crate::strategy::evaluate_strategy;

/// Largest `k` accepted by [`brute_force_nonadaptive`].
pub const BRUTE_FORCE_MAX_K: usize = 3;

/// Shards used by [`simulate_adaptive_game`]; fixed so results do not depend
/// on the thread count.
pub const SIM_SHARDS: u64 = 64;

/// `sum_y max{P_x(y) - e^{eps_g} P_x'(y), 0}`.
pub fn hockey_stick(pair: &FiniteMechanismPair, eps_g: f64) -> f64 {
    let w = eps_g.exp();
    let s: CompensatedSum = pair
        .probs_x
        .iter()
        .zip(&pair.probs_x_prime)
        .map(|(&a, &b)| (a - w * b).max(0.0))
        .collect();
    s.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub delta: f64,
    pub argmax: Vec<f64>,
    pub grid_points: usize,
    /// Largest change of the objective one grid cell away from the argmax
    /// along any axis; an estimate of the grid resolution error.
    pub resolution_error: f64,
}

/// Per-coordinate GRR tables: `q`, `1-q`, `p`, `1-p` at each grid offset.
struct Axis {
    eps: f64,
    ts: Vec<f64>,
    q: Vec<[f64; 2]>,
    p: Vec<[f64; 2]>,
}

impl Axis {
    fn new(eps: f64, g: usize) -> Self {
        let ts: Vec<f64> = (0..g)
            .map(|j| {
                if j == g - 1 {
                    eps
                } else {
                    eps * j as f64 / (g - 1) as f64
                }
            })
            .collect();
        let (q, p) = ts.iter().map(|&t| probs(eps, t)).unzip();
        Self { eps, ts, q, p }
    }
}

fn probs(eps: f64, t: f64) -> ([f64; 2], [f64; 2]) {
    let m = GrrMechanism::new_unchecked(eps, t);
    ([m.q(), m.one_minus_q()], [m.p(), m.one_minus_p()])
}

/// Hockey-stick divergence of a product of two-point distributions, by
/// enumerating outcome vectors.
fn product_hockey_stick(q: &[[f64; 2]], p: &[[f64; 2]], w: f64) -> f64 {
    let k = q.len();
    let mut s = 0.0;
    for bits in 0..(1usize << k) {
        let (mut a, mut b) = (1.0, 1.0);
        for i in 0..k {
            let o = (bits >> i) & 1;
            a *= q[i][o];
            b *= p[i][o];
        }
        let v = a - w * b;
        if v > 0.0 {
            s += v;
        }
    }
    s
}

fn eval_point(eps: &[f64], t: &[f64], w: f64) -> f64 {
    let (q, p): (Vec<_>, Vec<_>) = eps.iter().zip(t).map(|(&e, &ti)| probs(e, ti)).unzip();
    product_hockey_stick(&q, &p, w)
}

/// Maximum over a product grid of offsets of the nonadaptive `delta`,
/// followed by coordinate-wise golden-section refinement of the best cell.
/// Works directly from the output distributions, independent of the
/// binomial closed form. Homogeneous inputs only scan sorted offset tuples.
pub fn brute_force_nonadaptive(
    eps_list: &[f64],
    eps_g: f64,
    grid_points: usize,
    exec: Exec,
) -> Result<BruteForceResult> {
    let k = eps_list.len();
    if k == 0 {
        return Err(domain("empty eps list"));
    }
    if k > BRUTE_FORCE_MAX_K {
        return Err(Error::SizeCap {
            what: "number of mechanisms for the brute-force grid",
            got: k,
            max: BRUTE_FORCE_MAX_K,
        });
    }
    if grid_points < 2 {
        return Err(Error::Config(format!(
            "grid_points must be at least 2, got {grid_points}"
        )));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(domain(format!(
            "every eps must be positive and finite, got {e}"
        )));
    }
    let g = grid_points;
    let w = eps_g.exp();
    let axes: Vec<Axis> = eps_list.iter().map(|&e| Axis::new(e, g)).collect();
    let symmetric = eps_list.iter().all(|&e| e == eps_list[0]);

    // best over each slice with a fixed first index
    let slices = map_indexed(exec, g, |i0| {
        let mut best = (f64::NEG_INFINITY, [i0, 0, 0]);
        let mut q = vec![[0.0; 2]; k];
        let mut p = vec![[0.0; 2]; k];
        q[0] = axes[0].q[i0];
        p[0] = axes[0].p[i0];
        match k {
            1 => best = (product_hockey_stick(&q, &p, w), [i0, 0, 0]),
            2 => {
                let start = if symmetric { i0 } else { 0 };
                for i1 in start..g {
                    q[1] = axes[1].q[i1];
                    p[1] = axes[1].p[i1];
                    let v = product_hockey_stick(&q, &p, w);
                    if v > best.0 {
                        best = (v, [i0, i1, 0]);
                    }
                }
            }
            _ => {
                let start = if symmetric { i0 } else { 0 };
                for i1 in start..g {
                    q[1] = axes[1].q[i1];
                    p[1] = axes[1].p[i1];
                    let start2 = if symmetric { i1 } else { 0 };
                    for i2 in start2..g {
                        q[2] = axes[2].q[i2];
                        p[2] = axes[2].p[i2];
                        let v = product_hockey_stick(&q, &p, w);
                        if v > best.0 {
                            best = (v, [i0, i1, i2]);
                        }
                    }
                }
            }
        }
        best
    });
    let (mut best_v, idx) = slices
        .into_iter()
        .fold((f64::NEG_INFINITY, [0; 3]), |acc, s| {
            if s.0 > acc.0 {
                s
            } else {
                acc
            }
        });
    let mut t: Vec<f64> = (0..k).map(|i| axes[i].ts[idx[i]]).collect();

    let resolution_error = (0..k)
        .flat_map(|i| [-1i64, 1].map(move |d| (i, d)))
        .filter_map(|(i, d)| {
            let j = idx[i] as i64 + d;
            (0..g as i64).contains(&j).then(|| {
                let mut u = t.clone();
                u[i] = axes[i].ts[j as usize];
                (eval_point(eps_list, &u, w) - best_v).abs()
            })
        })
        .fold(0.0, f64::max);

    // coordinate refinement inside the neighbouring cells
    for _ in 0..4 {
        for i in 0..k {
            let step = axes[i].eps / (g - 1) as f64;
            let lo = (t[i] - step).max(0.0);
            let hi = (t[i] + step).min(axes[i].eps);
            let mut u = t.clone();
            let r = golden_max(
                |x| {
                    u[i] = x;
                    eval_point(eps_list, &u, w)
                },
                lo,
                hi,
                1e-14,
                60,
            );
            if r.value > best_v {
                best_v = r.value;
                t[i] = r.x;
            }
        }
    }
    Ok(BruteForceResult {
        delta: best_v.clamp(0.0, 1.0),
        argmax: t,
        grid_points: g,
        resolution_error,
    })
}

/// Empirical hockey-stick estimate from simulated plays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub delta_hat: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub half_width_95: f64,
}

/// Counts of the indicator pairs `(L_x > eps_g, L_x' > eps_g)`; merging is
/// addition, hence associative.
#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    n: [u64; 4],
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        for i in 0..4 {
            self.n[i] += o.n[i];
        }
        self
    }
}

/// Plays the composition game `n` times on each side with the adversary
/// `strategy` and estimates
/// `P_x[L > eps_g] - e^{eps_g} P_x'[L > eps_g]`.
///
/// Deterministic for a fixed `(seed, n)` whatever the executor: the work is
/// split into [`SIM_SHARDS`] shards, shard `s` drawing from the ChaCha
/// stream `s` of `seed`.
pub fn simulate_adaptive_game(
    strategy: &AdversaryStrategy,
    eps_g: f64,
    n: u64,
    seed: u64,
    exec: Exec,
) -> Result<SimulationReport> {
    if n == 0 {
        return Err(domain("need at least one sample"));
    }
    let k = strategy.depth();
    let eps = strategy.eps_list();
    // per node: P(outcome 0) on each side and the two loss increments
    let nodes: Vec<(f64, f64, f64, f64)> = strategy
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let e = eps[(usize::BITS - 1 - (i + 1).leading_zeros()) as usize];
            let m = GrrMechanism::new_unchecked(e, t);
            (m.q(), m.p(), t, t - e)
        })
        .collect();
    let play = |rng: &mut ChaCha8Rng, x_side: bool| -> f64 {
        let mut node = 0usize;
        let mut loss = 0.0;
        for _ in 0..k {
            let (q, p, l0, l1) = nodes[node];
            let p0 = if x_side { q } else { p };
            if rng.gen::<f64>() < p0 {
                loss += l0;
                node = 2 * node + 1;
            } else {
                loss += l1;
                node = 2 * node + 2;
            }
        }
        loss
    };
    let tallies = map_indexed(exec, SIM_SHARDS as usize, |s| {
        let s = s as u64;
        let count = n / SIM_SHARDS + u64::from(s < n % SIM_SHARDS);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s);
        let mut t = Tally::default();
        for _ in 0..count {
            let a = play(&mut rng, true) > eps_g;
            let b = play(&mut rng, false) > eps_g;
            t.n[usize::from(a) * 2 + usize::from(b)] += 1;
        }
        t
    });
    let t = tallies.into_iter().fold(Tally::default(), Tally::merge);
    let w = eps_g.exp();
    let nf = n as f64;
    // sample value z = a - w b for each combination
    let z = [0.0, -w, 1.0, 1.0 - w];
    let mean = (0..4).map(|i| t.n[i] as f64 * z[i]).sum::<f64>() / nf;
    let var = if n > 1 {
        (0..4)
            .map(|i| t.n[i] as f64 * (z[i] - mean).powi(2))
            .sum::<f64>()
            / (nf - 1.0)
    } else {
        0.0
    };
    Ok(SimulationReport {
        delta_hat: mean,
        n_samples: n,
        seed,
        half_width_95: 1.96 * (var / nf).sqrt(),
    })
}

/// Worst relative error of `df` against central differences of `f` at
/// `points`, with step `1e-6 max(1, |x|)`.
///
/// The error is measured against `max(|df|, 1e-3 |f|)` so that stationary
/// points, where `df` vanishes, are judged on the scale of `f`.
pub fn finite_diff_check<F, D>(f: F, df: D, points: &[f64]) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    points
        .iter()
        .map(|&x| {
            let h = 1e-6 * x.abs().max(1.0);
            let fd = (f(x + h) - f(x - h)) / (2.0 * h);
            let d = df(x);
            let scale = d.abs().max(1e-3 * f(x).abs()).max(f64::MIN_POSITIVE);
            (fd - d).abs() / scale
        })
        .fold(0.0, f64::max)
}

/// Same error measure as [`finite_diff_check`], but the numerical derivative
/// is a Richardson table over central differences with steps
/// `0.1 r, 0.05 r, ...`, where `r` is the distance from the point to the
/// nearest singularity or domain edge. Each entry of `points` is `(x, r)`.
/// `f` must be analytic on `(x - r, x + r)`.
pub fn finite_diff_check_extrapolated<F, D>(f: F, df: D, points: &[(f64, f64)]) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    const LEVELS: usize = 5;
    points
        .iter()
        .map(|&(x, r)| {
            let c = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
            let mut table: Vec<f64> = (0..LEVELS)
                .map(|j| c(0.1 * r / (1u32 << j) as f64))
                .collect();
            for m in 1..LEVELS {
                let p = 4f64.powi(m as i32);
                for j in (m..LEVELS).rev() {
                    table[j] = (p * table[j] - table[j - 1]) / (p - 1.0);
                }
            }
            let fd = table[LEVELS - 1];
            let d = df(x);
            let scale = d.abs().max(1e-3 * f(x).abs()).max(f64::MIN_POSITIVE);
            (fd - d).abs() / scale
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const DELTA_K1: f64 = 0.244_918_662_403_709_13;

    #[test]
    fn hockey_stick_basics() {
        let same = FiniteMechanismPair::new(vec![0.3, 0.7], vec![0.3, 0.7]).unwrap();
        assert_eq!(hockey_stick(&same, 0.0), 0.0);
        let grr = GrrMechanism::new(1.0, 0.5).unwrap().pair();
        assert_relative_eq!(hockey_stick(&grr, 0.0), DELTA_K1, max_relative = 1e-13);
        assert_eq!(hockey_stick(&grr, 0.5 + 1e-12), 0.0);
    }

    #[test]
    fn brute_force_k1() {
        let r = brute_force_nonadaptive(&[1.0], 0.0, 1001, Exec::Sequential).unwrap();
        assert_relative_eq!(r.delta, DELTA_K1, max_relative = 1e-10);
        assert!((r.argmax[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn brute_force_k2_on_diagonal() {
        let r = brute_force_nonadaptive(&[1.0, 1.0], 0.0, 301, Exec::Parallel).unwrap();
        assert_relative_eq!(r.delta, 0.288_317_262_368_634_2, max_relative = 1e-8);
        assert!((r.argmax[0] - r.argmax[1]).abs() < 1e-3);
    }

    #[test]
    fn brute_force_cap() {
        assert!(matches!(
            brute_force_nonadaptive(&[1.0; 4], 0.0, 10, Exec::Sequential),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn deterministic_strategy_gives_zero() {
        let s = AdversaryStrategy::constant(vec![1.0, 1.0], &[1.0, 1.0]).unwrap();
        let r = simulate_adaptive_game(&s, 2.0, 10_000, 7, Exec::Parallel).unwrap();
        assert_eq!(r.delta_hat, 0.0);
        assert_eq!(r.half_width_95, 0.0);
    }

    #[test]
    fn simulation_is_reproducible_across_executors() {
        let s = AdversaryStrategy::constant(vec![1.0, 1.0], &[0.5, 0.5]).unwrap();
        let a = simulate_adaptive_game(&s, 0.0, 50_000, 11, Exec::Sequential).unwrap();
        let b = simulate_adaptive_game(&s, 0.0, 50_000, 11, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert!((a.delta_hat - DELTA_K1).abs() < 4.0 * a.half_width_95);
    }

    #[test]
    fn finite_diff_on_linear() {
        let e = finite_diff_check(|x| 3.0 * x + 1.0, |_| 3.0, &[0.0, 1.0, -5.0]);
        assert!(e < 1e-8);
        let e = finite_diff_check_extrapolated(f64::exp, f64::exp, &[(0.3, 1.0), (-2.0, 5.0)]);
        assert!(e < 1e-8);
    }
}
