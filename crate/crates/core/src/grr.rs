//! Generalized randomized response, bounded-range checks for finite
//! mechanisms, and exponential-mechanism semantics (sensitivity vs range).
//!
//! Outcome labels follow one convention throughout the crate: outcome `0`
//! has log-likelihood ratio `t` and outcome `1` has log-likelihood ratio
//! `t - eps`. Under the "x" side the mechanism emits `0` with probability
//! `q`, under the "x'" side with probability `p`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::ln_one_minus_exp;

/// Absolute slack on log-ratio comparisons in [`br_witness`].
pub const BR_SLACK: f64 = 1e-9;

/// Tolerance on probability-vector normalisation.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A generalized randomized response mechanism with BR parameter `eps` and
/// offset `t`, `0 <= t <= eps`, `eps > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrrMechanism {
    eps: f64,
    t: f64,
    ln_q: f64,
    ln_1mp: f64,
}

impl GrrMechanism {
    pub fn new(eps: f64, t: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(domain(format!(
                "eps must be positive and finite, got {eps}"
            )));
        }
        if !(0.0..=eps).contains(&t) {
            return Err(domain(format!("t = {t} outside [0, {eps}]")));
        }
        Ok(Self::new_unchecked(eps, t))
    }

    /// Callers guarantee `eps > 0` and `t` in `[0, eps]`.
    #[inline]
    pub(crate) fn new_unchecked(eps: f64, t: f64) -> Self {
        let ln_den = ln_one_minus_exp(-eps);
        let ln_q = ln_one_minus_exp(t - eps) - ln_den;
        let ln_1mp = ln_one_minus_exp(-t) - ln_den;
        Self {
            eps,
            t,
            ln_q: ln_q.min(0.0),
            ln_1mp: ln_1mp.min(0.0),
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `ln q`; `q = e^t p`.
    #[inline]
    pub fn ln_q(&self) -> f64 {
        self.ln_q
    }

    #[inline]
    pub fn ln_p(&self) -> f64 {
        self.ln_q - self.t
    }

    #[inline]
    pub fn ln_one_minus_p(&self) -> f64 {
        self.ln_1mp
    }

    /// `ln(1 - q)`; `1 - q = e^{t - eps}(1 - p)`.
    #[inline]
    pub fn ln_one_minus_q(&self) -> f64 {
        self.t - self.eps + self.ln_1mp
    }

    pub fn p(&self) -> f64 {
        self.ln_p().exp()
    }

    pub fn q(&self) -> f64 {
        self.ln_q.exp()
    }

    pub fn one_minus_p(&self) -> f64 {
        self.ln_1mp.exp()
    }

    pub fn one_minus_q(&self) -> f64 {
        self.ln_one_minus_q().exp()
    }

    /// Output distribution `[P(0), P(1)]` under `x` (`b = 0`).
    pub fn probs_x(&self) -> [f64; 2] {
        [self.q(), self.one_minus_q()]
    }

    /// Output distribution `[P(0), P(1)]` under `x'` (`b = 1`).
    pub fn probs_x_prime(&self) -> [f64; 2] {
        [self.p(), self.one_minus_p()]
    }

    pub fn pair(&self) -> FiniteMechanismPair {
        FiniteMechanismPair {
            probs_x: self.probs_x().to_vec(),
            probs_x_prime: self.probs_x_prime().to_vec(),
        }
    }
}

/// `(p, q)` of the GRR mechanism with parameters `(eps, t)`.
pub fn grr_probs(eps: f64, t: f64) -> Result<(f64, f64)> {
    let m = GrrMechanism::new(eps, t)?;
    Ok((m.p(), m.q()))
}

/// Output distributions of one mechanism on a pair of neighbouring datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMechanismPair {
    pub probs_x: Vec<f64>,
    pub probs_x_prime: Vec<f64>,
}

impl FiniteMechanismPair {
    pub fn new(probs_x: Vec<f64>, probs_x_prime: Vec<f64>) -> Result<Self> {
        let pair = Self {
            probs_x,
            probs_x_prime,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs_x.len() != self.probs_x_prime.len() {
            return Err(Error::Dimension(format!(
                "outcome sets differ in size: {} vs {}",
                self.probs_x.len(),
                self.probs_x_prime.len()
            )));
        }
        if self.probs_x.is_empty() {
            return Err(domain("empty outcome set"));
        }
        for v in [&self.probs_x, &self.probs_x_prime] {
            if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(domain("probabilities must be finite and nonnegative"));
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > PROB_SUM_TOL * v.len().max(1) as f64 {
                return Err(domain(format!("probabilities sum to {s}, not 1")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.probs_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs_x.is_empty()
    }

    /// Log-ratios `ln(P_x(y)/P_x'(y))` over outcomes with positive mass in
    /// both distributions; `None` if some outcome has mass in exactly one.
    pub fn log_ratios(&self) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len());
        for (&a, &b) in self.probs_x.iter().zip(&self.probs_x_prime) {
            match (a > 0.0, b > 0.0) {
                (true, true) => out.push(a.ln() - b.ln()),
                (false, false) => {}
                _ => return None,
            }
        }
        Some(out)
    }
}

/// Smallest `t` in `[0, eps]` with every log-ratio in `[t - eps, t]`, or
/// `None` if the pair is not `eps`-BR.
pub fn br_witness(pair: &FiniteMechanismPair, eps: f64) -> Option<f64> {
    if !(eps >= 0.0) {
        return None;
    }
    let lr = pair.log_ratios()?;
    if lr.is_empty() {
        return None;
    }
    let max = lr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = lr.iter().cloned().fold(f64::INFINITY, f64::min);
    let t = max.max(0.0);
    if t > eps + BR_SLACK || t - eps > min + BR_SLACK {
        return None;
    }
    Some(t.min(eps))
}

/// Quality score `u(x, y)` on a finite set of datasets and outcomes, with an
/// explicit neighbour relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScoreTable {
    /// `scores[x][y]`.
    pub scores: Vec<Vec<f64>>,
    pub neighbors: Vec<(usize, usize)>,
}

/// Normaliser used by the exponential mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalizer {
    /// `exp(eps * u / (2 * sensitivity))`.
    Sensitivity,
    /// `exp(eps * u / range)`.
    Range,
}

/// Exponential-mechanism output distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMechDistribution {
    pub probs: Vec<f64>,
    /// Normaliser was zero, so the mechanism is data-independent and the
    /// uniform distribution was returned.
    pub degenerate: bool,
}

impl QualityScoreTable {
    pub fn new(scores: Vec<Vec<f64>>, neighbors: Vec<(usize, usize)>) -> Result<Self> {
        let t = Self { scores, neighbors };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let width = self
            .scores
            .first()
            .map(Vec::len)
            .ok_or_else(|| domain("score table has no datasets"))?;
        if width == 0 {
            return Err(domain("score table has no outcomes"));
        }
        if self.scores.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("score rows have different lengths".into()));
        }
        if self.scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(domain("scores must be finite"));
        }
        let n = self.scores.len();
        if let Some(&(a, b)) = self.neighbors.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(domain(format!("neighbour pair ({a}, {b}) out of range")));
        }
        Ok(())
    }

    pub fn n_outcomes(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    fn diffs(&self, a: usize, b: usize) -> impl Iterator<Item = f64> + '_ {
        self.scores[a]
            .iter()
            .zip(&self.scores[b])
            .map(|(u, v)| u - v)
    }

    /// Largest spread `max_y d(y) - min_y d(y)` of neighbouring differences
    /// `d(y) = u(x, y) - u(x', y)`.
    pub fn range(&self) -> f64 {
        self.neighbors
            .iter()
            .map(|&(a, b)| {
                let (lo, hi) = self
                    .diffs(a, b)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                        (lo.min(d), hi.max(d))
                    });
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|u(x, y) - u(x', y)|` over neighbours and outcomes.
    pub fn sensitivity(&self) -> f64 {
        self.neighbors
            .iter()
            .flat_map(|&(a, b)| self.diffs(a, b))
            .map(f64::abs)
            .fold(0.0, f64::max)
    }

    /// Exponential mechanism on dataset `x`.
    pub fn exp_mech_probs(
        &self,
        eps: f64,
        x: usize,
        normalizer: Normalizer,
    ) -> Result<ExpMechDistribution> {
        if !(eps >= 0.0) {
            return Err(domain(format!("eps must be nonnegative, got {eps}")));
        }
        let row = self
            .scores
            .get(x)
            .ok_or_else(|| domain(format!("dataset index {x} out of range")))?;
        let norm = match normalizer {
            Normalizer::Sensitivity => 2.0 * self.sensitivity(),
            Normalizer::Range => self.range(),
        };
        if norm == 0.0 {
            let n = row.len() as f64;
            return Ok(ExpMechDistribution {
                probs: vec![1.0 / n; row.len()],
                degenerate: true,
            });
        }
        Ok(ExpMechDistribution {
            probs: softmax(row.iter().map(|u| eps * u / norm)),
            degenerate: false,
        })
    }
}

pub fn quality_range(table: &QualityScoreTable) -> f64 {
    table.range()
}

pub fn quality_sensitivity(table: &QualityScoreTable) -> f64 {
    table.sensitivity()
}

pub fn exp_mech_probs(
    table: &QualityScoreTable,
    eps: f64,
    dataset: usize,
    normalizer: Normalizer,
) -> Result<ExpMechDistribution> {
    table.exp_mech_probs(eps, dataset, normalizer)
}

fn softmax(logits: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = logits.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// `ln sum_j exp(eps * c_j)` for column sums `c_j` of a bit matrix.
fn cq_log_normalizer(data: &[Vec<u8>], d: usize, eps: f64) -> f64 {
    let cols = column_sums(data, d);
    let m = cols.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = cols.iter().map(|c| (eps * (c - m)).exp()).sum();
    eps * m + s.ln()
}

fn column_sums(data: &[Vec<u8>], d: usize) -> Vec<f64> {
    let mut cols = vec![0.0; d];
    for row in data {
        for (c, &b) in cols.iter_mut().zip(row) {
            *c += f64::from(b);
        }
    }
    cols
}

fn check_bits(data: &[Vec<u8>], d: usize) -> Result<()> {
    for row in data {
        if row.len() != d {
            return Err(Error::Dimension(format!(
                "row of length {} in a matrix with {d} columns",
                row.len()
            )));
        }
        if row.iter().any(|&b| b > 1) {
            return Err(domain("bit matrix entries must be 0 or 1"));
        }
    }
    Ok(())
}

/// Counting-query exponential mechanism: outcome `j` with probability
/// proportional to `exp(eps * sum_i x_ij)`.
pub fn counting_query_mech(data: &[Vec<u8>], d: usize, eps: f64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(domain("counting query needs at least one column"));
    }
    if !(eps >= 0.0) {
        return Err(domain(format!("eps must be nonnegative, got {eps}")));
    }
    check_bits(data, d)?;
    let cols = column_sums(data, d);
    Ok(softmax(cols.iter().map(|c| eps * c)))
}

/// Offset `t` of the counting-query mechanism on a neighbouring pair: every
/// outcome's log-ratio `ln(P_x(j)/P_x'(j))` equals `t` or `t - eps`.
///
/// `x` and `x'` must differ by exactly one row (as multisets).
pub fn cq_t_value(x: &[Vec<u8>], x_prime: &[Vec<u8>], d: usize, eps: f64) -> Result<f64> {
    check_bits(x, d)?;
    check_bits(x_prime, d)?;
    let (big, small, x_is_big) = if x.len() > x_prime.len() {
        (x, x_prime, true)
    } else {
        (x_prime, x, false)
    };
    if big.len() != small.len() + 1 || !differs_by_one_row(big, small) {
        return Err(Error::Dimension(
            "datasets are not neighbours: they must differ by exactly one row".into(),
        ));
    }
    let t = cq_log_normalizer(big, d, eps) - cq_log_normalizer(small, d, eps);
    // adding a row multiplies each weight by 1 or e^eps; when x is the smaller
    // dataset the ratio flips and lands on {eps - t', -t'}
    Ok(if x_is_big { eps - t } else { t })
}

fn differs_by_one_row(big: &[Vec<u8>], small: &[Vec<u8>]) -> bool {
    let mut a: Vec<&Vec<u8>> = big.iter().collect();
    let mut b: Vec<&Vec<u8>> = small.iter().collect();
    a.sort();
    b.sort();
    let mut i = 0;
    let mut skipped = false;
    for row in a {
        if i < b.len() && *b[i] == *row {
            i += 1;
        } else if !skipped {
            skipped = true;
        } else {
            return false;
        }
    }
    i == b.len()
}
