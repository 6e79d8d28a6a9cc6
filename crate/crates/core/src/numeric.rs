//! Small numerical kernels shared by the solvers: golden-section search,
//! bracketed monotone root finding, compensated summation and a log-factorial
//! table for binomial coefficients.

/// 1/phi, the golden-section shrink factor.
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Table of `ln(i!)` for `i = 0..=n`.
#[derive(Debug, Clone)]
pub struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let mut acc = CompensatedSum::new();
        for i in 1..=n {
            acc.add((i as f64).ln());
            table.push(acc.value());
        }
        Self { table }
    }

    pub fn n(&self) -> usize {
        self.table.len() - 1
    }

    #[inline]
    pub fn ln_fact(&self, i: usize) -> f64 {
        self.table[i]
    }

    /// `ln C(n, i)`; panics if `i > n` or `n` exceeds the table.
    #[inline]
    pub fn ln_binom(&self, n: usize, i: usize) -> f64 {
        self.table[n] - self.table[i] - self.table[n - i]
    }
}

/// Result of a one-dimensional search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
///
/// Stops once the bracket is narrower than `x_tol` or after `max_iter`
/// shrink steps. The returned point is the best one evaluated, so for
/// non-unimodal `f` the result is still a valid lower bound on `sup f`.
pub fn golden_max<F>(mut f: F, a: f64, b: f64, x_tol: f64, max_iter: usize) -> Extremum
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 >= f2 {
        Extremum { x: x1, value: f1 }
    } else {
        Extremum { x: x2, value: f2 }
    };
    let mut iter = 0;
    while hi - lo > x_tol && iter < max_iter {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
            if f1 > best.value {
                best = Extremum { x: x1, value: f1 };
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
            if f2 > best.value {
                best = Extremum { x: x2, value: f2 };
            }
        }
        iter += 1;
    }
    best
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
pub fn golden_min<F>(mut f: F, a: f64, b: f64, x_tol: f64, max_iter: usize) -> Extremum
where
    F: FnMut(f64) -> f64,
{
    let e = golden_max(|x| -f(x), a, b, x_tol, max_iter);
    Extremum {
        x: e.x,
        value: -e.value,
    }
}

/// Grid scan over `[a, b]` followed by golden-section refinement inside the
/// cell pair around the best grid point. Returns the best point seen.
pub fn grid_then_golden_max<F>(
    mut f: F,
    a: f64,
    b: f64,
    grid_points: usize,
    x_tol: f64,
    refine_iters: usize,
) -> Extremum
where
    F: FnMut(f64) -> f64,
{
    let n = grid_points.max(2);
    let step = (b - a) / (n - 1) as f64;
    let mut best = Extremum {
        x: a,
        value: f64::NEG_INFINITY,
    };
    let mut best_i = 0;
    for i in 0..n {
        let x = if i == n - 1 { b } else { a + step * i as f64 };
        let v = f(x);
        if v > best.value {
            best = Extremum { x, value: v };
            best_i = i;
        }
    }
    if refine_iters == 0 || step == 0.0 {
        return best;
    }
    let lo = if best_i == 0 {
        a
    } else {
        a + step * (best_i - 1) as f64
    };
    let hi = if best_i + 1 >= n {
        b
    } else {
        a + step * (best_i + 1) as f64
    };
    let refined = golden_max(&mut f, lo, hi, x_tol, refine_iters);
    if refined.value > best.value {
        refined
    } else {
        best
    }
}

/// Outcome of a bracketed root search on a monotone function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub iterations: usize,
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for a continuous,
/// nonincreasing `f`, assuming `f(lo) >= target >= f(hi)`.
///
/// Illinois-modified regula falsi with a bisection step whenever two
/// consecutive steps fail to halve the bracket; the search ends when the
/// bracket width drops below `x_tol`. Trial points stay at least `x_tol / 2`
/// inside the bracket so it can collapse across the root. The returned point
/// is the right end of the final bracket, i.e. a point with `f(x) <= target`
/// up to evaluation noise.
pub fn root_nonincreasing<F>(mut f: F, lo: f64, hi: f64, target: f64, x_tol: f64) -> Root
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a) - target;
    let mut fb = f(b) - target;
    if fa <= 0.0 {
        return Root {
            x: a,
            iterations: 0,
        };
    }
    if fb >= 0.0 {
        return Root {
            x: b,
            iterations: 0,
        };
    }
    let mut side = 0i8;
    let mut iterations = 0;
    // bracket widths before the last two steps
    let mut widths = [f64::INFINITY; 2];
    while b - a > x_tol && iterations < 200 {
        iterations += 1;
        let width = b - a;
        let stalled = width > 0.5 * widths[0];
        widths = [widths[1], width];
        let mut x = b - fb * (b - a) / (fb - fa);
        if !x.is_finite() || x <= a || x >= b || stalled {
            x = 0.5 * (a + b);
        }
        let pad = (0.5 * x_tol).min(0.25 * width);
        x = x.clamp(a + pad, b - pad);
        let fx = f(x) - target;
        if fx == 0.0 {
            return Root { x, iterations };
        }
        if fx > 0.0 {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Root { x: b, iterations }
}

/// `e^a (e^b - 1)` without intermediate overflow or `0 * inf` whenever the
/// result itself is finite.
#[inline]
pub fn exp_times_expm1(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        // e^{a+b} (1 - e^{-b})
        -(a + b).exp() * (-b).exp_m1()
    } else if a < 709.0 {
        a.exp() * b.exp_m1()
    } else {
        -(a + (-b.exp_m1()).ln()).exp()
    }
}

/// `ln(1 - e^{x})` for `x <= 0`.
#[inline]
pub fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(e^{a} + e^{b})`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
