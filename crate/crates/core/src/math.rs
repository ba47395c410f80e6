//! Log-domain combinatorics and small numerical helpers shared by the
//! coding and traffic modules.

use crate::error::{Error, Result};

/// Table of `ln n!` for `n <= max_n`, with binomial helpers on top.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    ln_fact: Vec<f64>,
}

impl LogFactorials {
    pub fn new(max_n: usize) -> Self {
        let mut ln_fact = Vec::with_capacity(max_n + 1);
        ln_fact.push(0.0);
        // Kahan summation keeps ln n! accurate to ~1 ulp of the running sum.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 1..=max_n {
            let y = (i as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            ln_fact.push(sum);
        }
        Self { ln_fact }
    }

    pub fn max_n(&self) -> usize {
        self.ln_fact.len() - 1
    }

    pub fn ln_factorial(&self, n: usize) -> f64 {
        self.ln_fact[n]
    }

    /// `ln C(n, k)`, or `-inf` when `k > n`.
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        self.ln_fact[n] - self.ln_fact[k] - self.ln_fact[n - k]
    }

    /// `ln [C(n,k) p^k (1-p)^(n-k)]` with the conventions `0^0 = 1`.
    pub fn ln_binomial_pmf(&self, n: usize, k: usize, p: f64) -> f64 {
        if k > n {
            return f64::NEG_INFINITY;
        }
        let ones = k as f64 * ln_pow_base(p, k);
        let zeros = (n - k) as f64 * ln_pow_base(1.0 - p, n - k);
        self.ln_choose(n, k) + ones + zeros
    }

    /// Prefix sums `ln Σ_{i<=k} C(n,i)` for `k = 0..=n`.
    pub fn ln_cumulative_choose(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut acc = f64::NEG_INFINITY;
        for k in 0..=n {
            acc = ln_add_exp(acc, self.ln_choose(n, k));
            out.push(acc);
        }
        out
    }
}

// ln(base) guarded so that 0 * ln(0) evaluates to 0 for zero exponents.
fn ln_pow_base(base: f64, exponent: usize) -> f64 {
    if exponent == 0 {
        0.0
    } else {
        base.ln()
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn ln_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let hi = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
}

/// Below this per-competitor collision probability the union bound
/// `(M-1)q` replaces the exact complement power.
pub const UNION_BOUND_THRESHOLD: f64 = 8.673_617_379_884_035e-19; // 2^-60

/// Probability that at least one of `competitors` independent uniform
/// codewords lands in a set of probability `q = exp(ln_q)`:
/// `1 - (1 - q)^competitors`, or the union bound `min(1, competitors·q)`
/// once `q < 2^-60`.
pub fn any_collision(ln_q: f64, competitors: f64) -> f64 {
    if competitors <= 0.0 || ln_q == f64::NEG_INFINITY {
        return 0.0;
    }
    let q = ln_q.exp();
    if q >= 1.0 {
        return 1.0;
    }
    if q < UNION_BOUND_THRESHOLD {
        return (ln_q + competitors.ln()).exp().min(1.0);
    }
    (-(competitors * (-q).ln_1p()).exp_m1()).clamp(0.0, 1.0)
}

/// Number of competing codewords `2^K - 1` as a float.
pub fn competitors(k: usize) -> f64 {
    if k == 0 {
        0.0
    } else if k < 53 {
        ((1u64 << k) - 1) as f64
    } else {
        2f64.powi(k as i32)
    }
}

/// Adaptive Simpson quadrature on `[a, b]` with absolute tolerance `tol`.
///
/// The interval is first cut into a fixed number of panels so a narrow
/// peak cannot hide between the initial sample points.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_DEPTH: u32 = 50;
    const PANELS: usize = 32;
    if a == b {
        return Ok(0.0);
    }
    let width = (b - a) / PANELS as f64;
    let panel_tol = tol / PANELS as f64;
    let mut evaluations = 0usize;
    let mut value = 0.0;
    for i in 0..PANELS {
        let lo = a + width * i as f64;
        let hi = if i + 1 == PANELS { b } else { lo + width };
        let fa = f(lo);
        let fb = f(hi);
        let fm = f(0.5 * (lo + hi));
        evaluations += 3;
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        value += simpson_step(&f, lo, hi, fa, fm, fb, whole, panel_tol, MAX_DEPTH, &mut evaluations)?;
    }
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "quadrature on [{a}, {b}] produced {value} after {evaluations} evaluations"
        )));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    evaluations: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    *evaluations += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numerical(format!(
            "adaptive quadrature did not converge on [{a:e}, {b:e}]: local error {:e} > {:e} after {} evaluations",
            delta.abs() / 15.0,
            tol,
            evaluations
        )));
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evaluations)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evaluations)?;
    Ok(l + r)
}
