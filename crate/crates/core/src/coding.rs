//! Decoding failure and undetected-error probabilities.
//!
//! Random codes are analyzed through the volume of decoding balls around
//! the received word; BCH codes through bounded-distance decoding with a
//! shrunken correction radius `t - ν` and enlarged detection radius `t + ν`.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::{
    joint_error_distribution, occupancy_distribution, ChannelKind, ChannelModel,
    JointErrorDistribution, OccupancyDistribution,
};
use crate::error::{Error, Result};
use crate::math::{any_collision, competitors, ln_sum_exp, LogFactorials};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    RandomMl,
    RandomMd,
    Bch,
}

impl Scheme {
    pub fn is_random(self) -> bool {
        matches!(self, Scheme::RandomMl | Scheme::RandomMd)
    }
}

/// Parameters of a primitive narrow-sense binary BCH code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BchParams {
    pub m: u32,
    pub t: usize,
    pub d_min: usize,
}

// (N, K, t) for m = 3..=8.
const BCH_TABLE: &[(usize, usize, usize)] = &[
    (7, 4, 1),
    (15, 11, 1), (15, 7, 2), (15, 5, 3),
    (31, 26, 1), (31, 21, 2), (31, 16, 3), (31, 11, 5), (31, 6, 7),
    (63, 57, 1), (63, 51, 2), (63, 45, 3), (63, 39, 4), (63, 36, 5), (63, 30, 6),
    (63, 24, 7), (63, 18, 10), (63, 16, 11), (63, 10, 13), (63, 7, 15),
    (127, 120, 1), (127, 113, 2), (127, 106, 3), (127, 99, 4), (127, 92, 5),
    (127, 85, 6), (127, 78, 7), (127, 71, 9), (127, 64, 10), (127, 57, 11),
    (127, 50, 13), (127, 43, 14), (127, 36, 15), (127, 29, 21), (127, 22, 23),
    (127, 15, 27), (127, 8, 31),
    (255, 247, 1), (255, 239, 2), (255, 231, 3), (255, 223, 4), (255, 215, 5),
    (255, 207, 6), (255, 199, 7), (255, 191, 8), (255, 187, 9), (255, 179, 10),
    (255, 171, 11), (255, 163, 12), (255, 155, 13), (255, 147, 14), (255, 139, 15),
    (255, 131, 18), (255, 123, 19), (255, 115, 21), (255, 107, 22), (255, 99, 23),
    (255, 91, 25), (255, 87, 26), (255, 79, 27), (255, 71, 29), (255, 63, 30),
    (255, 55, 31), (255, 47, 42), (255, 45, 43), (255, 37, 45), (255, 29, 47),
    (255, 21, 55), (255, 13, 59), (255, 9, 63),
];

/// All tabulated `(N, K, t)` triples.
pub fn bch_table() -> &'static [(usize, usize, usize)] {
    BCH_TABLE
}

/// Tabulated BCH codes of length `n`, in decreasing `K`.
pub fn bch_codes_of_length(n: usize) -> Vec<(usize, usize)> {
    BCH_TABLE
        .iter()
        .filter(|(len, _, _)| *len == n)
        .map(|&(_, k, t)| (k, t))
        .collect()
}

pub fn bch_lookup(n: usize, k: usize) -> Option<BchParams> {
    BCH_TABLE
        .iter()
        .find(|&&(len, dim, _)| len == n && dim == k)
        .map(|&(len, _, t)| BchParams {
            m: (len + 1).trailing_zeros(),
            t,
            d_min: 2 * t + 1,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub scheme: Scheme,
    pub n: usize,
    pub k: usize,
    pub nu: usize,
    pub bch: Option<BchParams>,
}

impl CodeSpec {
    pub fn random(scheme: Scheme, n: usize, k: usize, nu: usize) -> Result<Self> {
        if !scheme.is_random() {
            return Err(Error::Config("use CodeSpec::bch for BCH codes".into()));
        }
        if k == 0 || k >= n {
            return Err(Error::Domain(format!("need 1 <= K < N, got N = {n}, K = {k}")));
        }
        Ok(Self {
            scheme,
            n,
            k,
            nu,
            bch: None,
        })
    }

    pub fn bch(n: usize, k: usize, nu: usize) -> Result<Self> {
        let params = bch_lookup(n, k).ok_or_else(|| {
            Error::Config(format!("({n}, {k}) is not a tabulated primitive BCH code"))
        })?;
        if nu > params.t {
            return Err(Error::Domain(format!(
                "safety margin {nu} exceeds correction radius t = {}",
                params.t
            )));
        }
        Ok(Self {
            scheme: Scheme::Bch,
            n,
            k,
            nu,
            bch: Some(params),
        })
    }

    pub fn new(scheme: Scheme, n: usize, k: usize, nu: usize) -> Result<Self> {
        match scheme {
            Scheme::Bch => Self::bch(n, k, nu),
            _ => Self::random(scheme, n, k, nu),
        }
    }

    pub fn with_nu(&self, nu: usize) -> Result<Self> {
        Self::new(self.scheme, self.n, self.k, nu)
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    /// Largest admissible safety margin.
    pub fn max_nu(&self) -> usize {
        self.bch.map_or(self.n, |b| b.t)
    }

    fn bch_params(&self) -> Result<BchParams> {
        self.bch
            .ok_or_else(|| Error::Config("operation requires a BCH code".into()))
    }
}

/// Per start/end channel state failure probabilities for one code.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureProfile {
    /// `P(failure, C_{N+1} = d | C_1 = c)`, detected or not.
    pub cond_failure: DMatrix<f64>,
    /// Upper bound on `P(undetected failure, C_{N+1} = d | C_1 = c)`.
    pub cond_undetected: DMatrix<f64>,
    /// `P(C_{N+1} = d | C_1 = c)`.
    pub end_state: DMatrix<f64>,
    pub avg_failure: f64,
    pub avg_undetected: f64,
}

impl FailureProfile {
    fn new(
        cond_failure: DMatrix<f64>,
        cond_undetected: DMatrix<f64>,
        end_state: DMatrix<f64>,
        stationary: &[f64],
    ) -> Self {
        let avg = |m: &DMatrix<f64>| -> f64 {
            stationary
                .iter()
                .enumerate()
                .map(|(c, w)| w * m.row(c).sum())
                .sum::<f64>()
                .clamp(0.0, 1.0)
        };
        Self {
            avg_failure: avg(&cond_failure),
            avg_undetected: avg(&cond_undetected),
            cond_failure,
            cond_undetected,
            end_state,
        }
    }

    pub fn states(&self) -> usize {
        self.end_state.nrows()
    }

    /// `P(success, C_{N+1} = d | C_1 = c)`.
    pub fn cond_success(&self) -> DMatrix<f64> {
        (&self.end_state - &self.cond_failure).map(|v| v.max(0.0))
    }
}

// Ball-volume failure terms for random codes on a BSC.
struct BscBalls {
    n: usize,
    ln_cumulative: Vec<f64>,
    competitors: f64,
}

impl BscBalls {
    fn new(n: usize, k: usize, table: &LogFactorials) -> Self {
        Self {
            n,
            ln_cumulative: table.ln_cumulative_choose(n),
            competitors: competitors(k),
        }
    }

    // P(some competitor within Hamming distance `radius` of the received word)
    fn collision(&self, radius: i64) -> f64 {
        if radius < 0 {
            return 0.0;
        }
        let r = (radius as usize).min(self.n);
        any_collision(self.ln_cumulative[r] - self.n as f64 * LN_2, self.competitors)
    }
}

/// `P(failure | E = e)` for a random code on a BSC with safety margin ν.
pub fn bsc_random_failure(code: &CodeSpec, e: usize) -> f64 {
    let table = LogFactorials::new(code.n);
    BscBalls::new(code.n, code.k, &table).collision((e + code.nu) as i64)
}

/// Upper-bound term for `P(undetected | E = e)` on a BSC.
pub fn bsc_random_undetected(code: &CodeSpec, e: usize) -> f64 {
    let table = LogFactorials::new(code.n);
    BscBalls::new(code.n, code.k, &table).collision(e as i64 - code.nu as i64 - 1)
}

/// Random-code profile on a BSC: binomial error counts against ball terms.
pub fn bsc_random_profile(model: &ChannelModel, code: &CodeSpec) -> Result<FailureProfile> {
    if model.kind != ChannelKind::Bsc {
        return Err(Error::Config("BSC profile requested for a Gilbert-Elliott channel".into()));
    }
    if !code.scheme.is_random() {
        return Err(Error::Config("BSC random profile requires a random-coding scheme".into()));
    }
    let table = LogFactorials::new(code.n);
    let balls = BscBalls::new(code.n, code.k, &table);
    let (mut fail, mut undetected) = (0.0, 0.0);
    for e in 0..=code.n {
        let w = table.ln_binomial_pmf(code.n, e, model.p).exp();
        if w == 0.0 {
            continue;
        }
        fail += w * balls.collision((e + code.nu) as i64);
        undetected += w * balls.collision(e as i64 - code.nu as i64 - 1);
    }
    let one = |v: f64| DMatrix::from_element(1, 1, v.clamp(0.0, 1.0));
    Ok(FailureProfile::new(
        one(fail),
        one(undetected),
        one(1.0),
        &[1.0],
    ))
}

/// State weight `γ` of the weighted-distance decoder: the log-likelihood
/// ratio of the good state over that of the bad state for ML, 1 for MD.
pub fn gec_weight_gamma(model: &ChannelModel, scheme: Scheme) -> Result<f64> {
    match scheme {
        Scheme::RandomMd => Ok(1.0),
        Scheme::RandomMl => {
            let (g, b) = (model.eps_g, model.eps_b);
            if !(g > 0.0 && g < 1.0 && b > 0.0 && b < 1.0) {
                return Err(Error::Domain(format!(
                    "ML weighting needs 0 < eps < 1 (eps_g = {g}, eps_b = {b}); clamp the crossovers away from 0 and 1 or use MD decoding"
                )));
            }
            let gamma = (g / (1.0 - g)).ln() / (b / (1.0 - b)).ln();
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(Error::Domain(format!(
                    "ML weight gamma = {gamma} is not positive for eps_g = {g}, eps_b = {b}"
                )));
            }
            Ok(gamma)
        }
        Scheme::Bch => Err(Error::Config("BCH codes have no weighted decoding radius".into())),
    }
}

const RADIUS_SLACK: f64 = 1e-12;
const RADIUS_BUCKET: f64 = 1e-9;

// Weighted-ball volumes for a fixed channel state type (n_g, n_b).
struct WeightedBalls<'a> {
    n_g: usize,
    n_b: usize,
    gamma: f64,
    ln_choose_g: Vec<f64>,
    ln_cumulative_b: Vec<f64>,
    table: &'a LogFactorials,
}

impl<'a> WeightedBalls<'a> {
    fn new(n_g: usize, n_b: usize, gamma: f64, table: &'a LogFactorials) -> Self {
        Self {
            n_g,
            n_b,
            gamma,
            ln_choose_g: (0..=n_g).map(|i| table.ln_choose(n_g, i)).collect(),
            ln_cumulative_b: table.ln_cumulative_choose(n_b),
            table,
        }
    }

    /// ln #{patterns with γẽ_g + ẽ_b ≤ d} (or `< d` when `strict`).
    fn ln_volume(&self, d: f64, strict: bool) -> f64 {
        let slack = RADIUS_SLACK * d.abs().max(1.0);
        let mut terms = Vec::with_capacity(self.n_g + 1);
        for (eg, ln_cg) in self.ln_choose_g.iter().enumerate() {
            let room = d - self.gamma * eg as f64;
            let bound = if strict {
                (room - slack).ceil() - 1.0
            } else {
                (room + slack).floor()
            };
            if bound < 0.0 {
                break;
            }
            let idx = (bound as usize).min(self.n_b);
            terms.push(ln_cg + self.ln_cumulative_b[idx]);
        }
        ln_sum_exp(terms)
    }

    fn n(&self) -> usize {
        self.n_g + self.n_b
    }

    fn ln_state_errors(&self, eg: usize, eb: usize, model: &ChannelModel) -> f64 {
        self.table.ln_binomial_pmf(self.n_g, eg, model.eps_g)
            + self.table.ln_binomial_pmf(self.n_b, eb, model.eps_b)
    }
}

/// Per-realization decoding probabilities of a random code, given how
/// many uses fell in the good state and the errors made in each state.
/// A BSC is treated as all-bad with `γ = 1`.
#[derive(Debug)]
pub struct RandomDecodeTerms {
    n: usize,
    nu: f64,
    gamma: f64,
    competitors: f64,
    table: LogFactorials,
    cache: HashMap<(usize, usize, usize), (f64, f64)>,
}

impl RandomDecodeTerms {
    pub fn new(model: &ChannelModel, code: &CodeSpec) -> Result<Self> {
        if !code.scheme.is_random() {
            return Err(Error::Config("decode terms apply to random codes only".into()));
        }
        let gamma = match model.kind {
            ChannelKind::Bsc => 1.0,
            ChannelKind::GilbertElliott => gec_weight_gamma(model, code.scheme)?,
        };
        Ok(Self {
            n: code.n,
            nu: code.nu as f64,
            gamma,
            competitors: competitors(code.k),
            table: LogFactorials::new(code.n),
            cache: HashMap::new(),
        })
    }

    /// `(P(failure), P(undetected))` given `(n_g, e_g, e_b)`.
    pub fn terms(&mut self, n_g: usize, e_g: usize, e_b: usize) -> (f64, f64) {
        if let Some(&v) = self.cache.get(&(n_g, e_g, e_b)) {
            return v;
        }
        let balls = WeightedBalls::new(n_g, self.n - n_g, self.gamma, &self.table);
        let ln_space = self.n as f64 * LN_2;
        let c = self.gamma * e_g as f64 + e_b as f64;
        let fail = any_collision(balls.ln_volume(c + self.nu, false) - ln_space, self.competitors);
        let und = if c - self.nu <= 0.0 {
            0.0
        } else {
            any_collision(balls.ln_volume(c - self.nu, true) - ln_space, self.competitors)
        };
        self.cache.insert((n_g, e_g, e_b), (fail, und));
        (fail, und)
    }
}

/// ln of `V(n_g, n_b, d) = Σ_{γẽ_g + ẽ_b ≤ d} C(n_g, ẽ_g) C(n_b, ẽ_b)`.
pub fn gec_ball_volume(n_g: usize, n_b: usize, d: f64, gamma: f64) -> f64 {
    let table = LogFactorials::new(n_g.max(n_b));
    WeightedBalls::new(n_g, n_b, gamma, &table).ln_volume(d, false)
}

/// Conditional failure and undetected terms for every `n_g = 0..=N`.
fn gec_state_type_terms(
    model: &ChannelModel,
    code: &CodeSpec,
    gamma: f64,
    needed: &[bool],
) -> (Vec<f64>, Vec<f64>) {
    let n = code.n;
    let table = LogFactorials::new(n);
    let comp = competitors(code.k);
    let ln_space = n as f64 * LN_2;
    let nu = code.nu as f64;
    let mut fail = vec![0.0; n + 1];
    let mut undetected = vec![0.0; n + 1];
    for n_g in 0..=n {
        if !needed[n_g] {
            continue;
        }
        let balls = WeightedBalls::new(n_g, n - n_g, gamma, &table);
        let mut memo_fail: HashMap<i64, f64> = HashMap::new();
        let mut memo_und: HashMap<i64, f64> = HashMap::new();
        let term = |memo: &mut HashMap<i64, f64>, d: f64, strict: bool| -> f64 {
            if d < 0.0 || (strict && d <= 0.0) {
                return 0.0;
            }
            let key = (d / RADIUS_BUCKET).round() as i64;
            *memo
                .entry(key)
                .or_insert_with(|| any_collision(balls.ln_volume(d, strict) - ln_space, comp))
        };
        let (mut f, mut u) = (0.0, 0.0);
        for eg in 0..=n_g {
            for eb in 0..=balls.n_b {
                let w = balls.ln_state_errors(eg, eb, model).exp();
                if w == 0.0 {
                    continue;
                }
                let c = gamma * eg as f64 + eb as f64;
                f += w * term(&mut memo_fail, c + nu, false);
                u += w * term(&mut memo_und, c - nu, true);
            }
        }
        debug_assert_eq!(balls.n(), n);
        fail[n_g] = f.min(1.0);
        undetected[n_g] = u.min(1.0);
    }
    (fail, undetected)
}

/// Random-code profile on a Gilbert-Elliott channel.
pub fn gec_random_profile(
    model: &ChannelModel,
    code: &CodeSpec,
    occupancy: &OccupancyDistribution,
) -> Result<FailureProfile> {
    if occupancy.block_length != code.n {
        return Err(Error::Config(format!(
            "occupancy computed for N = {} but code has N = {}",
            occupancy.block_length, code.n
        )));
    }
    let gamma = gec_weight_gamma(model, code.scheme)?;
    let n = code.n;
    let needed: Vec<bool> = (0..=n)
        .map(|g| (0..2).any(|c| (0..2).any(|d| occupancy.prob(c, d, g) > 0.0)))
        .collect();
    let (fail, und) = gec_state_type_terms(model, code, gamma, &needed);
    let fold = |terms: &[f64]| {
        DMatrix::from_fn(2, 2, |c, d| {
            occupancy
                .visits(c, d)
                .iter()
                .zip(terms)
                .map(|(p, t)| p * t)
                .sum::<f64>()
        })
    };
    let end_state = DMatrix::from_fn(2, 2, |c, d| occupancy.visits(c, d).iter().sum::<f64>());
    Ok(FailureProfile::new(
        fold(&fail),
        fold(&und),
        end_state,
        &model.stationary(),
    ))
}

/// `P(failure | E = e)` for bounded-distance decoding with radius `t - ν`.
pub fn bch_failure(code: &CodeSpec, e: usize) -> Result<f64> {
    let p = code.bch_params()?;
    Ok(if e > p.t - code.nu { 1.0 } else { 0.0 })
}

/// Codeword weight enumerator `A_0..=A_N` supplied by the user.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub counts: Vec<f64>,
}

impl WeightTable {
    /// Parses lines of the form `l A_l`; `#` starts a comment. Weights not
    /// listed are zero.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut counts = vec![0.0; n + 1];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("weight table line {}: expected `l A_l`, got `{raw}`", lineno + 1));
            let mut parts = line.split_whitespace();
            let l: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let a: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if parts.next().is_some() || !(a.is_finite() && a >= 0.0) {
                return Err(bad());
            }
            if l > n {
                return Err(Error::Config(format!(
                    "weight table line {}: weight {l} exceeds N = {n}",
                    lineno + 1
                )));
            }
            counts[l] = a;
        }
        Ok(Self { counts })
    }
}

/// Source of the codeword weight distribution used for undetected errors.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightModel {
    /// Closed form `2^{-mt} Σ_{j ≤ t-ν} C(N, j)`.
    Approximate,
    /// Exact formula over the binomial-like `A_l` (error term dropped).
    BinomialLike,
    /// Exact formula over a supplied enumerator.
    Table(WeightTable),
}

impl WeightModel {
    /// Exact-mode model; fails without a table.
    pub fn exact(table: Option<WeightTable>) -> Result<Self> {
        table
            .map(WeightModel::Table)
            .ok_or_else(|| Error::Config("exact weight mode needs a weight table".into()))
    }
}

/// Binomial-like approximation of a primitive BCH weight distribution.
pub fn binomial_like_weights(n: usize, params: &BchParams) -> Vec<f64> {
    let table = LogFactorials::new(n);
    let ln_scale = -((params.m as usize * params.t) as f64) * LN_2;
    let half = n / 2;
    let mut a = vec![0.0; n + 1];
    a[0] = 1.0;
    for l in params.d_min..=half {
        a[l] = (ln_scale + table.ln_choose(n, l)).exp();
    }
    for l in half + 1..=n {
        a[l] = a[n - l];
    }
    a
}

/// `W(e)` for every `e = 0..=N`: the fraction of weight-`e` error patterns
/// that land within distance `t - ν` of a nonzero codeword.
pub fn bch_undetected_weights(code: &CodeSpec, weights: &WeightModel) -> Result<Vec<f64>> {
    let p = code.bch_params()?;
    let n = code.n;
    let radius = p.t - code.nu;
    let first = p.t + code.nu + 1;
    let mut out = vec![0.0; n + 1];
    let table = LogFactorials::new(n);
    let enumerator = match weights {
        WeightModel::Approximate => {
            let ln_cum = table.ln_cumulative_choose(n)[radius];
            let w = (ln_cum - ((p.m as usize * p.t) as f64) * LN_2).exp().min(1.0);
            for v in out.iter_mut().skip(first) {
                *v = w;
            }
            return Ok(out);
        }
        WeightModel::BinomialLike => binomial_like_weights(n, &p),
        WeightModel::Table(t) => {
            if t.counts.len() != n + 1 {
                return Err(Error::Config(format!(
                    "weight table covers N = {} but code has N = {n}",
                    t.counts.len() - 1
                )));
            }
            t.counts.clone()
        }
    };
    for (e, slot) in out.iter_mut().enumerate().skip(first) {
        let mut total = 0.0;
        for j in 0..=radius {
            for l in e.saturating_sub(j).max(1)..=(e + j).min(n) {
                if (j + e + l) % 2 == 1 || enumerator[l] == 0.0 {
                    continue;
                }
                let outside = (j + e - l) / 2;
                let inside = (j + l - e) / 2;
                total += enumerator[l]
                    * (table.ln_choose(n - l, outside) + table.ln_choose(l, inside)
                        - table.ln_choose(n, e))
                    .exp();
            }
        }
        *slot = total.min(1.0);
    }
    Ok(out)
}

/// Single `W(e)`.
pub fn bch_undetected_weight(code: &CodeSpec, e: usize, weights: &WeightModel) -> Result<f64> {
    if e > code.n {
        return Err(Error::Domain(format!("error count {e} exceeds N = {}", code.n)));
    }
    Ok(bch_undetected_weights(code, weights)?[e])
}

/// BCH profile over a channel's joint error/end-state law.
pub fn bch_profile(
    model: &ChannelModel,
    code: &CodeSpec,
    joint: &JointErrorDistribution,
    weights: &WeightModel,
) -> Result<FailureProfile> {
    let p = code.bch_params()?;
    if joint.block_length != code.n || joint.states != model.num_states() {
        return Err(Error::Config(format!(
            "error distribution (N = {}, {} states) does not match code N = {} on a {}-state channel",
            joint.block_length,
            joint.states,
            code.n,
            model.num_states()
        )));
    }
    let w = bch_undetected_weights(code, weights)?;
    let s = joint.states;
    let correct = p.t - code.nu;
    let cond_failure = DMatrix::from_fn(s, s, |c, d| joint.errors(c, d)[correct + 1..].iter().sum());
    let cond_undetected = DMatrix::from_fn(s, s, |c, d| {
        joint
            .errors(c, d)
            .iter()
            .zip(&w)
            .map(|(p, w)| p * w)
            .sum()
    });
    Ok(FailureProfile::new(
        cond_failure,
        cond_undetected,
        joint.end_state_matrix(),
        &model.stationary(),
    ))
}

/// Computes profiles for many codes of one block length on one channel,
/// sharing the channel distributions between them.
#[derive(Debug, Clone)]
pub struct ProfileEvaluator {
    model: ChannelModel,
    n: usize,
    joint: Option<JointErrorDistribution>,
    occupancy: Option<OccupancyDistribution>,
    weights: WeightModel,
}

impl ProfileEvaluator {
    pub fn new(model: &ChannelModel, n: usize, scheme: Scheme, weights: WeightModel) -> Result<Self> {
        let needs_occupancy = scheme.is_random() && model.kind == ChannelKind::GilbertElliott;
        let needs_joint = scheme == Scheme::Bch;
        Ok(Self {
            model: *model,
            n,
            joint: if needs_joint {
                Some(joint_error_distribution(model, n)?)
            } else {
                None
            },
            occupancy: if needs_occupancy {
                Some(occupancy_distribution(model, n)?)
            } else {
                None
            },
            weights,
        })
    }

    pub fn profile(&self, code: &CodeSpec) -> Result<FailureProfile> {
        if code.n != self.n {
            return Err(Error::Config(format!(
                "evaluator built for N = {} but code has N = {}",
                self.n, code.n
            )));
        }
        match (code.scheme, self.model.kind) {
            (Scheme::Bch, _) => {
                let joint = self.joint.as_ref().ok_or_else(|| {
                    Error::Config("evaluator was not built for BCH codes".into())
                })?;
                bch_profile(&self.model, code, joint, &self.weights)
            }
            (_, ChannelKind::Bsc) => bsc_random_profile(&self.model, code),
            (_, ChannelKind::GilbertElliott) => {
                let occ = self.occupancy.as_ref().ok_or_else(|| {
                    Error::Config("evaluator was not built for random codes".into())
                })?;
                gec_random_profile(&self.model, code, occ)
            }
        }
    }
}

/// Profile of one code on one channel.
pub fn profile(model: &ChannelModel, code: &CodeSpec, weights: &WeightModel) -> Result<FailureProfile> {
    ProfileEvaluator::new(model, code.n, code.scheme, weights.clone())?.profile(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_ge() -> ChannelModel {
        ChannelModel::gilbert_elliott(0.3938, 0.0202, 0.0097, 0.3713).unwrap()
    }

    #[test]
    fn bch_table_lookup() {
        let p = bch_lookup(63, 36).unwrap();
        assert_eq!((p.m, p.t, p.d_min), (6, 5, 11));
        assert!(bch_lookup(63, 37).is_none());
        assert!(CodeSpec::bch(63, 36, 6).is_err());
        for &(n, k, t) in bch_table() {
            assert!((n + 1).is_power_of_two() && k < n && 2 * t + 1 <= n);
        }
    }

    #[test]
    fn bsc_ball_edges() {
        let code = CodeSpec::random(Scheme::RandomMl, 10, 3, 2).unwrap();
        assert_eq!(bsc_random_failure(&code, 8), 1.0);
        assert_eq!(bsc_random_undetected(&code, 2), 0.0);
        let single = BscBalls::new(10, 0, &LogFactorials::new(10));
        assert_eq!(single.collision(10), 0.0);
    }

    #[test]
    fn undetected_full_space_boundary() {
        let code = CodeSpec::random(Scheme::RandomMl, 20, 19, 0).unwrap();
        let v = bsc_random_undetected(&code, 20);
        assert!(v.is_finite() && v <= 1.0 && v > 0.99);
    }

    #[test]
    fn gamma_values() {
        let g = gec_weight_gamma(&paper_ge(), Scheme::RandomMl).unwrap();
        let expect = (0.0097f64 / 0.9903).ln() / (0.3713f64 / 0.6287).ln();
        assert!((g - expect).abs() < 1e-12);
        assert!((g - 8.79).abs() < 0.01);
        assert_eq!(gec_weight_gamma(&paper_ge(), Scheme::RandomMd).unwrap(), 1.0);
        let sym = ChannelModel::gilbert_elliott(0.2, 0.3, 0.1, 0.1).unwrap();
        assert!((gec_weight_gamma(&sym, Scheme::RandomMl).unwrap() - 1.0).abs() < 1e-15);
        let noiseless = ChannelModel::gilbert_elliott(0.2, 0.3, 0.0, 0.1).unwrap();
        assert!(matches!(
            gec_weight_gamma(&noiseless, Scheme::RandomMl),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn volume_whole_space() {
        let v = gec_ball_volume(6, 5, 2.5 * 6.0 + 5.0, 2.5);
        assert!((v - 11.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn bch_failure_rule() {
        let c1 = CodeSpec::bch(63, 36, 1).unwrap();
        let c0 = CodeSpec::bch(63, 36, 0).unwrap();
        assert_eq!(bch_failure(&c1, 0).unwrap(), 0.0);
        assert_eq!(bch_failure(&c1, 5).unwrap(), 1.0);
        assert_eq!(bch_failure(&c0, 5).unwrap(), 0.0);
    }

    #[test]
    fn bch_approximate_weight() {
        let code = CodeSpec::bch(63, 36, 1).unwrap();
        let w = bch_undetected_weights(&code, &WeightModel::Approximate).unwrap();
        let cum: f64 = [1.0, 63.0, 1953.0, 39711.0, 595_665.0].iter().sum();
        assert!((w[7] / (cum / 2f64.powi(30)) - 1.0).abs() < 1e-12);
        assert!(w[..=6].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_mode_needs_table() {
        assert!(matches!(WeightModel::exact(None), Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_bch_never_fails() {
        let m = ChannelModel::gilbert_elliott(0.3, 0.1, 0.0, 0.0).unwrap();
        let code = CodeSpec::bch(31, 16, 0).unwrap();
        let p = profile(&m, &code, &WeightModel::Approximate).unwrap();
        assert_eq!(p.avg_failure, 0.0);
        assert_eq!(p.avg_undetected, 0.0);
    }

    #[test]
    fn paper_bch_undetected() {
        let code = CodeSpec::bch(63, 36, 1).unwrap();
        let p = profile(&paper_ge(), &code, &WeightModel::Approximate).unwrap();
        assert!((p.avg_undetected / 8.78e-6 - 1.0).abs() < 0.02, "{}", p.avg_undetected);
    }

    #[test]
    fn weight_table_parse() {
        let t = WeightTable::parse("# hamming\n0 1\n3 7\n4 7\n7 1\n", 7).unwrap();
        assert_eq!(t.counts, vec![1.0, 0.0, 0.0, 7.0, 7.0, 0.0, 0.0, 1.0]);
        assert!(WeightTable::parse("9 1", 7).is_err());
        assert!(WeightTable::parse("3 x", 7).is_err());
    }
}
