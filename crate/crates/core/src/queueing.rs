//! Level-structured Markov chain of the transmit queue and its stationary
//! law via the matrix-geometric (M/G/1-type) method.
//!
//! The phase of a level is the channel state, crossed with the modulator
//! state for MMPP traffic (channel-major). One step is one codeword slot.
//! An empty queue transmits nothing useful; arrivals during a slot join the
//! queue at its end.

use nalgebra::DMatrix;

use crate::channel::ChannelModel;
use crate::coding::{CodeSpec, FailureProfile};
use crate::error::{Error, Result};
use crate::traffic::{arrivals, ArrivalDistribution, TrafficModel};

pub const DEFAULT_G_TOL: f64 = 1e-12;
pub const DEFAULT_G_MAX_ITER: usize = 100_000;
pub const DEFAULT_HORIZON_EPS: f64 = 1e-10;
const MAX_LEVELS: usize = 10_000_000;
const NEGATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceRate {
    /// Packets served per codeword slot.
    pub mu_n: f64,
    /// `λN / μ_N`; the chain is positive recurrent iff this is below 1.
    pub stability_factor: f64,
}

impl ServiceRate {
    pub fn is_stable(&self) -> bool {
        self.stability_factor < 1.0
    }
}

/// `μ_N = ρ_r (1 - P_f)` and the stability factor `λN / μ_N`.
pub fn service_rate(profile: &FailureProfile, traffic: &TrafficModel, code: &CodeSpec) -> Result<ServiceRate> {
    let rho_r = traffic.completion_prob(code.k)?;
    let mu_n = rho_r * (1.0 - profile.avg_failure);
    let load = traffic.lambda * code.n as f64;
    let stability_factor = if mu_n > 0.0 { load / mu_n } else { f64::INFINITY };
    Ok(ServiceRate {
        mu_n,
        stability_factor,
    })
}

/// Transition blocks of the queue chain.
///
/// Level 0 moves with `a_hat` (stay) and `f_hat[i-1]` (up `i`); levels
/// `q >= 1` move with `b` (down one), `a` (stay) and `f[i-1]` (up `i`).
#[derive(Debug, Clone)]
pub struct QueueChain {
    pub block_dim: usize,
    pub channel_states: usize,
    pub arrival_states: usize,
    pub a_hat: DMatrix<f64>,
    pub f_hat: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub f: Vec<DMatrix<f64>>,
    /// Arrival mass beyond the truncation index, folded into the last term.
    pub truncation_mass: f64,
    pub service: ServiceRate,
}

impl QueueChain {
    /// Largest upward jump.
    pub fn max_jump(&self) -> usize {
        self.f.len()
    }

    /// Largest deviation of any row sum from 1, over both level types.
    pub fn stochasticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.block_dim {
            let boundary: f64 = self.a_hat.row(r).sum() + self.f_hat.iter().map(|m| m.row(r).sum()).sum::<f64>();
            let interior: f64 =
                self.b.row(r).sum() + self.a.row(r).sum() + self.f.iter().map(|m| m.row(r).sum()).sum::<f64>();
            worst = worst.max((boundary - 1.0).abs()).max((interior - 1.0).abs());
        }
        worst
    }

    /// Builds a chain from explicit blocks; used for synthetic chains.
    pub fn from_blocks(
        a_hat: DMatrix<f64>,
        f_hat: Vec<DMatrix<f64>>,
        b: DMatrix<f64>,
        a: DMatrix<f64>,
        f: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let s = a.nrows();
        let square = |m: &DMatrix<f64>| m.nrows() == s && m.ncols() == s;
        if !(square(&a_hat) && square(&b) && square(&a))
            || !f_hat.iter().all(square)
            || !f.iter().all(square)
            || f_hat.len() != f.len()
        {
            return Err(Error::Config("chain blocks must be square, equal-sized, with matching jump ranges".into()));
        }
        let service = block_drift(&b, &a, &f);
        let chain = Self {
            block_dim: s,
            channel_states: s,
            arrival_states: 1,
            a_hat,
            f_hat,
            b,
            a,
            f,
            truncation_mass: 0.0,
            service,
        };
        if chain.stochasticity_defect() > 1e-10 {
            return Err(Error::Config("chain blocks are not stochastic".into()));
        }
        Ok(chain)
    }
}

/// Stability from the interior blocks alone: mean down versus mean up
/// movement under the phase process `B + A + ΣF`.
fn block_drift(b: &DMatrix<f64>, a: &DMatrix<f64>, f: &[DMatrix<f64>]) -> ServiceRate {
    let s = a.nrows();
    let mut phase = b + a;
    for m in f {
        phase += m;
    }
    let pi = stationary_of(&phase);
    let down: f64 = (0..s).map(|r| pi[r] * b.row(r).sum()).sum();
    let up: f64 = f
        .iter()
        .enumerate()
        .map(|(i, m)| (i + 1) as f64 * (0..s).map(|r| pi[r] * m.row(r).sum()).sum::<f64>())
        .sum();
    ServiceRate {
        mu_n: down,
        stability_factor: if down > 0.0 { up / down } else { f64::INFINITY },
    }
}

// Stationary vector of a small stochastic matrix (dense solve).
fn stationary_of(p: &DMatrix<f64>) -> Vec<f64> {
    let s = p.nrows();
    let mut m = p.transpose() - DMatrix::identity(s, s);
    for c in 0..s {
        m[(s - 1, c)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(s);
    rhs[s - 1] = 1.0;
    m.lu().solve(&rhs).map_or_else(|| vec![1.0 / s as f64; s], |v| v.iter().copied().collect())
}

/// Truncated arrival terms with the residual folded into the last term,
/// spread over end states by the modulator's `N`-step law.
fn folded_arrivals(dist: &ArrivalDistribution, traffic: &TrafficModel, n: usize) -> Vec<DMatrix<f64>> {
    let mut terms = dist.terms.clone();
    let last = terms.len() - 1;
    let spread = match &traffic.mmpp {
        Some(m) => DMatrix::from_fn(2, 2, |r, c| m.modulator[r][c]).pow(n as u32),
        None => DMatrix::from_element(1, 1, 1.0),
    };
    for (row, &extra) in dist.truncation_mass.iter().enumerate() {
        for col in 0..dist.states {
            terms[last][(row, col)] += extra * spread[(row, col)];
        }
    }
    terms
}

/// Assembles the chain for one code point.
pub fn build_chain(
    model: &ChannelModel,
    code: &CodeSpec,
    traffic: &TrafficModel,
    profile: &FailureProfile,
    tail_eps: f64,
) -> Result<QueueChain> {
    let channel_states = model.num_states();
    if profile.states() != channel_states {
        return Err(Error::Config(format!(
            "profile has {} channel states but the channel has {channel_states}",
            profile.states()
        )));
    }
    let rho_r = traffic.completion_prob(code.k)?;
    let dist = arrivals(traffic, code.n, tail_eps)?;
    let terms = folded_arrivals(&dist, traffic, code.n);
    let big_t = terms.len() - 1;
    let m = dist.states;
    let s = channel_states * m;

    let success = profile.cond_success();
    let end = &profile.end_state;
    let depart = &success * rho_r;
    let hold = &profile.cond_failure + &success * (1.0 - rho_r);
    let zero = DMatrix::zeros(m, m);
    let term = |i: usize| terms.get(i).unwrap_or(&zero);

    let a_hat = end.kronecker(term(0));
    let f_hat: Vec<_> = (1..=big_t).map(|i| end.kronecker(term(i))).collect();
    let b = depart.kronecker(term(0));
    let a = depart.kronecker(term(1)) + hold.kronecker(term(0));
    let f: Vec<_> = (1..=big_t)
        .map(|i| depart.kronecker(term(i + 1)) + hold.kronecker(term(i)))
        .collect();
    debug_assert_eq!(a.nrows(), s);

    Ok(QueueChain {
        block_dim: s,
        channel_states,
        arrival_states: m,
        a_hat,
        f_hat,
        b,
        a,
        f,
        truncation_mass: dist.max_truncation_mass(),
        service: service_rate(profile, traffic, code)?,
    })
}

/// Minimal nonnegative solution of `G = B + A G + Σ_j F^(j) G^(j+1)`.
#[derive(Debug, Clone)]
pub struct GMatrix {
    pub matrix: DMatrix<f64>,
    pub iterations: usize,
    /// `‖B + AG + Σ F^(j) G^(j+1) - G‖_∞` at the returned iterate.
    pub residual: f64,
    /// Set when the solve was forced on a chain that is not positive recurrent.
    pub forced: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GSolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterate even when the stability factor is at least 1.
    pub force: bool,
}

impl Default for GSolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_G_TOL,
            max_iter: DEFAULT_G_MAX_ITER,
            force: false,
        }
    }
}

// Σ_{j>=1} F^(j) G^(j+1) by Horner's rule.
fn forward_sum(f: &[DMatrix<f64>], g: &DMatrix<f64>) -> DMatrix<f64> {
    let s = g.nrows();
    let Some(last) = f.last() else {
        return DMatrix::zeros(s, s);
    };
    let mut acc = last.clone();
    for fj in f.iter().rev().skip(1) {
        acc = fj + &acc * g;
    }
    acc * g * g
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |w, v| w.max(v.abs()))
}

/// Fixed-point residual of `G` for the chain.
pub fn g_residual(chain: &QueueChain, g: &DMatrix<f64>) -> f64 {
    let r = &chain.b + &chain.a * g + forward_sum(&chain.f, g) - g;
    inf_norm(&r)
}

/// Iterates `G_{k+1} = -(A - I)^{-1} (B + Σ_j F^(j) G_k^(j+1))` from `G_0 = 0`.
pub fn solve_g(chain: &QueueChain, opts: GSolverOptions) -> Result<GMatrix> {
    if !chain.service.is_stable() && !opts.force {
        return Err(Error::Unstable {
            factor: chain.service.stability_factor,
        });
    }
    let s = chain.block_dim;
    let neg_l = DMatrix::identity(s, s) - &chain.a;
    let lu = neg_l.lu();
    let neg_l_inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I - A is singular".into()))?;
    let mut g = DMatrix::zeros(s, s);
    for it in 1..=opts.max_iter {
        let next = &neg_l_inv * (&chain.b + forward_sum(&chain.f, &g));
        let change = inf_norm(&(&next - &g));
        g = next;
        if change < opts.tol {
            let residual = g_residual(chain, &g);
            return Ok(GMatrix {
                matrix: g,
                iterations: it,
                residual,
                forced: !chain.service.is_stable(),
            });
        }
    }
    Err(Error::Solver {
        message: format!("G iteration did not converge in {} steps", opts.max_iter),
        residual: g_residual(chain, &g),
    })
}

/// Stationary law truncated at a finite horizon.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pub block_dim: usize,
    /// `levels[q]` is the row vector `π_q` over phases.
    pub levels: Vec<Vec<f64>>,
    /// Mass beyond the last stored level.
    pub residual_mass: f64,
    /// Residual of the bordered system for `π_0`.
    pub boundary_residual: f64,
}

impl StationaryDistribution {
    pub fn level_mass(&self, q: usize) -> f64 {
        self.levels.get(q).map_or(0.0, |v| v.iter().sum())
    }

    /// Phase marginal `Σ_q π_q` over the stored horizon.
    pub fn phase_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.block_dim];
        for level in &self.levels {
            for (o, v) in out.iter_mut().zip(level) {
                *o += v;
            }
        }
        out
    }

    pub fn mean_queue(&self) -> f64 {
        self.levels
            .iter()
            .enumerate()
            .map(|(q, v)| q as f64 * v.iter().sum::<f64>())
            .sum()
    }

    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }
}

fn row_times(v: &[f64], m: &DMatrix<f64>, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o += v.iter().enumerate().map(|(r, x)| x * m[(r, c)]).sum::<f64>();
    }
}

/// Ramaswami-style recursion for `π_j` after solving the boundary system
/// for `π_0`. Levels are generated until the stored mass reaches
/// `1 - horizon_eps` and at least `min_levels` levels exist.
pub fn solve_stationary(
    chain: &QueueChain,
    g: &GMatrix,
    horizon_eps: f64,
    min_levels: usize,
) -> Result<StationaryDistribution> {
    if g.forced {
        return Err(Error::Unstable {
            factor: chain.service.stability_factor,
        });
    }
    let s = chain.block_dim;
    let t = chain.max_jump();
    let id = DMatrix::<f64>::identity(s, s);
    let gm = &g.matrix;

    // S^(j), j = 0..=t, with F^(0) = A - I
    let mut big_s = vec![DMatrix::zeros(s, s); t + 1];
    for j in (0..=t).rev() {
        let base = if j == 0 { &chain.a - &id } else { chain.f[j - 1].clone() };
        big_s[j] = if j < t { base + &big_s[j + 1] * gm } else { base };
    }
    // Ŝ^(j), j = 1..=t (index 0 unused)
    let mut hat_s = vec![DMatrix::zeros(s, s); t + 1];
    for j in (1..=t).rev() {
        let base = chain.f_hat[j - 1].clone();
        hat_s[j] = if j < t { base + &hat_s[j + 1] * gm } else { base };
    }

    let s0_inv = big_s[0]
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("S^(0) is singular".into()))?;
    let sum_s = big_s.iter().fold(DMatrix::zeros(s, s), |acc, m| acc + m);
    let sum_hat = hat_s.iter().skip(1).fold(DMatrix::zeros(s, s), |acc, m| acc + m);
    let h = &sum_hat
        * sum_s
            .try_inverse()
            .ok_or_else(|| Error::Numerical("Σ S^(j) is singular".into()))?;

    let mut boundary = &chain.a_hat - &id;
    if t >= 1 {
        boundary -= &hat_s[1] * &s0_inv * &chain.b;
    }
    let mut bordered = boundary.clone();
    for r in 0..s {
        bordered[(r, s - 1)] = 1.0 - h.row(r).sum();
    }
    let mut rhs = nalgebra::DVector::zeros(s);
    rhs[s - 1] = 1.0;
    let pi0 = bordered
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("boundary system for π_0 is singular".into()))?;
    let pi0: Vec<f64> = pi0.iter().copied().collect();
    let boundary_residual = {
        let mut r = vec![0.0; s];
        row_times(&pi0, &bordered, &mut r);
        r[s - 1] -= 1.0;
        r.iter().fold(0.0f64, |w, v| w.max(v.abs()))
    };

    let mut levels = vec![pi0];
    let mut mass: f64 = levels[0].iter().sum();
    let mut scratch = vec![0.0; s];
    let mut j = 1;
    while (mass < 1.0 - horizon_eps || levels.len() < min_levels.max(1)) && j < MAX_LEVELS {
        scratch.fill(0.0);
        if j <= t {
            row_times(&levels[0], &hat_s[j], &mut scratch);
        }
        for k in j.saturating_sub(t).max(1)..j {
            row_times(&levels[k], &big_s[j - k], &mut scratch);
        }
        let mut next = vec![0.0; s];
        row_times(&scratch, &s0_inv, &mut next);
        for v in next.iter_mut() {
            *v = -*v;
            if *v < -NEGATIVE_TOL {
                return Err(Error::Solver {
                    message: format!("negative stationary probability {v:e} at level {j}"),
                    residual: g.residual,
                });
            }
            *v = v.max(0.0);
        }
        let level_mass: f64 = next.iter().sum();
        mass += level_mass;
        levels.push(next);
        j += 1;
        if level_mass == 0.0 && mass < 1.0 - horizon_eps && levels.len() >= min_levels {
            break;
        }
    }
    if mass < 1.0 - horizon_eps.max(1e-8) {
        return Err(Error::Solver {
            message: format!("stationary mass {mass} stalled below 1 after {j} levels"),
            residual: g.residual,
        });
    }
    Ok(StationaryDistribution {
        block_dim: s,
        levels,
        residual_mass: (1.0 - mass).max(0.0),
        boundary_residual,
    })
}

/// `P(Q > τ)`, counting the mass beyond the horizon as exceeding `τ`.
pub fn tail_probability(dist: &StationaryDistribution, tau: usize) -> Result<f64> {
    if tau >= dist.levels.len() {
        return Err(Error::Precision(format!(
            "horizon of {} levels is too short for tau = {tau}",
            dist.levels.len()
        )));
    }
    let above: f64 = dist.levels[tau + 1..].iter().map(|v| v.iter().sum::<f64>()).sum();
    Ok((above + dist.residual_mass).min(1.0))
}

/// CCDF `P(Q > τ)` for `τ = 0..=max_tau`.
pub fn ccdf(dist: &StationaryDistribution, max_tau: usize) -> Result<Vec<f64>> {
    (0..=max_tau).map(|tau| tail_probability(dist, tau)).collect()
}

/// Result of a complete single-point queue analysis.
#[derive(Debug, Clone)]
pub struct QueueSolution {
    pub chain: QueueChain,
    pub g: GMatrix,
    pub stationary: StationaryDistribution,
}

/// Builds the chain, solves for `G` and the stationary law.
pub fn analyze(
    model: &ChannelModel,
    code: &CodeSpec,
    traffic: &TrafficModel,
    profile: &FailureProfile,
    min_levels: usize,
) -> Result<QueueSolution> {
    let chain = build_chain(model, code, traffic, profile, crate::traffic::DEFAULT_TAIL_EPS)?;
    let g = solve_g(&chain, GSolverOptions::default())?;
    let stationary = solve_stationary(&chain, &g, DEFAULT_HORIZON_EPS, min_levels)?;
    Ok(QueueSolution { chain, g, stationary })
}
