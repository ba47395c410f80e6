//! Binary symmetric and Gilbert-Elliott channels.
//!
//! States are ordered `(bad, good)` everywhere: index [`BAD`] is 0 and
//! index [`GOOD`] is 1. A BSC is modeled as a single-state channel. The
//! state `C_1` attached to a block is the state during its first channel
//! use; `C_{N+1}` is the state during the first use of the next block.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{check_probability, Error, Result};
use crate::poly::{power_coefficients, AffinePolyMatrix};

pub const BAD: usize = 0;
pub const GOOD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Bsc,
    GilbertElliott,
}

/// Two-state Markov-modulated binary symmetric channel, or a plain BSC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    /// BSC crossover probability (equal to both crossovers for a BSC).
    pub p: f64,
    /// Transition probability bad → good.
    pub alpha: f64,
    /// Transition probability good → bad.
    pub beta: f64,
    pub eps_g: f64,
    pub eps_b: f64,
}

impl ChannelModel {
    pub fn bsc(p: f64) -> Result<Self> {
        check_probability("p", p)?;
        Ok(Self {
            kind: ChannelKind::Bsc,
            p,
            alpha: 0.0,
            beta: 0.0,
            eps_g: p,
            eps_b: p,
        })
    }

    pub fn gilbert_elliott(alpha: f64, beta: f64, eps_g: f64, eps_b: f64) -> Result<Self> {
        check_probability("alpha", alpha)?;
        check_probability("beta", beta)?;
        check_probability("eps_g", eps_g)?;
        check_probability("eps_b", eps_b)?;
        if alpha + beta <= 0.0 {
            return Err(Error::Domain(
                "alpha + beta must be positive for a unique steady state".into(),
            ));
        }
        Ok(Self {
            kind: ChannelKind::GilbertElliott,
            p: f64::NAN,
            alpha,
            beta,
            eps_g,
            eps_b,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ChannelKind::Bsc => Self::bsc(self.p).map(|_| ()),
            ChannelKind::GilbertElliott => {
                Self::gilbert_elliott(self.alpha, self.beta, self.eps_g, self.eps_b).map(|_| ())
            }
        }
    }

    pub fn num_states(&self) -> usize {
        match self.kind {
            ChannelKind::Bsc => 1,
            ChannelKind::GilbertElliott => 2,
        }
    }

    /// One-step transition probability `[P]_{from,to}`.
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        match self.kind {
            ChannelKind::Bsc => 1.0,
            ChannelKind::GilbertElliott => match (from, to) {
                (BAD, BAD) => 1.0 - self.alpha,
                (BAD, _) => self.alpha,
                (_, BAD) => self.beta,
                _ => 1.0 - self.beta,
            },
        }
    }

    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let s = self.num_states();
        DMatrix::from_fn(s, s, |r, c| self.transition(r, c))
    }

    /// Crossover probability while in `state`.
    pub fn crossover(&self, state: usize) -> f64 {
        match self.kind {
            ChannelKind::Bsc => self.p,
            ChannelKind::GilbertElliott if state == BAD => self.eps_b,
            ChannelKind::GilbertElliott => self.eps_g,
        }
    }

    /// Steady-state law `(β/(α+β), α/(α+β))` over `(bad, good)`.
    pub fn stationary(&self) -> Vec<f64> {
        match self.kind {
            ChannelKind::Bsc => vec![1.0],
            ChannelKind::GilbertElliott => {
                let total = self.alpha + self.beta;
                vec![self.beta / total, self.alpha / total]
            }
        }
    }

    /// Long-run symbol error rate.
    pub fn mean_crossover(&self) -> f64 {
        self.stationary()
            .iter()
            .enumerate()
            .map(|(s, w)| w * self.crossover(s))
            .sum()
    }

    /// Stable key for caches: the bit patterns of every parameter.
    pub fn cache_key(&self) -> [u64; 5] {
        let p = if self.kind == ChannelKind::Bsc { self.p } else { -1.0 };
        [
            p.to_bits(),
            self.alpha.to_bits(),
            self.beta.to_bits(),
            self.eps_g.to_bits(),
            self.eps_b.to_bits(),
        ]
    }
}

/// Joint law of the error count and end state of an `N`-use block, given
/// the start state: `P(E = e, C_{N+1} = d | C_1 = c)`.
#[derive(Debug, Clone)]
pub struct JointErrorDistribution {
    pub block_length: usize,
    pub states: usize,
    table: Vec<f64>,
}

impl JointErrorDistribution {
    pub fn prob(&self, start: usize, end: usize, errors: usize) -> f64 {
        if errors > self.block_length {
            return 0.0;
        }
        self.errors(start, end)[errors]
    }

    /// Coefficients `e = 0..=N` for a fixed `(start, end)` pair.
    pub fn errors(&self, start: usize, end: usize) -> &[f64] {
        let w = self.block_length + 1;
        let off = (start * self.states + end) * w;
        &self.table[off..off + w]
    }

    /// `P(C_{N+1} = end | C_1 = start)`.
    pub fn end_state_prob(&self, start: usize, end: usize) -> f64 {
        self.errors(start, end).iter().sum()
    }

    pub fn end_state_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.states, self.states, |c, d| self.end_state_prob(c, d))
    }

    /// `P(E = e | C_1 = start)` summed over the end state.
    pub fn error_marginal(&self, start: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.block_length + 1];
        for end in 0..self.states {
            for (o, v) in out.iter_mut().zip(self.errors(start, end)) {
                *o += v;
            }
        }
        out
    }
}

/// Coefficient table of `P_x^N`, where `[P_x]_{c,d} = P_{c,d}(1 - ε_c + ε_c x)`.
pub fn joint_error_distribution(model: &ChannelModel, n: usize) -> Result<JointErrorDistribution> {
    if n == 0 {
        return Err(Error::Domain("block length must be at least 1".into()));
    }
    model.validate()?;
    let s = model.num_states();
    let mut entries = Vec::with_capacity(s * s);
    for c in 0..s {
        let eps = model.crossover(c);
        for d in 0..s {
            let t = model.transition(c, d);
            entries.push([t * (1.0 - eps), t * eps]);
        }
    }
    let table = power_coefficients(&AffinePolyMatrix::new(s, entries), n);
    Ok(JointErrorDistribution {
        block_length: n,
        states: s,
        table,
    })
}

/// Joint law of the number of good-state uses `N_g` and the end state.
#[derive(Debug, Clone)]
pub struct OccupancyDistribution {
    pub block_length: usize,
    table: Vec<f64>,
}

impl OccupancyDistribution {
    pub(crate) fn from_table(block_length: usize, table: Vec<f64>) -> Self {
        Self {
            block_length,
            table,
        }
    }

    pub fn prob(&self, start: usize, end: usize, good_visits: usize) -> f64 {
        if good_visits > self.block_length {
            return 0.0;
        }
        self.visits(start, end)[good_visits]
    }

    /// Coefficients `n_g = 0..=N` for a fixed `(start, end)` pair.
    pub fn visits(&self, start: usize, end: usize) -> &[f64] {
        let w = self.block_length + 1;
        let off = (start * 2 + end) * w;
        &self.table[off..off + w]
    }
}

/// Coefficient table of `G(x)^N` where `x` marks each use spent in the
/// good state.
pub fn occupancy_distribution(model: &ChannelModel, n: usize) -> Result<OccupancyDistribution> {
    if model.kind == ChannelKind::Bsc {
        return Err(Error::Unsupported(
            "occupancy is degenerate for a single-state BSC".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Domain("block length must be at least 1".into()));
    }
    model.validate()?;
    Ok(OccupancyDistribution::from_table(
        n,
        marked_state_occupancy(&model.transition_matrix(), GOOD, n),
    ))
}

/// Occupancy-time table for a two-state chain `transition`, marking uses
/// spent in `marked`. Shared with the MMPP arrival model.
pub(crate) fn marked_state_occupancy(transition: &DMatrix<f64>, marked: usize, n: usize) -> Vec<f64> {
    let mut entries = Vec::with_capacity(4);
    for c in 0..2 {
        for d in 0..2 {
            let t = transition[(c, d)];
            entries.push(if c == marked { [0.0, t] } else { [t, 0.0] });
        }
    }
    power_coefficients(&AffinePolyMatrix::new(2, entries), n)
}

/// `P(E_g = e_g, E_b = e_b | N_g = n_g, N_b = n_b)`: independent binomials.
pub fn conditional_state_errors(
    n_g: usize,
    n_b: usize,
    e_g: usize,
    e_b: usize,
    model: &ChannelModel,
) -> Result<f64> {
    if e_g > n_g || e_b > n_b {
        return Err(Error::Domain(format!(
            "error counts ({e_g}, {e_b}) exceed visit counts ({n_g}, {n_b})"
        )));
    }
    Ok(binomial_pmf(n_g, e_g, model.eps_g) * binomial_pmf(n_b, e_b, model.eps_b))
}

fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Gaussian tail `Q(x)`.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// QPSK symbol error probability at linear SNR `snr`.
pub fn qpsk_symbol_error(snr: f64) -> f64 {
    let q = gaussian_q(snr.sqrt());
    1.0 - (1.0 - q) * (1.0 - q)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Gilbert-Elliott parameters obtained from a Rayleigh-faded QPSK link
/// thresholded at a fixed SNR. Not yet validated as probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingParameters {
    pub alpha: f64,
    pub beta: f64,
    pub eps_g: f64,
    pub eps_b: f64,
    /// Amplitude ratio `10^((γ_th - γ̄)/20)`.
    pub snr_ratio: f64,
}

impl FadingParameters {
    pub fn bad_state_probability(&self) -> f64 {
        self.beta / (self.alpha + self.beta)
    }

    pub fn into_model(self) -> Result<ChannelModel> {
        ChannelModel::gilbert_elliott(self.alpha, self.beta, self.eps_g, self.eps_b)
    }
}

const FADING_QUAD_TOL: f64 = 1e-10;

/// Level-crossing derivation of the GE parameters plus per-state symbol
/// error rates from the Rayleigh SNR density.
pub fn derive_fading(
    doppler_symbol_product: f64,
    snr_threshold_db: f64,
    mean_snr_db: f64,
) -> Result<FadingParameters> {
    if !(doppler_symbol_product > 0.0 && doppler_symbol_product.is_finite()) {
        return Err(Error::Domain(format!(
            "f_D·T_s = {doppler_symbol_product} must be positive"
        )));
    }
    if !snr_threshold_db.is_finite() || !mean_snr_db.is_finite() {
        return Err(Error::Domain("SNR values must be finite".into()));
    }
    let snr_ratio = 10f64.powf((snr_threshold_db - mean_snr_db) / 20.0);
    let ratio_sq = snr_ratio * snr_ratio;
    let crossing = snr_ratio * doppler_symbol_product * (2.0 * std::f64::consts::PI).sqrt();
    let beta = crossing;
    let alpha = crossing / ratio_sq.exp_m1();

    let mean = db_to_linear(mean_snr_db);
    let threshold = db_to_linear(snr_threshold_db);
    let upper = (10.0 * mean).max(threshold);
    let good_mass = integrate_error_density(mean, threshold, upper)?;
    let bad_mass = integrate_error_density(mean, 0.0, threshold)?;
    // (α+β)/α = e^{ρ²}, (α+β)/β = e^{ρ²}/(e^{ρ²}-1)
    let eps_g = good_mass * ratio_sq.exp();
    let eps_b = bad_mass * ratio_sq.exp() / ratio_sq.exp_m1();
    Ok(FadingParameters {
        alpha,
        beta,
        eps_g,
        eps_b,
        snr_ratio,
    })
}

/// `∫_a^b (1/γ̄) e^{-γ/γ̄} P_e(γ) dγ`, integrated in `u = √γ` so the
/// `√γ` behavior of `P_e` at the origin does not stall the quadrature.
fn integrate_error_density(mean: f64, a: f64, b: f64) -> Result<f64> {
    crate::math::integrate(
        |u| 2.0 * u * (-u * u / mean).exp() / mean * qpsk_symbol_error(u * u),
        a.sqrt(),
        b.sqrt(),
        FADING_QUAD_TOL,
    )
}

/// Validated Gilbert-Elliott model from a fading description.
pub fn from_fading(
    doppler_symbol_product: f64,
    snr_threshold_db: f64,
    mean_snr_db: f64,
) -> Result<ChannelModel> {
    derive_fading(doppler_symbol_product, snr_threshold_db, mean_snr_db)?.into_model()
}

/// Unconditional QPSK symbol error rate under Rayleigh fading with mean
/// linear SNR `mean`, integrated over `[0, ∞)` in one pass.
pub fn rayleigh_qpsk_error(mean_snr_db: f64) -> Result<f64> {
    let mean = db_to_linear(mean_snr_db);
    integrate_error_density(mean, 0.0, 60.0 * mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_ge() -> ChannelModel {
        ChannelModel::gilbert_elliott(0.3938, 0.0202, 0.0097, 0.3713).unwrap()
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(matches!(ChannelModel::bsc(1.5), Err(Error::Domain(_))));
        assert!(ChannelModel::gilbert_elliott(-0.1, 0.2, 0.0, 0.0).is_err());
        assert!(ChannelModel::gilbert_elliott(0.0, 0.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn single_use_bad_state_always_errs() {
        let m = ChannelModel::gilbert_elliott(0.5, 0.5, 0.0, 1.0).unwrap();
        let j = joint_error_distribution(&m, 1).unwrap();
        assert_eq!(j.prob(BAD, GOOD, 1), 0.5);
        assert_eq!(j.prob(BAD, BAD, 1), 0.5);
        assert_eq!(j.prob(BAD, GOOD, 0), 0.0);
        assert_eq!(j.prob(BAD, BAD, 0), 0.0);
    }

    #[test]
    fn bsc_marginal_is_binomial() {
        let m = ChannelModel::bsc(0.1).unwrap();
        let j = joint_error_distribution(&m, 150).unwrap();
        let t = crate::math::LogFactorials::new(150);
        for e in 0..=150 {
            let expect = t.ln_binomial_pmf(150, e, 0.1).exp();
            assert!((j.prob(0, 0, e) - expect).abs() < 1e-12, "e = {e}");
        }
    }

    #[test]
    fn rows_normalize() {
        let j = joint_error_distribution(&paper_ge(), 63).unwrap();
        for c in 0..2 {
            let s: f64 = (0..2).map(|d| j.end_state_prob(c, d)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let o = occupancy_distribution(&paper_ge(), 63).unwrap();
        for c in 0..2 {
            let s: f64 = (0..2).map(|d| o.visits(c, d).iter().sum::<f64>()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let m = paper_ge();
        let j = joint_error_distribution(&m, 20).unwrap();
        let p = m.transition_matrix().pow(20);
        for c in 0..2 {
            for d in 0..2 {
                assert!((j.end_state_prob(c, d) - p[(c, d)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn stationary_matches_power_iteration() {
        let m = paper_ge();
        let p = m.transition_matrix().pow(4096);
        let st = m.stationary();
        for c in 0..2 {
            for d in 0..2 {
                assert!((p[(c, d)] - st[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alternating_chain_occupancy() {
        let m = ChannelModel::gilbert_elliott(1.0, 1.0, 0.0, 0.0).unwrap();
        let o = occupancy_distribution(&m, 2).unwrap();
        // g, b, then back to g
        assert_eq!(o.prob(GOOD, GOOD, 1), 1.0);
        assert_eq!(o.prob(GOOD, BAD, 1), 0.0);
        assert_eq!(o.prob(BAD, BAD, 1), 1.0);
    }

    #[test]
    fn all_good_path_probability() {
        let m = paper_ge();
        let o = occupancy_distribution(&m, 12).unwrap();
        assert!((o.prob(GOOD, GOOD, 12) - (1.0 - m.beta).powi(12)).abs() < 1e-15);
    }

    #[test]
    fn occupancy_rejects_bsc() {
        let m = ChannelModel::bsc(0.1).unwrap();
        assert!(matches!(occupancy_distribution(&m, 5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn state_error_products() {
        let m = paper_ge();
        let v = conditional_state_errors(5, 0, 0, 0, &m).unwrap();
        assert!((v - 0.9903f64.powi(5)).abs() < 1e-15);
        let v = conditional_state_errors(2, 1, 1, 1, &m).unwrap();
        assert!((v - 2.0 * 0.0097 * 0.9903 * 0.3713).abs() < 1e-15);
        let total: f64 = (0..=4)
            .flat_map(|g| (0..=3).map(move |b| (g, b)))
            .map(|(g, b)| conditional_state_errors(4, 3, g, b, &m).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(conditional_state_errors(2, 1, 3, 0, &m).is_err());
    }

    #[test]
    fn fading_error_rates_match_reported_values() {
        let f = derive_fading(0.00082, 2.0, 15.0).unwrap();
        assert!((f.eps_g / 0.0097 - 1.0).abs() < 0.01);
        assert!((f.eps_b / 0.3713 - 1.0).abs() < 0.01);
        assert!((f.alpha / f.beta - 0.3938 / 0.0202).abs() / (0.3938 / 0.0202) < 0.01);
    }

    #[test]
    fn fading_threshold_far_below_mean() {
        let f = derive_fading(0.00082, -80.0, 15.0).unwrap();
        assert!(f.bad_state_probability() < 1e-9);
    }

    #[test]
    fn fading_average_matches_single_quadrature() {
        let f = derive_fading(0.00082, 2.0, 15.0).unwrap();
        let pb = f.bad_state_probability();
        let mixed = (1.0 - pb) * f.eps_g + pb * f.eps_b;
        let direct = rayleigh_qpsk_error(15.0).unwrap();
        assert!((mixed - direct).abs() < 1e-8, "{mixed} vs {direct}");
    }

    #[test]
    fn fading_rejects_nonpositive_doppler() {
        assert!(derive_fading(0.0, 2.0, 15.0).is_err());
    }
}
