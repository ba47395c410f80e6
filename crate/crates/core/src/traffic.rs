//! Packet arrivals and segmentation.
//!
//! Rates are per channel use. Packets have geometric lengths (in bits) and
//! are cut into segments of `K - h` payload bits, one segment per codeword.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::channel::marked_state_occupancy;
use crate::coding::CodeSpec;
use crate::error::{check_probability, Error, Result};

pub const DEFAULT_TAIL_EPS: f64 = 1e-12;

/// Two-state Markov modulator. State 0 emits at `lambda1`, state 1 at
/// `lambda2`; the modulator moves once per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mmpp {
    pub lambda1: f64,
    pub lambda2: f64,
    pub modulator: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    /// Packets per channel use.
    pub lambda: f64,
    /// Geometric packet-length parameter; mean length is `1/rho` bits.
    pub rho: f64,
    pub header_bits: usize,
    pub mmpp: Option<Mmpp>,
}

impl TrafficModel {
    pub fn poisson(lambda: f64, rho: f64, header_bits: usize) -> Result<Self> {
        let t = Self {
            lambda,
            rho,
            header_bits,
            mmpp: None,
        };
        t.validate()?;
        Ok(t)
    }

    /// Modulated arrivals. `lambda` is set to the long-run mean rate.
    pub fn modulated(mmpp: Mmpp, rho: f64, header_bits: usize) -> Result<Self> {
        validate_mmpp(&mmpp)?;
        let q = &mmpp.modulator;
        let (to1, to0) = (q[0][1], q[1][0]);
        let share0 = if to1 + to0 > 0.0 {
            to0 / (to1 + to0)
        } else {
            0.5
        };
        let t = Self {
            lambda: share0 * mmpp.lambda1 + (1.0 - share0) * mmpp.lambda2,
            rho,
            header_bits,
            mmpp: Some(mmpp),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Domain(format!("lambda = {} must be positive", self.lambda)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Domain(format!("rho = {} must lie in (0, 1)", self.rho)));
        }
        if let Some(m) = &self.mmpp {
            validate_mmpp(m)?;
        }
        Ok(())
    }

    pub fn mean_packet_bits(&self) -> f64 {
        1.0 / self.rho
    }

    /// Probability that a decoded codeword with `k` information bits
    /// finishes the head packet: `1 - (1 - rho)^(k - h)`.
    pub fn completion_prob(&self, k: usize) -> Result<f64> {
        if k <= self.header_bits {
            return Err(Error::Config(format!(
                "payload exhausted by header: K = {k}, h = {}",
                self.header_bits
            )));
        }
        let payload = (k - self.header_bits) as f64;
        Ok(-(payload * (-self.rho).ln_1p()).exp_m1())
    }
}

fn validate_mmpp(m: &Mmpp) -> Result<()> {
    for (name, rate) in [("lambda1", m.lambda1), ("lambda2", m.lambda2)] {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::Domain(format!("{name} = {rate} must be nonnegative")));
        }
    }
    for row in &m.modulator {
        for &v in row {
            check_probability("modulator entry", v)?;
        }
        if (row[0] + row[1] - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "modulator row {row:?} does not sum to 1"
            )));
        }
    }
    Ok(())
}

/// `ρ_r` for the given code.
pub fn segment_completion_prob(traffic: &TrafficModel, code: &CodeSpec) -> Result<f64> {
    traffic.completion_prob(code.k)
}

/// Per-codeword arrival law. Term `i` is a `states × states` matrix whose
/// `(m, l)` entry is the probability of `i` arrivals with the modulator
/// moving from `m` to `l`; for Poisson traffic `states = 1`.
#[derive(Debug, Clone)]
pub struct ArrivalDistribution {
    pub states: usize,
    pub terms: Vec<DMatrix<f64>>,
    /// Probability of more than `terms.len() - 1` arrivals, per start state.
    pub truncation_mass: Vec<f64>,
}

impl ArrivalDistribution {
    /// Largest retained arrival count `T`.
    pub fn truncation(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn max_truncation_mass(&self) -> f64 {
        self.truncation_mass.iter().copied().fold(0.0, f64::max)
    }

    /// Scalar `a_i` for Poisson traffic.
    pub fn scalar(&self, i: usize) -> f64 {
        debug_assert_eq!(self.states, 1);
        self.terms.get(i).map_or(0.0, |m| m[(0, 0)])
    }

    /// Arrival-count law from start state `m`, summed over the end state.
    pub fn marginal(&self, start: usize) -> Vec<f64> {
        self.terms.iter().map(|t| t.row(start).sum()).collect()
    }
}

/// Smallest `T` with `P(Poisson(mean) > T) < tail_eps`, and that tail.
fn poisson_truncation(mean: f64, tail_eps: f64) -> (usize, f64) {
    if mean == 0.0 {
        return (0, 0.0);
    }
    let mut t = mean.floor() as usize;
    loop {
        let tail = gamma_lr((t + 1) as f64, mean);
        if tail < tail_eps {
            return (t, tail);
        }
        t += 1;
    }
}

fn poisson_pmf(mean: f64, upto: usize) -> Vec<f64> {
    if mean == 0.0 {
        let mut v = vec![0.0; upto + 1];
        v[0] = 1.0;
        return v;
    }
    let ln_mean = mean.ln();
    (0..=upto)
        .map(|i| (i as f64 * ln_mean - mean - ln_gamma(i as f64 + 1.0)).exp())
        .collect()
}

fn check_inputs(n: usize, tail_eps: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("block length must be at least 1".into()));
    }
    if !(tail_eps > 0.0 && tail_eps < 1.0) {
        return Err(Error::Domain(format!("tail_eps = {tail_eps} must lie in (0, 1)")));
    }
    Ok(())
}

/// Poisson(λN) arrivals per codeword, truncated where the upper tail drops
/// below `tail_eps`.
pub fn poisson_arrivals(traffic: &TrafficModel, n: usize, tail_eps: f64) -> Result<ArrivalDistribution> {
    check_inputs(n, tail_eps)?;
    traffic.validate()?;
    let mean = traffic.lambda * n as f64;
    let (t, tail) = poisson_truncation(mean, tail_eps);
    let terms = poisson_pmf(mean, t)
        .into_iter()
        .map(|a| DMatrix::from_element(1, 1, a))
        .collect();
    Ok(ArrivalDistribution {
        states: 1,
        terms,
        truncation_mass: vec![tail],
    })
}

/// MMPP arrivals: mixes Poisson laws over the time `T_1` the modulator
/// spends in state 0 during a block, jointly with the end state.
pub fn mmpp_arrivals(traffic: &TrafficModel, n: usize, tail_eps: f64) -> Result<ArrivalDistribution> {
    check_inputs(n, tail_eps)?;
    let mmpp = traffic
        .mmpp
        .ok_or_else(|| Error::Unsupported("traffic model has no MMPP modulator".into()))?;
    traffic.validate()?;
    let q = DMatrix::from_fn(2, 2, |r, c| mmpp.modulator[r][c]);
    let occupancy = marked_state_occupancy(&q, 0, n);
    let peak = mmpp.lambda1.max(mmpp.lambda2) * n as f64;
    let (t_max, _) = poisson_truncation(peak, tail_eps);
    let width = n + 1;
    let mut terms = vec![DMatrix::zeros(2, 2); t_max + 1];
    for t1 in 0..=n {
        let mean = mmpp.lambda1 * t1 as f64 + mmpp.lambda2 * (n - t1) as f64;
        let pmf = poisson_pmf(mean, t_max);
        for m in 0..2 {
            for l in 0..2 {
                let w = occupancy[(m * 2 + l) * width + t1];
                if w == 0.0 {
                    continue;
                }
                for (term, p) in terms.iter_mut().zip(&pmf) {
                    term[(m, l)] += w * p;
                }
            }
        }
    }
    let truncation_mass = (0..2)
        .map(|m| (1.0 - terms.iter().map(|t| t.row(m).sum()).sum::<f64>()).max(0.0))
        .collect();
    Ok(ArrivalDistribution {
        states: 2,
        terms,
        truncation_mass,
    })
}

/// Dispatches on whether the traffic is modulated.
pub fn arrivals(traffic: &TrafficModel, n: usize, tail_eps: f64) -> Result<ArrivalDistribution> {
    if traffic.mmpp.is_some() {
        mmpp_arrivals(traffic, n, tail_eps)
    } else {
        poisson_arrivals(traffic, n, tail_eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn voip() -> TrafficModel {
        TrafficModel::poisson(50.0 / 28_750.0, 1.0 / 88.55, 2).unwrap()
    }

    #[test]
    fn completion_prob_voice_payload() {
        let r = voip().completion_prob(36).unwrap();
        let expect = 1.0 - (1.0 - 1.0 / 88.55f64).powi(34);
        assert!((r - expect).abs() < 1e-14);
    }

    #[test]
    fn completion_prob_rejects_header_only() {
        assert!(matches!(voip().completion_prob(2), Err(Error::Config(_))));
    }

    #[test]
    fn completion_prob_near_one_bit_packets() {
        let t = TrafficModel::poisson(0.01, 1.0 - 1e-12, 0).unwrap();
        assert!(t.completion_prob(5).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn completion_prob_monotone() {
        let t = voip();
        let mut prev = 0.0;
        for k in 3..200 {
            let r = t.completion_prob(k).unwrap();
            assert!(r > prev);
            prev = r;
        }
        let h5 = TrafficModel::poisson(0.01, 1.0 / 88.55, 5).unwrap();
        assert!(h5.completion_prob(40).unwrap() < voip().completion_prob(40).unwrap());
    }

    #[test]
    fn poisson_normalizes_and_has_mean() {
        let t = voip();
        let a = poisson_arrivals(&t, 63, 1e-12).unwrap();
        let total: f64 = a.terms.iter().map(|m| m[(0, 0)]).sum::<f64>() + a.truncation_mass[0];
        assert!((total - 1.0).abs() < 1e-12);
        let mean: f64 = (0..=a.truncation()).map(|i| i as f64 * a.scalar(i)).sum();
        assert!((mean - t.lambda * 63.0).abs() < 1e-12 * 63.0);
    }

    #[test]
    fn mmpp_requires_modulator() {
        assert!(matches!(
            mmpp_arrivals(&voip(), 10, 1e-12),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn mmpp_absorbing_modulator_is_poisson() {
        let m = Mmpp {
            lambda1: 0.02,
            lambda2: 0.3,
            modulator: [[1.0, 0.0], [0.0, 1.0]],
        };
        let t = TrafficModel::modulated(m, 0.1, 0).unwrap();
        let a = mmpp_arrivals(&t, 40, 1e-12).unwrap();
        let p = poisson_pmf(0.8, a.truncation());
        for (i, term) in a.terms.iter().enumerate() {
            assert!((term[(0, 0)] - p[i]).abs() < 1e-14);
            assert_eq!(term[(0, 1)], 0.0);
        }
    }
}
