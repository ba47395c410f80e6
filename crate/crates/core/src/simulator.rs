//! Monte Carlo simulation of the coded transmit queue.
//!
//! Each replication owns a ChaCha8 generator per concern, all seeded from
//! the same replication seed and separated by stream number
//! ([`STREAM_CHANNEL`], [`STREAM_ARRIVALS`], [`STREAM_LENGTHS`],
//! [`STREAM_DECODE`]), so one concern can be replayed while the others vary.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::channel::{ChannelKind, ChannelModel, BAD, GOOD};
use crate::coding::{bch_undetected_weights, CodeSpec, RandomDecodeTerms, Scheme, WeightModel};
use crate::error::{Error, Result};
use crate::queueing::{GMatrix, QueueChain};
use crate::traffic::TrafficModel;

pub const STREAM_CHANNEL: u64 = 0;
pub const STREAM_ARRIVALS: u64 = 1;
pub const STREAM_LENGTHS: u64 = 2;
pub const STREAM_DECODE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PacketLength {
    /// Geometric number of bits with the given parameter.
    Geometric(f64),
    /// Every packet has exactly this many bits.
    Constant(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UndetectedMode {
    /// Undetected errors are revealed at once and handled as detected.
    Genie,
    /// Undetected errors pass; the packet CRC fails on completion and the
    /// whole packet is sent again.
    CrcLate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Codeword slots per replication, including warmup.
    pub slots: u64,
    /// Leading slots of each replication left out of the statistics.
    pub warmup: u64,
    pub seed: u64,
    pub packet_length: PacketLength,
    pub undetected: UndetectedMode,
    /// Independent replications; the confidence intervals come from the
    /// spread of their means.
    pub replications: usize,
    /// CCDF is reported for `τ = 0..=max_tau`.
    pub max_tau: usize,
    pub weights: WeightModel,
}

impl SimConfig {
    pub fn new(slots: u64, seed: u64, packet_length: PacketLength, undetected: UndetectedMode) -> Self {
        Self {
            slots,
            warmup: slots / 100,
            seed,
            packet_length,
            undetected,
            replications: 20,
            max_tau: 10,
            weights: WeightModel::Approximate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots <= self.warmup {
            return Err(Error::Config(format!(
                "slots ({}) must exceed warmup ({})",
                self.slots, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("at least one replication is required".into()));
        }
        match self.packet_length {
            PacketLength::Constant(0) => Err(Error::Config("constant packet length must be at least 1".into())),
            PacketLength::Geometric(r) if !(r > 0.0 && r <= 1.0) => {
                Err(Error::Domain(format!("geometric length parameter {r} must lie in (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecodeCounters {
    pub success: u64,
    pub detected_fail: u64,
    pub undetected_fail: u64,
}

impl DecodeCounters {
    pub fn total(&self) -> u64 {
        self.success + self.detected_fail + self.undetected_fail
    }

    fn merge(&mut self, o: &DecodeCounters) {
        self.success += o.success;
        self.detected_fail += o.detected_fail;
        self.undetected_fail += o.undetected_fail;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CcdfPoint {
    pub tau: usize,
    pub estimate: f64,
    /// Half-width of the 95% confidence interval.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub ccdf: Vec<CcdfPoint>,
    pub mean_queue: f64,
    pub decode_counters: DecodeCounters,
    /// Packets delivered per measured slot.
    pub effective_service_rate: f64,
    pub measured_slots: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Success,
    Detected,
    Undetected,
}

// Channel path sampler working run by run.
struct ChannelSampler {
    model: ChannelModel,
    state: usize,
    leave: [Option<Geometric>; 2],
}

struct BlockErrors {
    good_uses: usize,
    good_errors: usize,
    bad_errors: usize,
}

impl ChannelSampler {
    fn new(model: &ChannelModel, rng: &mut ChaCha8Rng) -> Result<Self> {
        let leave_prob = |s: usize| match s {
            BAD => model.alpha,
            _ => model.beta,
        };
        let geom = |p: f64| -> Result<Option<Geometric>> {
            if p <= 0.0 {
                Ok(None)
            } else {
                Geometric::new(p)
                    .map(Some)
                    .map_err(|e| Error::Domain(format!("state sojourn law: {e}")))
            }
        };
        let state = if model.kind == ChannelKind::Bsc {
            BAD
        } else {
            let pi = model.stationary();
            if rng.random::<f64>() < pi[BAD] {
                BAD
            } else {
                GOOD
            }
        };
        Ok(Self {
            model: *model,
            state,
            leave: [geom(leave_prob(BAD))?, geom(leave_prob(GOOD))?],
        })
    }

    fn binomial(n: usize, p: f64, rng: &mut ChaCha8Rng) -> usize {
        if n == 0 || p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        Binomial::new(n as u64, p).expect("valid binomial").sample(rng) as usize
    }

    fn block(&mut self, n: usize, rng: &mut ChaCha8Rng) -> BlockErrors {
        if self.model.kind == ChannelKind::Bsc {
            return BlockErrors {
                good_uses: 0,
                good_errors: 0,
                bad_errors: Self::binomial(n, self.model.p, rng),
            };
        }
        let mut out = BlockErrors {
            good_uses: 0,
            good_errors: 0,
            bad_errors: 0,
        };
        let mut left = n;
        while left > 0 {
            // uses spent in the current state before it changes, at least 1
            let run = match &self.leave[self.state] {
                None => usize::MAX,
                Some(g) => 1usize.saturating_add(g.sample(rng).min(usize::MAX as u64 - 1) as usize),
            };
            let used = run.min(left);
            let errors = Self::binomial(used, self.model.crossover(self.state), rng);
            if self.state == GOOD {
                out.good_uses += used;
                out.good_errors += errors;
            } else {
                out.bad_errors += errors;
            }
            left -= used;
            if run <= used {
                self.state = 1 - self.state;
            }
        }
        out
    }
}

enum Decoder {
    Bch { correct: usize, detect: usize, w: Vec<f64> },
    Random(RandomDecodeTerms),
}

impl Decoder {
    fn new(model: &ChannelModel, code: &CodeSpec, weights: &WeightModel) -> Result<Self> {
        Ok(match code.scheme {
            Scheme::Bch => {
                let t = code.bch.expect("BCH code has parameters").t;
                Decoder::Bch {
                    correct: t - code.nu,
                    detect: t + code.nu,
                    w: bch_undetected_weights(code, weights)?,
                }
            }
            _ => Decoder::Random(RandomDecodeTerms::new(model, code)?),
        })
    }

    fn decide(&mut self, errs: &BlockErrors, rng: &mut ChaCha8Rng) -> Outcome {
        match self {
            Decoder::Bch { correct, detect, w } => {
                let e = errs.good_errors + errs.bad_errors;
                if e <= *correct {
                    Outcome::Success
                } else if e > *detect && rng.random::<f64>() < w[e] {
                    Outcome::Undetected
                } else {
                    Outcome::Detected
                }
            }
            Decoder::Random(terms) => {
                let (fail, und) = terms.terms(errs.good_uses, errs.good_errors, errs.bad_errors);
                let u = rng.random::<f64>();
                if u < und {
                    Outcome::Undetected
                } else if u < fail {
                    Outcome::Detected
                } else {
                    Outcome::Success
                }
            }
        }
    }
}

// Arrival sampler; MMPP modulator moves once per channel use.
struct ArrivalSampler {
    traffic: TrafficModel,
    n: usize,
    modulator_state: usize,
}

impl ArrivalSampler {
    fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
        if mean <= 0.0 {
            0
        } else {
            Poisson::new(mean).expect("positive mean").sample(rng) as u64
        }
    }

    fn block(&mut self, rng: &mut ChaCha8Rng) -> u64 {
        let Some(m) = self.traffic.mmpp else {
            return Self::poisson(self.traffic.lambda * self.n as f64, rng);
        };
        let mut mean = 0.0;
        for _ in 0..self.n {
            mean += if self.modulator_state == 0 { m.lambda1 } else { m.lambda2 };
            let stay = m.modulator[self.modulator_state][self.modulator_state];
            if rng.random::<f64>() >= stay {
                self.modulator_state = 1 - self.modulator_state;
            }
        }
        Self::poisson(mean, rng)
    }
}

struct Packet {
    segments: u64,
    left: u64,
    corrupted: bool,
}

struct Replication {
    ccdf_counts: Vec<u64>,
    queue_sum: f64,
    counters: DecodeCounters,
    departures: u64,
    measured: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn replication_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn run_replication(
    model: &ChannelModel,
    code: &CodeSpec,
    traffic: &TrafficModel,
    sim: &SimConfig,
    seed: u64,
) -> Result<Replication> {
    let mut ch_rng = stream(seed, STREAM_CHANNEL);
    let mut arr_rng = stream(seed, STREAM_ARRIVALS);
    let mut len_rng = stream(seed, STREAM_LENGTHS);
    let mut dec_rng = stream(seed, STREAM_DECODE);

    let payload = code.k.checked_sub(traffic.header_bits).filter(|&p| p > 0).ok_or_else(|| {
        Error::Config(format!("payload exhausted by header: K = {}, h = {}", code.k, traffic.header_bits))
    })? as u64;
    let length_law = match sim.packet_length {
        PacketLength::Geometric(r) if r < 1.0 => {
            Some(Geometric::new(r).map_err(|e| Error::Domain(e.to_string()))?)
        }
        _ => None,
    };
    let segments = |rng: &mut ChaCha8Rng| -> u64 {
        let bits = match (sim.packet_length, &length_law) {
            (PacketLength::Constant(l), _) => l,
            (_, Some(g)) => 1 + g.sample(rng),
            (_, None) => 1,
        };
        bits.div_ceil(payload)
    };

    let mut channel = ChannelSampler::new(model, &mut ch_rng)?;
    let mut decoder = Decoder::new(model, code, &sim.weights)?;
    let mut source = ArrivalSampler {
        traffic: *traffic,
        n: code.n,
        modulator_state: 0,
    };
    let mut queue: VecDeque<Packet> = VecDeque::new();
    let mut rep = Replication {
        ccdf_counts: vec![0; sim.max_tau + 1],
        queue_sum: 0.0,
        counters: DecodeCounters::default(),
        departures: 0,
        measured: 0,
    };

    for slot in 0..sim.slots {
        let measured = slot >= sim.warmup;
        if measured {
            let q = queue.len();
            rep.queue_sum += q as f64;
            for (tau, c) in rep.ccdf_counts.iter_mut().enumerate() {
                if q > tau {
                    *c += 1;
                }
            }
            rep.measured += 1;
        }
        let errs = channel.block(code.n, &mut ch_rng);
        let outcome = decoder.decide(&errs, &mut dec_rng);
        if measured {
            match outcome {
                Outcome::Success => rep.counters.success += 1,
                Outcome::Detected => rep.counters.detected_fail += 1,
                Outcome::Undetected => rep.counters.undetected_fail += 1,
            }
        }
        let accepted = match (outcome, sim.undetected) {
            (Outcome::Success, _) => true,
            (Outcome::Undetected, UndetectedMode::CrcLate) => true,
            _ => false,
        };
        if accepted {
            if let Some(head) = queue.front_mut() {
                head.left -= 1;
                head.corrupted |= outcome == Outcome::Undetected;
                if head.left == 0 {
                    if head.corrupted {
                        head.left = head.segments;
                        head.corrupted = false;
                    } else {
                        queue.pop_front();
                        if measured {
                            rep.departures += 1;
                        }
                    }
                }
            }
        }
        for _ in 0..source.block(&mut arr_rng) {
            let s = segments(&mut len_rng);
            queue.push_back(Packet {
                segments: s,
                left: s,
                corrupted: false,
            });
        }
    }
    Ok(rep)
}

/// Runs `sim.replications` independent replications and merges them.
pub fn simulate(
    model: &ChannelModel,
    code: &CodeSpec,
    traffic: &TrafficModel,
    sim: &SimConfig,
) -> Result<SimReport> {
    sim.validate()?;
    model.validate()?;
    traffic.validate()?;
    let reps: Vec<Replication> = (0..sim.replications)
        .into_par_iter()
        .map(|r| run_replication(model, code, traffic, sim, replication_seed(sim.seed, r)))
        .collect::<Result<_>>()?;

    let r = reps.len() as f64;
    let t_crit = if reps.len() > 1 {
        StudentsT::new(0.0, 1.0, r - 1.0)
            .map_err(|e| Error::Numerical(e.to_string()))?
            .inverse_cdf(0.975)
    } else {
        f64::INFINITY
    };
    let ccdf = (0..=sim.max_tau)
        .map(|tau| {
            let means: Vec<f64> = reps
                .iter()
                .map(|x| x.ccdf_counts[tau] as f64 / x.measured as f64)
                .collect();
            let mean = means.iter().sum::<f64>() / r;
            let half_width = if reps.len() > 1 {
                let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1.0);
                t_crit * (var / r).sqrt()
            } else {
                f64::INFINITY
            };
            CcdfPoint {
                tau,
                estimate: mean,
                half_width,
            }
        })
        .collect();
    let mut counters = DecodeCounters::default();
    let (mut measured, mut queue_sum, mut departures) = (0u64, 0.0, 0u64);
    for x in &reps {
        counters.merge(&x.counters);
        measured += x.measured;
        queue_sum += x.queue_sum;
        departures += x.departures;
    }
    Ok(SimReport {
        seed: sim.seed,
        ccdf,
        mean_queue: queue_sum / measured as f64,
        decode_counters: counters,
        effective_service_rate: departures as f64 / measured as f64,
        measured_slots: measured,
    })
}

/// Empirical first-passage matrix: row `r` holds the frequencies of the
/// phase in which the chain first enters the level below, starting one
/// level up in phase `r`.
#[derive(Debug, Clone)]
pub struct FirstPassageEstimate {
    pub matrix: DMatrix<f64>,
    pub trials_per_row: usize,
}

impl FirstPassageEstimate {
    /// Largest `|Ĝ - G|` in units of the binomial standard error.
    pub fn max_sigma_deviation(&self, g: &GMatrix) -> f64 {
        let n = self.trials_per_row as f64;
        let mut worst: f64 = 0.0;
        for (est, exact) in self.matrix.iter().zip(g.matrix.iter()) {
            let sd = (exact * (1.0 - exact) / n).sqrt();
            let dev = (est - exact).abs();
            worst = worst.max(if sd > 0.0 { dev / sd } else if dev > 0.0 { f64::INFINITY } else { 0.0 });
        }
        worst
    }
}

const MAX_PASSAGE_STEPS: u64 = 100_000_000;

/// Simulates first passages one level down through the interior blocks.
pub fn first_passage_check(chain: &QueueChain, g: &GMatrix, trials: usize, seed: u64) -> Result<FirstPassageEstimate> {
    if !chain.service.is_stable() || g.forced {
        return Err(Error::Unstable {
            factor: chain.service.stability_factor,
        });
    }
    let s = chain.block_dim;
    // moves per phase: (level change, destination phase)
    let mut moves = Vec::with_capacity(s);
    for r in 0..s {
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut push = |m: &DMatrix<f64>, jump: i64| {
            for d in 0..s {
                if m[(r, d)] > 0.0 {
                    targets.push((jump, d));
                    weights.push(m[(r, d)]);
                }
            }
        };
        push(&chain.b, -1);
        push(&chain.a, 0);
        for (i, f) in chain.f.iter().enumerate() {
            push(f, i as i64 + 1);
        }
        let index = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("phase {r} has no moves: {e}")))?;
        moves.push((targets, index));
    }
    let mut rng = stream(seed, STREAM_DECODE);
    let mut counts = DMatrix::zeros(s, s);
    for start in 0..s {
        for _ in 0..trials {
            let (mut level, mut phase, mut steps) = (0i64, start, 0u64);
            loop {
                let (targets, index) = &moves[phase];
                let (jump, dest) = targets[index.sample(&mut rng)];
                level += jump;
                phase = dest;
                steps += 1;
                if level < 0 {
                    counts[(start, phase)] += 1.0;
                    break;
                }
                if steps > MAX_PASSAGE_STEPS {
                    return Err(Error::Numerical(format!(
                        "first passage from phase {start} exceeded {MAX_PASSAGE_STEPS} steps"
                    )));
                }
            }
        }
    }
    Ok(FirstPassageEstimate {
        matrix: counts / trials as f64,
        trials_per_row: trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_light_load_stays_small() {
        let model = ChannelModel::gilbert_elliott(0.3, 0.1, 0.0, 0.0).unwrap();
        let code = CodeSpec::bch(63, 36, 0).unwrap();
        let traffic = TrafficModel::poisson(1e-5, 0.999_999, 0).unwrap();
        let mut sim = SimConfig::new(50_000, 7, PacketLength::Constant(1), UndetectedMode::Genie);
        sim.replications = 2;
        let rep = simulate(&model, &code, &traffic, &sim).unwrap();
        assert!(rep.ccdf[1].estimate < 1e-3);
        assert_eq!(rep.decode_counters.total(), rep.measured_slots);
        assert_eq!(rep.decode_counters.detected_fail, 0);
    }

    #[test]
    fn reproducible_per_seed() {
        let model = ChannelModel::gilbert_elliott(0.3938, 0.0202, 0.0097, 0.3713).unwrap();
        let code = CodeSpec::bch(63, 36, 1).unwrap();
        let traffic = TrafficModel::poisson(50.0 / 28_750.0, 1.0 / 88.55, 2).unwrap();
        let mut sim = SimConfig::new(20_000, 11, PacketLength::Geometric(1.0 / 88.55), UndetectedMode::CrcLate);
        sim.replications = 3;
        let a = simulate(&model, &code, &traffic, &sim).unwrap();
        let b = simulate(&model, &code, &traffic, &sim).unwrap();
        assert_eq!(a, b);
        sim.seed = 12;
        assert_ne!(a, simulate(&model, &code, &traffic, &sim).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let sim = SimConfig {
            warmup: 10,
            ..SimConfig::new(10, 0, PacketLength::Constant(1), UndetectedMode::Genie)
        };
        assert!(sim.validate().is_err());
        let sim = SimConfig::new(10, 0, PacketLength::Constant(0), UndetectedMode::Genie);
        assert!(sim.validate().is_err());
    }
}
