//! Two-stage selection of `(N, K, ν)`: the smallest safety margin meeting
//! an undetected-error target for each `(N, K)`, then the queue tail at
//! that margin minimized over the grid.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{from_fading, ChannelModel};
use crate::coding::{bch_codes_of_length, CodeSpec, FailureProfile, ProfileEvaluator, Scheme, WeightModel};
use crate::error::{Error, Result};
use crate::queueing::{analyze, service_rate, tail_probability};
use crate::traffic::TrafficModel;

/// Voice traffic used by the presets.
pub const VOIP_BIT_RATE: f64 = 28_750.0;
pub const VOIP_PACKET_RATE: f64 = 50.0;
pub const VOIP_MEAN_PACKET_BITS: f64 = 88.55;
pub const VOIP_HEADER_BITS: usize = 2;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub scheme: Scheme,
    pub channel: ChannelModel,
    pub traffic: TrafficModel,
    /// `(N, candidate K values)` pairs.
    pub candidates: Vec<(usize, Vec<usize>)>,
    pub ue_threshold: f64,
    pub tau: usize,
    pub weights: WeightModel,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.ue_threshold > 0.0 && self.ue_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "ue_threshold = {} must lie in (0, 1]",
                self.ue_threshold
            )));
        }
        if self.candidates.is_empty() || self.candidates.iter().any(|(_, ks)| ks.is_empty()) {
            return Err(Error::Config("candidate grid is empty".into()));
        }
        self.channel.validate()?;
        self.traffic.validate()
    }

    fn points(&self) -> Vec<(usize, usize)> {
        let mut pts: Vec<_> = self
            .candidates
            .iter()
            .flat_map(|(n, ks)| ks.iter().map(move |&k| (*n, k)))
            .collect();
        pts.sort_unstable();
        pts.dedup();
        pts
    }
}

/// Every integer `K` with `lo <= K/N <= hi`.
pub fn rate_grid(n: usize, lo: f64, hi: f64) -> Vec<usize> {
    (1..n)
        .filter(|&k| {
            let r = k as f64 / n as f64;
            r >= lo - 1e-12 && r <= hi + 1e-12
        })
        .collect()
}

/// Every tabulated BCH dimension for each length, in increasing `K`.
pub fn bch_grid(lengths: &[usize]) -> Vec<(usize, Vec<usize>)> {
    lengths
        .iter()
        .map(|&n| {
            let mut ks: Vec<usize> = bch_codes_of_length(n).into_iter().map(|(k, _)| k).collect();
            ks.sort_unstable();
            (n, ks)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Infeasible,
    Unstable,
    Error(String),
}

impl std::fmt::Display for RowStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowStatus::Ok => f.write_str("ok"),
            RowStatus::Infeasible => f.write_str("infeasible"),
            RowStatus::Unstable => f.write_str("unstable"),
            RowStatus::Error(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    /// Chosen margin, or the largest one tried when infeasible.
    pub nu: usize,
    pub p_ue: f64,
    pub p_f: f64,
    pub mu_n: f64,
    pub stability_factor: f64,
    pub tail_prob: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best: Option<usize>,
}

impl SweepResult {
    pub fn best_row(&self) -> Option<&SweepRow> {
        self.best.map(|i| &self.rows[i])
    }

    pub fn row(&self, n: usize, k: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.n == n && r.k == k)
    }
}

/// Outcome of the stage-1 search.
#[derive(Debug, Clone)]
pub struct MarginSearch {
    /// Smallest admissible margin, if any.
    pub nu: Option<usize>,
    /// Profile at `nu`, or at the largest margin tried.
    pub profile: FailureProfile,
    pub code: CodeSpec,
}

type CacheKey = (Scheme, usize, usize, [u64; 5], u64, u64);

fn stage1_cache() -> &'static Mutex<HashMap<CacheKey, MarginSearch>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, MarginSearch>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn weight_tag(w: &WeightModel) -> u64 {
    match w {
        WeightModel::Approximate => 0,
        WeightModel::BinomialLike => 1,
        WeightModel::Table(t) => {
            let mut h = DefaultHasher::new();
            for v in &t.counts {
                v.to_bits().hash(&mut h);
            }
            h.finish() | 2
        }
    }
}

/// Linear search from `ν = 0` with a shared evaluator.
pub fn search_margin(
    evaluator: &ProfileEvaluator,
    base: &CodeSpec,
    ue_threshold: f64,
) -> Result<MarginSearch> {
    let mut last = None;
    for nu in 0..=base.max_nu() {
        let code = base.with_nu(nu)?;
        let profile = evaluator.profile(&code)?;
        if profile.avg_undetected <= ue_threshold {
            return Ok(MarginSearch {
                nu: Some(nu),
                profile,
                code,
            });
        }
        last = Some((code, profile));
    }
    let (code, profile) = last.expect("margin range is never empty");
    Ok(MarginSearch {
        nu: None,
        profile,
        code,
    })
}

/// Smallest `ν` whose averaged undetected-error bound meets `ue_threshold`;
/// `None` when no admissible margin does.
pub fn find_min_nu(
    model: &ChannelModel,
    base: &CodeSpec,
    ue_threshold: f64,
    weights: &WeightModel,
) -> Result<Option<usize>> {
    let evaluator = ProfileEvaluator::new(model, base.n, base.scheme, weights.clone())?;
    Ok(search_margin(&evaluator, base, ue_threshold)?.nu)
}

fn cached_search(
    evaluator: &ProfileEvaluator,
    spec: &SweepSpec,
    base: &CodeSpec,
) -> Result<MarginSearch> {
    let key = (
        spec.scheme,
        base.n,
        base.k,
        spec.channel.cache_key(),
        spec.ue_threshold.to_bits(),
        weight_tag(&spec.weights),
    );
    if let Some(hit) = stage1_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let found = search_margin(evaluator, base, spec.ue_threshold)?;
    stage1_cache()
        .lock()
        .expect("cache poisoned")
        .insert(key, found.clone());
    Ok(found)
}

fn evaluate_row(spec: &SweepSpec, evaluator: &ProfileEvaluator, n: usize, k: usize) -> SweepRow {
    let mut row = SweepRow {
        n,
        k,
        nu: 0,
        p_ue: f64::NAN,
        p_f: f64::NAN,
        mu_n: f64::NAN,
        stability_factor: f64::NAN,
        tail_prob: 1.0,
        status: RowStatus::Ok,
    };
    let run = |row: &mut SweepRow| -> Result<()> {
        let base = CodeSpec::new(spec.scheme, n, k, 0)?;
        let found = cached_search(evaluator, spec, &base)?;
        row.nu = found.code.nu;
        row.p_ue = found.profile.avg_undetected;
        row.p_f = found.profile.avg_failure;
        let service = service_rate(&found.profile, &spec.traffic, &found.code)?;
        row.mu_n = service.mu_n;
        row.stability_factor = service.stability_factor;
        if found.nu.is_none() {
            row.status = RowStatus::Infeasible;
        }
        if !service.is_stable() {
            row.status = RowStatus::Unstable;
            return Ok(());
        }
        let sol = analyze(&spec.channel, &found.code, &spec.traffic, &found.profile, spec.tau + 2)?;
        row.tail_prob = tail_probability(&sol.stationary, spec.tau)?;
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.status = RowStatus::Error(e.to_string());
        row.tail_prob = 1.0;
    }
    row
}

/// Runs both stages over the grid. Row failures are recorded, never fatal.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let points = spec.points();
    let mut lengths: Vec<usize> = points.iter().map(|p| p.0).collect();
    lengths.dedup();
    let evaluators: HashMap<usize, std::result::Result<ProfileEvaluator, Error>> = lengths
        .par_iter()
        .map(|&n| (n, ProfileEvaluator::new(&spec.channel, n, spec.scheme, spec.weights.clone())))
        .collect();
    let mut rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(n, k)| match &evaluators[&n] {
            Ok(ev) => evaluate_row(spec, ev, n, k),
            Err(e) => SweepRow {
                n,
                k,
                nu: 0,
                p_ue: f64::NAN,
                p_f: f64::NAN,
                mu_n: f64::NAN,
                stability_factor: f64::NAN,
                tail_prob: 1.0,
                status: RowStatus::Error(e.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| (a.n, a.k).cmp(&(b.n, b.k)));
    let best = select_best(&rows);
    Ok(SweepResult { rows, best })
}

/// Argmin of the tail over usable rows; ties go to smaller `N`, then
/// larger `K`.
pub fn select_best(rows: &[SweepRow]) -> Option<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| r.status == RowStatus::Ok && r.stability_factor < 1.0)
        .min_by(|(_, a), (_, b)| {
            a.tail_prob
                .total_cmp(&b.tail_prob)
                .then(a.n.cmp(&b.n))
                .then(b.k.cmp(&a.k))
        })
        .map(|(i, _)| i)
}

/// A named, ready-to-run sweep.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub spec: SweepSpec,
    /// `(f_D·T_s, γ_th dB, γ̄ dB)` the channel is associated with.
    pub fading: Option<(f64, f64, f64)>,
}

pub const VOIP_FADING: (f64, f64, f64) = (0.00082, 2.0, 15.0);

/// Voice traffic: 50 packets/s at 28.75 kb/s, 88.55-bit mean packets, 2
/// header bits per segment.
pub fn voip_traffic() -> TrafficModel {
    TrafficModel::poisson(
        VOIP_PACKET_RATE / VOIP_BIT_RATE,
        1.0 / VOIP_MEAN_PACKET_BITS,
        VOIP_HEADER_BITS,
    )
    .expect("preset traffic is valid")
}

/// Gilbert-Elliott parameters of the voice scenario as reported for the
/// fading triple [`VOIP_FADING`].
pub fn voip_gec_channel() -> ChannelModel {
    ChannelModel::gilbert_elliott(0.3938, 0.0202, 0.0097, 0.3713).expect("preset channel is valid")
}

pub fn scenario_presets() -> Vec<Preset> {
    let bsc_grid: Vec<_> = (1..=6).map(|i| 50 * i).map(|n| (n, rate_grid(n, 0.2, 0.6))).collect();
    let bch_lengths = [15, 31, 63, 127];
    let mut presets = vec![
        Preset {
            name: "voip-bsc",
            description: "random codes (ML) on a BSC with p = 0.1, N = 50..300, rates 0.2..0.6",
            spec: SweepSpec {
                scheme: Scheme::RandomMl,
                channel: ChannelModel::bsc(0.1).expect("valid"),
                traffic: voip_traffic(),
                candidates: bsc_grid,
                ue_threshold: 5e-5,
                tau: 10,
                weights: WeightModel::Approximate,
            },
            fading: None,
        },
        Preset {
            name: "voip-gec",
            description: "BCH codes on the Gilbert-Elliott channel (0.3938, 0.0202, 0.0097, 0.3713)",
            spec: SweepSpec {
                scheme: Scheme::Bch,
                channel: voip_gec_channel(),
                traffic: voip_traffic(),
                candidates: bch_grid(&bch_lengths),
                ue_threshold: 1e-5,
                tau: 5,
                weights: WeightModel::Approximate,
            },
            fading: Some(VOIP_FADING),
        },
    ];
    if let Ok(channel) = from_fading(VOIP_FADING.0, VOIP_FADING.1, VOIP_FADING.2) {
        presets.push(Preset {
            name: "voip-gec-fading",
            description: "BCH codes on the channel derived from f_D·T_s = 0.00082, 2 dB threshold, 15 dB mean SNR",
            spec: SweepSpec {
                scheme: Scheme::Bch,
                channel,
                traffic: voip_traffic(),
                candidates: bch_grid(&bch_lengths),
                ue_threshold: 1e-5,
                tau: 5,
                weights: WeightModel::Approximate,
            },
            fading: Some(VOIP_FADING),
        });
    }
    presets
}

pub fn preset(name: &str) -> Option<Preset> {
    scenario_presets().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_one_needs_no_margin() {
        let code = CodeSpec::bch(63, 36, 0).unwrap();
        let nu = find_min_nu(&voip_gec_channel(), &code, 1.0, &WeightModel::Approximate).unwrap();
        assert_eq!(nu, Some(0));
    }

    #[test]
    fn gec_bch_margin() {
        let code = CodeSpec::bch(63, 36, 0).unwrap();
        let nu = find_min_nu(&voip_gec_channel(), &code, 1e-5, &WeightModel::Approximate).unwrap();
        assert_eq!(nu, Some(1));
    }

    #[test]
    fn single_candidate_is_best() {
        let mut spec = preset("voip-gec").unwrap().spec;
        spec.candidates = vec![(63, vec![36])];
        let res = run_sweep(&spec).unwrap();
        assert_eq!(res.best, Some(0));
    }

    #[test]
    fn rate_grid_bounds() {
        let g = rate_grid(50, 0.2, 0.6);
        assert_eq!(g.first(), Some(&10));
        assert_eq!(g.last(), Some(&30));
    }

    #[test]
    fn tie_break_prefers_short_then_high_rate() {
        let row = |n, k| SweepRow {
            n,
            k,
            nu: 0,
            p_ue: 0.0,
            p_f: 0.0,
            mu_n: 1.0,
            stability_factor: 0.5,
            tail_prob: 0.1,
            status: RowStatus::Ok,
        };
        let rows = vec![row(63, 30), row(63, 36), row(127, 71)];
        assert_eq!(select_best(&rows), Some(1));
    }
}
