//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[channel]`, `[traffic]`,
//! `[code]`, `[constraints]` and an optional `[sim]`. Rates are given in
//! human units (kb/s, packets/s, bits) and converted to per-channel-use
//! quantities exactly once, in [`Scenario::from_file`].
//!
//! ```toml
//! name = "voip-gec"
//!
//! [channel]
//! kind = "gilbert-elliott"      # or "bsc" (p) or "fading"
//! alpha = 0.3938
//! beta = 0.0202
//! eps_g = 0.0097
//! eps_b = 0.3713
//!
//! [traffic]
//! bit_rate_kbps = 28.75
//! packet_rate = 50.0            # packets/s; or a [traffic.mmpp] table
//! mean_packet_bits = 88.55
//! header_bits = 2
//! packet_length = "geometric"   # or { constant = 90 }
//!
//! [code]
//! scheme = "bch"                # "random-ml", "random-md"
//! lengths = [15, 31, 63, 127]   # sweep grid
//! n = 63                        # single point for `analyze`
//! k = 36
//! nu = 1                        # omit to search the smallest admissible margin
//!
//! [constraints]
//! ue_threshold = 1e-5
//! tau = 5
//! ```

use std::path::{Path, PathBuf};

use codeq::channel::derive_fading;
use codeq::coding::{CodeSpec, Scheme, WeightModel, WeightTable};
use codeq::optimizer::{bch_grid, rate_grid, SweepSpec};
use codeq::simulator::{PacketLength, UndetectedMode};
use codeq::traffic::Mmpp;
use codeq::{ChannelModel, TrafficModel};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub channel: ChannelSection,
    pub traffic: TrafficSection,
    pub code: CodeSection,
    pub constraints: ConstraintSection,
    pub sim: Option<SimSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChannelSection {
    Bsc(BscSection),
    GilbertElliott(GeSection),
    Fading(FadingSection),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BscSection {
    pub p: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeSection {
    pub alpha: f64,
    pub beta: f64,
    pub eps_g: f64,
    pub eps_b: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingSection {
    /// Normalized Doppler `f_D·T_s`.
    pub doppler_symbol_product: f64,
    pub threshold_db: f64,
    pub mean_snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketLaw {
    Geometric,
    Constant(u64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub bit_rate_kbps: f64,
    pub packet_rate: Option<f64>,
    pub mmpp: Option<MmppSection>,
    pub mean_packet_bits: f64,
    pub header_bits: usize,
    pub packet_length: PacketLaw,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmppSection {
    /// Packets/s in modulator states 0 and 1.
    pub rates_pps: [f64; 2],
    /// Modulator transition matrix, one step per channel use.
    pub modulator: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Bch,
    RandomMl,
    RandomMd,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Bch => Scheme::Bch,
            SchemeName::RandomMl => Scheme::RandomMl,
            SchemeName::RandomMd => Scheme::RandomMd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightName {
    Approximate,
    BinomialLike,
    Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSection {
    pub scheme: SchemeName,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub nu: Option<usize>,
    pub lengths: Option<Vec<usize>>,
    /// `[lo, hi]` bounds on `K/N` for the sweep grid.
    pub rate_range: Option<[f64; 2]>,
    pub weights: Option<WeightName>,
    /// `l A_l` lines, relative to the scenario file.
    pub weight_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub ue_threshold: f64,
    pub tau: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UndetectedName {
    Genie,
    CrcLate,
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub slots_per_replication: u64,
    pub replications: Option<usize>,
    pub warmup: Option<u64>,
    pub seed: Option<u64>,
    pub undetected: Option<UndetectedName>,
    pub max_tau: Option<usize>,
}

/// Validated scenario with every rate in per-channel-use units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub channel: ChannelModel,
    pub traffic: TrafficModel,
    pub packet_law: PacketLaw,
    pub scheme: Scheme,
    pub point: Option<(usize, usize)>,
    pub nu: Option<usize>,
    pub lengths: Option<Vec<usize>>,
    pub rate_range: [f64; 2],
    pub weights: WeightModel,
    pub ue_threshold: f64,
    pub tau: usize,
    pub sim: Option<SimSection>,
    /// Human-readable unit conversions, echoed in output headers.
    pub conversions: Vec<String>,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ScenarioFile = toml::from_str(&text)
            .map_err(|e| input(format!("{}: {}", path.display(), e.message())))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Self::from_file(file, &stem, path.parent())
    }

    pub fn parse(text: &str, default_name: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| input(e.message().to_string()))?;
        Self::from_file(file, default_name, None)
    }

    pub fn from_file(file: ScenarioFile, default_name: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let mut conversions = Vec::new();
        let channel = match file.channel {
            ChannelSection::Bsc(c) => ChannelModel::bsc(c.p)?,
            ChannelSection::GilbertElliott(c) => {
                ChannelModel::gilbert_elliott(c.alpha, c.beta, c.eps_g, c.eps_b)?
            }
            ChannelSection::Fading(f) => {
                let derived = derive_fading(f.doppler_symbol_product, f.threshold_db, f.mean_snr_db)?;
                conversions.push(format!(
                    "fading (f_D·T_s = {}, threshold {} dB, mean SNR {} dB) -> alpha = {}, beta = {}, eps_g = {}, eps_b = {}",
                    f.doppler_symbol_product, f.threshold_db, f.mean_snr_db,
                    derived.alpha, derived.beta, derived.eps_g, derived.eps_b
                ));
                derived.into_model()?
            }
        };

        let t = &file.traffic;
        if !(t.bit_rate_kbps > 0.0 && t.bit_rate_kbps.is_finite()) {
            return Err(input("traffic.bit_rate_kbps must be positive"));
        }
        if !(t.mean_packet_bits >= 1.0 && t.mean_packet_bits.is_finite()) {
            return Err(input("traffic.mean_packet_bits must be at least 1"));
        }
        let bits_per_second = t.bit_rate_kbps * 1000.0;
        let rho = 1.0 / t.mean_packet_bits;
        conversions.push(format!("rho = 1 / {} bits = {rho} per bit", t.mean_packet_bits));
        let traffic = match (t.packet_rate, &t.mmpp) {
            (Some(rate), None) => {
                let lambda = rate / bits_per_second;
                conversions.push(format!(
                    "lambda = {rate} packets/s / {bits_per_second} channel uses/s = {lambda} packets per channel use"
                ));
                TrafficModel::poisson(lambda, rho, t.header_bits)?
            }
            (None, Some(m)) => {
                let [r1, r2] = m.rates_pps;
                let mmpp = Mmpp {
                    lambda1: r1 / bits_per_second,
                    lambda2: r2 / bits_per_second,
                    modulator: m.modulator,
                };
                conversions.push(format!(
                    "lambda1 = {r1} / {bits_per_second} = {}, lambda2 = {r2} / {bits_per_second} = {} packets per channel use",
                    mmpp.lambda1, mmpp.lambda2
                ));
                TrafficModel::modulated(mmpp, rho, t.header_bits)?
            }
            (Some(_), Some(_)) => return Err(input("traffic: give either packet_rate or [traffic.mmpp], not both")),
            (None, None) => return Err(input("traffic: missing field `packet_rate` (or a [traffic.mmpp] table)")),
        };

        let c = &file.code;
        let scheme = Scheme::from(c.scheme);
        let point = match (c.n, c.k) {
            (Some(n), Some(k)) => Some((n, k)),
            (None, None) => None,
            _ => return Err(input("code: `n` and `k` must be given together")),
        };
        let rate_range = c.rate_range.unwrap_or([0.0, 1.0]);
        if !(0.0..=1.0).contains(&rate_range[0]) || !(rate_range[0]..=1.0).contains(&rate_range[1]) {
            return Err(input("code.rate_range must satisfy 0 <= lo <= hi <= 1"));
        }
        let weights = match (c.weights.unwrap_or(WeightName::Approximate), &c.weight_table) {
            (WeightName::Table, Some(rel)) => {
                let n = point
                    .map(|p| p.0)
                    .or_else(|| c.lengths.as_ref().filter(|l| l.len() == 1).map(|l| l[0]))
                    .ok_or_else(|| input("code.weight_table needs a single block length"))?;
                let path = base.map_or_else(|| rel.clone(), |b| b.join(rel));
                let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io { path, source })?;
                WeightModel::Table(WeightTable::parse(&text, n)?)
            }
            (WeightName::Table, None) => return Err(input("code.weights = \"table\" needs code.weight_table")),
            (_, Some(_)) => return Err(input("code.weight_table is only used with weights = \"table\"")),
            (WeightName::Approximate, None) => WeightModel::Approximate,
            (WeightName::BinomialLike, None) => WeightModel::BinomialLike,
        };

        let k = &file.constraints;
        if !(k.ue_threshold > 0.0 && k.ue_threshold <= 1.0) {
            return Err(input("constraints.ue_threshold must lie in (0, 1]"));
        }
        Ok(Self {
            name: file.name.unwrap_or_else(|| default_name.to_string()),
            channel,
            traffic,
            packet_law: t.packet_length,
            scheme,
            point,
            nu: c.nu,
            lengths: c.lengths.clone(),
            rate_range,
            weights,
            ue_threshold: k.ue_threshold,
            tau: k.tau,
            sim: file.sim,
            conversions,
        })
    }

    /// The analytical model needs geometric packet lengths.
    pub fn require_geometric(&self) -> Result<(), CliError> {
        match self.packet_law {
            PacketLaw::Geometric => Ok(()),
            PacketLaw::Constant(_) => Err(input(
                "analysis assumes geometric packet lengths; set traffic.packet_length = \"geometric\"",
            )),
        }
    }

    /// Code point for `analyze`, with command-line overrides applied.
    pub fn code_point(&self, n: Option<usize>, k: Option<usize>) -> Result<(usize, usize), CliError> {
        match (n.or(self.point.map(|p| p.0)), k.or(self.point.map(|p| p.1))) {
            (Some(n), Some(k)) => Ok((n, k)),
            _ => Err(input("code: missing field `n`/`k` (set them in [code] or pass --n and --k)")),
        }
    }

    pub fn base_code(&self, n: usize, k: usize) -> Result<CodeSpec, CliError> {
        Ok(CodeSpec::new(self.scheme, n, k, 0)?)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let lengths = self
            .lengths
            .as_ref()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| input("code: missing field `lengths` (needed for sweep)"))?;
        let [lo, hi] = self.rate_range;
        let in_range = |n: usize, k: usize| {
            let r = k as f64 / n as f64;
            r >= lo - 1e-12 && r <= hi + 1e-12
        };
        let candidates: Vec<(usize, Vec<usize>)> = match self.scheme {
            Scheme::Bch => bch_grid(lengths)
                .into_iter()
                .map(|(n, ks)| (n, ks.into_iter().filter(|&k| in_range(n, k)).collect::<Vec<_>>()))
                .filter(|(_, ks)| !ks.is_empty())
                .collect(),
            _ => lengths
                .iter()
                .map(|&n| (n, rate_grid(n, lo, hi)))
                .filter(|(_, ks)| !ks.is_empty())
                .collect(),
        };
        if candidates.is_empty() {
            return Err(input("code: the sweep grid is empty for these lengths and rate_range"));
        }
        Ok(SweepSpec {
            scheme: self.scheme,
            channel: self.channel,
            traffic: self.traffic,
            candidates,
            ue_threshold: self.ue_threshold,
            tau: self.tau,
            weights: self.weights.clone(),
        })
    }

    pub fn sim_length(&self, constant_override: Option<u64>) -> PacketLength {
        match (constant_override, self.packet_law) {
            (Some(l), _) | (None, PacketLaw::Constant(l)) => PacketLength::Constant(l),
            (None, PacketLaw::Geometric) => PacketLength::Geometric(self.traffic.rho),
        }
    }
}

pub fn undetected_modes(name: UndetectedName) -> Vec<UndetectedMode> {
    match name {
        UndetectedName::Genie => vec![UndetectedMode::Genie],
        UndetectedName::CrcLate => vec![UndetectedMode::CrcLate],
        UndetectedName::Both => vec![UndetectedMode::Genie, UndetectedMode::CrcLate],
    }
}

pub fn mode_label(mode: UndetectedMode) -> &'static str {
    match mode {
        UndetectedMode::Genie => "genie",
        UndetectedMode::CrcLate => "crc-late",
    }
}
