mod report;
mod scenario;

use std::collections::hash_map::RandomState;
use std::hash::{BuildHasher, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use codeq::coding::ProfileEvaluator;
use codeq::ChannelKind;
use codeq::optimizer::{run_sweep, search_margin};
use codeq::queueing::{analyze, build_chain, service_rate, solve_g, tail_probability, GSolverOptions};
use codeq::simulator::{simulate, PacketLength, SimConfig};
use codeq::traffic::DEFAULT_TAIL_EPS;

use report::{LevelRecord, PointRecord};
use scenario::{mode_label, undetected_modes, Scenario, UndetectedName};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] codeq::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use codeq::Error as E;
        match self {
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Model(E::Domain(_) | E::Unsupported(_) | E::Config(_)) => 2,
            CliError::Model(_) => 3,
        }
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("voip-bsc", include_str!("../scenarios/voip-bsc.toml")),
    ("voip-gec", include_str!("../scenarios/voip-gec.toml")),
    ("voip-gec-fading", include_str!("../scenarios/voip-gec-fading.toml")),
];

#[derive(Parser)]
#[command(name = "codeq", version, about = "Delay-aware code selection over Markov channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one code point.
    Analyze(AnalyzeArgs),
    /// Two-stage search over a code grid.
    Sweep(SweepArgs),
    /// Monte Carlo estimate of the queue-length CCDF.
    Simulate(SimulateArgs),
    /// List built-in scenarios.
    Presets {
        /// Print the scenario file of this preset.
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name (see `codeq presets`).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overrides `constraints.tau`.
    #[arg(long)]
    tau: Option<usize>,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Safety margin; searched from 0 when absent from both file and flags.
    #[arg(long)]
    nu: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    point: PointArgs,
    /// Also write every stationary level and its CCDF.
    #[arg(long)]
    levels: bool,
    /// Iterate for G even when the chain is unstable and report it.
    #[arg(long)]
    force_unstable: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum UndetectedArg {
    Genie,
    CrcLate,
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    point: PointArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Refuse to run without an explicit seed.
    #[arg(long)]
    reproducible: bool,
    #[arg(long, value_enum)]
    undetected: Option<UndetectedArg>,
    /// Constant packet length in bits instead of the scenario's law.
    #[arg(long)]
    constant_length: Option<u64>,
    /// Overrides `sim.slots_per_replication`.
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
}

fn load(common: &Common) -> Result<Scenario, CliError> {
    let mut sc = match (&common.scenario, &common.preset) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => {
            let (_, text) = PRESETS
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| CliError::Input(format!("unknown preset `{name}`")))?;
            Scenario::parse(text, name)?
        }
        (None, None) => return Err(CliError::Input("one of --scenario or --preset is required".into())),
    };
    if let Some(tau) = common.tau {
        sc.tau = tau;
    }
    Ok(sc)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn header(command: &str, sc: &Scenario) -> Vec<String> {
    let mut h = vec![format!("codeq {command} {}", sc.name)];
    let c = &sc.channel;
    h.push(match c.kind {
        ChannelKind::Bsc => format!("channel: bsc p = {}", c.p),
        ChannelKind::GilbertElliott => format!(
            "channel: gilbert-elliott alpha = {} beta = {} eps_g = {} eps_b = {}",
            c.alpha, c.beta, c.eps_g, c.eps_b
        ),
    });
    h.extend(sc.conversions.iter().map(|c| format!("units: {c}")));
    h.push(format!("ue_threshold = {}, tau = {}", report::num(sc.ue_threshold), sc.tau));
    h
}

struct Chosen {
    code: codeq::CodeSpec,
    profile: codeq::FailureProfile,
    feasible: bool,
}

fn choose_code(sc: &Scenario, point: &PointArgs) -> Result<Chosen, CliError> {
    let (n, k) = sc.code_point(point.n, point.k)?;
    let base = sc.base_code(n, k)?;
    let evaluator = ProfileEvaluator::new(&sc.channel, n, sc.scheme, sc.weights.clone())?;
    Ok(match point.nu.or(sc.nu) {
        Some(nu) => {
            let code = base.with_nu(nu)?;
            let profile = evaluator.profile(&code)?;
            let feasible = profile.avg_undetected <= sc.ue_threshold;
            Chosen { code, profile, feasible }
        }
        None => {
            let found = search_margin(&evaluator, &base, sc.ue_threshold)?;
            Chosen {
                feasible: found.nu.is_some(),
                code: found.code,
                profile: found.profile,
            }
        }
    })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let sc = load(&args.common)?;
    sc.require_geometric()?;
    let chosen = choose_code(&sc, &args.point)?;
    let service = service_rate(&chosen.profile, &sc.traffic, &chosen.code)?;
    let mut head = header("analyze", &sc);
    let mut point = PointRecord {
        n: chosen.code.n,
        k: chosen.code.k,
        nu: chosen.code.nu,
        p_ue: chosen.profile.avg_undetected,
        p_f: chosen.profile.avg_failure,
        mu_n: service.mu_n,
        stability: service.stability_factor,
        tail: 1.0,
        status: if chosen.feasible { "ok" } else { "infeasible" }.into(),
    };
    let mut levels = None;
    if service.is_stable() {
        let sol = analyze(&sc.channel, &chosen.code, &sc.traffic, &chosen.profile, sc.tau + 2)?;
        point.tail = tail_probability(&sol.stationary, sc.tau)?;
        if args.levels {
            let dist = &sol.stationary;
            let rows = (0..dist.levels.len())
                .map(|q| {
                    Ok(LevelRecord {
                        q,
                        mass: dist.level_mass(q),
                        ccdf: tail_probability(dist, q)?,
                        pi: dist.levels[q].clone(),
                    })
                })
                .collect::<Result<Vec<_>, codeq::Error>>()?;
            levels = Some(rows);
        }
    } else {
        point.status = "unstable".into();
        if args.force_unstable {
            let chain = build_chain(&sc.channel, &chosen.code, &sc.traffic, &chosen.profile, DEFAULT_TAIL_EPS)?;
            let g = solve_g(&chain, GSolverOptions { force: true, ..GSolverOptions::default() })?;
            let sums: Vec<String> = g.matrix.row_iter().map(|r| report::num(r.sum())).collect();
            head.push(format!(
                "forced G: {} iterations, residual {}, row sums [{}]",
                g.iterations,
                report::num(g.residual),
                sums.join(", ")
            ));
        }
    }
    let text = match args.common.format {
        Format::Csv => report::analyze_csv(&head, &point, levels.as_deref()),
        Format::Json => report::analyze_json(&head, &point, levels.as_deref()),
    };
    emit(args.common.out.as_deref(), &text)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let sc = load(&args.common)?;
    sc.require_geometric()?;
    let result = run_sweep(&sc.sweep_spec()?)?;
    let head = header("sweep", &sc);
    let text = match args.common.format {
        Format::Csv => report::sweep_csv(&head, &result),
        Format::Json => report::sweep_json(&head, &result),
    };
    emit(args.common.out.as_deref(), &text)
}

fn fresh_seed() -> u64 {
    let mut h = RandomState::new().build_hasher();
    h.write_u128(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos()),
    );
    h.finish()
}

fn output_paths(out: Option<&Path>, name: &str, format: Format, labels: &[&str]) -> Vec<PathBuf> {
    let ext = format.ext();
    match out {
        Some(path) if labels.len() == 1 => vec![path.to_path_buf()],
        Some(path) => {
            let stem = path.file_stem().map_or_else(|| name.to_string(), |s| s.to_string_lossy().into_owned());
            let dir = path.parent().unwrap_or(Path::new(""));
            labels.iter().map(|l| dir.join(format!("{stem}-{l}.{ext}"))).collect()
        }
        None => labels.iter().map(|l| PathBuf::from(format!("{name}-{l}.{ext}"))).collect(),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let sc = load(&args.common)?;
    let sim = sc.sim.clone();
    let slots = args
        .slots
        .or(sim.as_ref().map(|s| s.slots_per_replication))
        .ok_or_else(|| CliError::Input("sim: missing field `slots_per_replication` (or pass --slots)".into()))?;
    let seed = match args.seed.or(sim.as_ref().and_then(|s| s.seed)) {
        Some(s) => s,
        None if args.reproducible => {
            return Err(CliError::Input("--reproducible needs a seed (--seed or sim.seed)".into()))
        }
        None => fresh_seed(),
    };
    let modes = undetected_modes(match args.undetected {
        Some(UndetectedArg::Genie) => UndetectedName::Genie,
        Some(UndetectedArg::CrcLate) => UndetectedName::CrcLate,
        Some(UndetectedArg::Both) => UndetectedName::Both,
        None => sim.as_ref().and_then(|s| s.undetected).unwrap_or(UndetectedName::Genie),
    });
    let length = sc.sim_length(args.constant_length);
    let chosen = choose_code(&sc, &args.point)?;
    let labels: Vec<&str> = modes.iter().map(|&m| mode_label(m)).collect();
    let paths = output_paths(args.common.out.as_deref(), &sc.name, args.common.format, &labels);
    for (mode, path) in modes.into_iter().zip(paths) {
        let mut cfg = SimConfig::new(slots, seed, length, mode);
        if let Some(s) = &sim {
            cfg.replications = s.replications.unwrap_or(cfg.replications);
            cfg.warmup = s.warmup.unwrap_or(cfg.warmup);
            cfg.max_tau = s.max_tau.unwrap_or(sc.tau.max(cfg.max_tau));
        }
        cfg.replications = args.replications.unwrap_or(cfg.replications);
        cfg.weights = sc.weights.clone();
        let report = simulate(&sc.channel, &chosen.code, &sc.traffic, &cfg)?;
        let mut head = header("simulate", &sc);
        head.push(format!("seed = {seed}"));
        head.push(format!("undetected = {}", mode_label(mode)));
        head.push(match length {
            PacketLength::Geometric(r) => format!("packet length = geometric, mean {} bits", 1.0 / r),
            PacketLength::Constant(l) => format!("packet length = constant {l} bits"),
        });
        head.push(format!(
            "code = {:?} N {} K {} nu {}; {} replications x {} slots, warmup {}",
            chosen.code.scheme, chosen.code.n, chosen.code.k, chosen.code.nu, cfg.replications, cfg.slots, cfg.warmup
        ));
        let text = match args.common.format {
            Format::Csv => report::sim_csv(&head, &report),
            Format::Json => report::sim_json(&head, &report),
        };
        emit(Some(&path), &text)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_presets(show: Option<String>) -> Result<(), CliError> {
    match show {
        Some(name) => {
            let (_, text) = PRESETS
                .iter()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| CliError::Input(format!("unknown preset `{name}`")))?;
            emit(None, text)
        }
        None => {
            let mut out = String::new();
            for (name, text) in PRESETS {
                let about = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                out.push_str(&format!("{name:<18} {about}\n"));
            }
            emit(None, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Presets { show } => cmd_presets(show),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_input_and_numerical_failures() {
        assert_eq!(CliError::Input("x".into()).exit_code(), 2);
        assert_eq!(CliError::Model(codeq::Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::Model(codeq::Error::Domain("x".into())).exit_code(), 2);
        assert_eq!(CliError::Model(codeq::Error::Numerical("x".into())).exit_code(), 3);
        let solver = codeq::Error::Solver {
            message: "x".into(),
            residual: 1.0,
        };
        assert_eq!(CliError::Model(solver).exit_code(), 3);
        assert_eq!(CliError::Model(codeq::Error::Precision("x".into())).exit_code(), 3);
    }

    #[test]
    fn preset_files_match_library_presets() {
        for (name, text) in PRESETS {
            let sc = Scenario::parse(text, name).unwrap();
            let lib = codeq::optimizer::preset(name).unwrap().spec;
            let spec = sc.sweep_spec().unwrap();
            let params = |m: &codeq::channel::ChannelModel| {
                [m.p, m.alpha, m.beta, m.eps_g, m.eps_b].map(f64::to_bits)
            };
            assert_eq!(spec.channel.kind, lib.channel.kind, "{name}");
            assert_eq!(params(&spec.channel), params(&lib.channel), "{name}");
            assert_eq!(spec.traffic, lib.traffic, "{name}");
            assert_eq!(spec.candidates, lib.candidates, "{name}");
            assert_eq!(spec.scheme, lib.scheme);
            assert_eq!(spec.ue_threshold, lib.ue_threshold);
            assert_eq!(spec.tau, lib.tau);
        }
    }

    #[test]
    fn multi_mode_paths_get_labels() {
        let paths = output_paths(Some(Path::new("out/run.csv")), "x", Format::Csv, &["genie", "crc-late"]);
        assert_eq!(paths, vec![PathBuf::from("out/run-genie.csv"), PathBuf::from("out/run-crc-late.csv")]);
        let paths = output_paths(None, "voip", Format::Json, &["genie"]);
        assert_eq!(paths, vec![PathBuf::from("voip-genie.json")]);
    }
}
