//! CSV and JSON writers. Floats are written in Rust's shortest round-trip
//! form, so every value reloads bit for bit.

use codeq::optimizer::{SweepResult, SweepRow};
use codeq::simulator::SimReport;
use serde::Serialize;

pub const SWEEP_HEADER: &str = "N,K,nu,P_ue,P_f,mu_N,stability,tail,status";

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub nu: usize,
    #[serde(rename = "P_ue")]
    pub p_ue: f64,
    #[serde(rename = "P_f")]
    pub p_f: f64,
    #[serde(rename = "mu_N")]
    pub mu_n: f64,
    pub stability: f64,
    pub tail: f64,
    pub status: String,
}

impl From<&SweepRow> for PointRecord {
    fn from(r: &SweepRow) -> Self {
        Self {
            n: r.n,
            k: r.k,
            nu: r.nu,
            p_ue: r.p_ue,
            p_f: r.p_f,
            mu_n: r.mu_n,
            stability: r.stability_factor,
            tail: r.tail_prob,
            status: r.status.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRecord {
    pub q: usize,
    pub mass: f64,
    /// `P(Q > q)`.
    pub ccdf: f64,
    pub pi: Vec<f64>,
}

/// Shortest round-trip text for `x`, in exponent form outside `[1e-3, 1e6)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-3..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn comments(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

pub fn point_line(r: &PointRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        r.n,
        r.k,
        r.nu,
        num(r.p_ue),
        num(r.p_f),
        num(r.mu_n),
        num(r.stability),
        num(r.tail),
        field(&r.status)
    )
}

pub fn sweep_csv(header: &[String], result: &SweepResult) -> String {
    let mut out = comments(header);
    match result.best_row() {
        Some(b) => out.push_str(&format!("# best = N {} K {} nu {}\n", b.n, b.k, b.nu)),
        None => out.push_str("# best = none\n"),
    }
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for row in &result.rows {
        out.push_str(&point_line(&row.into()));
    }
    out
}

#[derive(Serialize)]
struct SweepJson<'a> {
    header: &'a [String],
    rows: Vec<PointRecord>,
    best: Option<PointRecord>,
}

pub fn sweep_json(header: &[String], result: &SweepResult) -> String {
    let doc = SweepJson {
        header,
        rows: result.rows.iter().map(PointRecord::from).collect(),
        best: result.best_row().map(PointRecord::from),
    };
    serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
}

pub fn analyze_csv(header: &[String], point: &PointRecord, levels: Option<&[LevelRecord]>) -> String {
    let mut out = comments(header);
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    out.push_str(&point_line(point));
    if let Some(levels) = levels {
        let width = levels.first().map_or(0, |l| l.pi.len());
        out.push_str("# levels\nq,mass,ccdf");
        for r in 0..width {
            out.push_str(&format!(",pi_{r}"));
        }
        out.push('\n');
        for l in levels {
            out.push_str(&format!("{},{},{}", l.q, num(l.mass), num(l.ccdf)));
            for v in &l.pi {
                out.push_str(&format!(",{}", num(*v)));
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Serialize)]
struct AnalyzeJson<'a> {
    header: &'a [String],
    point: &'a PointRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<&'a [LevelRecord]>,
}

pub fn analyze_json(header: &[String], point: &PointRecord, levels: Option<&[LevelRecord]>) -> String {
    let doc = AnalyzeJson { header, point, levels };
    serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
}

pub fn sim_csv(header: &[String], report: &SimReport) -> String {
    let mut out = comments(header);
    out.push_str(&format!("# mean_queue = {}\n", num(report.mean_queue)));
    out.push_str(&format!("# effective_service_rate = {}\n", num(report.effective_service_rate)));
    let c = &report.decode_counters;
    out.push_str(&format!(
        "# decodes: success {} detected {} undetected {} over {} slots\n",
        c.success, c.detected_fail, c.undetected_fail, report.measured_slots
    ));
    out.push_str("tau,estimate,ci_halfwidth\n");
    for p in &report.ccdf {
        out.push_str(&format!("{},{},{}\n", p.tau, num(p.estimate), num(p.half_width)));
    }
    out
}

#[derive(Serialize)]
struct SimJson<'a> {
    header: &'a [String],
    #[serde(flatten)]
    report: &'a SimReport,
}

pub fn sim_json(header: &[String], report: &SimReport) -> String {
    serde_json::to_string_pretty(&SimJson { header, report }).expect("serializable") + "\n"
}
