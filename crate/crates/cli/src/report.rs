//! Estimate result files and the chunk heat maps rendered from them.
//!
//! Colors interpolate linearly in RGB from [`COOL`] to [`HOT`] on
//! `t = score / p_hat = alpha^d`, so a never-debugged chunk is drawn hot and
//! every debugging pass cools it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use resid_core::estimator::EstimateStatus;
use resid_core::model::Variant;
use resid_core::records::RunRecord;
use serde::{Deserialize, Serialize};

pub const ESTIMATE_FORMAT: &str = "resid-estimate/1";
pub const REPORT_HEADER: &str = "resid-report v1";

pub const COOL: [u8; 3] = [0x31, 0x36, 0x95];
pub const HOT: [u8; 3] = [0xd7, 0x30, 0x27];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkScore {
    pub id: String,
    pub debug_count: u32,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lines: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub m: u64,
    pub n: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub format: String,
    pub variant: Variant,
    pub alpha: f64,
    pub p_hat: f64,
    pub status: EstimateStatus,
    pub log_likelihood: f64,
    pub iterations: u32,
    pub bracket_width: f64,
    pub m: u64,
    pub k: u32,
    pub n: BTreeMap<u32, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class: BTreeMap<String, ClassStats>,
    pub processed_runs: u64,
    pub chunks: Vec<ChunkScore>,
}

/// Shortest decimal of `x` with at most nine fractional digits.
pub fn fmt_decimal(x: f64) -> String {
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn heat_color(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let mut rgb = [0u8; 3];
    for (c, (&lo, &hi)) in rgb.iter_mut().zip(COOL.iter().zip(HOT.iter())) {
        *c = (f64::from(lo) + t * (f64::from(hi) - f64::from(lo))).round() as u8;
    }
    rgb
}

fn hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

fn chunk_color(est: &EstimateFile, c: &ChunkScore) -> String {
    let t = if est.p_hat > 0.0 {
        c.score / est.p_hat
    } else {
        0.0
    };
    hex(heat_color(t))
}

/// Consecutive distinct visits observed in any run.
pub fn observed_edges(records: &[RunRecord]) -> BTreeSet<(String, String)> {
    records
        .iter()
        .flat_map(|r| r.visits.windows(2))
        .filter(|w| w[0] != w[1])
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect()
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn render_dot(est: &EstimateFile, edges: &BTreeSet<(String, String)>) -> String {
    let mut out = format!("// {REPORT_HEADER}\ndigraph resid {{\n");
    let _ = writeln!(
        out,
        "  graph [label=\"p_hat = {} ({})\", labelloc=t];",
        fmt_decimal(est.p_hat),
        est.status
    );
    out.push_str("  node [shape=box, style=filled, fontcolor=white, fontname=\"monospace\"];\n");
    for c in &est.chunks {
        let id = dot_escape(&c.id);
        let _ = writeln!(
            out,
            "  \"{id}\" [label=\"{id}\\nd={} score={}\", fillcolor=\"{}\"];",
            c.debug_count,
            fmt_decimal(c.score),
            chunk_color(est, c)
        );
    }
    for (a, b) in edges {
        let _ = writeln!(out, "  \"{}\" -> \"{}\";", dot_escape(a), dot_escape(b));
    }
    out.push_str("}\n");
    out
}

fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

pub fn render_html(est: &EstimateFile) -> String {
    let mut out = format!(
        "<!-- {REPORT_HEADER} -->\n<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
    );
    out.push_str("<title>Chunk unreliability</title>\n<style>\n");
    out.push_str("body { font-family: sans-serif; }\ntable { border-collapse: collapse; }\n");
    out.push_str("td, th { padding: 4px 10px; border: 1px solid #ccc; }\ntd.score { color: white; font-family: monospace; }\n");
    out.push_str("</style>\n</head>\n<body>\n");
    let _ = writeln!(
        out,
        "<p>p_hat = {} ({}), alpha = {}, {} runs</p>",
        fmt_decimal(est.p_hat),
        est.status,
        est.alpha,
        est.processed_runs
    );
    out.push_str("<table>\n<tr><th>chunk</th><th>file</th><th>lines</th><th>debugged</th><th>score</th></tr>\n");
    for c in &est.chunks {
        let lines = c
            .lines
            .map(|[a, b]| {
                if a == b {
                    a.to_string()
                } else {
                    format!("{a}-{b}")
                }
            })
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td class=\"score\" style=\"background:{}\">{}</td></tr>",
            html_escape(&c.id),
            html_escape(c.file.as_deref().unwrap_or("-")),
            lines,
            c.debug_count,
            chunk_color(est, c),
            fmt_decimal(c.score)
        );
    }
    out.push_str("</table>\n</body>\n</html>\n");
    out
}
