//! Final comparison table and the PR-curve figure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ilos_core::eval::{weighted_average, PrCurve};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{EvalManifest, SubsetScore, MEGA_SCOPE};
use crate::workspace::FileRef;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCell {
    pub d: Option<f64>,
    pub samples: usize,
    pub positives: usize,
}

/// One model group: a stage, a model kind and, for fine-tuned models, the
/// strategy. Train and fine-tune groups hold one model per network; the
/// pre-train group holds the single mega model scored per network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub models: Vec<String>,
    pub networks: BTreeMap<String, NetworkCell>,
    /// Test-size-weighted mean over the networks that have a score.
    pub weighted_average: Option<f64>,
    /// Other subsets, keyed `scope/subset`.
    pub subsets: BTreeMap<String, SubsetScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub recall_cap: f64,
    pub source: FileRef,
    pub networks: Vec<String>,
    pub groups: Vec<GroupRow>,
}

impl Report {
    pub fn group(&self, name: &str) -> Option<&GroupRow> {
        self.groups.iter().find(|g| g.group == name)
    }
}

pub fn group_name(stage: &str, kind: &str, strategy: Option<&str>) -> String {
    match strategy {
        Some(s) => format!("{stage}/{kind}_{s}"),
        None => format!("{stage}/{kind}"),
    }
}

pub fn build_report(m: &EvalManifest, source: FileRef) -> Result<Report> {
    let mut groups: BTreeMap<String, GroupRow> = BTreeMap::new();
    for e in &m.entries {
        let name = group_name(&e.model.stage, e.model.kind.as_str(), e.model.strategy.map(|s| s.as_str()));
        let row = groups.entry(name.clone()).or_insert_with(|| GroupRow {
            group: name,
            models: vec![],
            networks: BTreeMap::new(),
            weighted_average: None,
            subsets: BTreeMap::new(),
        });
        row.models.push(e.model.id.clone());
        for s in &e.scores {
            match (&s.network, s.name.starts_with("network:")) {
                (Some(n), true) => {
                    row.networks.insert(n.clone(), NetworkCell { d: s.d, samples: s.samples, positives: s.positives });
                }
                _ => {
                    let scope = if e.model.scope == MEGA_SCOPE { MEGA_SCOPE } else { e.model.scope.as_str() };
                    row.subsets.insert(format!("{scope}/{}", s.name), s.clone());
                }
            }
        }
    }
    let mut out = Vec::new();
    for (_, mut row) in groups {
        let scored: Vec<&NetworkCell> = row.networks.values().filter(|c| c.d.is_some()).collect();
        if !scored.is_empty() {
            let ds: Vec<f64> = scored.iter().map(|c| c.d.unwrap()).collect();
            let sizes: Vec<usize> = scored.iter().map(|c| c.samples).collect();
            row.weighted_average = Some(weighted_average(&ds, &sizes)?);
        }
        out.push(row);
    }
    Ok(Report { recall_cap: m.recall_cap, source, networks: m.networks.clone(), groups: out })
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const MIN_RECALL_EXP: f64 = -3.0;
const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Precision against log-scaled recall, one polyline per curve.
pub fn render_svg(curves: &[(String, PrCurve)]) -> String {
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let x = |r: f64| MARGIN + (r.max(1e-3).log10() - MIN_RECALL_EXP) / -MIN_RECALL_EXP * pw;
    let y = |p: f64| MARGIN + (1.0 - p) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"##);
    let _ = writeln!(s, r##"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"##);
    for e in [-3, -2, -1, 0] {
        let xe = x(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{xe:.1}" y1="{MARGIN}" x2="{xe:.1}" y2="{:.1}" stroke="#ddd"/>"##, MARGIN + ph);
        let _ = writeln!(s, r##"<text x="{xe:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"##, MARGIN + ph + 15.0);
    }
    for k in 0..=4 {
        let p = k as f64 / 4.0;
        let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{p:.2}</text>"##, MARGIN - 5.0, y(p) + 4.0);
    }
    let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">recall (log scale)</text>"##, MARGIN + pw / 2.0, HEIGHT - 15.0);
    let _ = writeln!(s, r##"<text x="15" y="{:.1}" transform="rotate(-90 15 {:.1})" text-anchor="middle">precision</text>"##, MARGIN + ph / 2.0, MARGIN + ph / 2.0);
    for (i, (name, c)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c.points.iter().filter(|p| p.recall > 0.0).map(|p| format!("{:.1},{:.1}", x(p.recall), y(p.precision))).collect();
        let _ = writeln!(s, r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##, pts.join(" "));
        let ly = MARGIN + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(s, r##"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"##, MARGIN + 8.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(path: &Path, curves: &[(String, PrCurve)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, render_svg(curves)).map_err(Error::io(path))
}
