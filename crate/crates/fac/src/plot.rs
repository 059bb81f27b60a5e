//! Deterministic SVG rendering of run logs.
//!
//! Plots are built from fixed-layout primitives with all coordinates
//! printed at fixed precision, so the same logs always produce byte-equal
//! files — diffs of plot output are meaningful. Two renderers are provided:
//! one polyline per run for comparing individual runs, and a mean ± one
//! standard deviation band across a seed sweep. Sentinel-valued entries
//! (columns that do not apply to a run) are skipped, not drawn as `-1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runlog::{RunLog, RunRecord};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 760.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 440.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// A plottable column of the run log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    J,
    GradNorm,
    GNorm,
    CriticErr,
    BiasNorm,
    XiNorm,
    WNorm,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("nothing to plot")]
    Empty,
    #[error("sweep logs disagree on their logging grid")]
    GridMismatch,
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
}

impl Column {
    /// All columns, in log order.
    pub const ALL: [Column; 7] = [
        Column::J,
        Column::GradNorm,
        Column::GNorm,
        Column::CriticErr,
        Column::BiasNorm,
        Column::XiNorm,
        Column::WNorm,
    ];

    /// The CSV header name of this column.
    pub fn name(&self) -> &'static str {
        match self {
            Column::J => "J",
            Column::GradNorm => "grad_norm",
            Column::GNorm => "G_norm",
            Column::CriticErr => "critic_err",
            Column::BiasNorm => "bias_norm",
            Column::XiNorm => "xi_norm",
            Column::WNorm => "w_norm",
        }
    }

    /// Extracts the value from a record; `None` for a sentinel entry.
    pub fn get(&self, r: &RunRecord) -> Option<f64> {
        let v = match self {
            Column::J => return Some(r.j),
            Column::GradNorm => return Some(r.grad_norm),
            Column::GNorm => r.g_norm,
            Column::CriticErr => r.critic_err,
            Column::BiasNorm => r.bias_norm,
            Column::XiNorm => return Some(r.xi_norm),
            Column::WNorm => return Some(r.w_norm),
        };
        (v >= 0.0).then_some(v)
    }
}

impl std::str::FromStr for Column {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Column::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PlotError::UnknownColumn(s.to_string()))
    }
}

fn px(v: f64) -> String {
    format!("{v:.6}")
}

struct Frame {
    t_lo: f64,
    t_hi: f64,
    v_lo: f64,
    v_hi: f64,
}

impl Frame {
    fn fit(points: &[(f64, f64)]) -> Result<Frame, PlotError> {
        if points.is_empty() {
            return Err(PlotError::Empty);
        }
        let mut f = Frame {
            t_lo: f64::INFINITY,
            t_hi: f64::NEG_INFINITY,
            v_lo: f64::INFINITY,
            v_hi: f64::NEG_INFINITY,
        };
        for &(t, v) in points {
            f.t_lo = f.t_lo.min(t);
            f.t_hi = f.t_hi.max(t);
            f.v_lo = f.v_lo.min(v);
            f.v_hi = f.v_hi.max(v);
        }
        if f.t_hi <= f.t_lo {
            f.t_hi = f.t_lo + 1.0;
        }
        if f.v_hi <= f.v_lo {
            // A constant series still needs a visible frame.
            let pad = f.v_lo.abs().max(1.0) * 0.1;
            f.v_lo -= pad;
            f.v_hi += pad;
        }
        Ok(f)
    }

    fn x(&self, t: f64) -> f64 {
        LEFT + (t - self.t_lo) / (self.t_hi - self.t_lo) * (RIGHT - LEFT)
    }

    fn y(&self, v: f64) -> f64 {
        BOTTOM - (v - self.v_lo) / (self.v_hi - self.v_lo) * (BOTTOM - TOP)
    }
}

fn open_svg(out: &mut String, title: &str) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" \
         height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
}

fn axes(out: &mut String, frame: &Frame, y_label: &str) {
    out.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" \
         stroke=\"black\"/>\n\
         <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\" \
         stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let frac = f64::from(i) / 4.0;
        let t = frame.t_lo + frac * (frame.t_hi - frame.t_lo);
        let v = frame.v_lo + frac * (frame.v_hi - frame.v_lo);
        let xp = px(frame.x(t));
        let yp = px(frame.y(v));
        out.push_str(&format!(
            "<line x1=\"{xp}\" y1=\"{BOTTOM}\" x2=\"{xp}\" y2=\"{}\" \
             stroke=\"black\"/>\n\
             <text x=\"{xp}\" y=\"{}\" font-family=\"sans-serif\" \
             font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            BOTTOM + 5.0,
            BOTTOM + 20.0,
            tick(t)
        ));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yp}\" x2=\"{LEFT}\" y2=\"{yp}\" \
             stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{yp}\" font-family=\"sans-serif\" \
             font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            LEFT - 5.0,
            LEFT - 8.0,
            tick(v)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">t</text>\n",
        14.0,
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        escape(y_label),
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 40.0,
    ));
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline_points(frame: &Frame, pts: &[(f64, f64)]) -> String {
    pts.iter()
        .map(|&(t, v)| format!("{},{}", px(frame.x(t)), px(frame.y(v))))
        .collect::<Vec<_>>()
        .join(" ")
}

fn column_points(log: &RunLog, column: Column) -> Vec<(f64, f64)> {
    log.records
        .iter()
        .filter_map(|r| column.get(r).map(|v| (r.t as f64, v)))
        .collect()
}

/// Renders one polyline per labeled run.
///
/// # Errors
///
/// [`PlotError::Empty`] when no series contributes any point.
pub fn render_series(
    series: &[(&str, &RunLog)],
    column: Column,
    title: &str,
) -> Result<String, PlotError> {
    let traced: Vec<(&str, Vec<(f64, f64)>)> = series
        .iter()
        .map(|(label, log)| (*label, column_points(log, column)))
        .collect();
    let all: Vec<(f64, f64)> =
        traced.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let frame = Frame::fit(&all)?;

    let mut out = String::new();
    open_svg(&mut out, title);
    axes(&mut out, &frame, column.name());
    for (i, (label, pts)) in traced.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
             points=\"{}\"/>\n",
            polyline_points(&frame, pts)
        ));
        let ly = TOP + 16.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" \
             fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" \
             font-size=\"11\">{}</text>\n",
            RIGHT - 150.0,
            ly,
            RIGHT - 135.0,
            ly + 9.0,
            escape(label)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Renders a mean ± one standard deviation band across a sweep.
///
/// All logs must share the same logging grid; rows where any run carries a
/// sentinel are skipped.
///
/// # Errors
///
/// [`PlotError::GridMismatch`] on differing grids, [`PlotError::Empty`] when
/// nothing remains.
pub fn render_band(
    logs: &[RunLog],
    column: Column,
    title: &str,
) -> Result<String, PlotError> {
    let first = logs.first().ok_or(PlotError::Empty)?;
    let grid: Vec<u64> = first.records.iter().map(|r| r.t).collect();
    for log in logs {
        let g: Vec<u64> = log.records.iter().map(|r| r.t).collect();
        if g != grid {
            return Err(PlotError::GridMismatch);
        }
    }
    let mut mean_pts = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (i, &t) in grid.iter().enumerate() {
        let vals: Option<Vec<f64>> =
            logs.iter().map(|l| column.get(&l.records[i])).collect();
        if let Some(vals) = vals {
            let (m, s) = mean_std(&vals);
            mean_pts.push((t as f64, m));
            upper.push((t as f64, m + s));
            lower.push((t as f64, m - s));
        }
    }
    let mut all = upper.clone();
    all.extend_from_slice(&lower);
    let frame = Frame::fit(&all)?;

    let mut out = String::new();
    open_svg(&mut out, title);
    axes(&mut out, &frame, column.name());
    let mut ring = upper.clone();
    ring.extend(lower.iter().rev().copied());
    out.push_str(&format!(
        "<polygon fill=\"{}\" fill-opacity=\"0.25\" stroke=\"none\" \
         points=\"{}\"/>\n",
        PALETTE[0],
        polyline_points(&frame, &ring)
    ));
    out.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" \
         points=\"{}\"/>\n",
        PALETTE[0],
        polyline_points(&frame, &mean_pts)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\
         mean ± std over {} runs</text>\n",
        RIGHT - 150.0,
        TOP + 9.0,
        logs.len()
    ));
    out.push_str("</svg>\n");
    Ok(out)
}

/// Per-run summary inside a sweep manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub diverged_at: Option<u64>,
    pub final_t: u64,
    pub final_j: f64,
    pub final_critic_err: f64,
}

/// Aggregate statistics of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub runs: Vec<RunSummary>,
    pub n_diverged: usize,
    pub mean_final_j: f64,
    pub std_final_j: f64,
}

/// Builds the JSON manifest summarizing a sweep.
pub fn sweep_manifest(runs: &[(u64, &RunLog)]) -> SweepManifest {
    let summaries: Vec<RunSummary> = runs
        .iter()
        .map(|(seed, log)| {
            let last = log.last();
            RunSummary {
                seed: *seed,
                diverged_at: log.diverged_at,
                final_t: last.map_or(0, |r| r.t),
                final_j: last.map_or(f64::NAN, |r| r.j),
                final_critic_err: last.map_or(f64::NAN, |r| r.critic_err),
            }
        })
        .collect();
    let finals: Vec<f64> = summaries.iter().map(|s| s.final_j).collect();
    let (mean, std) = if finals.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_std(&finals)
    };
    SweepManifest {
        n_diverged: summaries.iter().filter(|s| s.diverged_at.is_some()).count(),
        runs: summaries,
        mean_final_j: mean,
        std_final_j: std,
    }
}
