//! Deterministic SVG rendering of a `summary.csv` regret table.
//!
//! Hand-rolled on purpose: the chart is a plain median-regret line per
//! agent, and emitting the markup directly keeps the output byte-stable —
//! the same CSV always yields the same SVG.

use std::fmt;
use std::fmt::Write as _;

/// Errors from [`plot_summary`].
#[derive(Debug, Clone, PartialEq)]
pub enum PlotError {
    /// The CSV is structurally broken (bad header, short row, bad number).
    MalformedCsv(String),
    /// The CSV holds no plottable point.
    Empty,
}

impl fmt::Display for PlotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlotError::MalformedCsv(msg) => write!(f, "malformed csv: {msg}"),
            PlotError::Empty => write!(f, "no data points to plot"),
        }
    }
}

impl std::error::Error for PlotError {}

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Renders `summary.csv` text (columns `t, agent, median, mean, std`) to an
/// SVG line chart: one polyline of median regret versus `t` per agent,
/// axes labeled, agents listed in first-appearance order.
pub fn plot_summary(csv_text: &str) -> Result<String, PlotError> {
    let mut lines = csv_text.lines();
    let header = lines
        .next()
        .ok_or_else(|| PlotError::MalformedCsv("missing header".to_owned()))?;
    if header.trim() != "t,agent,median,mean,std" {
        return Err(PlotError::MalformedCsv(format!(
            "unexpected header `{header}`"
        )));
    }
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (index, row) in lines.enumerate() {
        let row = row.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(PlotError::MalformedCsv(format!(
                "row {}: expected 5 fields, got {}",
                index + 2,
                fields.len()
            )));
        }
        let t: f64 = fields[0].parse().map_err(|e| {
            PlotError::MalformedCsv(format!("row {}: bad t ({e})", index + 2))
        })?;
        let median: f64 = fields[2].parse().map_err(|e| {
            PlotError::MalformedCsv(format!("row {}: bad median ({e})", index + 2))
        })?;
        let agent = fields[1];
        if !median.is_finite() {
            continue; // all-failed step: nothing to draw
        }
        match series.iter_mut().find(|(name, _)| name == agent) {
            Some((_, points)) => points.push((t, median)),
            None => series.push((agent.to_owned(), vec![(t, median)])),
        }
    }
    series.retain(|(_, points)| !points.is_empty());
    if series.is_empty() {
        return Err(PlotError::Empty);
    }

    let all = series.iter().flat_map(|(_, pts)| pts.iter());
    let (mut t_min, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut v_min, mut v_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (t, v) in all {
        t_min = t_min.min(*t);
        t_max = t_max.max(*t);
        v_min = v_min.min(*v);
        v_max = v_max.max(*v);
    }
    if t_max <= t_min {
        t_max = t_min + 1.0;
    }
    if v_max <= v_min {
        v_max = v_min + 1.0;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |t: f64| MARGIN_LEFT + (t - t_min) / (t_max - t_min) * plot_w;
    let sy = |v: f64| MARGIN_TOP + (v_max - v) / (v_max - v_min) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );
    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    let x1 = MARGIN_LEFT + plot_w;
    let y1 = MARGIN_TOP;
    let _ = write!(
        svg,
        "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>\n\
         <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>\n"
    );
    // Axis labels and extremes.
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"16\">t</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = write!(
        svg,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"16\" transform=\"rotate(-90 20 {:.2})\">regret</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    let _ = write!(
        svg,
        "<text x=\"{x0:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"12\">{t_min}</text>\n\
         <text x=\"{x1:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"monospace\" \
         font-size=\"12\">{t_max}</text>\n",
        y0 + 20.0,
        y0 + 20.0
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"monospace\" \
         font-size=\"12\">{v_min:.3}</text>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"monospace\" \
         font-size=\"12\">{v_max:.3}</text>\n",
        x0 - 8.0,
        y0 + 4.0,
        x0 - 8.0,
        y1 + 4.0
    );
    // One polyline and one legend entry per agent.
    for (index, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[index % PALETTE.len()];
        let mut coords = String::new();
        for (t, v) in points {
            let _ = write!(coords, "{:.2},{:.2} ", sx(*t), sy(*v));
        }
        let _ = write!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
             points=\"{}\"/>\n",
            coords.trim_end()
        );
        let ly = MARGIN_TOP + 16.0 + index as f64 * 22.0;
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" \
             stroke-width=\"3\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"14\">{name}</text>\n",
            x1 + 12.0,
            x1 + 40.0,
            x1 + 48.0,
            ly + 5.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
