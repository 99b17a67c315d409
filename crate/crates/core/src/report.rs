//! CSV tables, standalone SVG line charts and per-phase timings.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{csv_err, MetricReport, RankingMetrics};

/// Wall-clock seconds per named phase, in the order recorded.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub phases: Vec<(String, f64)>,
}

impl Timings {
    pub fn record(&mut self, phase: &str, elapsed: Duration) {
        self.phases.push((phase.to_string(), elapsed.as_secs_f64()));
    }

    pub fn measure<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(phase, start.elapsed());
        out
    }

    pub fn seconds(&self, phase: &str) -> Option<f64> {
        self.phases.iter().find(|(p, _)| p == phase).map(|(_, s)| *s)
    }

    /// `phase,seconds`; no phases gives the header alone.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,seconds\n");
        for (phase, secs) in &self.phases {
            let _ = writeln!(s, "{phase},{secs:.6}");
        }
        s
    }
}

pub fn timing_report(t: &Timings) -> String {
    t.to_csv()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Roc,
    MetricVsK,
    MetricVsRatio,
}

/// Data behind the optional plots. Absent entries are skipped.
#[derive(Clone, Debug, Default)]
pub struct PlotData {
    pub roc: Option<Vec<(f64, f64)>>,
    pub vs_k: Option<Vec<(usize, RankingMetrics)>>,
    pub vs_ratio: Option<Vec<(f64, RankingMetrics)>>,
}

/// Write `report.csv` plus each requested plot (and its CSV) into `out_dir`.
pub fn emit_report(report: &MetricReport, data: &PlotData, plots: &[PlotKind], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let csv_path = out_dir.join("report.csv");
    write_file(&csv_path, report.to_csv_string()?.as_bytes())?;
    written.push(csv_path);

    for kind in plots {
        match kind {
            PlotKind::Roc => {
                let Some(points) = &data.roc else { continue };
                let path = out_dir.join("roc.svg");
                write_file(&path, roc_svg(points).as_bytes())?;
                written.push(path);
            }
            PlotKind::MetricVsK => {
                let Some(rows) = &data.vs_k else { continue };
                let xs: Vec<f64> = rows.iter().map(|(k, _)| *k as f64).collect();
                let ms: Vec<RankingMetrics> = rows.iter().map(|(_, m)| *m).collect();
                let path = out_dir.join("metrics_vs_k.svg");
                write_file(&path, metric_chart("Metrics vs K", "K", &xs, &ms).as_bytes())?;
                written.push(path);
                let path = out_dir.join("metrics_vs_k.csv");
                write_file(&path, sweep_csv("k", &xs, &ms)?.as_bytes())?;
                written.push(path);
            }
            PlotKind::MetricVsRatio => {
                let Some(rows) = &data.vs_ratio else { continue };
                let xs: Vec<f64> = rows.iter().map(|(r, _)| *r).collect();
                let ms: Vec<RankingMetrics> = rows.iter().map(|(_, m)| *m).collect();
                let path = out_dir.join("ratio_sweep.svg");
                write_file(
                    &path,
                    metric_chart("Metrics vs injected query ratio", "ratio", &xs, &ms).as_bytes(),
                )?;
                written.push(path);
                let path = out_dir.join("ratio_sweep.csv");
                write_file(&path, sweep_csv("ratio", &xs, &ms)?.as_bytes())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct SweepRow<'a> {
    x: f64,
    metric: &'a str,
    value: f64,
}

fn metric_series(m: &RankingMetrics) -> [(&'static str, f64); 7] {
    [
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
        ("rank1", m.rank1),
        ("map", m.map),
        ("mrr", m.mrr),
        ("ndcg", m.ndcg),
    ]
}

/// Long-format sweep table: `<x_name>,metric,value`.
pub fn sweep_csv(x_name: &str, xs: &[f64], ms: &[RankingMetrics]) -> Result<String> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    wtr.write_record([x_name, "metric", "value"]).map_err(csv_err)?;
    for (x, m) in xs.iter().zip(ms) {
        for (metric, value) in metric_series(m) {
            wtr.serialize(SweepRow { x: *x, metric, value }).map_err(csv_err)?;
        }
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Schema(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(e.to_string()))
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 30.0;
const PLOT_W: f64 = 300.0;
const PLOT_H: f64 = 280.0;
const COLORS: [&str; 7] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn scale(v: f64, lo: f64, hi: f64, len: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo) * len
    } else {
        len / 2.0
    }
}

/// Pixel position of a data point inside a chart with the given ranges.
pub fn to_pixel(p: (f64, f64), x_range: (f64, f64), y_range: (f64, f64)) -> (f64, f64) {
    (
        LEFT + scale(p.0, x_range.0, x_range.1, PLOT_W),
        TOP + PLOT_H - scale(p.1, y_range.0, y_range.1, PLOT_H),
    )
}

pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
    x_range: (f64, f64),
    y_range: (f64, f64),
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (LEFT, TOP, LEFT + PLOT_W, TOP + PLOT_H);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_range.0 + f * (x_range.1 - x_range.0);
        let yv = y_range.0 + f * (y_range.1 - y_range.0);
        let (px, _) = to_pixel((xv, y_range.0), x_range, y_range);
        let (_, py) = to_pixel((x_range.0, yv), x_range, y_range);
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            y1 + 14.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
            x0 - 4.0,
            py + 3.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        LEFT + PLOT_W / 2.0,
        y1 + 32.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0,
        escape(y_label)
    );
    for (i, se) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = se
            .points
            .iter()
            .map(|&p| {
                let (px, py) = to_pixel(p, x_range, y_range);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + i as f64 * 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 15.0,
            x1 + 35.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            x1 + 40.0,
            ly + 4.0,
            escape(se.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let t = format!("{v:.2}");
    t.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Drop interior points that lie on the segment between their neighbors.
pub fn simplify_polyline(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        if out.last() == Some(&p) {
            continue;
        }
        if out.len() >= 2 {
            let a = out[out.len() - 2];
            let b = out[out.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross.abs() < 1e-12 {
                out.pop();
            }
        }
        out.push(p);
    }
    out
}

pub fn roc_svg(points: &[(f64, f64)]) -> String {
    let diagonal = Series {
        name: "chance",
        points: vec![(0.0, 0.0), (1.0, 1.0)],
    };
    let roc = Series {
        name: "ROC",
        points: simplify_polyline(points),
    };
    line_chart(
        "ROC curve",
        "false positive rate",
        "true positive rate",
        &[roc, diagonal],
        (0.0, 1.0),
        (0.0, 1.0),
    )
}

pub fn metric_chart(title: &str, x_label: &str, xs: &[f64], ms: &[RankingMetrics]) -> String {
    let names = metric_series(&RankingMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        rank1: 0.0,
        map: 0.0,
        mrr: 0.0,
        ndcg: 0.0,
        n_queries: 0,
        n_excluded: 0,
    });
    let series: Vec<Series<'_>> = names
        .iter()
        .enumerate()
        .map(|(j, (name, _))| Series {
            name,
            points: xs.iter().zip(ms).map(|(x, m)| (*x, metric_series(m)[j].1)).collect(),
        })
        .collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_range = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    line_chart(title, x_label, "value", &series, x_range, (0.0, 1.0))
}
