//! Plot data: tab-separated tables and static SVG line charts built from
//! the files a run leaves in its output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::config::Mode;
use crate::error::{HarnessError, Result};
use crate::experiment::{read_history, HistoryRow};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

impl Chart {
    /// Renders the chart; fails when no series has a point.
    pub fn to_svg(&self) -> Result<String> {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        if pts().next().is_none() {
            return Err(HarnessError::Data {
                path: PathBuf::from(&self.title),
                message: "chart has no data points".into(),
            });
        }
        let floor = pts()
            .map(|p| p.1)
            .filter(|&y| y > 0.0 && y.is_finite())
            .fold(f64::INFINITY, f64::min);
        let log_y = self.log_y && floor.is_finite();
        let ty = |y: f64| if log_y { y.max(floor).log10() } else { y };
        let finite = || pts().filter(|p| p.0.is_finite() && ty(p.1).is_finite());
        let (x0, x1) = span(
            finite().map(|p| p.0).fold(f64::INFINITY, f64::min),
            finite().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
        );
        let (mut y0, mut y1) = span(
            finite().map(|p| ty(p.1)).fold(f64::INFINITY, f64::min),
            finite().map(|p| ty(p.1)).fold(f64::NEG_INFINITY, f64::max),
        );
        if log_y {
            y0 = y0.floor();
            y1 = y1.ceil().max(y0 + 1.0);
        }
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph;
        let sy_raw = |v: f64| TOP + (1.0 - (v - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let x_ticks: Vec<f64> = (0..=5).map(|i| x0 + i as f64 / 5.0 * (x1 - x0)).collect();
        let y_ticks: Vec<f64> = if log_y {
            (y0 as i64..=y1 as i64).map(|d| d as f64).collect()
        } else {
            (0..=5).map(|i| y0 + i as f64 / 5.0 * (y1 - y0)).collect()
        };
        let whole_x = x1 - x0 >= 10.0;
        for &xv in &x_ticks {
            let px = sx(xv);
            let label = if whole_x {
                format!("{}", xv.round())
            } else {
                tick_label(xv, false)
            };
            let _ = writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"##,
                TOP + ph,
                TOP + ph + 16.0,
            );
        }
        for &yv in &y_ticks {
            let py = sy_raw(yv);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                py + 4.0,
                tick_label(yv, log_y)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let dash = if series.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let coords: Vec<String> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && ty(p.1).is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if coords.len() == 1 {
                let (cx, cy) = coords[0].split_once(',').expect("formatted pair");
                let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
            } else if !coords.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.6"{dash} points="{}"/>"#,
                    coords.join(" ")
                );
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                lx + 24.0,
                lx + 30.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    /// Tab-separated table: one `x` column, then one column per series;
    /// missing values are left blank.
    pub fn to_tsv(&self, x_name: &str) -> String {
        let mut xs: BTreeMap<u64, f64> = BTreeMap::new();
        for s in &self.series {
            for &(x, _) in &s.points {
                xs.insert(order_key(x), x);
            }
        }
        let mut out = String::from(x_name);
        for s in &self.series {
            out.push('\t');
            out.push_str(&s.name);
        }
        out.push('\n');
        for &x in xs.values() {
            out.push_str(&x.to_string());
            for s in &self.series {
                out.push('\t');
                if let Some(&(_, y)) = s.points.iter().find(|p| p.0 == x) {
                    out.push_str(&y.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Total order on finite floats as integers.
fn order_key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn error_series(rows: &[HistoryRow], label: &str, dashed: bool) -> Vec<Series> {
    let mut by_cluster: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        by_cluster
            .entry(r.cluster)
            .or_default()
            .push((r.iteration as f64, r.spectral_error));
    }
    by_cluster
        .into_iter()
        .map(|(j, points)| Series {
            name: format!("{label} cluster {}", j + 1),
            points,
            dashed,
        })
        .collect()
}

fn misclassification_series(rows: &[HistoryRow], label: String) -> Series {
    let first = rows.iter().map(|r| r.cluster).min().unwrap_or(0);
    Series {
        name: label,
        points: rows
            .iter()
            .filter(|r| r.cluster == first)
            .map(|r| (r.iteration as f64, r.misclassified_total as f64))
            .collect(),
        dashed: false,
    }
}

fn load_nonempty(path: &Path) -> Result<Vec<HistoryRow>> {
    let rows = read_history(path)?;
    if rows.is_empty() {
        return Err(HarnessError::Data {
            path: path.into(),
            message: "history has no rows".into(),
        });
    }
    Ok(rows)
}

fn write_chart(out: &Path, stem: &str, x_name: &str, chart: &Chart) -> Result<Vec<PathBuf>> {
    let svg = chart.to_svg()?;
    let tsv_path = out.join(format!("{stem}.tsv"));
    let svg_path = out.join(format!("{stem}.svg"));
    fs::write(&tsv_path, chart.to_tsv(x_name)).map_err(|e| HarnessError::io(&tsv_path, e))?;
    fs::write(&svg_path, svg).map_err(|e| HarnessError::io(&svg_path, e))?;
    Ok(vec![tsv_path, svg_path])
}

fn error_chart(title: &str, series: Vec<Series>) -> Chart {
    Chart {
        title: title.into(),
        x_label: "iteration".into(),
        y_label: "spectral error".into(),
        log_y: true,
        series,
    }
}

#[derive(Deserialize)]
struct ScalingRecord {
    cluster_size: usize,
    least_squares_error: f64,
}

fn scaling_chart(path: &Path) -> Result<Chart> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Data {
        path: path.into(),
        message: e.to_string(),
    })?;
    let mut by_size: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for rec in r.deserialize::<ScalingRecord>() {
        let rec = rec.map_err(|e| HarnessError::Data {
            path: path.into(),
            message: e.to_string(),
        })?;
        by_size
            .entry(rec.cluster_size)
            .or_default()
            .push(rec.least_squares_error);
    }
    if by_size.is_empty() {
        return Err(HarnessError::Data {
            path: path.into(),
            message: "scaling table has no rows".into(),
        });
    }
    let points = by_size
        .into_iter()
        .map(|(m, mut e)| {
            e.sort_by(f64::total_cmp);
            let n = e.len();
            let med = if n % 2 == 1 {
                e[n / 2]
            } else {
                0.5 * (e[n / 2 - 1] + e[n / 2])
            };
            (m as f64, med)
        })
        .collect();
    Ok(Chart {
        title: "Least-squares error vs cluster size".into(),
        x_label: "systems in cluster".into(),
        y_label: "median spectral error".into(),
        log_y: true,
        series: vec![Series {
            name: "median error".into(),
            points,
            dashed: false,
        }],
    })
}

/// Builds every table and chart the files in `input` allow, writing them to
/// `out`. Fails when `input` holds no usable history or a history is
/// malformed or empty.
pub fn emit_plot_data(input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut histories: BTreeMap<&'static str, Vec<HistoryRow>> = BTreeMap::new();
    for mode in [Mode::Clustered, Mode::Pooled, Mode::SingleAgent] {
        let path = input.join(format!("history_{mode}.csv"));
        if path.is_file() {
            histories.insert(mode.name(), load_nonempty(&path)?);
        }
    }

    let mut sweep: Vec<(usize, Vec<HistoryRow>)> = Vec::new();
    let sweep_dir = input.join("sweep_N");
    if sweep_dir.is_dir() {
        let entries = fs::read_dir(&sweep_dir).map_err(|e| HarnessError::io(&sweep_dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| HarnessError::io(&sweep_dir, e))?.path();
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            if let Some(n) = name
                .strip_prefix("history_N")
                .and_then(|r| r.strip_suffix(".csv"))
                .and_then(|r| r.parse::<usize>().ok())
            {
                sweep.push((n, load_nonempty(&path)?));
            }
        }
        sweep.sort_by_key(|(n, _)| *n);
    }
    let scaling = input.join("sweep_cluster_size.csv");

    if histories.is_empty() && sweep.is_empty() && !scaling.is_file() {
        return Err(HarnessError::Data {
            path: input.into(),
            message: "no run histories found".into(),
        });
    }

    let mut files = Vec::new();
    for (mode, rows) in &histories {
        let chart = error_chart(
            &format!("Estimation error ({mode})"),
            error_series(rows, mode, false),
        );
        files.extend(write_chart(
            out,
            &format!("errors_{mode}"),
            "iteration",
            &chart,
        )?);
    }
    if let (Some(c), Some(p)) = (histories.get("clustered"), histories.get("pooled")) {
        let mut series = error_series(c, "clustered", false);
        series.extend(error_series(p, "pooled", true));
        let chart = error_chart("With and without clustering", series);
        files.extend(write_chart(out, "fig1_clustering", "iteration", &chart)?);
    }
    if let (Some(c), Some(s)) = (histories.get("clustered"), histories.get("single_agent")) {
        let mut series = error_series(c, "clustered", false);
        series.extend(error_series(s, "single agent", true));
        let chart = error_chart("Clustered vs single agent", series);
        files.extend(write_chart(out, "fig1_collaboration", "iteration", &chart)?);
    }
    if !sweep.is_empty() {
        let chart = Chart {
            title: "Misclassified systems".into(),
            x_label: "iteration".into(),
            y_label: "misclassified systems".into(),
            log_y: false,
            series: sweep
                .iter()
                .map(|(n, rows)| misclassification_series(rows, format!("N = {n}")))
                .collect(),
        };
        files.extend(write_chart(
            out,
            "fig2_misclassification",
            "iteration",
            &chart,
        )?);
    }
    if scaling.is_file() {
        let chart = scaling_chart(&scaling)?;
        files.extend(write_chart(
            out,
            "scaling_cluster_size",
            "cluster_size",
            &chart,
        )?);
    }
    Ok(files)
}
