//! CSV and static SVG output for figure datasets.
//!
//! CSV layout: a header row, then one row per x-grid point. The first column
//! is the swept variable, followed by one column per series; series with
//! error bars get an extra `<label>_se` column. Missing points are empty
//! cells. Numbers use the shortest representation that parses back to the
//! same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{FigureDataset, Series};
use crate::{Error, Result};

const SE_SUFFIX: &str = "_se";

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: f64,
    pub height: f64,
    /// Logarithmic x axis; `None` picks log for threshold and density sweeps.
    pub log_x: Option<bool>,
    pub title: Option<String>,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle {
            width: 720.0,
            height: 480.0,
            log_x: None,
            title: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedFigure {
    pub csv: String,
    pub svg: String,
}

fn check(ds: &FigureDataset) -> Result<()> {
    if ds.series.is_empty() {
        return Err(Error::InvalidSweep(format!(
            "{}: dataset has no series",
            ds.figure_id.as_str()
        )));
    }
    for s in &ds.series {
        let se_len = s.std_error.as_ref().map_or(ds.x.len(), Vec::len);
        if s.y.len() != ds.x.len() || se_len != ds.x.len() {
            return Err(Error::InvalidSweep(format!(
                "series `{}` does not match the x grid",
                s.label
            )));
        }
    }
    Ok(())
}

pub fn render_figure(ds: &FigureDataset, style: &PlotStyle) -> Result<RenderedFigure> {
    check(ds)?;
    Ok(RenderedFigure {
        csv: to_csv(ds)?,
        svg: to_svg(ds, style),
    })
}

/// Writes `<figure_id>_<spec hash>.csv` and `.svg` into `dir`.
pub fn write_figure(
    ds: &FigureDataset,
    style: &PlotStyle,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let rendered = render_figure(ds, style)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = match ds.metadata.get("spec_hash") {
        Some(hash) => format!("{}_{hash}", ds.figure_id.as_str()),
        None => ds.figure_id.as_str().to_string(),
    };
    let csv_path = dir.join(format!("{stem}.csv"));
    let svg_path = dir.join(format!("{stem}.svg"));
    fs::write(&csv_path, rendered.csv).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&svg_path, rendered.svg).map_err(|e| Error::io(&svg_path, e))?;
    Ok((csv_path, svg_path))
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn parse_num(s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::InvalidSweep(format!("bad number `{s}` in csv")))
}

pub fn to_csv(ds: &FigureDataset) -> Result<String> {
    check(ds)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![ds.x_name.clone()];
    for s in &ds.series {
        header.push(s.label.clone());
        if s.std_error.is_some() {
            header.push(format!("{}{SE_SUFFIX}", s.label));
        }
    }
    w.write_record(&header)?;
    for (i, &x) in ds.x.iter().enumerate() {
        let mut row = vec![fmt_num(x)];
        for s in &ds.series {
            row.push(fmt_num(s.y[i]));
            if let Some(se) = &s.std_error {
                row.push(fmt_num(se[i]));
            }
        }
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Columns read back from a figure CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub x_name: String,
    pub x: Vec<f64>,
    pub series: Vec<Series>,
}

pub fn read_csv(text: &str) -> Result<CsvTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let Some((x_name, rest)) = header.split_first() else {
        return Err(Error::InvalidSweep("csv has no header".into()));
    };
    // Column index -> (series index, is_se).
    let mut series: Vec<Series> = Vec::new();
    let mut layout = Vec::with_capacity(rest.len());
    for name in rest {
        let se_of = name
            .strip_suffix(SE_SUFFIX)
            .and_then(|base| series.iter().position(|s| s.label == base));
        match se_of {
            Some(idx) => {
                series[idx].std_error = Some(Vec::new());
                layout.push((idx, true));
            }
            None => {
                series.push(Series::new(name.clone(), Vec::new()));
                layout.push((series.len() - 1, false));
            }
        }
    }
    let mut x = Vec::new();
    for record in r.records() {
        let record = record?;
        x.push(parse_num(&record[0])?);
        for (col, &(idx, is_se)) in layout.iter().enumerate() {
            let v = parse_num(&record[col + 1])?;
            if is_se {
                series[idx]
                    .std_error
                    .as_mut()
                    .expect("se column registered")
                    .push(v);
            } else {
                series[idx].y.push(v);
            }
        }
    }
    Ok(CsvTable {
        x_name: x_name.clone(),
        x,
        series,
    })
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if v.abs() >= 1e4 || v.abs() < 1e-3 {
        return format!("{v:.0e}");
    }
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let mults: &[f64] = if decades < 3.0 {
        &[1.0, 2.0, 5.0]
    } else {
        &[1.0]
    };
    let mut ticks = Vec::new();
    for e in lo.log10().floor() as i32..=hi.log10().ceil() as i32 {
        for &m in mults {
            let t = m * 10f64.powi(e);
            if t >= lo * (1.0 - 1e-9) && t <= hi * (1.0 + 1e-9) {
                ticks.push(t);
            }
        }
    }
    ticks
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
    log_x: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let t = if self.log_x {
            (x / self.x_lo).ln() / (self.x_hi / self.x_lo).ln()
        } else {
            (x - self.x_lo) / (self.x_hi - self.x_lo)
        };
        self.left + t * self.width
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height * (1.0 - (y - self.y_lo) / (self.y_hi - self.y_lo))
    }
}

fn y_extent(series: &[Series]) -> (f64, f64) {
    let mut lo = 0.0f64;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for (i, &y) in s.y.iter().enumerate() {
            if !y.is_finite() {
                continue;
            }
            let se = s
                .std_error
                .as_ref()
                .map_or(0.0, |v| if v[i].is_finite() { v[i] } else { 0.0 });
            lo = lo.min(y - se);
            hi = hi.max(y + se);
        }
    }
    if !hi.is_finite() || hi <= lo {
        hi = lo + 1.0;
    }
    (lo, hi + 0.05 * (hi - lo))
}

pub fn to_svg(ds: &FigureDataset, style: &PlotStyle) -> String {
    let log_x = style
        .log_x
        .unwrap_or(matches!(ds.x_name.as_str(), "beta" | "lambda"))
        && ds.x.first().is_some_and(|&x| x > 0.0);
    let (x_lo, x_hi) = match (ds.x.first(), ds.x.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (0.0, 1.0),
    };
    let (y_lo, y_hi) = y_extent(&ds.series);
    let f = Frame {
        left: 70.0,
        top: 40.0,
        width: style.width - 70.0 - 170.0,
        height: style.height - 40.0 - 60.0,
        x_lo,
        x_hi,
        y_lo,
        y_hi,
        log_x,
    };

    let mut out = String::new();
    let (w, h) = (style.width, style.height);
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let meta = serde_json::to_string(&ds.metadata).expect("string map serializes");
    let _ = writeln!(out, "<metadata>{}</metadata>", escape_xml(&meta));
    let title = style
        .title
        .clone()
        .unwrap_or_else(|| ds.figure_id.as_str().to_string());
    let _ = writeln!(out, "<title>{}</title>", escape_xml(&title));
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#
    );

    // Axes.
    let _ = writeln!(out, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
        f.left, f.top, f.width, f.height
    );
    let x_ticks = if log_x {
        log_ticks(x_lo, x_hi)
    } else {
        linear_ticks(x_lo, x_hi)
    };
    let bottom = f.top + f.height;
    for &t in &x_ticks {
        let x = f.px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}"/>"#,
            bottom + 5.0
        );
    }
    for &t in &linear_ticks(y_lo, y_hi) {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#,
            f.left - 5.0,
            f.left
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g class="labels" fill="black" stroke="none">"#);
    for &t in &x_ticks {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(t),
            bottom + 18.0,
            fmt_tick(t)
        );
    }
    for &t in &linear_ticks(y_lo, y_hi) {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            f.left - 8.0,
            f.py(t) + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        f.left + f.width / 2.0,
        h - 15.0,
        escape_xml(&ds.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
        f.top + f.height / 2.0,
        f.top + f.height / 2.0,
        escape_xml(&ds.y_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        f.left + f.width / 2.0,
        escape_xml(&title)
    );
    let _ = writeln!(out, "</g>");

    for (i, s) in ds.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<g class="series" data-label="{}" stroke="{color}" fill="none" stroke-width="1.5">"#,
            escape_xml(&s.label)
        );
        match &s.std_error {
            None => {
                // Break the line at missing points.
                let mut run: Vec<String> = Vec::new();
                let flush = |run: &mut Vec<String>, out: &mut String| {
                    if run.len() > 1 {
                        let _ = writeln!(out, r#"<polyline points="{}"/>"#, run.join(" "));
                    }
                    run.clear();
                };
                for (&x, &y) in ds.x.iter().zip(&s.y) {
                    if y.is_finite() {
                        run.push(format!("{:.2},{:.2}", f.px(x), f.py(y)));
                    } else {
                        flush(&mut run, &mut out);
                    }
                }
                flush(&mut run, &mut out);
            }
            Some(se) => {
                for ((&x, &y), &e) in ds.x.iter().zip(&s.y).zip(se) {
                    if !y.is_finite() {
                        continue;
                    }
                    let (cx, cy) = (f.px(x), f.py(y));
                    let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3"/>"#);
                    if e.is_finite() && e > 0.0 {
                        let (y1, y2) = (f.py(y - e), f.py(y + e));
                        let _ = writeln!(
                            out,
                            r#"<path class="error-bar" d="M{cx:.2},{y1:.2}V{y2:.2}M{:.2},{y1:.2}H{:.2}M{:.2},{y2:.2}H{:.2}"/>"#,
                            cx - 3.0,
                            cx + 3.0,
                            cx - 3.0,
                            cx + 3.0
                        );
                    }
                }
            }
        }
        let _ = writeln!(out, "</g>");
    }

    let _ = writeln!(out, r#"<g class="legend">"#);
    let lx = f.left + f.width + 15.0;
    for (i, s) in ds.series.iter().enumerate() {
        let ly = f.top + 10.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape_xml(&s.label)
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    out
}
