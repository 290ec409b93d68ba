//! Writing a study report to disk: JSON, per-cell sample CSVs and an SVG
//! grid of histograms.
//!
//! Rows of the grid are diagnostic owners and columns are data sources.
//! Diagonal cells show the reference distribution of a heldout check with
//! the observed diagnostic as a vertical line; off-diagonal cells overlay
//! the owner's reference with the diagnostic of the source model's
//! replicates. The renderer only reads the report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::outcome::StudyReport;

const CELL_W: f64 = 220.0;
const CELL_H: f64 = 160.0;
const MARGIN: f64 = 90.0;
const PAD: f64 = 12.0;
const MAX_BINS: usize = 100;
const OWN_COLOR: &str = "#4477aa";
const OTHER_COLOR: &str = "#ee6677";

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub cells: Vec<PathBuf>,
    pub svg: PathBuf,
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_cell_csv(path: &Path, rows: &[(&str, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["source", "value"])?;
    for (source, value) in rows {
        w.write_record([*source, fmt_value(*value).as_str()])?;
    }
    w.flush()?;
    Ok(())
}

/// Write `report.json`, one `cell_<owner>__<source>.csv` per grid cell and
/// `grid.svg` into `out_dir` (created if missing).
pub fn emit_report(report: &StudyReport, out_dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(out_dir)?;
    let json = out_dir.join("report.json");
    fs::write(&json, report.to_json()? + "\n")?;

    let mut cells = Vec::new();
    for c in &report.diagonal {
        let path = out_dir.join(format!("cell_{0}__{0}.csv", sanitize(&c.model)));
        let mut rows: Vec<(&str, f64)> = c.replicates.iter().map(|v| ("replicate", *v)).collect();
        rows.push(("observed", c.observed));
        write_cell_csv(&path, &rows)?;
        cells.push(path);
    }
    for p in &report.pairs {
        let path = out_dir.join(format!("cell_{}__{}.csv", sanitize(&p.diag_owner), sanitize(&p.data_source)));
        let mut rows: Vec<(&str, f64)> = p.samples_a.iter().map(|v| (p.diag_owner.as_str(), *v)).collect();
        rows.extend(p.samples_b.iter().map(|v| (p.data_source.as_str(), *v)));
        write_cell_csv(&path, &rows)?;
        cells.push(path);
    }

    let svg = out_dir.join("grid.svg");
    fs::write(&svg, render_svg(report))?;
    Ok(ReportFiles { json, cells, svg })
}

/// Freedman–Diaconis bin edges over the finite values of all `sets`.
fn bin_edges(sets: &[&[f64]]) -> Option<Vec<f64>> {
    let mut pooled: Vec<f64> = sets.iter().flat_map(|s| s.iter().copied()).filter(|v| v.is_finite()).collect();
    if pooled.is_empty() {
        return None;
    }
    pooled.sort_by(f64::total_cmp);
    let n = pooled.len();
    let (lo, hi) = (pooled[0], pooled[n - 1]);
    if hi <= lo {
        return Some(vec![lo - 0.5, hi + 0.5]);
    }
    let q = |p: f64| {
        let pos = p * (n - 1) as f64;
        let (a, b) = (pos.floor() as usize, pos.ceil() as usize);
        pooled[a] + (pos - a as f64) * (pooled[b] - pooled[a])
    };
    let width = 2.0 * (q(0.75) - q(0.25)) * (n as f64).powf(-1.0 / 3.0);
    let bins = if width > 0.0 { (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS) } else { MAX_BINS };
    let step = (hi - lo) / bins as f64;
    Some((0..=bins).map(|i| lo + step * i as f64).collect())
}

fn counts(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let mut c = vec![0; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let i = (((v - lo) / (hi - lo)) * bins as f64).floor() as isize;
        c[i.clamp(0, bins as isize - 1) as usize] += 1;
    }
    c
}

struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn px(&self, edges: &[f64], v: f64) -> f64 {
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        self.x + (v - lo) / (hi - lo) * self.w
    }
}

fn draw_hist(out: &mut String, frame: &Frame, edges: &[f64], values: &[f64], peak: f64, color: &str) {
    let c = counts(values, edges);
    let total = values.iter().filter(|v| v.is_finite()).count().max(1) as f64;
    for (i, k) in c.iter().enumerate() {
        if *k == 0 {
            continue;
        }
        let density = *k as f64 / total;
        let h = density / peak * frame.h;
        let x0 = frame.px(edges, edges[i]);
        let x1 = frame.px(edges, edges[i + 1]);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.55"/>"#,
            x0,
            frame.y + frame.h - h,
            (x1 - x0).max(0.5),
            h
        );
    }
}

fn peak_density(edges: &[f64], sets: &[&[f64]]) -> f64 {
    sets.iter()
        .map(|s| {
            let total = s.iter().filter(|v| v.is_finite()).count().max(1) as f64;
            counts(s, edges).into_iter().max().unwrap_or(0) as f64 / total
        })
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render the study grid as a standalone SVG document.
pub fn render_svg(report: &StudyReport) -> String {
    let k = report.models.len();
    let footer_rows = k + 2;
    let width = MARGIN + k as f64 * CELL_W + PAD;
    let height = MARGIN + k as f64 * CELL_H + 24.0 * footer_rows as f64 + 2.0 * PAD;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" font-size="13">rows: diagnostic owner, columns: data source (alpha = {}, tau = {})</text>"#,
        MARGIN,
        report.alpha,
        report.tau
    );
    for (i, id) in report.models.iter().enumerate() {
        let cx = MARGIN + (i as f64 + 0.5) * CELL_W;
        let cy = MARGIN + (i as f64 + 0.5) * CELL_H;
        let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, MARGIN - 24.0, escape(id));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{cy:.1}" text-anchor="end">{}</text>"#, MARGIN - 8.0, escape(id));
    }

    for (row, owner) in report.models.iter().enumerate() {
        for (col, source) in report.models.iter().enumerate() {
            let frame = Frame {
                x: MARGIN + col as f64 * CELL_W + PAD,
                y: MARGIN + row as f64 * CELL_H + PAD + 12.0,
                w: CELL_W - 2.0 * PAD,
                h: CELL_H - 2.0 * PAD - 12.0,
            };
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{:.1}" width="{CELL_W}" height="{CELL_H}" fill="none" stroke="#cccccc"/>"##,
                MARGIN + col as f64 * CELL_W,
                MARGIN + row as f64 * CELL_H
            );
            let title_y = MARGIN + row as f64 * CELL_H + PAD + 4.0;
            if row == col {
                let Some(c) = report.check(owner) else { continue };
                let Some(edges) = bin_edges(&[&c.replicates, &[c.observed]]) else { continue };
                let peak = peak_density(&edges, &[&c.replicates]);
                draw_hist(&mut out, &frame, &edges, &c.replicates, peak, OWN_COLOR);
                if c.observed.is_finite() {
                    let x = frame.px(&edges, c.observed);
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
                        frame.y,
                        frame.y + frame.h
                    );
                }
                let verdict = if c.pass { "pass" } else { "fail" };
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{title_y:.1}">p = {} ({verdict})</text>"#,
                    frame.x,
                    c.p_value
                );
            } else if let Some(p) = report.pair(owner, source) {
                let Some(edges) = bin_edges(&[&p.samples_a, &p.samples_b]) else { continue };
                let peak = peak_density(&edges, &[&p.samples_a, &p.samples_b]);
                draw_hist(&mut out, &frame, &edges, &p.samples_a, peak, OWN_COLOR);
                draw_hist(&mut out, &frame, &edges, &p.samples_b, peak, OTHER_COLOR);
                let verdict = if p.fools { "fools" } else { "does not fool" };
                let _ = writeln!(
                    out,
                    r#"<text x="{:.1}" y="{title_y:.1}">KL = {:.3} ({verdict})</text>"#,
                    frame.x,
                    p.sym_kl
                );
            } else {
                let _ = writeln!(
                    out,
                    r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#999999">not compared</text>"##,
                    frame.x + frame.w / 2.0,
                    frame.y + frame.h / 2.0
                );
            }
        }
    }

    // Footer: symmetrized KL table, owner rows by source columns.
    let top = MARGIN + k as f64 * CELL_H + PAD + 16.0;
    let col_w = (width - MARGIN - PAD) / k.max(1) as f64;
    let _ = writeln!(out, r#"<text x="{PAD}" y="{top:.1}" font-weight="bold">symmetrized KL</text>"#);
    for (j, id) in report.models.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{top:.1}">{}</text>"#, MARGIN + j as f64 * col_w, escape(id));
    }
    for (i, owner) in report.models.iter().enumerate() {
        let y = top + 24.0 * (i + 1) as f64;
        let _ = writeln!(out, r#"<text x="{PAD}" y="{y:.1}">{}</text>"#, escape(owner));
        for (j, source) in report.models.iter().enumerate() {
            let cell = match report.pair(owner, source) {
                Some(p) => format!("{:.3}", p.sym_kl),
                None if i == j => "-".to_string(),
                None => "n/a".to_string(),
            };
            let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}">{cell}</text>"#, MARGIN + j as f64 * col_w);
        }
    }
    out.push_str("</svg>\n");
    out
}
