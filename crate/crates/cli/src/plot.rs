//! Static SVG histograms of `residuals.csv`, one panel per series.

use std::fmt::Write;

use postproc_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// Groups the `value` column by `series` in order of first appearance. Files
/// without a `series` column form a single group.
pub fn read_residuals(text: &str) -> Result<Vec<Series>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    let value_col = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::Parse("missing column \"value\"".into()))?;
    let series_col = headers.iter().position(|h| h == "series");
    let mut groups: Vec<Series> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let raw = rec.get(value_col).unwrap_or("");
        let v: f64 = raw
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad value {raw:?}", line + 2)))?;
        let name = series_col.and_then(|c| rec.get(c)).unwrap_or("residuals");
        match groups.iter_mut().find(|g| g.name == name) {
            Some(g) => g.values.push(v),
            None => groups.push(Series {
                name: name.to_string(),
                values: vec![v],
            }),
        }
    }
    if groups.is_empty() {
        return Err(Error::Domain("residual file has no rows".into()));
    }
    Ok(groups)
}

/// Bin counts over `[lo, hi]`; the last bin is closed.
pub fn bin_counts(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
}

/// Common range of all series, widened when degenerate.
pub fn data_range(groups: &[Series]) -> (f64, f64) {
    let all = groups.iter().flat_map(|g| g.values.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

pub fn histogram_svg(groups: &[Series], bins: usize, width: u32, panel: u32) -> Result<String> {
    if groups.iter().any(|g| g.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain("residuals must be finite".into()));
    }
    let (lo, hi) = data_range(groups);
    let (w, ph) = (width as f64, panel as f64);
    let (left, right, top, bottom) = (48.0, 16.0, 28.0, 24.0);
    let plot_w = w - left - right;
    let plot_h = ph - top - bottom;
    let bar_w = plot_w / bins as f64;
    let height = ph * groups.len() as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="monospace" font-size="11">
<rect x="0" y="0" width="{w}" height="{height}" fill="white"/>"#
    );
    for (k, g) in groups.iter().enumerate() {
        let counts = bin_counts(&g.values, bins, lo, hi);
        let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let y0 = ph * k as f64;
        let base = y0 + top + plot_h;
        let _ = writeln!(s, r#"<g id="panel-{k}" class="histogram">"#);
        let _ = writeln!(
            s,
            r#"<text x="{left}" y="{:.2}">{} (n={})</text>"#,
            y0 + 16.0,
            escape(&g.name),
            g.values.len()
        );
        for (b, &c) in counts.iter().enumerate() {
            let h = plot_h * c as f64 / peak;
            let _ = writeln!(
                s,
                r##"<rect id="bar-{k}-{b}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b0" data-count="{c}"/>"##,
                left + bar_w * b as f64,
                base - h,
                bar_w,
                h
            );
        }
        let _ = writeln!(
            s,
            r#"<line x1="{left}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="black"/>"#,
            left + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{left}" y="{:.2}">{}</text>"#,
            base + 14.0,
            fmt_tick(lo)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left + plot_w,
            base + 14.0,
            fmt_tick(hi)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_tick(v: f64) -> String {
    format!("{:.4}", v + 0.0)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
