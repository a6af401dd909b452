use std::fmt::Write as _;

use chrono::NaiveDate;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;
const TICKS: usize = 6;

/// A named line on the chart.
#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: &'a [(NaiveDate, f64)],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG line chart with a date x-axis.
pub fn render_svg(title: &str, series: &[Series<'_>]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut d0, mut d1) = (NaiveDate::MAX, NaiveDate::MIN);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(d, v) in all {
        d0 = d0.min(d);
        d1 = d1.max(d);
        if v.is_finite() {
            y0 = y0.min(v);
            y1 = y1.max(v);
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    if d0 > d1 || !y0.is_finite() {
        out.push_str("</svg>\n");
        return out;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let span_days = ((d1 - d0).num_days().max(1)) as f64;
    let px = |d: NaiveDate| MARGIN + (d - d0).num_days() as f64 / span_days * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r##"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="#333"/>"##);
    let _ = writeln!(out, r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="#333"/>"##);
    for k in 0..=TICKS {
        let frac = k as f64 / TICKS as f64;
        let d = d0 + chrono::Days::new((frac * span_days).round() as u64);
        let x = px(d);
        let _ = writeln!(out, r##"<line x1="{x:.1}" y1="{bottom}" x2="{x:.1}" y2="{}" stroke="#333"/>"##, bottom + 4.0);
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{d}</text>"#, bottom + 16.0);
        let v = y0 + frac * (y1 - y0);
        let y = py(v);
        let _ = writeln!(out, r##"<line x1="{}" y1="{y:.1}" x2="{left}" y2="{y:.1}" stroke="#333"/>"##, left - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 6.0, y + 4.0);
    }
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(_, v)| v.is_finite())
            .map(|&(d, v)| format!("{:.2},{:.2}", px(d), py(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            escape(s.color),
            pts.join(" ")
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="12" height="3" fill="{}"/>"#, right - 120.0, ly - 4.0, escape(s.color));
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, right - 104.0, escape(s.label));
    }
    out.push_str("</svg>\n");
    out
}
