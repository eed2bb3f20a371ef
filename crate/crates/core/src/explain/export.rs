use std::fmt::Write as _;

use super::Explanation;
use crate::error::{Error, Result};
use crate::survival::FeatureKind;

fn csv_block(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Two CSV blocks separated by an empty line: the curves
/// (`feature,x,contribution`) and a summary (`key,feature,value`).
pub fn explanation_csv(e: &Explanation) -> Result<String> {
    let curves = e.curves.iter().flat_map(|c| {
        let name = &e.feature_names[c.feature];
        c.points
            .iter()
            .map(move |&(x, y)| vec![name.clone(), x.to_string(), y.to_string()])
    });
    let mut out = csv_block(&["feature", "x", "contribution"], curves)?;

    let global = |key: &str, value: String| vec![key.to_string(), String::new(), value];
    let d = &e.diagnostics;
    let mut summary = vec![
        global("variant", e.variant.to_string()),
        global("mode", e.mode.to_string()),
        global("lambda", e.lambda.to_string()),
        global("mu", e.mu.to_string()),
        global("bias", e.model.bias().to_string()),
        global("initial_loss", d.initial_loss.to_string()),
        global("final_loss", d.final_loss.to_string()),
        global("epochs", d.epochs.to_string()),
        global("c_blackbox", opt(d.c_blackbox)),
        global("c_surrogate", opt(d.c_surrogate)),
    ];
    if let Some(center) = &e.center {
        for (name, v) in e.feature_names.iter().zip(center) {
            summary.push(vec!["center".into(), name.clone(), v.to_string()]);
        }
    }
    for (k, name) in e.feature_names.iter().enumerate() {
        let c = &e.coefficients[k];
        let fields = [
            ("beta", c.beta),
            ("alpha", c.alpha),
            ("omega", c.omega),
            ("linear", c.linear),
            ("range", Some(e.curves[k].range())),
        ];
        for (key, value) in fields {
            if let Some(v) = value {
                summary.push(vec![key.into(), name.clone(), v.to_string()]);
            }
        }
    }
    out.push('\n');
    out.push_str(&csv_block(&["key", "feature", "value"], summary)?);
    Ok(out)
}

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 36.0;
const STRIP_H: f64 = 10.0;
const BINS: usize = 24;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// One panel per feature with its centered curve, a zero line and a strip
/// of bars shaded by the normalized density of the reference values.
pub fn explanation_svg(e: &Explanation) -> String {
    let m = e.curves.len();
    let cols = m.clamp(1, 3);
    let rows = m.div_ceil(cols).max(1);
    let (width, height) = (cols as f64 * PANEL_W, rows as f64 * PANEL_H + 24.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="8" y="16" font-size="13">{} {} explanation (lambda={}, mu={})</text>"#,
        e.variant, e.mode, e.lambda, e.mu
    );

    // shared y scale so panels are comparable
    let y_lo = e
        .curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.1))
        .fold(0.0, f64::min);
    let y_hi = e
        .curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.1))
        .fold(0.0, f64::max);
    let (y_lo, y_hi) = span(y_lo, y_hi);

    for (k, curve) in e.curves.iter().enumerate() {
        let ox = (k % cols) as f64 * PANEL_W;
        let oy = 24.0 + (k / cols) as f64 * PANEL_H;
        let (left, right) = (ox + MARGIN, ox + PANEL_W - 10.0);
        let (top, bottom) = (oy + 18.0, oy + PANEL_H - MARGIN);
        let reference = &e.reference[k];
        let x_lo = curve
            .points
            .first()
            .map_or(0.0, |p| p.0)
            .min(reference.first().copied().unwrap_or(0.0));
        let x_hi = curve
            .points
            .last()
            .map_or(0.0, |p| p.0)
            .max(reference.last().copied().unwrap_or(0.0));
        let (x_lo, x_hi) = span(x_lo, x_hi);
        let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * (right - left);
        let py = |y: f64| {
            bottom - STRIP_H - 4.0 - (y - y_lo) / (y_hi - y_lo) * (bottom - STRIP_H - 4.0 - top)
        };

        let _ = writeln!(s, r#"<g>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            left,
            oy + 12.0,
            escape(&e.feature_names[k])
        );
        let _ = writeln!(
            s,
            r##"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
            right - left,
            bottom - top
        );
        let _ = writeln!(
            s,
            r##"<line x1="{left:.2}" y1="{y0:.2}" x2="{right:.2}" y2="{y0:.2}" stroke="#ccc" stroke-dasharray="3,3"/>"##,
            y0 = py(0.0)
        );

        let mut counts = [0usize; BINS];
        for &v in reference {
            let b = (((v - x_lo) / (x_hi - x_lo)) * BINS as f64) as usize;
            counts[b.min(BINS - 1)] += 1;
        }
        let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bin_w = (right - left) / BINS as f64;
        for (b, &c) in counts.iter().enumerate() {
            if c > 0 {
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{:.2}" width="{bin_w:.2}" height="{STRIP_H}" fill="#3b6ea5" fill-opacity="{:.3}"/>"##,
                    left + b as f64 * bin_w,
                    bottom - STRIP_H,
                    c as f64 / peak
                );
            }
        }

        if e.feature_kinds[k] == FeatureKind::Indicator || curve.points.len() < 2 {
            for &(x, y) in &curve.points {
                let _ = writeln!(
                    s,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="#c0392b"/>"##,
                    px(x),
                    py(y)
                );
            }
        } else {
            let path: Vec<String> = curve
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="1.5"/>"##,
                path.join(" ")
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{left:.2}" y="{:.2}">{}</text><text x="{right:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            bottom + 14.0,
            fmt_tick(x_lo),
            bottom + 14.0,
            fmt_tick(x_hi)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 3.0,
            top + 8.0,
            fmt_tick(y_hi),
            left - 3.0,
            bottom - STRIP_H - 4.0,
            fmt_tick(y_lo)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.2}")
}
