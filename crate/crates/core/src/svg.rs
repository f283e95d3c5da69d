//! Minimal SVG scatter plots of 2-D features, one colour per class.

use std::fmt::Write as _;

use crate::error::{DdrError, Result};
use crate::matrix::Matrix;

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Renders `points` (n x 2) coloured by `labels`.
pub fn scatter_svg(points: &Matrix, labels: &[usize], title: &str) -> Result<String> {
    if points.cols() != 2 {
        return Err(DdrError::dim(format!("scatter needs 2 columns, got {}", points.cols())));
    }
    if points.rows() != labels.len() {
        return Err(DdrError::dim("one label per point required"));
    }
    if points.rows() == 0 {
        return Err(DdrError::InsufficientSamples { needed: 1, got: 0 });
    }
    let bounds = |col: usize| {
        let (lo, hi) = points
            .row_iter()
            .map(|r| r[col])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let pad = ((hi - lo) * 0.05).max(1e-6);
        (lo - pad, hi + pad)
    };
    let (x0, x1) = bounds(0);
    let (y0, y1) = bounds(1);
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            bottom + 4.0,
            bottom + 16.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 4.0,
            left - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    for &c in &classes {
        let colour = PALETTE[c % PALETTE.len()];
        let _ = writeln!(s, r#"<g class="class-{c}" fill="{colour}" fill-opacity="0.7">"#);
        for (row, _) in points.row_iter().zip(labels).filter(|(_, &l)| l == c) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, sx(row[0]), sy(row[1]));
        }
        s.push_str("</g>\n");
    }
    for (k, &c) in classes.iter().enumerate() {
        let y = top + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{y}" r="4" fill="{}"/><text x="{}" y="{}">class {c}</text>"#,
            right - 60.0,
            PALETTE[c % PALETTE.len()],
            right - 52.0,
            y + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_group_per_class() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]]).unwrap();
        let svg = scatter_svg(&pts, &[0, 1, 1], "a < b").unwrap();
        assert_eq!(svg.matches("<circle cx").count(), 5);
        assert!(svg.contains(PALETTE[0]) && svg.contains(PALETTE[1]));
        assert!(svg.contains("class-0") && svg.contains("class-1"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(scatter_svg(&Matrix::zeros(2, 3), &[0, 0], "").is_err());
        assert!(scatter_svg(&Matrix::zeros(2, 2), &[0], "").is_err());
    }

    #[test]
    fn ticks_are_round() {
        let t: Vec<String> = nice_ticks(0.0, 1.0).into_iter().map(fmt_tick).collect();
        assert_eq!(t, vec!["0", "0.2", "0.4", "0.6", "0.8", "1"]);
        assert_eq!(nice_ticks(-3.0, 3.0).len(), 7);
    }
}
