//! Minimal fixed-size SVG line and scatter plots.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
    pub color: &'static str,
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return ((0.0, 1.0), (0.0, 1.0));
    }
    let pad = |lo: f64, hi: f64| {
        let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    (pad(x0, x1), pad(y0, y1))
}

/// Renders the series into an SVG document.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let ((x0, x1), (y0, y1)) = bounds(series);
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=TICKS {
        let fx = x0 + (x1 - x0) * k as f64 / TICKS as f64;
        let fy = y0 + (y1 - y0) * k as f64 / TICKS as f64;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{b:.2}" x2="{px:.2}" y2="{b2:.2}" stroke="black"/><text x="{px:.2}" y="{t:.2}" text-anchor="middle">{}</text>"#,
            tick_label(fx),
            b = MARGIN_TOP + ph,
            b2 = MARGIN_TOP + ph + 5.0,
            t = MARGIN_TOP + ph + 18.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{l:.2}" y1="{py:.2}" x2="{l2:.2}" y2="{py:.2}" stroke="black"/><text x="{t:.2}" y="{py:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            tick_label(fy),
            l = MARGIN_LEFT - 5.0,
            l2 = MARGIN_LEFT,
            t = MARGIN_LEFT - 8.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"#,
        escape(y_label),
        y = MARGIN_TOP + ph / 2.0
    );

    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| (sx(x), sy(y)))
            .collect();
        match ser.style {
            Style::Line => {
                let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                    path.join(" "),
                    ser.color
                );
            }
            Style::Markers => {
                for (x, y) in pts {
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}"/>"#, ser.color);
                }
            }
        }
        let ly = MARGIN_TOP + 16.0 + 16.0 * k as f64;
        let lx = MARGIN_LEFT + 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            ly - 9.0,
            ser.color,
            lx + 16.0,
            ly,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series() {
        let svg = svg_plot(
            "t <1>",
            "x",
            "y",
            &[
                Series { label: "a".into(), points: vec![(0.0, 0.0), (1.0, 1.0)], style: Style::Line, color: "blue" },
                Series { label: "b".into(), points: vec![(0.5, f64::NAN), (0.5, 0.2)], style: Style::Markers, color: "red" },
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("t &lt;1&gt;"));
    }

    #[test]
    fn empty_plot_is_valid() {
        assert!(svg_plot("", "", "", &[]).ends_with("</svg>\n"));
    }
}
