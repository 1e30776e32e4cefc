//! Static SVG line charts.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot `log10(y)`; non-positive values are dropped.
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), log_y: false, series: Vec::new() }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn visible(&self, s: &Series) -> Vec<(f64, f64)> {
        s.points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
            .map(|&(x, y)| (x, if self.log_y { y.log10() } else { y }))
            .collect()
    }

    pub fn to_svg(&self) -> String {
        let data: Vec<Vec<(f64, f64)>> = self.series.iter().map(|s| self.visible(s)).collect();
        let all = data.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 <= 0.0 {
            let pad = y0.abs().max(1.0) * 0.05;
            (y0, y1) = (y0 - pad, y1 + pad);
        }
        let (l, r, t, b) = MARGIN;
        let (pw, ph) = (WIDTH - l - r, HEIGHT - t - b);
        let sx = |x: f64| l + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| t + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let _ = writeln!(out, r#"<rect x="{l}" y="{t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for v in ticks(x0, x1) {
            let x = sx(v);
            let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#ddd"/>"##, t, t + ph);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{v:.3}</text>"#, t + ph + 16.0);
        }
        for v in ticks(y0, y1) {
            let y = sy(v);
            let label = if self.log_y { format!("1e{v:.1}") } else { format!("{v:.3e}") };
            let _ = writeln!(out, r##"<line x1="{l}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, l + pw);
            let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, l - 4.0, y + 4.0);
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            l + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let y_label = if self.log_y { format!("log10 {}", self.y_label) } else { self.y_label.clone() };
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            t + ph / 2.0,
            t + ph / 2.0,
            escape(&y_label)
        );
        for (i, (s, pts)) in self.series.iter().zip(&data).enumerate() {
            let color = COLORS[i % COLORS.len()];
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            if !pts.is_empty() {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    path.join(" ")
                );
            }
            let ly = t + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#,
                l + pw - 120.0,
                l + pw - 100.0
            );
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, l + pw - 95.0, ly + 4.0, escape(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_series() {
        let svg = Chart::new("t", "x", "y")
            .with(Series::new("a", vec![(0.0, 1.0), (1.0, 2.0)]))
            .with(Series::new("b<c", vec![(0.0, 0.5), (1.0, f64::NAN), (2.0, 1.0)]).dashed())
            .to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn log_scale_drops_non_positive_values() {
        let chart = Chart::new("t", "x", "y").log_y().with(Series::new("a", vec![(0.0, 0.0), (1.0, 100.0), (2.0, 1.0)]));
        assert_eq!(chart.visible(&chart.series[0]), vec![(1.0, 2.0), (2.0, 0.0)]);
        assert!(!chart.to_svg().contains("NaN"));
    }

    #[test]
    fn empty_chart_still_renders() {
        let svg = Chart::new("t", "x", "y").with(Series::new("a", vec![])).to_svg();
        assert_eq!(svg.matches("<polyline").count(), 0);
    }
}
