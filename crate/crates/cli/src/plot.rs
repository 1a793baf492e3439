//! Minimal SVG line charts with confidence bands.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    /// `(x, mean, low, high)`, ascending in `x`.
    pub points: Vec<(f64, f64, f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, _, lo, hi) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(lo);
            y1 = y1.max(hi);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if y1 - y0 < 1e-9 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let log_x = self.log_x && x0 > 0.0;
        let tx = |x: f64| if log_x { x.ln() } else { x };
        let (a, b) = (tx(x0), tx(x1));
        let (a, b) = if (b - a).abs() < 1e-12 { (a - 1.0, b + 1.0) } else { (a, b) };
        let px = |x: f64| LEFT + (tx(x) - a) / (b - a) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#).unwrap();
        writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
        writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (LEFT + W - RIGHT) / 2.0, escape(&self.title)).unwrap();
        // Axes.
        writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - BOTTOM, W - RIGHT, H - BOTTOM).unwrap();
        writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM).unwrap();
        for t in ticks(y0, y1) {
            let y = py(t);
            writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, W - RIGHT).unwrap();
            writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_num(t)).unwrap();
        }
        let mut xs: Vec<f64> = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
        xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
        xs.dedup();
        let xticks = if xs.len() <= 12 { xs } else { ticks(x0, x1) };
        for t in xticks {
            let x = px(t);
            writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, H - BOTTOM, H - BOTTOM + 5.0).unwrap();
            writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, H - BOTTOM + 18.0, fmt_num(t)).unwrap();
        }
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0, escape(&self.x_label)).unwrap();
        writeln!(s, r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#, (TOP + H - BOTTOM) / 2.0, (TOP + H - BOTTOM) / 2.0, escape(&self.y_label)).unwrap();

        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            if series.points.is_empty() {
                continue;
            }
            let mut band = String::new();
            for &(x, _, _, hi) in &series.points {
                write!(band, "{:.2},{:.2} ", px(x), py(hi)).unwrap();
            }
            for &(x, _, lo, _) in series.points.iter().rev() {
                write!(band, "{:.2},{:.2} ", px(x), py(lo)).unwrap();
            }
            writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, band.trim_end()).unwrap();
            let line: Vec<String> = series.points.iter().map(|&(x, m, _, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
            writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" ")).unwrap();
            for &(x, m, _, _) in &series.points {
                writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(m)).unwrap();
            }
            let ly = TOP + 10.0 + 20.0 * k as f64;
            writeln!(s, r#"<rect x="{}" y="{}" width="14" height="4" fill="{color}"/>"#, W - RIGHT + 12.0, ly - 4.0).unwrap();
            writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - RIGHT + 32.0, ly + 2.0, escape(&series.name)).unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(fmt_num(0.6000000000000001), "0.6");
    }

    #[test]
    fn renders_every_series() {
        let chart = Chart {
            title: "AUC <test>".into(),
            x_label: "train size".into(),
            y_label: "AUC".into(),
            log_x: true,
            series: vec![
                Series {
                    name: "a".into(),
                    points: vec![(100.0, 0.6, 0.55, 0.65), (200.0, 0.7, 0.68, 0.72)],
                },
                Series {
                    name: "b".into(),
                    points: vec![(100.0, 0.5, 0.5, 0.5)],
                },
            ],
        };
        let svg = chart.to_svg();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("AUC &lt;test&gt;"));
        assert_eq!(svg, chart.to_svg());
    }
}
