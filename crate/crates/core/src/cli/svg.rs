//! Minimal self-contained SVG line plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// A vertical marker line with a label.
pub struct Marker {
    pub label: String,
    pub x: f64,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = 0.5 * (1.0 + lo.abs());
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Plot {
    pub fn render(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = bounds(pts().map(|p| p.0).chain(self.markers.iter().map(|m| m.x)));
        let (y0, y1) = bounds(pts().map(|p| p.1));
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * MARGIN,
            H - 2.0 * MARGIN
        );
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let xv = x0 + t * (x1 - x0);
            let yv = y0 + t * (y1 - y0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#, sx(xv), H - MARGIN + 16.0, xv);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#, MARGIN - 4.0, sy(yv) + 4.0, yv);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (i, m) in self.markers.iter().enumerate() {
            let x = sx(m.x);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.1}" y1="{MARGIN}" x2="{x:.1}" y2="{}" stroke="#777" stroke-dasharray="4 3"/>"##,
                H - MARGIN
            );
            let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}" fill="#444">{}</text>"##, x + 3.0, MARGIN + 14.0 + 14.0 * i as f64, escape(&m.label));
        }
        for (i, ser) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let finite: Vec<&(f64, f64)> = ser.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
            if finite.len() == 1 {
                let p = finite[0];
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(p.0), sy(p.1));
            } else if !finite.is_empty() {
                let path: Vec<String> = finite.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" fill="{color}" text-anchor="end">{}</text>"#,
                W - MARGIN - 6.0,
                MARGIN + 16.0 + 14.0 * i as f64,
                escape(&ser.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_markers() {
        let p = Plot {
            title: "P(d) <test>".into(),
            x_label: "d".into(),
            y_label: "P".into(),
            series: vec![Series { name: "tree".into(), points: vec![(0.0, 1.0), (1.0, 0.0)] }],
            markers: vec![Marker { label: "d0".into(), x: 1.0 }],
        };
        let s = p.render();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("polyline") && s.contains("&lt;test&gt;") && s.contains("d0"));
        assert!(!s.contains("href"));
    }
}
