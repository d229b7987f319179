//! Small SVG writer for bifurcation diagrams and phase portraits.

use std::fmt::Write;

use crate::hopf::HopfScanResult;
use crate::lincheck::Classification;

const W: f64 = 640.0;
const H: f64 = 520.0;
const MARGIN: f64 = 60.0;

pub struct Canvas {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Round tick positions covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn tick_labels(ts: &[f64]) -> Vec<String> {
    let step = if ts.len() > 1 { ts[1] - ts[0] } else { 1.0 };
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    ts.iter().map(|v| format!("{v:.decimals$}")).collect()
}

impl Canvas {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |r: (f64, f64)| if r.1 > r.0 { r } else { (r.0 - 0.5, r.0 + 0.5) };
        Self {
            body: String::new(),
            x: pad(x),
            y: pad(y),
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    pub fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }

    pub fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, fill: &str) {
        let (a, b) = (self.px(x0.min(x1)), self.py(y0.max(y1)));
        let (w, h) = (
            (self.px(x1) - self.px(x0)).abs(),
            (self.py(y0) - self.py(y1)).abs(),
        );
        let _ = writeln!(
            self.body,
            r#"<rect x="{a:.2}" y="{b:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            coords.join(" ")
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{fill}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    pub fn label(&mut self, x: f64, y: f64, text: &str, anchor: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="12" text-anchor="{anchor}">{}</text>"#,
            esc(text)
        );
    }

    fn axes(&mut self, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
        let _ = writeln!(
            self.body,
            r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        let tx = ticks(self.x.0, self.x.1, 6);
        for (v, text) in tx.iter().zip(tick_labels(&tx)) {
            let x = self.px(*v);
            let _ = writeln!(
                self.body,
                r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{}" stroke="black"/>"#,
                b + 5.0
            );
            self.label(x, b + 18.0, &text, "middle");
        }
        let ty = ticks(self.y.0, self.y.1, 6);
        for (v, text) in ty.iter().zip(tick_labels(&ty)) {
            let y = self.py(*v);
            let _ = writeln!(
                self.body,
                r#"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="black"/>"#,
                l - 5.0
            );
            self.label(l - 8.0, y + 4.0, &text, "end");
        }
        self.label((l + r) / 2.0, H - 15.0, xlabel, "middle");
        let _ = writeln!(
            self.body,
            r#"<text x="18" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            esc(ylabel)
        );
    }

    pub fn finish(mut self, xlabel: &str, ylabel: &str, title: &str) -> String {
        self.axes(xlabel, ylabel);
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        out.push_str(&self.body);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="30" font-size="14" text-anchor="middle">{}</text>"#,
            W / 2.0,
            esc(title)
        );
        out.push_str("</svg>\n");
        out
    }
}

fn class_fill(c: Option<Classification>) -> &'static str {
    match c {
        Some(Classification::Stable) => "#cfe3f5",
        Some(Classification::Unstable) => "#f7d4cc",
        Some(Classification::HopfBoundary) => "#f0c36d",
        Some(Classification::Degenerate) => "#b0b0b0",
        None => "#eeeeee",
    }
}

/// Stability regions, the refined boundary coloured by the sign of `L1`, and
/// degenerate points.
pub fn bifurcation_diagram(res: &HopfScanResult, title: &str) -> String {
    let g = &res.grid;
    let mut c = Canvas::new((g.p1.lo, g.p1.hi), (g.p2.lo, g.p2.hi));
    let d1 = (g.p1.hi - g.p1.lo) / (g.n1 - 1).max(1) as f64;
    let d2 = (g.p2.hi - g.p2.lo) / (g.n2 - 1).max(1) as f64;
    for p in &res.points {
        let x0 = (p.p1 - d1 / 2.0).max(g.p1.lo);
        let x1 = (p.p1 + d1 / 2.0).min(g.p1.hi);
        let y0 = (p.p2 - d2 / 2.0).max(g.p2.lo);
        let y1 = (p.p2 + d2 / 2.0).min(g.p2.hi);
        c.rect(x0, y0, x1, y1, class_fill(p.class));
    }
    for b in &res.boundary_points {
        let fill = match b.l1 {
            Some(l) if l < 0.0 => "#1f5fbf",
            Some(l) if l > 0.0 => "#c0392b",
            _ => "#555555",
        };
        c.circle(b.p1, b.p2, 1.6, fill);
    }
    for d in &res.degenerate_points {
        c.circle(d.p1, d.p2, 5.0, "black");
    }
    c.finish(&g.p1.name, &g.p2.name, title)
}

/// Projections of several orbits onto a coordinate pair.
pub fn phase_portrait(
    series: &[(&str, Vec<(f64, f64)>)],
    xlabel: &str,
    ylabel: &str,
    title: &str,
) -> String {
    let all = series.iter().flat_map(|(_, s)| s.iter());
    let (mut x, mut y) = (
        (f64::INFINITY, f64::NEG_INFINITY),
        (f64::INFINITY, f64::NEG_INFINITY),
    );
    for (a, b) in all {
        x = (x.0.min(*a), x.1.max(*a));
        y = (y.0.min(*b), y.1.max(*b));
    }
    if !x.0.is_finite() {
        x = (0.0, 1.0);
        y = (0.0, 1.0);
    }
    let mut c = Canvas::new(x, y);
    let colours = ["#1f5fbf", "#c0392b", "#27ae60", "#8e44ad", "#d35400"];
    for (i, (name, s)) in series.iter().enumerate() {
        let col = colours[i % colours.len()];
        c.polyline(s, col, 1.2);
        c.label(
            W - MARGIN - 5.0,
            MARGIN + 16.0 * (i + 1) as f64,
            name,
            "end",
        );
    }
    c.finish(xlabel, ylabel, title)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_positions() {
        assert_eq!(
            tick_labels(&ticks(0.0, 1.0, 5)),
            ["0.0", "0.2", "0.4", "0.6", "0.8", "1.0"]
        );
        assert_eq!(ticks(4.0, 12.0, 4), vec![4.0, 6.0, 8.0, 10.0, 12.0]);
    }

    #[test]
    fn portrait_is_wellformed() {
        let s = phase_portrait(&[("a<b", vec![(0.0, 0.0), (1.0, 2.0)])], "x", "y", "t");
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b") && s.contains("<polyline"));
    }
}
