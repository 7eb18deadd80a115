//! Minimal standalone SVG charts.

use std::fmt::Write;

use super::{CandidateRecord, FamilyDivergence};

const W: f64 = 640.0;
const H: f64 = 440.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    out: String,
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Frame {
    fn new(title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut out = String::new();
        let _ = write!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<line x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
            W / 2.0,
            esc(title),
            H - MARGIN,
            W - MARGIN,
            H - MARGIN,
            H - MARGIN,
            W / 2.0,
            H - 16.0,
            esc(xlabel),
            H / 2.0,
            H / 2.0,
            esc(ylabel),
        );
        let mut f = Frame { x, y, out };
        f.ticks();
        f
    }

    fn ticks(&mut self) {
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = self.x.0 + t * (self.x.1 - self.x.0);
            let yv = self.y.0 + t * (self.y.1 - self.y.0);
            let (px, _) = self.map(xv, self.y.0);
            let (_, py) = self.map(self.x.0, yv);
            let _ = writeln!(
                self.out,
                r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="10">{xv:.3}</text>"#,
                H - MARGIN + 14.0
            );
            let _ = writeln!(
                self.out,
                r#"<text x="{:.1}" y="{py:.1}" text-anchor="end" font-size="10">{yv:.3}</text>"#,
                MARGIN - 4.0
            );
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let px = MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN);
        let py = H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN);
        (px, py)
    }

    fn dot(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let (px, py) = self.map(x, y);
        let _ = writeln!(
            self.out,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="{r}" fill="{color}" fill-opacity="0.55"/>"#
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = self.map(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
    }

    fn legend(&mut self, entries: &[(String, &str)]) {
        for (i, (name, color)) in entries.iter().enumerate() {
            let y = MARGIN + 16.0 * i as f64;
            let _ = writeln!(
                self.out,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                W - MARGIN - 120.0,
                y - 9.0,
                W - MARGIN - 105.0,
                y,
                esc(name)
            );
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Latency/accuracy scatter of one or more searches with their Pareto fronts.
pub fn pareto_svg(series: &[(String, Vec<CandidateRecord>, Vec<CandidateRecord>)]) -> String {
    let all = || series.iter().flat_map(|(_, r, _)| r.iter());
    let x = range(all().map(|r| r.latency_ms));
    let y = range(all().map(|r| r.accuracy));
    let mut f = Frame::new("Accuracy vs latency", "latency (ms)", "accuracy", x, y);
    let mut legend = Vec::new();
    for (i, (name, records, front)) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        for r in records {
            f.dot(r.latency_ms, r.accuracy, 2.0, c);
        }
        let line: Vec<(f64, f64)> = front.iter().map(|r| (r.latency_ms, r.accuracy)).collect();
        f.polyline(&line, c);
        legend.push((name.clone(), c));
    }
    f.legend(&legend);
    f.finish()
}

/// 2-D projection scatter; `group[i]` selects the colour of point `i`.
pub fn projection_svg(
    title: &str,
    points: &[[f64; 2]],
    group: &[usize],
    names: &[String],
    explained: [f64; 2],
) -> String {
    let x = range(points.iter().map(|p| p[0]));
    let y = range(points.iter().map(|p| p[1]));
    let mut f = Frame::new(
        title,
        &format!("PC1 ({:.1}%)", 100.0 * explained[0]),
        &format!("PC2 ({:.1}%)", 100.0 * explained[1]),
        x,
        y,
    );
    for (p, &g) in points.iter().zip(group) {
        f.dot(p[0], p[1], 2.5, PALETTE[g % PALETTE.len()]);
    }
    let legend: Vec<(String, &str)> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), PALETTE[i % PALETTE.len()]))
        .collect();
    f.legend(&legend);
    f.finish()
}

/// Bar chart of the `top` largest per-operator probability differences.
pub fn divergence_svg(div: &FamilyDivergence, top: usize) -> String {
    let rows = div.sorted();
    let rows = &rows[..top.min(rows.len())];
    let bar = 16.0;
    let height = 70.0 + bar * rows.len() as f64;
    let mid = W / 2.0 + 60.0;
    let half = W - mid - 20.0;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">Operator probability difference</text>
<line x1="{mid}" y1="36" x2="{mid}" y2="{}" stroke="black"/>
"#,
        W / 2.0,
        height - 10.0
    );
    for (i, (label, d)) in rows.iter().enumerate() {
        let y = 40.0 + bar * i as f64;
        let w = d.abs() * half;
        let (x, color) = if *d >= 0.0 {
            (mid, PALETTE[0])
        } else {
            (mid - w, PALETTE[1])
        };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{}" fill="{color}"/><text x="{}" y="{:.1}" text-anchor="end">{} ({d:+.3})</text>"#,
            bar - 3.0,
            mid - half - 4.0,
            y + bar - 5.0,
            esc(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
