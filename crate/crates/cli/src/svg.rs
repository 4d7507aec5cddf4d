//! Minimal self-contained SVG plots.

use std::fmt::Write;

use spikeid_core::IdReport;

use crate::report::WindowRow;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        let span = if self.hi > self.lo { self.hi - self.lo } else { 1.0 };
        self.from + (v - self.lo) / span * (self.to - self.from)
    }
}

/// Sample eigenvalues as circles and estimated population spikes as crosses,
/// on a log scale.
pub fn eigenvalue_scatter(report: &IdReport) -> String {
    let eigs = &report.sample_eigenvalues;
    let top = eigs
        .iter()
        .chain(&report.estimated_spikes)
        .fold(f64::MIN_POSITIVE, |m, &v| m.max(v));
    let bottom = eigs
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(top, f64::min)
        .max(top * 1e-12);
    let y = Axis {
        lo: bottom.log10().floor(),
        hi: top.log10().ceil().max(bottom.log10().floor() + 1.0),
        from: H - BOTTOM,
        to: TOP,
    };
    let x = Axis {
        lo: 0.0,
        hi: eigs.len() as f64 + 1.0,
        from: LEFT,
        to: W - RIGHT,
    };
    let ly = |v: f64| y.map(v.max(bottom).log10());

    let mut s = open(&format!("Sample spectrum, L = {}", report.l));
    for d in (y.lo as i32)..=(y.hi as i32) {
        let py = y.map(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            W - RIGHT,
            LEFT - 4.0,
            py + 4.0
        );
    }
    let dy = ly(report.thresholds.delta);
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{dy:.2}" x2="{:.2}" y2="{dy:.2}" stroke="#888888" stroke-dasharray="4 3"/>"##,
        W - RIGHT
    );
    for (i, &l) in eigs.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="none" stroke="{}"/>"##,
            x.map(i as f64 + 1.0),
            ly(l),
            COLORS[0]
        );
    }
    for (g, est) in report.groups.iter().zip(&report.estimated_spikes) {
        for i in g.clone() {
            let (cx, cy) = (x.map(i as f64 + 1.0), ly(*est));
            let _ = writeln!(
                s,
                r##"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{}" stroke-width="1.5"/>"##,
                cx - 4.0,
                cy - 4.0,
                cx + 4.0,
                cy + 4.0,
                cx - 4.0,
                cy + 4.0,
                cx + 4.0,
                cy - 4.0,
                COLORS[1]
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">rank</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r##"<text x="{}" y="{}" fill="{}">o sample eigenvalue</text><text x="{}" y="{}" fill="{}">x estimated spike</text>"##,
        LEFT + 8.0,
        TOP + 14.0,
        COLORS[0],
        LEFT + 8.0,
        TOP + 28.0,
        COLORS[1]
    );
    s.push_str("</svg>\n");
    s
}

/// Step plot of `L` against window start time, one line per series.
pub fn window_steps(series: &[(&str, &[WindowRow])]) -> String {
    let end = series
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|r| r.end_ms))
        .fold(0.0, f64::max);
    let max_l = series
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|r| r.l))
        .max()
        .unwrap_or(0);
    let x = Axis {
        lo: 0.0,
        hi: end,
        from: LEFT,
        to: W - RIGHT,
    };
    let y = Axis {
        lo: 0.0,
        hi: max_l as f64 + 1.0,
        from: H - BOTTOM,
        to: TOP,
    };
    let mut s = open("Source count per window");
    for l in 0..=max_l + 1 {
        let py = y.map(l as f64);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{l}</text>"#,
            LEFT - 4.0,
            py + 4.0
        );
    }
    for (k, (name, rows)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let next = rows.get(i + 1).map_or(r.end_ms, |n| n.start_ms);
            let py = y.map(r.l as f64) + 2.0 * k as f64;
            pts.push(format!("{:.2},{:.2}", x.map(r.start_ms), py));
            pts.push(format!("{:.2},{:.2}", x.map(next), py));
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            LEFT + 8.0,
            TOP + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">time (ms)</text>"#, W / 2.0, H - 12.0);
    s.push_str("</svg>\n");
    s
}
