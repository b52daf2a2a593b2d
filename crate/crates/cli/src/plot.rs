use std::fmt::Write as _;

use reachkit::{ControlSet, ControlSystem};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 30.0;
const QUIVER: usize = 12;

pub fn default_control(sys: &ControlSystem) -> Vec<f64> {
    match sys.controls() {
        ControlSet::Box(b) => b.center(),
        ControlSet::List(items) => items.first().cloned().unwrap_or_default(),
    }
}

struct Frame {
    lo: [f64; 2],
    span: f64,
}

impl Frame {
    fn fit(states: &[Vec<f64>]) -> Frame {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for s in states {
            for i in 0..2 {
                lo[i] = lo[i].min(s[i]);
                hi[i] = hi[i].max(s[i]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let span = if span > 1e-12 { 1.2 * span } else { 2.0 };
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        Frame { lo: [center[0] - 0.5 * span, center[1] - 0.5 * span], span }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let scale = (SIZE - 2.0 * MARGIN) / self.span;
        (MARGIN + (x - self.lo[0]) * scale, SIZE - MARGIN - (y - self.lo[1]) * scale)
    }
}

/// Polyline of the first two coordinates, optionally over a normalized
/// quiver of `F(·, u)`.
pub fn svg(states: &[Vec<f64>], field: Option<(&ControlSystem, &[f64])>) -> String {
    let frame = Frame::fit(states);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let (ox, oy) = frame.px(0.0, 0.0);
    if (MARGIN..=SIZE - MARGIN).contains(&ox) {
        let _ = writeln!(out, r##"<line x1="{ox:.2}" y1="{MARGIN}" x2="{ox:.2}" y2="{:.2}" stroke="#bbb"/>"##, SIZE - MARGIN);
    }
    if (MARGIN..=SIZE - MARGIN).contains(&oy) {
        let _ = writeln!(out, r##"<line x1="{MARGIN}" y1="{oy:.2}" x2="{:.2}" y2="{oy:.2}" stroke="#bbb"/>"##, SIZE - MARGIN);
    }
    if let Some((sys, u)) = field {
        let cell = frame.span / QUIVER as f64;
        out.push_str("<g stroke=\"#7a9cc6\" stroke-width=\"1\">\n");
        for i in 0..QUIVER {
            for j in 0..QUIVER {
                let x = [frame.lo[0] + (i as f64 + 0.5) * cell, frame.lo[1] + (j as f64 + 0.5) * cell];
                let Ok(v) = sys.eval(&x, u) else { continue };
                let norm = v[0].hypot(v[1]);
                if !(norm > 1e-12) {
                    continue;
                }
                let k = 0.4 * cell / norm;
                let (x1, y1) = frame.px(x[0] - k * v[0], x[1] - k * v[1]);
                let (x2, y2) = frame.px(x[0] + k * v[0], x[1] + k * v[1]);
                let _ = writeln!(out, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
                let _ = writeln!(out, r##"<circle cx="{x2:.2}" cy="{y2:.2}" r="1.5" fill="#7a9cc6"/>"##);
            }
        }
        out.push_str("</g>\n");
    }
    let points: Vec<String> = states
        .iter()
        .map(|s| {
            let (x, y) = frame.px(s[0], s[1]);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(out, r##"<polyline fill="none" stroke="#c03030" stroke-width="2" points="{}"/>"##, points.join(" "));
    let (sx, sy) = frame.px(states[0][0], states[0][1]);
    let _ = writeln!(out, r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="3" fill="black"/>"#);
    out.push_str("</svg>\n");
    out
}
