//! Dependency-free SVG rendering of the `x(h)` curve figure: the curve per
//! admissible component, thick overlay where `x'(h) > 0`, the complement
//! projected onto the vertical axis, the dotted diagonal, and hollow dots at
//! isolated-atom boundary points.

use crate::measures::Measure;
use crate::support::{HCurvePoint, SupportReport};

const W: f64 = 760.0;
const H: f64 = 640.0;
const MARGIN: f64 = 60.0;

struct Frame {
    h_lo: f64,
    h_hi: f64,
    x_lo: f64,
    x_hi: f64,
}

impl Frame {
    fn px(&self, h: f64) -> f64 {
        MARGIN + (h - self.h_lo) / (self.h_hi - self.h_lo) * (W - 2.0 * MARGIN)
    }

    fn py(&self, x: f64) -> f64 {
        H - MARGIN - (x - self.x_lo) / (self.x_hi - self.x_lo) * (H - 2.0 * MARGIN)
    }

    fn contains(&self, h: f64, x: f64) -> bool {
        h >= self.h_lo && h <= self.h_hi && x >= self.x_lo && x <= self.x_hi
    }
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    if points.len() < 2 {
        return String::new();
    }
    let coords: Vec<String> = points
        .iter()
        .map(|&(px, py)| format!("{px:.2},{py:.2}"))
        .collect();
    format!("<polyline points=\"{}\" {style}/>\n", coords.join(" "))
}

pub fn support_figure(
    chunks: &[Vec<HCurvePoint>],
    report: &SupportReport,
    b: &Measure,
    window: (f64, f64),
) -> String {
    let frame = Frame {
        h_lo: window.0,
        h_hi: window.1,
        x_lo: window.0,
        x_hi: window.1,
    };
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Frame and zero axes.
    out.push_str(&format!(
        "<rect x=\"{M}\" y=\"{M}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n",
        M = MARGIN,
        w = W - 2.0 * MARGIN,
        h = H - 2.0 * MARGIN
    ));
    if frame.h_lo < 0.0 && frame.h_hi > 0.0 {
        let px = frame.px(0.0);
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{M}\" x2=\"{px:.2}\" y2=\"{}\" stroke=\"#ccc\" stroke-width=\"1\"/>\n",
            H - MARGIN,
            M = MARGIN
        ));
        let py = frame.py(0.0);
        out.push_str(&format!(
            "<line x1=\"{M}\" y1=\"{py:.2}\" x2=\"{}\" y2=\"{py:.2}\" stroke=\"#ccc\" stroke-width=\"1\"/>\n",
            W - MARGIN,
            M = MARGIN
        ));
    }
    // Dotted diagonal x = h.
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999\" stroke-width=\"1\" stroke-dasharray=\"3,5\"/>\n",
        frame.px(frame.h_lo),
        frame.py(frame.h_lo),
        frame.px(frame.h_hi),
        frame.py(frame.h_hi),
    ));

    // Curve chunks with thick overlay where the slope is positive.
    for chunk in chunks {
        let mut thin: Vec<(f64, f64)> = Vec::new();
        let mut thick: Vec<(f64, f64)> = Vec::new();
        for pt in chunk {
            let visible = frame.contains(pt.h, pt.x);
            if visible {
                thin.push((frame.px(pt.h), frame.py(pt.x)));
            } else if thin.len() > 1 {
                out.push_str(&polyline(&thin, "fill=\"none\" stroke=\"black\" stroke-width=\"1\""));
                thin.clear();
            } else {
                thin.clear();
            }
            if visible && pt.x1 > 0.0 {
                thick.push((frame.px(pt.h), frame.py(pt.x)));
            } else {
                if thick.len() > 1 {
                    out.push_str(&polyline(
                        &thick,
                        "fill=\"none\" stroke=\"#cc2222\" stroke-width=\"3.5\"",
                    ));
                }
                thick.clear();
            }
        }
        out.push_str(&polyline(&thin, "fill=\"none\" stroke=\"black\" stroke-width=\"1\""));
        out.push_str(&polyline(
            &thick,
            "fill=\"none\" stroke=\"#cc2222\" stroke-width=\"3.5\"",
        ));
    }

    // Complement projected on the vertical axis (red), support left implied.
    for &(lo, hi) in report.complement.intervals() {
        let lo = lo.max(frame.x_lo);
        let hi = hi.min(frame.x_hi);
        if hi <= lo {
            continue;
        }
        out.push_str(&format!(
            "<line x1=\"{M}\" y1=\"{:.2}\" x2=\"{M}\" y2=\"{:.2}\" stroke=\"#cc2222\" stroke-width=\"5\"/>\n",
            frame.py(lo),
            frame.py(hi),
            M = MARGIN
        ));
    }

    // Hollow dots at isolated-atom boundary points (x image touching the
    // atom location of B).
    for &(loc, _) in b.atoms() {
        let touches = report
            .h_intervals_increasing
            .iter()
            .any(|&(_, (xl, xh))| xl == loc || xh == loc);
        if touches && frame.contains(loc, loc) {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4.5\" fill=\"white\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
                frame.px(loc),
                frame.py(loc),
            ));
        }
    }

    // Axis labels.
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" fill=\"black\">h</text>\n",
        W - MARGIN + 12.0,
        H - MARGIN + 4.0
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" fill=\"black\">x(h)</text>\n",
        MARGIN - 40.0,
        MARGIN - 12.0
    ));
    out.push_str("</svg>\n");
    out
}
