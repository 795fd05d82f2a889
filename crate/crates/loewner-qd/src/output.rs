//! CSV and SVG emission for the command-line surface.
//!
//! CSV cells use the shortest decimal that round-trips the value, so a rerun
//! of the same job is byte-identical. Exponent cells stay exact rationals.
//! The trailing `stop_reason` column is empty on every row except the last,
//! which carries why the run ended — a partial result is visible in the file
//! itself, not only in the exit code. SVG output is a fixed two-panel
//! figure (the slit, and driving value against capacity-time) with
//! fixed-precision coordinates for the same reason.

use std::fmt::Write as _;

use loewner_qd::chordal::TraceResult;
use loewner_qd::multislit::MultiResult;
use loewner_qd::oracle::OracleSample;
use loewner_qd::qdiff::ratio_string;
use loewner_qd::radial::RadialResult;

fn push_f64(line: &mut String, v: f64) {
    write!(line, ",{v}").expect("writing to a String cannot fail");
}

fn push_marks(line: &mut String, marks: &[(num_complex::Complex64, num_rational::Ratio<i64>)], width: usize) {
    for m in marks {
        push_f64(line, m.0.re);
        push_f64(line, m.0.im);
        line.push(',');
        line.push_str(&ratio_string(m.1));
    }
    for _ in marks.len()..width {
        line.push_str(",,,");
    }
}

fn mark_headers(header: &mut String, width: usize) {
    for i in 1..=width {
        write!(header, ",mark{i}_re,mark{i}_im,mark{i}_exp").expect("infallible");
    }
}

fn reason_cell(line: &mut String, last: bool, reason: &str) {
    line.push(',');
    if last {
        line.push_str(reason);
    }
}

pub fn trace_csv(result: &TraceResult) -> String {
    let width = result.samples.iter().map(|s| s.marks.len()).max().unwrap_or(0);
    let mut out = String::from("t,xi,gamma_re,gamma_im,arclength,residual");
    mark_headers(&mut out, width);
    out.push_str(",stop_reason\n");
    let n = result.samples.len();
    for (k, s) in result.samples.iter().enumerate() {
        let mut line = format!("{}", s.t);
        push_f64(&mut line, s.xi);
        push_f64(&mut line, s.tip.re);
        push_f64(&mut line, s.tip.im);
        push_f64(&mut line, s.arclength);
        push_f64(&mut line, s.residual);
        push_marks(&mut line, &s.marks, width);
        reason_cell(&mut line, k + 1 == n, result.stop_reason.as_str());
        line.push('\n');
        out.push_str(&line);
    }
    out
}

pub fn multi_csv(result: &MultiResult) -> String {
    let slits = result.samples.first().map(|s| s.xis.len()).unwrap_or(0);
    let width = result.samples.iter().map(|s| s.marks.len()).max().unwrap_or(0);
    let mut out = String::from("t");
    for i in 1..=slits {
        write!(out, ",xi{i}").expect("infallible");
    }
    out.push_str(",residual");
    mark_headers(&mut out, width);
    out.push_str(",stop_reason\n");
    let n = result.samples.len();
    for (k, s) in result.samples.iter().enumerate() {
        let mut line = format!("{}", s.t);
        for xi in &s.xis {
            push_f64(&mut line, *xi);
        }
        push_f64(&mut line, s.residual);
        push_marks(&mut line, &s.marks, width);
        reason_cell(&mut line, k + 1 == n, result.stop_reason.as_str());
        line.push('\n');
        out.push_str(&line);
    }
    out
}

pub fn radial_csv(result: &RadialResult) -> String {
    let width = result.samples.iter().map(|s| s.marks.len()).max().unwrap_or(0);
    let mut out = String::from("t,xi,tip_re,tip_im,residual,modulus_defect");
    mark_headers(&mut out, width);
    out.push_str(",stop_reason\n");
    let n = result.samples.len();
    for (k, s) in result.samples.iter().enumerate() {
        let mut line = format!("{}", s.t);
        push_f64(&mut line, s.xi);
        push_f64(&mut line, s.tip.re);
        push_f64(&mut line, s.tip.im);
        push_f64(&mut line, s.residual);
        push_f64(&mut line, s.modulus_defect);
        push_marks(&mut line, &s.marks, width);
        reason_cell(&mut line, k + 1 == n, result.stop_reason.as_str());
        line.push('\n');
        out.push_str(&line);
    }
    out
}

/// Shared by both welding oracles; the path is consumed whole, so the final
/// row reports `length_reached`.
pub fn oracle_csv(samples: &[OracleSample]) -> String {
    let mut out = String::from("t,xi,gamma_re,gamma_im,arclength,residual,stop_reason\n");
    let n = samples.len();
    for (k, s) in samples.iter().enumerate() {
        let mut line = format!("{}", s.t);
        push_f64(&mut line, s.xi);
        push_f64(&mut line, s.gamma.re);
        push_f64(&mut line, s.gamma.im);
        push_f64(&mut line, s.arclength);
        push_f64(&mut line, s.residual);
        reason_cell(&mut line, k + 1 == n, "length_reached");
        line.push('\n');
        out.push_str(&line);
    }
    out
}

// --- SVG -----------------------------------------------------------------

const SVG_W: f64 = 960.0;
const SVG_H: f64 = 420.0;

struct Panel {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Panel {
    /// Map data points into the panel, y up, with a 5% margin. With
    /// `keep_aspect` the two axes share one scale.
    fn project(&self, pts: &[(f64, f64)], keep_aspect: bool) -> Vec<(f64, f64)> {
        let (mut lo_x, mut hi_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            lo_x = lo_x.min(x);
            hi_x = hi_x.max(x);
            lo_y = lo_y.min(y);
            hi_y = hi_y.max(y);
        }
        let pad = |lo: f64, hi: f64| {
            let span = (hi - lo).max(1e-12);
            (lo - 0.05 * span, hi + 0.05 * span)
        };
        let (lo_x, hi_x) = pad(lo_x, hi_x);
        let (lo_y, hi_y) = pad(lo_y, hi_y);
        let mut sx = (self.x1 - self.x0) / (hi_x - lo_x);
        let mut sy = (self.y1 - self.y0) / (hi_y - lo_y);
        if keep_aspect {
            let s = sx.min(sy);
            sx = s;
            sy = s;
        }
        let cx = 0.5 * (self.x0 + self.x1) - sx * 0.5 * (lo_x + hi_x);
        let cy = 0.5 * (self.y0 + self.y1) + sy * 0.5 * (lo_y + hi_y);
        pts.iter().map(|&(x, y)| (cx + sx * x, cy - sy * y)).collect()
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], stroke: &str) {
    out.push_str("  <polyline fill=\"none\" stroke=\"");
    out.push_str(stroke);
    out.push_str("\" stroke-width=\"1.5\" points=\"");
    for (k, (x, y)) in pts.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        write!(out, "{x:.3},{y:.3}").expect("infallible");
    }
    out.push_str("\"/>\n");
}

fn frame(out: &mut String, p: &Panel) {
    write!(
        out,
        "  <rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" \
         fill=\"none\" stroke=\"#888\"/>\n",
        p.x0,
        p.y0,
        p.x1 - p.x0,
        p.y1 - p.y0
    )
    .expect("infallible");
}

/// Two panels: the traced slit over the real line, and the driving function
/// against capacity-time.
pub fn trace_svg(result: &TraceResult) -> String {
    let slit: Vec<(f64, f64)> = result.samples.iter().map(|s| (s.tip.re, s.tip.im)).collect();
    let driving: Vec<(f64, f64)> = result.samples.iter().map(|s| (s.t, s.xi)).collect();
    let left = Panel {
        x0: 40.0,
        y0: 20.0,
        x1: 460.0,
        y1: 390.0,
    };
    let right = Panel {
        x0: 540.0,
        y0: 20.0,
        x1: 940.0,
        y1: 390.0,
    };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">\n  <rect width=\"{SVG_W}\" height=\"{SVG_H}\" \
         fill=\"white\"/>\n"
    );
    frame(&mut out, &left);
    frame(&mut out, &right);
    if !slit.is_empty() {
        // anchor the left panel on the real line: include the axis endpoints
        // in the scaling pass so the slit sits in context
        let lo = slit.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = slit.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(0.2);
        let axis = [(lo - 0.3 * span, 0.0), (hi + 0.3 * span, 0.0)];
        let mut all: Vec<(f64, f64)> = axis.to_vec();
        all.extend(&slit);
        let mapped = left.project(&all, true);
        polyline(&mut out, &mapped[..2], "#888");
        polyline(&mut out, &mapped[2..], "#c22");
    }
    if driving.len() >= 2 {
        let mapped = right.project(&driving, false);
        polyline(&mut out, &mapped, "#228");
    }
    out.push_str("</svg>\n");
    out
}
