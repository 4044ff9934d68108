//! A small SVG writer: axes, polylines, points and text. Coordinates are
//! printed with two decimals so output bytes are stable.

use std::fmt::Write as _;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Fixed colors for CN, MCI and AD.
pub const DIAGNOSIS_COLORS: [&str; 3] = ["#2ca02c", "#ff7f0e", "#d62728"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const TARGET_TICKS: f64 = 5.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A plot area mapping data coordinates onto the fixed canvas.
pub struct Plot {
    x_range: (f64, f64),
    y_range: (f64, f64),
    x_step: f64,
    y_step: f64,
    body: String,
    legend: Vec<(String, String)>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let (x_range, x_step) = nice_range(x_range);
        let (y_range, y_step) = nice_range(y_range);
        let mut p = Plot { x_range, y_range, x_step, y_step, body: String::new(), legend: Vec::new() };
        p.axes(title, x_label, y_label);
        p
    }

    fn px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_LEFT + (x - lo) / (hi - lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN_BOTTOM - (y - lo) / (hi - lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn axes(&mut self, title: &str, x_label: &str, y_label: &str) {
        let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
        let b = &mut self.body;
        writeln!(
            b,
            r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000"/>"##,
            x1 - x0,
            y0 - y1
        )
        .unwrap();
        for xv in ticks(self.x_range, self.x_step) {
            let xp = self.px(xv);
            let b = &mut self.body;
            writeln!(b, r##"<line x1="{xp:.2}" y1="{y0:.2}" x2="{xp:.2}" y2="{:.2}" stroke="#000"/>"##, y0 + 5.0).unwrap();
            writeln!(b, r#"<text x="{xp:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#, y0 + 18.0, tick(xv))
                .unwrap();
        }
        for yv in ticks(self.y_range, self.y_step) {
            let yp = self.py(yv);
            let b = &mut self.body;
            writeln!(b, r##"<line x1="{:.2}" y1="{yp:.2}" x2="{x0:.2}" y2="{yp:.2}" stroke="#000"/>"##, x0 - 5.0).unwrap();
            writeln!(b, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, x0 - 8.0, yp + 4.0, tick(yv))
                .unwrap();
        }
        let b = &mut self.body;
        writeln!(b, r#"<text x="{:.2}" y="24" font-size="15" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title))
            .unwrap();
        writeln!(
            b,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        )
        .unwrap();
        writeln!(
            b,
            r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        )
        .unwrap();
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: &str, dashed: bool) {
        let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        writeln!(self.body, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#, pts.join(" "))
            .unwrap();
    }

    pub fn point(&mut self, x: f64, y: f64, color: &str) {
        writeln!(self.body, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.8"/>"#, self.px(x), self.py(y))
            .unwrap();
    }

    /// Horizontal line across the plot area with a label at its right end.
    pub fn hline(&mut self, y: f64, color: &str, label: &str) {
        let (x0, x1) = self.x_range;
        self.polyline(&[(x0, y), (x1, y)], color, true);
        writeln!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end" fill="{color}">{}</text>"#,
            self.px(x1) - 4.0,
            self.py(y) - 4.0,
            escape(label)
        )
        .unwrap();
    }

    /// Filled bar from `(x0, 0)` to `(x1, h)`.
    pub fn bar(&mut self, x0: f64, x1: f64, h: f64, color: &str) {
        let (l, r) = (self.px(x0), self.px(x1));
        let (top, base) = (self.py(h), self.py(self.y_range.0.max(0.0)));
        writeln!(
            self.body,
            r#"<rect x="{l:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45" stroke="{color}"/>"#,
            r - l,
            base - top
        )
        .unwrap();
    }

    pub fn legend_entry(&mut self, label: &str, color: &str) {
        self.legend.push((label.to_string(), color.to_string()));
    }

    pub fn finish(mut self) -> String {
        let x = WIDTH - MARGIN_RIGHT - 190.0;
        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = MARGIN_TOP + 16.0 + 16.0 * i as f64;
            writeln!(self.body, r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, y - 10.0).unwrap();
            writeln!(self.body, r#"<text x="{:.2}" y="{y:.2}" font-size="11">{}</text>"#, x + 18.0, escape(label)).unwrap();
        }
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n{}</svg>\n",
            self.body
        )
    }
}

/// Widen `(lo, hi)` to multiples of the 1, 2 or 5 × 10^k step closest to a
/// fifth of the span.
fn nice_range((lo, hi): (f64, f64)) -> ((f64, f64), f64) {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let raw = (hi - lo) / TARGET_TICKS;
    let mag = 10f64.powi(raw.log10().floor() as i32);
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .min_by(|a, b| (a / raw).ln().abs().total_cmp(&(b / raw).ln().abs()))
        .unwrap();
    let snap = |v: f64, f: fn(f64) -> f64| {
        let q = v / step;
        // absorb rounding noise so exact multiples stay put
        if (q - q.round()).abs() < 1e-9 {
            q.round() * step
        } else {
            f(q) * step
        }
    };
    ((snap(lo, f64::floor), snap(hi, f64::ceil)), step)
}

fn ticks((lo, hi): (f64, f64), step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}
