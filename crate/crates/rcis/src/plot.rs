//! Static SVG figures. Every function is a pure function of its inputs, so identical traces give
//! identical bytes.

use std::fmt::Write;

use nalgebra::SymmetricEigen;

use crate::planner::{FullPath, PLANE};
use crate::{Error, Result};

const W: f64 = 720.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 40.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Columns of a trace CSV, by header name.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(csv: &str) -> Result<Self> {
        let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> =
            lines.next().ok_or_else(|| Error::Config("empty trace".into()))?.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, l) in lines.enumerate() {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(Error::Config(format!("trace row {} has {} fields, header has {}", k + 1, row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    /// Numeric column; unparsable cells become NaN.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("trace has no column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[j].parse::<f64>().unwrap_or(f64::NAN)).collect())
    }
}

/// Tick step of the form `{1, 2, 5}·10^k` giving at most about 6 ticks.
fn nice_step(span: f64) -> f64 {
    let raw = (span / 6.0).max(1e-12);
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn open(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = write!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
             <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
             <text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            W / 2.0,
            escape(title)
        );
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(out, "<rect x=\"{x0}\" y=\"{y0}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#333\"/>", x1 - x0, y1 - y0);
        let sx = nice_step(self.x.1 - self.x.0);
        let mut v = (self.x.0 / sx).ceil() * sx;
        while v <= self.x.1 + 1e-9 {
            let p = self.px(v);
            let _ = writeln!(out, "<line x1=\"{p:.2}\" y1=\"{y0}\" x2=\"{p:.2}\" y2=\"{y1}\" stroke=\"#ddd\"/>");
            let _ = writeln!(out, "<text x=\"{p:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", y1 + 14.0, tick(v, sx));
            v += sx;
        }
        let sy = nice_step(self.y.1 - self.y.0);
        let mut v = (self.y.0 / sy).ceil() * sy;
        while v <= self.y.1 + 1e-9 {
            let p = self.py(v);
            let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{p:.2}\" x2=\"{x1}\" y2=\"{p:.2}\" stroke=\"#ddd\"/>");
            let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", x0 - 4.0, p + 4.0, tick(v, sy));
            v += sy;
        }
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, H - 8.0, escape(xlabel));
        let _ = writeln!(
            out,
            "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
    }

    /// Polyline broken at non-finite samples.
    fn polyline(&self, out: &mut String, xs: &[f64], ys: &[f64], color: &str, dashed: bool) {
        let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
        let mut pts = String::new();
        let flush = |pts: &mut String, out: &mut String| {
            if !pts.is_empty() {
                let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.4\"{dash}/>", pts.trim_end());
                pts.clear();
            }
        };
        for (x, y) in xs.iter().zip(ys) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", self.px(*x), self.py(*y));
            } else {
                flush(&mut pts, out);
            }
        }
        flush(&mut pts, out);
    }
}

fn tick(v: f64, step: f64) -> String {
    let digits = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    let s = format!("{:.*}", digits, v);
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Time-series figure with a legend.
pub fn series_svg(title: &str, ylabel: &str, t: &[f64], series: &[(&str, &[f64])]) -> String {
    let frame = Frame { x: range(t.iter().copied()), y: range(series.iter().flat_map(|(_, v)| v.iter().copied())) };
    let mut out = String::new();
    frame.open(&mut out, title, "t [s]", ylabel);
    for (k, (name, v)) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        frame.polyline(&mut out, t, v, c, k > 0);
        let y = TOP + 14.0 + 14.0 * k as f64;
        let _ = writeln!(out, "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{c}\" stroke-width=\"2\"/>", W - RIGHT - 90.0, y - 4.0, W - RIGHT - 70.0, y - 4.0);
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{y:.1}\">{}</text>", W - RIGHT - 64.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

/// The four standard figures of a run, as `(file name, svg)`.
pub fn trace_figures(csv: &str) -> Result<Vec<(String, String)>> {
    let tb = Table::parse(csv)?;
    let t = tb.column("t")?;
    let x5 = tb.column("x5")?;
    let x6 = tb.column("x6")?;
    let u1 = tb.column("u1")?;
    let u2 = tb.column("u2")?;
    let nan_neg = |v: Vec<f64>| v.into_iter().map(|x| if x < 0.0 { f64::NAN } else { x }).collect::<Vec<_>>();
    let s = nan_neg(tb.column("s")?);
    let i = nan_neg(tb.column("i")?);
    Ok(vec![
        ("x5.svg".into(), series_svg("Lateral position", "x5 [m]", &t, &[("x5", &x5)])),
        ("x6.svg".into(), series_svg("Relative distance", "x6 [m]", &t, &[("x6", &x6)])),
        ("u.svg".into(), series_svg("Inputs", "u", &t, &[("u1 [rad]", &u1), ("u2 [m/s2]", &u2)])),
        ("i.svg".into(), series_svg("Path index", "index", &t, &[("i", &i), ("s", &s)])),
    ])
}

/// Boundary points of the planar projection of an ellipsoid with center `c` and shape `p`.
fn ellipse_points(c: [f64; 2], p: [[f64; 2]; 2], n: usize) -> Vec<(f64, f64)> {
    let m = nalgebra::Matrix2::new(p[0][0], p[0][1], p[1][0], p[1][1]);
    let eig = SymmetricEigen::new(m);
    let (v, l) = (eig.eigenvectors, eig.eigenvalues);
    (0..=n)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / n as f64;
            let (a, b) = (l[0].max(0.0).sqrt() * th.cos(), l[1].max(0.0).sqrt() * th.sin());
            (c[0] + v[(0, 0)] * a + v[(0, 1)] * b, c[1] + v[(1, 0)] * a + v[(1, 1)] * b)
        })
        .collect()
}

/// `(x₆, x₅)` view of every family's outer ellipsoid, the obstacle boxes, and a trajectory.
pub fn plane_svg(fp: &FullPath, trajectory: &[(f64, f64)], lateral: f64) -> String {
    let mut outlines = Vec::new();
    for f in fp.traversal() {
        let e = f.outer();
        let (a, b) = (PLANE[0], PLANE[1]);
        let p = e.shape();
        let c = e.center();
        outlines.push(ellipse_points([c[b], c[a]], [[p[(b, b)], p[(b, a)]], [p[(a, b)], p[(a, a)]]], 48));
    }
    let xs = outlines.iter().flatten().map(|q| q.0).chain(trajectory.iter().map(|q| q.1));
    let ys = outlines.iter().flatten().map(|q| q.1).chain(trajectory.iter().map(|q| q.0)).chain([-lateral, lateral]);
    let frame = Frame { x: range(xs), y: range(ys) };
    let mut out = String::new();
    frame.open(&mut out, "Ellipsoid families and trajectory", "x6 [m]", "x5 [m]");
    for ob in &fp.obstacles {
        let (x0, x1) = (frame.px(ob.x_rel - ob.delta_x()), frame.px(ob.x_rel + ob.delta_x()));
        let (y0, y1) = (frame.py(ob.y + ob.delta_y()), frame.py(ob.y - ob.delta_y()));
        let _ = writeln!(out, "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#f0c\" fill-opacity=\"0.3\" stroke=\"#a08\"/>", x1 - x0, y1 - y0);
    }
    for bound in [-lateral, lateral] {
        let y = frame.py(bound);
        let _ = writeln!(out, "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.1}\" y2=\"{y:.2}\" stroke=\"#1f77b4\" stroke-dasharray=\"6 4\"/>", W - RIGHT);
    }
    for pts in &outlines {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        frame.polyline(&mut out, &x, &y, "#d62728", false);
    }
    let (ty, tx): (Vec<f64>, Vec<f64>) = trajectory.iter().copied().unzip();
    frame.polyline(&mut out, &tx, &ty, "#2ca02c", false);
    out.push_str("</svg>\n");
    out
}
