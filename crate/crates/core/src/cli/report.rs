//! CSV, JSON and SVG writers.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One CSV cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
}

/// Rounds to 12 significant digits.
pub fn fmt_csv(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        "NaN".to_string()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Conformance("csv row does not match its header".into()));
        }
        w.write_record(row.iter().map(|c| match c {
            Cell::Num(x) => fmt_csv(*x),
            Cell::Int(n) => n.to_string(),
        }))
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes every float with 17 significant digits; non-finite values become `null`.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(format!("json encoding failed: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// A named polyline.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot; with `loglog` only positive coordinates are drawn.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], loglog: bool) -> String {
    let map = |v: f64| if loglog { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| x.is_finite() && y.is_finite() && (!loglog || (x > 0.0 && y > 0.0));
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().copied().filter(keep).map(|(x, y)| (map(x), map(y))).collect())
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = all.fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let scale = if loglog { " (log10)" } else { "" };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}{scale}: {:.4} .. {:.4}</text>\n\
         <text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{}{scale}: {:.4} .. {:.4}</text>\n",
        W / 2.0,
        escape(title),
        W - 2.0 * PAD,
        H - 2.0 * PAD,
        W / 2.0,
        H - 14.0,
        escape(xlabel),
        x0,
        x1,
        H / 2.0,
        H / 2.0,
        escape(ylabel),
        y0,
        y1
    );
    for (k, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        out += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            coords.join(" "),
            W - PAD + 4.0 - 120.0,
            PAD + 14.0 * (k as f64 + 1.0),
            escape(&s.name)
        );
    }
    out + "</svg>\n"
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_digits() {
        assert_eq!(fmt_csv(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(fmt_csv(f64::NAN), "NaN");
        let s = fmt_csv(std::f64::consts::PI);
        assert_eq!(s.split('e').next().unwrap().replace('.', "").len(), 12);
    }

    #[test]
    fn json_digits_round_trip() {
        let v = vec![0.1, 1.0 / 3.0, -2.5e-300];
        let text = to_json(&v).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(to_json(&f64::NAN).unwrap().trim(), "null");
    }

    #[test]
    fn svg_is_well_formed() {
        let s = svg_plot(
            "t",
            "x",
            "y",
            &[Series {
                name: "a<b".into(),
                points: vec![(0.1, 1.0), (0.01, 0.1), (-1.0, 2.0)],
            }],
            true,
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        assert_eq!(s.matches("<polyline").count(), 1);
        let empty = svg_plot("t", "x", "y", &[], false);
        assert!(empty.contains("</svg>"));
    }
}
