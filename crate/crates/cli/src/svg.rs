//! Minimal self-contained SVG line charts: enough to eyeball trajectories,
//! force curves and percentile bands without external tooling.

use std::io::Write as _;
use std::path::Path;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

/// cycling line palette
pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

const W: f64 = 860.0;
const H: f64 = 480.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 50.0;
/// per-series cap; longer series are strided down
const MAX_POINTS: usize = 1500;

pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> std::io::Result<()> {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !xmin.is_finite() || !ymin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if xmax - xmin < 1e-300 {
        xmax = xmin + 1.0;
    }
    // pad the value axis so curves do not hug the frame
    let pad = (ymax - ymin).max(1e-12) * 0.05;
    ymin -= pad;
    ymax += pad;

    let px = |x: f64| ML + (x - xmin) / (xmax - xmin) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB);

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    )?;
    writeln!(f, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>")?;
    writeln!(
        f,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        W / 2.0,
        esc(title)
    )?;

    // frame and ticks
    writeln!(
        f,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        W - ML - MR,
        H - MT - MB
    )?;
    for k in 0..=5 {
        let x = xmin + (xmax - xmin) * k as f64 / 5.0;
        let y = ymin + (ymax - ymin) * k as f64 / 5.0;
        let (sx, sy) = (px(x), py(y));
        writeln!(f, "<line x1=\"{sx:.1}\" y1=\"{}\" x2=\"{sx:.1}\" y2=\"{}\" stroke=\"#444\"/>", H - MB, H - MB + 4.0)?;
        writeln!(
            f,
            "<text x=\"{sx:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            H - MB + 17.0,
            tick(x)
        )?;
        writeln!(f, "<line x1=\"{}\" y1=\"{sy:.1}\" x2=\"{ML}\" y2=\"{sy:.1}\" stroke=\"#444\"/>", ML - 4.0)?;
        writeln!(
            f,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            ML - 7.0,
            sy + 4.0,
            tick(y)
        )?;
    }
    writeln!(
        f,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        (ML + W - MR) / 2.0,
        H - 12.0,
        esc(x_label)
    )?;
    writeln!(
        f,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        esc(y_label)
    )?;

    for s in series {
        let stride = (s.points.len() / MAX_POINTS).max(1);
        let mut d = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            if i % stride != 0 && i + 1 != s.points.len() {
                continue;
            }
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            d.push_str(&format!("{:.2},{:.2} ", px(x), py(y)));
        }
        writeln!(
            f,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"/>",
            d.trim_end(),
            s.color
        )?;
    }

    // legend, top-right inside the frame
    for (i, s) in series.iter().enumerate() {
        let y = MT + 16.0 + 16.0 * i as f64;
        writeln!(
            f,
            "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"{}\" stroke-width=\"2\"/>",
            W - MR - 150.0,
            W - MR - 125.0,
            s.color
        )?;
        writeln!(
            f,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            W - MR - 118.0,
            y + 4.0,
            esc(&s.label)
        )?;
    }
    writeln!(f, "</svg>")?;
    f.flush()
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
