//! Static SVG plots written directly (bar and line primitives only).

use std::fmt::Write as _;
use std::io;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        esc(title)
    );
    s
}

fn axes(s: &mut String, y_label: &str, x_label: &str) {
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>",
        H - MARGIN_B
    );
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - MARGIN_B,
        W - MARGIN_R,
        H - MARGIN_B
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">{}</text>",
        (MARGIN_T + H - MARGIN_B) / 2.0,
        (MARGIN_T + H - MARGIN_B) / 2.0,
        esc(y_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        (MARGIN_L + W - MARGIN_R) / 2.0,
        H - 12.0,
        esc(x_label)
    );
}

/// Success-rate bar chart with one labeled bar per entry; values in [0, 1].
pub fn bar_chart(path: &Path, title: &str, labels: &[String], values: &[f64]) -> io::Result<()> {
    assert_eq!(labels.len(), values.len());
    let mut s = header(title);
    axes(&mut s, "success rate", "mode");
    let plot_w = W - MARGIN_L - MARGIN_R;
    let plot_h = H - MARGIN_T - MARGIN_B;
    let n = labels.len().max(1) as f64;
    let slot = plot_w / n;
    let bar_w = slot * 0.6;
    // y gridlines at 0, 0.25 .. 1.0
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = H - MARGIN_B - v * plot_h;
        let _ = writeln!(
            s,
            "<line x1=\"{MARGIN_L}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>",
            W - MARGIN_R
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v:.2}</text>",
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    for (i, (label, &v)) in labels.iter().zip(values.iter()).enumerate() {
        let x = MARGIN_L + i as f64 * slot + (slot - bar_w) / 2.0;
        let clamped = v.clamp(0.0, 1.0);
        let bh = clamped * plot_h;
        let y = H - MARGIN_B - bh;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{bh:.1}\" fill=\"#4878cf\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            x + bar_w / 2.0,
            H - MARGIN_B + 16.0,
            esc(label)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{v:.3}</text>",
            x + bar_w / 2.0,
            y - 4.0
        );
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)
}

/// Line chart over (x, y) points (sorted by x before drawing).
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64, String)],
) -> io::Result<()> {
    let mut s = header(title);
    axes(&mut s, y_label, x_label);
    if points.is_empty() {
        s.push_str("</svg>\n");
        return std::fs::write(path, s);
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let plot_w = W - MARGIN_L - MARGIN_R;
    let plot_h = H - MARGIN_T - MARGIN_B;
    let (x_min, x_max) = (
        pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let span = (x_max - x_min).max(1e-12);
    let sx = |x: f64| MARGIN_L + (x - x_min) / span * plot_w;
    let sy = |y: f64| H - MARGIN_B - y.clamp(0.0, 1.0) * plot_h;
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(
            s,
            "<line x1=\"{MARGIN_L}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>",
            W - MARGIN_R
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{v:.2}</text>",
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    let poly: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1)))
        .collect();
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#c44e52\" stroke-width=\"2\"/>",
        poly.join(" ")
    );
    for (x, y, label) in &pts {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"#c44e52\"/>",
            sx(*x),
            sy(*y)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            sx(*x),
            sy(*y) - 8.0,
            esc(label)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{:.2e}</text>",
            sx(*x),
            H - MARGIN_B + 16.0,
            x
        );
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny well-formedness check: every opened tag closes in order.
    pub(crate) fn assert_well_formed(svg: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = svg;
        while let Some(start) = rest.find('<') {
            let end = rest[start..].find('>').expect("unclosed angle bracket") + start;
            let tag = &rest[start + 1..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with('!') || tag.ends_with('/') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().expect("closing tag without opener");
                assert_eq!(open, name, "mismatched tags");
            } else {
                let name = tag.split_whitespace().next().unwrap().to_string();
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn bar_chart_is_well_formed_and_carries_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bars.svg");
        bar_chart(
            &path,
            "ablation",
            &["random".into(), "full".into()],
            &[0.25, 0.875],
        )
        .unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_well_formed(&svg);
        assert!(svg.contains("0.875"));
        assert!(svg.contains("random"));
    }

    #[test]
    fn line_chart_is_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("line.svg");
        line_chart(
            &path,
            "sweep",
            "inference FLOPs",
            "success rate",
            &[
                (1e9, 0.4, "K=300".into()),
                (4e9, 0.8, "K=50".into()),
                (2e9, 0.6, "K=150".into()),
            ],
        )
        .unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_well_formed(&svg);
        assert!(svg.contains("K=150"));
    }
}
