//! Minimal SVG charts: horizontal bars and a colored scatter.

use std::fmt::Write as _;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

// colorblind-safe categorical palette
const PALETTE: [&str; 8] = ["#0072B2", "#E69F00", "#009E73", "#CC79A7", "#D55E00", "#56B4E9", "#F0E442", "#000000"];

fn open(w: u32, h: u32, title: &str, provenance: &str, timestamp: Option<u64>) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    s.push_str("<metadata>");
    let _ = write!(s, "<provenance>{}</provenance>", escape(provenance));
    if let Some(t) = timestamp {
        let _ = write!(s, "<generated unix=\"{t}\"/>");
    }
    s.push_str("</metadata>\n");
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>", w / 2, escape(title));
    s
}

/// Horizontal bar chart, bars in the given order (top to bottom).
pub fn bar_chart(title: &str, bars: &[(String, f64)], x_label: &str, provenance: &str, timestamp: Option<u64>) -> String {
    let (left, top, bar_h, gap, plot_w) = (170.0, 44.0, 20.0, 6.0, 420.0);
    let h = (top + bars.len() as f64 * (bar_h + gap) + 50.0) as u32;
    let w = (left + plot_w + 80.0) as u32;
    let mut s = open(w, h, title, provenance, timestamp);
    let max = bars.iter().map(|b| b.1).fold(0.0f64, f64::max);
    let scale = if max > 0.0 { plot_w / max } else { 0.0 };
    for (i, (name, v)) in bars.iter().enumerate() {
        let y = top + i as f64 * (bar_h + gap);
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"12\">{}</text>",
            left - 6.0,
            y + bar_h * 0.75,
            escape(name)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{left:.1}\" y=\"{y:.1}\" width=\"{:.2}\" height=\"{bar_h:.1}\" fill=\"{}\"/>",
            v * scale,
            PALETTE[0]
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{v:.4}</text>",
            left + v * scale + 4.0,
            y + bar_h * 0.75
        );
    }
    let axis_y = top + bars.len() as f64 * (bar_h + gap) + 4.0;
    let _ = writeln!(s, "<line x1=\"{left:.1}\" y1=\"{axis_y:.1}\" x2=\"{:.1}\" y2=\"{axis_y:.1}\" stroke=\"black\"/>", left + plot_w);
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
        left + plot_w / 2.0,
        axis_y + 24.0,
        escape(x_label)
    );
    s.push_str("</svg>\n");
    s
}

/// Scatter plot colored by integer group, with a legend.
pub fn scatter(title: &str, points: &[(f64, f64, usize)], group_label: &str, provenance: &str, timestamp: Option<u64>) -> String {
    let (size, pad) = (520.0, 40.0);
    let mut s = open((size + 120.0) as u32, (size + 20.0) as u32, title, provenance, timestamp);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, _) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12);
    let map = |v: f64, lo: f64| pad + (v - lo) / span * (size - 2.0 * pad);
    for &(x, y, g) in points {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{}\" fill-opacity=\"0.8\"/>",
            map(x, x0),
            size - map(y, y0) + 10.0,
            PALETTE[g % PALETTE.len()]
        );
    }
    let mut groups: Vec<usize> = points.iter().map(|p| p.2).collect();
    groups.sort_unstable();
    groups.dedup();
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"54\" font-size=\"12\">{}</text>", size + 10.0, escape(group_label));
    for (i, g) in groups.iter().enumerate() {
        let y = 70.0 + i as f64 * 18.0;
        let _ = writeln!(s, "<circle cx=\"{:.1}\" cy=\"{y:.1}\" r=\"5\" fill=\"{}\"/>", size + 16.0, PALETTE[g % PALETTE.len()]);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{g}</text>", size + 26.0, y + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
        let svg = bar_chart("t", &[("x<1".into(), 0.5)], "mean |φ|", "{\"a\": \"--\"}", None);
        assert!(svg.contains("x&lt;1") && !svg.contains("<generated"));
        assert!(scatter("t", &[(0.0, 0.0, 1)], "grade", "{}", Some(5)).contains("<generated unix=\"5\"/>"));
    }
}
