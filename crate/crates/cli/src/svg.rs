//! Small hand-written SVG charts. Every chart is built from numbers parsed
//! back out of a CSV file that is written alongside it.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps data coordinates into the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let (x0, x1) = padded_range(xs, 0.0);
        let (y0, y1) = padded_range(ys, 0.05);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn padded_range(v: impl Iterator<Item = f64>, pad: f64) -> (f64, f64) {
    let (lo, hi) =
        v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let p = (hi - lo) * pad;
    (lo - p, hi + p)
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        esc(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, x_ticks: bool) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let y = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let py = f.py(y);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{py:.1}" x2="{l}" y2="{py:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            l - 4.0,
            l - 6.0,
            py + 4.0,
            tick(y)
        );
        if x_ticks {
            let x = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
            let px = f.px(x);
            let _ = writeln!(
                out,
                r#"<line x1="{px:.1}" y1="{b}" x2="{px:.1}" y2="{}" stroke="black"/><text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
                b + 4.0,
                b + 17.0,
                tick(x)
            );
        }
    }
    let _ =
        writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 12.0, esc(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        esc(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 10.0,
            color(i),
            x + 18.0,
            y,
            esc(name)
        );
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Polylines over shared axes. With `log_xy` both coordinates are plotted
/// as natural logarithms and non-positive values are dropped.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], log_xy: bool) -> String {
    let tf = |(x, y): (f64, f64)| {
        if log_xy {
            (x > 0.0 && y > 0.0).then(|| (x.ln(), y.ln()))
        } else {
            (x.is_finite() && y.is_finite()).then_some((x, y))
        }
    };
    let pts: Vec<Vec<(f64, f64)>> = series.iter().map(|s| s.points.iter().copied().filter_map(tf).collect()).collect();
    let all = pts.iter().flatten();
    let f = Frame::new(all.clone().map(|p| p.0), all.map(|p| p.1));
    let mut out = String::new();
    header(&mut out, title);
    let (xl, yl) =
        if log_xy { (format!("ln {xlabel}"), format!("ln {ylabel}")) } else { (xlabel.into(), ylabel.into()) };
    axes(&mut out, &f, &xl, &yl, true);
    for (i, p) in pts.iter().enumerate() {
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            coords.join(" "),
            color(i)
        );
        for &(x, y) in p {
            let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}"/>"#, f.px(x), f.py(y), color(i));
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Grouped vertical bars: one group per category, one bar per series.
pub fn bar_chart(title: &str, ylabel: &str, categories: &[String], series: &[Series]) -> String {
    let values = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (lo, hi) = padded_range(values.clone().chain(std::iter::once(0.0)), 0.05);
    let lo = if values.clone().all(|v| v >= 0.0) { 0.0 } else { lo };
    let f = Frame { x0: 0.0, x1: categories.len().max(1) as f64, y0: lo, y1: hi };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "", ylabel, false);
    let slot = (W - LEFT - RIGHT) / categories.len().max(1) as f64;
    let bar = slot * 0.8 / series.len().max(1) as f64;
    for (c, name) in categories.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + slot * (c as f64 + 0.5),
            H - BOTTOM + 17.0,
            esc(name)
        );
    }
    for (i, s) in series.iter().enumerate() {
        for &(c, v) in &s.points {
            if !v.is_finite() {
                continue;
            }
            let x = LEFT + slot * (c + 0.1) + bar * i as f64;
            let (ya, yb) = (f.py(v.max(f.y0)), f.py(0.0_f64.max(f.y0)));
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{:.1}" width="{bar:.1}" height="{:.1}" fill="{}"/>"#,
                ya.min(yb),
                (yb - ya).abs(),
                color(i)
            );
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Labeled 2-D points with straight decision boundaries `w1 x + w2 y + b = 0`.
pub fn boundary_chart(title: &str, points: &[(f64, f64, bool)], lines: &[(String, [f64; 3])]) -> String {
    let f = Frame::new(points.iter().map(|p| p.0), points.iter().map(|p| p.1));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "x1", "x2", true);
    for &(x, y, pos) in points {
        let fill = if pos { "#9ecae1" } else { "#fcae91" };
        let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="1.8" fill="{fill}"/>"#, f.px(x), f.py(y));
    }
    let _ = writeln!(
        out,
        r#"<clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for (i, (_, [w1, w2, b])) in lines.iter().enumerate() {
        let seg = if w2.abs() > w1.abs() {
            let y = |x: f64| -(w1 * x + b) / w2;
            Some(((f.x0, y(f.x0)), (f.x1, y(f.x1))))
        } else if *w1 != 0.0 {
            let x = |y: f64| -(w2 * y + b) / w1;
            Some(((x(f.y0), f.y0), (x(f.y1), f.y1)))
        } else {
            None
        };
        if let Some(((xa, ya), (xb, yb))) = seg {
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2" clip-path="url(#plot)"/>"#,
                f.px(xa),
                f.py(ya),
                f.px(xb),
                f.py(yb),
                color(i)
            );
        }
    }
    let names: Vec<&str> = lines.iter().map(|l| l.0.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_closed_documents() {
        let s = vec![Series { name: "a<b".into(), points: vec![(1.0, 2.0), (2.0, 1.0)] }];
        for doc in [
            line_chart("t", "x", "y", &s, false),
            line_chart("t", "x", "y", &s, true),
            bar_chart("t", "y", &["c".to_string(), "d".to_string()], &s),
            boundary_chart("t", &[(0.0, 0.0, true), (1.0, 1.0, false)], &[("m".into(), [1.0, -1.0, 0.0])]),
        ] {
            assert!(doc.starts_with("<svg"));
            assert!(doc.trim_end().ends_with("</svg>"));
            assert!(doc.contains("a&lt;b") || doc.contains(">m<"));
        }
    }

    #[test]
    fn degenerate_ranges_are_widened() {
        assert_eq!(padded_range([3.0, 3.0].into_iter(), 0.1), (2.5, 3.5));
        assert_eq!(padded_range(std::iter::empty(), 0.1), (0.0, 1.0));
    }
}
