//! Minimal risk/return scatter.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::FrontierRow;

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { (hi - lo) * 0.05 } else { lo.abs().max(1e-6) * 0.05 };
    (lo - pad, hi + pad)
}

/// Daily stdev against annual expected return, one colour per solver.
pub fn frontier_svg(rows: &[FrontierRow]) -> String {
    let (x0, x1) = bounds(rows.iter().map(|r| r.stdev));
    let (y0, y1) = bounds(rows.iter().map(|r| r.expected_return));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut colours = BTreeMap::new();
    for r in rows {
        let next = PALETTE[colours.len() % PALETTE.len()];
        colours.entry(r.solver.as_str()).or_insert(next);
    }

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{xv:.4}</text>"#,
            px(xv),
            TOP + ph + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{yv:.3}</text>"#,
            LEFT - 6.0,
            py(yv) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">daily standard deviation</text>"#,
        LEFT + pw / 2.0,
        H - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.2})">expected annual return</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for r in rows {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.7"><title>{} {}</title></circle>"#,
            px(r.stdev),
            py(r.expected_return),
            colours[r.solver.as_str()],
            r.solver,
            r.mask
        );
    }
    for (i, (name, colour)) in colours.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 16.0;
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{colour}"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11">{name}</text>"#, x + 10.0, y + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_renders() {
        let row = FrontierRow {
            mask: "101".into(),
            size: 2,
            expected_return: 0.2,
            stdev: 0.01,
            sharpe: 19.0,
            cqr: 0.5,
            cqns: -0.008,
            solver: "genetic".into(),
        };
        let svg = frontier_svg(&[row]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(!svg.contains("NaN"));
    }
}
