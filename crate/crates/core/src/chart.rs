//! Grouped bar chart of one category's composition weights, as plain SVG.

use std::fmt::Write;

use crate::relation::RelationFinding;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const VW_COLOR: &str = "#4477aa";
const OW_COLOR: &str = "#ee6677";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Two bars per other category: the visible weight and the occluded weight.
pub fn relation_chart(title: &str, findings: &[RelationFinding], names: &[String]) -> String {
    let peak = findings.iter().flat_map(|f| [f.vw.abs(), f.ow.abs()]).fold(0.0f64, f64::max);
    let span = if peak > 0.0 { peak } else { 1.0 };
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let zero_y = MARGIN + plot_h / 2.0;
    let scale = (plot_h / 2.0) / span;
    let group_w = (WIDTH - 2.0 * MARGIN) / findings.len().max(1) as f64;
    let bar_w = group_w * 0.35;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{zero_y:.2}" x2="{:.2}" y2="{zero_y:.2}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:+.3}</text>"#, MARGIN - 4.0, MARGIN + 4.0, span);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">0</text>"#, MARGIN - 4.0, zero_y + 4.0);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:+.3}</text>"#, MARGIN - 4.0, HEIGHT - MARGIN + 4.0, -span);

    for (k, f) in findings.iter().enumerate() {
        let x0 = MARGIN + k as f64 * group_w + group_w * 0.15;
        for (j, (value, color, label)) in [(f.vw, VW_COLOR, "VW"), (f.ow, OW_COLOR, "OW")].into_iter().enumerate() {
            let h = value.abs() * scale;
            let y = if value >= 0.0 { zero_y - h } else { zero_y };
            let _ = writeln!(
                svg,
                r#"<rect class="bar" data-kind="{label}" data-other="{}" data-value="{value:.6}" x="{:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{color}"/>"#,
                f.other,
                x0 + j as f64 * bar_w
            );
        }
        let name = names.get(f.other).cloned().unwrap_or_else(|| f.other.to_string());
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x0 + bar_w,
            HEIGHT - MARGIN + 18.0,
            escape(&name)
        );
    }
    let ly = HEIGHT - 12.0;
    let _ = writeln!(svg, r#"<rect x="{MARGIN}" y="{:.2}" width="10" height="10" fill="{VW_COLOR}"/>"#, ly - 9.0);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">visible weight</text>"#, MARGIN + 14.0);
    let _ = writeln!(svg, r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{OW_COLOR}"/>"#, MARGIN + 120.0, ly - 9.0);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">occluded weight</text>"#, MARGIN + 134.0);
    svg.push_str("</svg>\n");
    svg
}
