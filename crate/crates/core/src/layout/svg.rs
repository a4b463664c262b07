use super::{display_label, LayoutResult};
use std::fmt::Write as _;

#[derive(Clone, Debug)]
pub struct SvgOptions {
    pub margin: f64,
    pub stroke_width: f64,
    pub stroke_opacity: f64,
    /// Applied on top of node and stroke opacity for deemphasized items.
    pub deemphasized_opacity: f64,
    /// Per-node emphasis, in layout node order. `None` emphasizes all.
    pub node_emphasis: Option<Vec<bool>>,
    /// Per-generation emphasis, in path order.
    pub path_emphasis: Option<Vec<bool>>,
    pub labels: bool,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            margin: 20.0,
            stroke_width: 1.2,
            stroke_opacity: 0.55,
            deemphasized_opacity: 0.25,
            node_emphasis: None,
            path_emphasis: None,
            labels: true,
        }
    }
}

/// Standalone SVG document. Numbers are written with two decimals so the
/// output is byte-stable for a given layout.
pub fn render_svg(layout: &LayoutResult, opts: &SvgOptions) -> String {
    let [x0, y0, x1, y1] = layout.bounds().unwrap_or([0.0, 0.0, 0.0, 0.0]);
    let (ox, oy) = (x0 - opts.margin, y0 - opts.margin);
    let (w, h) = (x1 - x0 + 2.0 * opts.margin, y1 - y0 + 2.0 * opts.margin);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{ox:.2} {oy:.2} {w:.2} {h:.2}" width="{w:.2}" height="{h:.2}">"#
    );
    let emphasized =
        |flags: &Option<Vec<bool>>, i: usize| flags.as_ref().map_or(true, |f| f.get(i).copied().unwrap_or(true));
    out.push_str("<g fill=\"none\" stroke-linecap=\"round\" stroke-linejoin=\"round\">\n");
    for (i, p) in layout.paths.iter().enumerate() {
        if p.points.is_empty() {
            continue;
        }
        let alpha = opts.stroke_opacity
            * if emphasized(&opts.path_emphasis, i) {
                1.0
            } else {
                opts.deemphasized_opacity
            };
        let mut d = String::new();
        for (k, [x, y]) in p.points.iter().enumerate() {
            let _ = write!(d, "{}{x:.2} {y:.2}", if k == 0 { "M" } else { " L" });
        }
        let _ = writeln!(
            out,
            r#"<path data-gen="{}" d="{d}" stroke="{}" stroke-width="{:.2}" stroke-opacity="{alpha:.2}"/>"#,
            escape(&p.generation),
            p.color.to_hex(),
            opts.stroke_width
        );
    }
    out.push_str("</g>\n<g>\n");
    for (i, n) in layout.nodes.iter().enumerate() {
        let alpha = n.opacity
            * if emphasized(&opts.node_emphasis, i) {
                1.0
            } else {
                opts.deemphasized_opacity
            };
        let _ = writeln!(
            out,
            r#"<ellipse data-node="{}" cx="{:.2}" cy="{:.2}" rx="{:.2}" ry="{:.2}" fill="{}" fill-opacity="{:.2}" stroke="{}" stroke-opacity="{:.2}"/>"#,
            n.node_id,
            n.x,
            n.y,
            n.rx,
            n.ry,
            n.color.lighten(0.75).to_hex(),
            alpha,
            n.color.to_hex(),
            alpha
        );
        if opts.labels {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="{:.2}" text-anchor="middle" dominant-baseline="central" font-family="sans-serif" fill-opacity="{alpha:.2}">{}</text>"#,
                n.x,
                n.y,
                12.0 * n.size_scale,
                escape(&display_label(&n.label))
            );
        }
    }
    out.push_str("</g>\n</svg>\n");
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if c.is_control() => out.push(' '),
            c => out.push(c),
        }
    }
    out
}
