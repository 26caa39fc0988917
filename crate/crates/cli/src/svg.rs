//! Scatter panels as hand-written SVG: one marker plus a vertical error bar
//! per effect, one panel per input table. SVG keeps the output testable by
//! XML parsing alone.

/// One panel of effects: (estimate, interval low, interval high) per row.
pub struct Panel {
    pub title: String,
    pub points: Vec<(f64, f64, f64)>,
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 360.0;
const MARGIN: f64 = 45.0;

pub fn render(panels: &[Panel]) -> String {
    let width = MARGIN + panels.len() as f64 * (PANEL_W + MARGIN);
    let height = PANEL_H + 2.0 * MARGIN;

    // shared y-scale across panels so shrinkage is visible at a glance
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in panels {
        for &(est, l, h) in &p.points {
            lo = lo.min(l).min(est);
            hi = hi.max(h).max(est);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let y_of = move |v: f64| MARGIN + (hi - v) / (hi - lo) * PANEL_H;

    let mut out = String::new();
    out.push_str(&format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    out.push_str(
        "<style>.pt{fill:#1f3b73;}.err{stroke:#1f3b73;stroke-width:1;}\
         .axis{stroke:#444;stroke-width:1;}.zero{stroke:#999;stroke-dasharray:4 3;}\
         text{font-family:sans-serif;font-size:13px;}</style>\n",
    );

    for (pi, panel) in panels.iter().enumerate() {
        let x0 = MARGIN + pi as f64 * (PANEL_W + MARGIN);
        let n = panel.points.len().max(1) as f64;
        let x_of = |i: usize| x0 + (i as f64 + 0.5) / n * PANEL_W;

        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            x0,
            MARGIN - 12.0,
            xml_escape(&panel.title)
        ));
        // y axis and zero line
        out.push_str(&format!(
            "<line class=\"axis\" x1=\"{x0}\" y1=\"{}\" x2=\"{x0}\" y2=\"{}\"/>\n",
            MARGIN,
            MARGIN + PANEL_H
        ));
        let y0 = y_of(0.0);
        if (MARGIN..=MARGIN + PANEL_H).contains(&y0) {
            out.push_str(&format!(
                "<line class=\"zero\" x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\"/>\n",
                x0 + PANEL_W
            ));
        }
        for (i, &(est, l, h)) in panel.points.iter().enumerate() {
            let x = x_of(i);
            out.push_str(&format!(
                "<line class=\"err\" x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\"/>\n",
                y_of(l),
                y_of(h)
            ));
            out.push_str(&format!(
                "<circle class=\"pt\" cx=\"{x}\" cy=\"{}\" r=\"2.5\"/>\n",
                y_of(est)
            ));
        }
        // y-axis extremes
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3}</text>\n",
            x0 - 4.0,
            MARGIN + 5.0,
            hi
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3}</text>\n",
            x0 - 4.0,
            MARGIN + PANEL_H,
            lo
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
