//! Self-contained SVG emission for trade-off curves; plain text, no
//! plotting dependencies, byte-deterministic for fixed inputs.

/// One named series of (cost, error) points.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Renders series as polylines (a lone point becomes a marker) with labeled
/// axes and a legend.
pub fn render(series: &[Series], x_label: &str, y_label: &str) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_min, x_max) = padded_range(all.iter().map(|p| p.0));
    let (y_min, y_max) = padded_range(all.iter().map(|p| p.1));

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"monospace\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // axes
    out.push_str(&format!(
        "  <line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h
    ));
    out.push_str(&format!(
        "  <line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    ));

    // ticks
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let x = x_min + t * (x_max - x_min);
        let px = sx(x);
        out.push_str(&format!(
            "  <line x1=\"{px:.2}\" y1=\"{0}\" x2=\"{px:.2}\" y2=\"{1}\" stroke=\"black\"/>\n",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        ));
        out.push_str(&format!(
            "  <text x=\"{px:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T + plot_h + 18.0,
            format_tick(x)
        ));
        let y = y_min + t * (y_max - y_min);
        let py = sy(y);
        out.push_str(&format!(
            "  <line x1=\"{0}\" y1=\"{py:.2}\" x2=\"{1}\" y2=\"{py:.2}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0,
            MARGIN_L
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{py:.2}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>\n",
            MARGIN_L - 8.0,
            format_tick(y)
        ));
    }

    // axis labels
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut sorted = s.points.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
        if sorted.len() == 1 {
            let (x, y) = sorted[0];
            out.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        } else {
            let coords: Vec<String> = sorted
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            out.push_str(&format!(
                "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                coords.join(" ")
            ));
        }
        // legend row
        let ly = MARGIN_T + 16.0 * (i as f64 + 1.0);
        out.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            MARGIN_L + plot_w - 150.0,
            MARGIN_L + plot_w - 125.0
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            MARGIN_L + plot_w - 118.0,
            ly + 4.0,
            escape(&s.label)
        ));
    }

    out.push_str("</svg>\n");
    out
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        // degenerate span: widen symmetrically
        let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.1 };
        return (min - pad, max + pad);
    }
    let pad = (max - min) * 0.05;
    (min - pad, max + pad)
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 10_000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
