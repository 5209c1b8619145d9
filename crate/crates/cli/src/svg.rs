//! Static SVG emission for the experiment outputs: a heatmap for the
//! learning surface and simple line charts for the error curves. No
//! external renderer; the markup is written directly and depends only on
//! the data, so reruns are byte-identical.

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Light-yellow to dark-red ramp; `t` clamped to [0, 1].
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = lerp(255.0, 128.0, t) as u8;
    let g = lerp(255.0, 0.0, t) as u8;
    let b = lerp(204.0, 38.0, t) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap over a rectangular grid. `values[yi][xi]` is drawn at column
/// `xi`, row `yi`; rows are drawn bottom-up so larger y-values sit higher.
pub fn heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    x_ticks: &[usize],
    y_ticks: &[usize],
    values: &[Vec<f64>],
    v_max: f64,
) -> String {
    let cell = 34.0;
    let left = 70.0;
    let top = 50.0;
    let w = x_ticks.len() as f64 * cell;
    let h = y_ticks.len() as f64 * cell;
    let width = left + w + 140.0;
    let height = top + h + 70.0;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<text x=\"{:.0}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        left + w / 2.0
    ));
    for (yi, row) in values.iter().enumerate() {
        for (xi, v) in row.iter().enumerate() {
            let x = left + xi as f64 * cell;
            let y = top + h - (yi as f64 + 1.0) * cell;
            let color = if v.is_nan() { "#bbbbbb".to_string() } else { ramp(v / v_max) };
            s.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" \
                 fill=\"{color}\" stroke=\"#ffffff\" stroke-width=\"1\"><title>{t}</title></rect>\n",
                t = if v.is_nan() { "aborted".to_string() } else { format!("{v:.4}") }
            ));
        }
    }
    for (xi, n) in x_ticks.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{n}</text>\n",
            left + (xi as f64 + 0.5) * cell,
            top + h + 18.0
        ));
    }
    for (yi, m) in y_ticks.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{m}</text>\n",
            left - 8.0,
            top + h - (yi as f64 + 0.5) * cell + 4.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        left + w / 2.0,
        top + h + 44.0
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1})\">{y_label}</text>\n",
        top + h / 2.0
    ));
    // Legend: a small vertical ramp.
    let lx = left + w + 30.0;
    for i in 0..20 {
        let t = 1.0 - i as f64 / 19.0;
        s.push_str(&format!(
            "<rect x=\"{lx:.1}\" y=\"{:.1}\" width=\"16\" height=\"{:.1}\" fill=\"{}\"/>\n",
            top + i as f64 * h / 20.0,
            h / 20.0 + 0.5,
            ramp(t)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\">{v_max:.2}</text>\n<text x=\"{0:.1}\" y=\"{:.1}\">0</text>\n",
        lx + 22.0,
        top + 10.0,
        top + h
    ));
    s.push_str("</svg>\n");
    s
}

/// One named line of a chart.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with linear axes starting at the origin.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let left = 64.0;
    let top = 46.0;
    let plot_w = 420.0;
    let plot_h = 280.0;
    let width = left + plot_w + 130.0;
    let height = top + plot_h + 64.0;
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1e-12f64, f64::max);
    let y_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(1e-12f64, f64::max)
        * 1.08;
    let px = |x: f64| left + x / x_max * plot_w;
    let py = |y: f64| top + plot_h - y / y_max * plot_h;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<text x=\"{:.0}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        left + plot_w / 2.0
    ));
    s.push_str(&format!(
        "<rect x=\"{left:.1}\" y=\"{top:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#444444\"/>\n"
    ));
    // Four ticks per axis.
    for i in 0..=4 {
        let xv = x_max * i as f64 / 4.0;
        let yv = y_max * i as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xv:.0}</text>\n",
            px(xv),
            top + plot_h + 18.0
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{yv:.3}</text>\n",
            left - 6.0,
            py(yv) + 4.0
        ));
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{top:.1}\" x2=\"{0:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            px(xv),
            top + plot_h
        ));
    }
    for (si, sr) in series.iter().enumerate() {
        let path: Vec<String> =
            sr.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            path.join(" "),
            sr.color
        ));
        for &(x, y) in &sr.points {
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
                px(x),
                py(y),
                sr.color
            ));
        }
        let ly = top + 16.0 + si as f64 * 18.0;
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            left + plot_w + 14.0,
            left + plot_w + 38.0,
            sr.color
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            left + plot_w + 44.0,
            ly + 4.0,
            sr.label
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        left + plot_w / 2.0,
        top + plot_h + 44.0
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1})\">{y_label}</text>\n",
        top + plot_h / 2.0
    ));
    s.push_str("</svg>\n");
    s
}
