//! Hand-emitted SVG line plots: two polyline series over linear axes.

use ridgelab_core::sweep::SweepRow;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 46.0;
const MARGIN_BOTTOM: f64 = 58.0;

const TRAINING_COLOR: &str = "#1f77b4";
const TESTING_COLOR: &str = "#d62728";

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && (a >= 10_000.0 || a < 0.01) {
        format!("{v:.2e}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders training/testing error curves against the covariate count.
/// The output contains exactly two `<polyline>` elements; axes, ticks, and
/// the legend are `<line>` and `<text>` elements.
pub fn render_two_series(rows: &[SweepRow], title: &str) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let p_min = rows.first().map(|r| r.p).unwrap_or(1) as f64;
    let p_max = rows.last().map(|r| r.p).unwrap_or(1) as f64;
    let y_max = rows
        .iter()
        .flat_map(|r| [r.mse_training, r.mse_testing])
        .fold(f64::NEG_INFINITY, f64::max);
    let y_min = rows
        .iter()
        .flat_map(|r| [r.mse_training, r.mse_testing])
        .fold(f64::INFINITY, f64::min);
    let pad = 0.06 * (y_max - y_min).max(1e-12);
    let (y_lo, y_hi) = (0.0_f64.min(y_min - pad).max(y_min - pad), y_max + pad);

    let x_of = |p: f64| {
        if p_max > p_min {
            MARGIN_LEFT + (p - p_min) / (p_max - p_min) * plot_w
        } else {
            MARGIN_LEFT + 0.5 * plot_w
        }
    };
    let y_of = |v: f64| MARGIN_TOP + (1.0 - (v - y_lo) / (y_hi - y_lo)) * plot_h;

    let polyline = |values: &dyn Fn(&SweepRow) -> f64| {
        rows.iter()
            .map(|r| format!("{:.2},{:.2}", x_of(r.p as f64), y_of(values(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    svg.push_str(r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    svg.push('\n');
    svg.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="17" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0
    ));
    svg.push('\n');

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    svg.push_str(&format!(
        r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{:.1}" y2="{y0:.1}" stroke="black" stroke-width="1.2"/>"#,
        MARGIN_LEFT + plot_w
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<line x1="{x0:.1}" y1="{MARGIN_TOP:.1}" x2="{x0:.1}" y2="{y0:.1}" stroke="black" stroke-width="1.2"/>"#
    ));
    svg.push('\n');

    // Integer x ticks at every p.
    for r in rows {
        let x = x_of(r.p as f64);
        svg.push_str(&format!(
            r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black" stroke-width="1"/>"#,
            y0 + 5.0
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            y0 + 20.0,
            r.p
        ));
        svg.push('\n');
    }
    svg.push_str(&format!(
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="14" text-anchor="middle">number of covariates p</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    ));
    svg.push('\n');

    // Five y ticks.
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black" stroke-width="1"/>"#,
            x0 - 5.0
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
            x0 - 9.0,
            y + 4.0,
            fmt_tick(v)
        ));
        svg.push('\n');
    }
    svg.push_str(&format!(
        r#"<text x="20" y="{:.1}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.1})">mean squared error</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));
    svg.push('\n');

    // The two series.
    svg.push_str(&format!(
        r#"<polyline points="{}" fill="none" stroke="{TRAINING_COLOR}" stroke-width="2"/>"#,
        polyline(&|r: &SweepRow| r.mse_training)
    ));
    svg.push('\n');
    svg.push_str(&format!(
        r#"<polyline points="{}" fill="none" stroke="{TESTING_COLOR}" stroke-width="2"/>"#,
        polyline(&|r: &SweepRow| r.mse_testing)
    ));
    svg.push('\n');

    // Fixed legend, top-right.
    let lx = MARGIN_LEFT + plot_w - 170.0;
    let ly = MARGIN_TOP + 10.0;
    for (i, (color, label)) in [(TRAINING_COLOR, "training"), (TESTING_COLOR, "testing")]
        .iter()
        .enumerate()
    {
        let y = ly + 20.0 * i as f64;
        svg.push_str(&format!(
            r#"<line x1="{lx:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 28.0
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13">{label}</text>"#,
            lx + 36.0,
            y + 4.0
        ));
        svg.push('\n');
    }

    svg.push_str("</svg>\n");
    svg
}
