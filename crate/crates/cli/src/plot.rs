//! Dependency-free SVG plots: per-epoch curves and the loss histogram.
//!
//! Output bytes are a pure function of the input (fixed-precision number
//! formatting, no timestamps), so identical runs produce identical files.

use std::path::Path;

use trimsgd::regularize::LossHistogram;

use crate::CliError;

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;

const PALETTE: &[&str] = &[
    "#000000", "#d62728", "#e0b400", "#1f77b4", "#2ca02c", "#cc00cc", "#ff7f0e", "#7f7f7f",
];

#[derive(Debug, Clone)]
pub struct PlotStyle {
    pub log_y: bool,
    pub y_label: String,
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders named per-epoch series as polylines with a legend. All series
/// must be non-empty and of equal length.
pub fn plot_svg(series: &[(String, Vec<f64>)], style: &PlotStyle) -> Result<String, CliError> {
    let first_len = series
        .first()
        .map(|(_, v)| v.len())
        .ok_or_else(|| CliError::Usage("nothing to plot: no series".into()))?;
    if first_len == 0 {
        return Err(CliError::Usage("nothing to plot: empty series".into()));
    }
    for (name, values) in series {
        if values.len() != first_len {
            return Err(CliError::Usage(format!(
                "series `{name}` has {} points, expected {first_len}",
                values.len()
            )));
        }
    }

    let transform = |v: f64| -> f64 {
        if style.log_y {
            v.max(1e-12).log10()
        } else {
            v
        }
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, values) in series {
        for &v in values {
            let t = transform(v);
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |epoch: usize| -> f64 {
        if first_len == 1 {
            MARGIN_L + plot_w / 2.0
        } else {
            MARGIN_L + plot_w * epoch as f64 / (first_len - 1) as f64
        }
    };
    let y_of = |v: f64| -> f64 { MARGIN_T + plot_h * (1.0 - (transform(v) - lo) / (hi - lo)) };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // y grid and labels
    for i in 0..=4 {
        let t = lo + (hi - lo) * i as f64 / 4.0;
        let label = if style.log_y {
            format!("{:.3e}", 10f64.powf(t))
        } else {
            format!("{t:.4}")
        };
        let y = MARGIN_T + plot_h * (1.0 - i as f64 / 4.0);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            fmt(MARGIN_L),
            fmt(y),
            fmt(WIDTH - MARGIN_R),
            fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{label}</text>\n",
            fmt(MARGIN_L - 6.0),
            fmt(y + 4.0)
        ));
    }

    // x ticks: up to 6 epochs marks, 1-based
    let ticks = first_len.min(6).max(1);
    for i in 0..ticks {
        let epoch = if ticks == 1 {
            0
        } else {
            i * (first_len - 1) / (ticks - 1)
        };
        let x = x_of(epoch);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(HEIGHT - MARGIN_B + 20.0),
            epoch + 1
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 8.0)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0),
        style.y_label
    ));

    // axes
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(plot_w),
        fmt(plot_h)
    ));

    // curves
    for (s, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(e, &v)| format!("{},{}", fmt(x_of(e)), fmt(y_of(v))))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"><title>{name}</title></polyline>\n",
            points.join(" ")
        ));
    }

    // legend, top right
    for (s, (name, _)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let y = MARGIN_T + 16.0 + 18.0 * s as f64;
        let x = WIDTH - MARGIN_R - 150.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            fmt(x),
            fmt(y - 4.0),
            fmt(x + 24.0),
            fmt(y - 4.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{name}</text>\n",
            fmt(x + 30.0),
            fmt(y)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(
    series: &[(String, Vec<f64>)],
    style: &PlotStyle,
    path: &Path,
) -> Result<(), CliError> {
    let svg = plot_svg(series, style)?;
    std::fs::write(path, svg)?;
    Ok(())
}

/// Loss histogram as overlaid bars on a log x axis: original labels in
/// orange, noised labels in gray.
pub fn histogram_svg(hist: &LossHistogram) -> String {
    let bins = hist.counts_original.len();
    let max_count = hist
        .counts_original
        .iter()
        .chain(&hist.counts_noised)
        .copied()
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let lo = hist.bin_edges[0].max(1e-300).log10();
    let hi = hist.bin_edges[bins].max(1e-299).log10();
    let span = if hi > lo { hi - lo } else { 1.0 };

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |edge: f64| MARGIN_L + plot_w * (edge.max(1e-300).log10() - lo) / span;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    for (series_idx, (counts, color, opacity)) in [
        (&hist.counts_original, "#ff8c00", "0.85"),
        (&hist.counts_noised, "#808080", "0.60"),
    ]
    .iter()
    .enumerate()
    {
        let _ = series_idx;
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let x0 = x_of(hist.bin_edges[i]);
            let x1 = x_of(hist.bin_edges[i + 1]);
            let h = plot_h * c as f64 / max_count;
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"{opacity}\"/>\n",
                fmt(x0),
                fmt(MARGIN_T + plot_h - h),
                fmt((x1 - x0).max(0.5)),
                fmt(h)
            ));
        }
    }

    // decade tick labels
    let first_decade = lo.ceil() as i64;
    let last_decade = hi.floor() as i64;
    for d in first_decade..=last_decade {
        let x = MARGIN_L + plot_w * (d as f64 - lo) / span;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999999\"/>\n",
            fmt(x),
            fmt(MARGIN_T + plot_h),
            fmt(x),
            fmt(MARGIN_T + plot_h + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">1e{d}</text>\n",
            fmt(x),
            fmt(MARGIN_T + plot_h + 20.0)
        ));
    }

    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(plot_w),
        fmt(plot_h)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">example loss (log scale)</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 8.0)
    ));

    // legend
    for (i, (label, color)) in [("original labels", "#ff8c00"), ("noised labels", "#808080")]
        .iter()
        .enumerate()
    {
        let y = MARGIN_T + 16.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN_R - 160.0;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"10\" fill=\"{color}\"/>\n",
            fmt(x),
            fmt(y - 9.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{label}</text>\n",
            fmt(x + 20.0),
            fmt(y)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_histogram_svg(hist: &LossHistogram, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, histogram_svg(hist))?;
    Ok(())
}
