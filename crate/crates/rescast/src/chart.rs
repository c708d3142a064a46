//! Deterministic SVG line charts. The renderer writes every coordinate with
//! fixed precision, so identical inputs produce byte-identical documents.

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

/// One labeled line. Dates supply the x axis; series may cover different
/// date ranges.
#[derive(Debug, Clone)]
pub struct ChartSeries {
    pub label: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChartStyle {
    pub width: u32,
    pub height: u32,
    pub title: String,
    pub y_label: String,
}

impl Default for ChartStyle {
    fn default() -> Self {
        ChartStyle {
            width: 900,
            height: 480,
            title: String::new(),
            y_label: String::new(),
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 18.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 46.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render labeled series into a standalone SVG document with axes, date
/// ticks, a legend and one polyline per series.
pub fn render_chart(series: &[ChartSeries], style: &ChartStyle) -> Result<String> {
    if series.iter().all(|s| s.values.is_empty()) {
        return Err(Error::EmptySeries("chart needs at least one nonempty series".into()));
    }
    for s in series {
        if s.dates.len() != s.values.len() {
            return Err(Error::Shape(format!(
                "series `{}` has {} dates vs {} values",
                s.label,
                s.dates.len(),
                s.values.len()
            )));
        }
    }

    let mut x_min = i64::MAX;
    let mut x_max = i64::MIN;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for (d, v) in s.dates.iter().zip(&s.values) {
            let x = d.num_days_from_ce() as i64;
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(*v);
            y_max = y_max.max(*v);
        }
    }
    if x_min == x_max {
        x_min -= 1;
        x_max += 1;
    }
    if y_min == y_max {
        // constant series sits mid-chart
        let pad = if y_min == 0.0 { 1.0 } else { y_min.abs() * 0.1 };
        y_min -= pad;
        y_max += pad;
    } else {
        let pad = (y_max - y_min) * 0.05;
        y_min -= pad;
        y_max += pad;
    }

    let w = style.width as f64;
    let h = style.height as f64;
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |d: &NaiveDate| {
        let x = d.num_days_from_ce() as f64;
        MARGIN_LEFT + (x - x_min as f64) / (x_max - x_min) as f64 * plot_w
    };
    let y_of = |v: f64| MARGIN_TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        style.width, style.height, style.width, style.height
    ));
    svg.push_str(&format!(
        "  <rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
        style.width, style.height
    ));
    if !style.title.is_empty() {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            fmt(w / 2.0),
            escape(&style.title)
        ));
    }

    // axes
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(MARGIN_LEFT),
        fmt(h - MARGIN_BOTTOM)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(h - MARGIN_BOTTOM),
        fmt(w - MARGIN_RIGHT),
        fmt(h - MARGIN_BOTTOM)
    ));

    // y ticks
    let n_ticks = 6;
    for k in 0..n_ticks {
        let v = y_min + (y_max - y_min) * k as f64 / (n_ticks - 1) as f64;
        let y = y_of(v);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n",
            fmt(MARGIN_LEFT),
            fmt(y),
            fmt(w - MARGIN_RIGHT),
            fmt(y)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 6.0),
            fmt(y + 3.0),
            fmt(v)
        ));
    }

    // x ticks with dates
    for k in 0..n_ticks {
        let x_days = x_min + ((x_max - x_min) * k as i64) / (n_ticks - 1) as i64;
        let date = NaiveDate::from_num_days_from_ce_opt(x_days as i32)
            .unwrap_or_else(|| NaiveDate::from_ymd_opt(1970, 1, 1).unwrap());
        let x = MARGIN_LEFT + (x_days - x_min) as f64 / (x_max - x_min) as f64 * plot_w;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            fmt(x),
            fmt(h - MARGIN_BOTTOM),
            fmt(x),
            fmt(h - MARGIN_BOTTOM + 4.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(h - MARGIN_BOTTOM + 16.0),
            date.format("%Y-%m")
        ));
    }

    if !style.y_label.is_empty() {
        svg.push_str(&format!(
            "  <text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
            fmt(h / 2.0),
            fmt(h / 2.0),
            escape(&style.y_label)
        ));
    }

    // polylines
    for (idx, s) in series.iter().enumerate() {
        if s.values.is_empty() {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = s
            .dates
            .iter()
            .zip(&s.values)
            .map(|(d, v)| format!("{},{}", fmt(x_of(d)), fmt(y_of(*v))))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
            color,
            points.join(" ")
        ));
    }

    // legend
    let mut legend_y = MARGIN_TOP + 6.0;
    for (idx, s) in series.iter().enumerate() {
        if s.values.is_empty() {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let x0 = w - MARGIN_RIGHT - 150.0;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            fmt(x0),
            fmt(legend_y),
            fmt(x0 + 18.0),
            fmt(legend_y),
            color
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            fmt(x0 + 24.0),
            fmt(legend_y + 4.0),
            escape(&s.label)
        ));
        legend_y += 16.0;
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dated(values: &[f64]) -> (Vec<NaiveDate>, Vec<f64>) {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (
            (0..values.len())
                .map(|i| start + chrono::Days::new(i as u64))
                .collect(),
            values.to_vec(),
        )
    }

    #[test]
    fn constant_series_draws_mid_chart_horizontal() {
        let (dates, values) = dated(&[5.0, 5.0, 5.0]);
        let svg = render_chart(
            &[ChartSeries { label: "flat".into(), dates, values }],
            &ChartStyle::default(),
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        // all polyline y coordinates equal and centered in the plot area
        let points = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        let ys: Vec<&str> = points
            .split(' ')
            .map(|p| p.split(',').nth(1).unwrap())
            .collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        let y: f64 = ys[0].parse().unwrap();
        let mid = MARGIN_TOP + (480.0 - MARGIN_TOP - MARGIN_BOTTOM) / 2.0;
        assert!((y - mid).abs() < 1.0, "y = {y}, mid = {mid}");
    }

    #[test]
    fn two_series_get_distinct_strokes_and_legend_entries() {
        let (dates, values) = dated(&[1.0, 2.0, 3.0]);
        let svg = render_chart(
            &[
                ChartSeries { label: "a".into(), dates: dates.clone(), values: values.clone() },
                ChartSeries { label: "b".into(), dates, values: values.iter().map(|v| v * 2.0).collect() },
            ],
            &ChartStyle::default(),
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(PALETTE[0]));
        assert!(svg.contains(PALETTE[1]));
        assert!(svg.contains(">a</text>"));
        assert!(svg.contains(">b</text>"));
    }

    #[test]
    fn identical_input_renders_identical_bytes() {
        let (dates, values) = dated(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        let series = [ChartSeries { label: "pi".into(), dates, values }];
        let a = render_chart(&series, &ChartStyle::default()).unwrap();
        let b = render_chart(&series, &ChartStyle::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_chart(&[], &ChartStyle::default()).is_err());
    }
}
