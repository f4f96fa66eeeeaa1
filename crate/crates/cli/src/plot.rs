//! Static SVG chart: observed daily bars, estimated trend, the point
//! forecast and shaded weekly prediction intervals.

use std::fmt::Write;

use trendcast::pipeline::RegionForecast;
use trendcast::probabilistic::{Target, QUANTILE_LEVELS};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Central interval levels drawn as bands, widest first.
const BANDS: [(f64, &str); 3] = [(0.95, "0.15"), (0.90, "0.25"), (0.50, "0.4")];

fn level_index(level: f64) -> usize {
    QUANTILE_LEVELS.iter().position(|&l| (l - level).abs() < 1e-9).expect("hub level")
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut s = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let _ = write!(s, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{s}\"/>\n")
}

/// Render the last `days` days of history plus the forecast horizon.
pub fn render_svg(title: &str, fc: &RegionForecast, days: usize) -> String {
    let p = &fc.point;
    let obs = &p.observed;
    let horizon = p.method.values.len();
    let first = obs.len().saturating_sub(days);
    let span = (p.origin + horizon + 1 - first) as f64;

    // Weekly quantiles are drawn as daily rates over their 7 days.
    let weekly: Vec<_> = fc
        .quantiles
        .iter()
        .filter_map(|q| match q.target {
            Target::WeeklyTotal(k) => Some((k as usize, q)),
            Target::DailyMean(_) => None,
        })
        .collect();
    let y_max = obs[first..]
        .iter()
        .chain(&p.trend[first..])
        .chain(&p.method.values)
        .copied()
        .chain(weekly.iter().map(|(_, q)| q.quantiles[22] / 7.0))
        .fold(1.0f64, f64::max)
        * 1.05;

    let sx = |day: f64| MARGIN + (day - first as f64) / span * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - v / y_max * (HEIGHT - 2.0 * MARGIN);
    let bar = (WIDTH - 2.0 * MARGIN) / span;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(svg, "<text x=\"{MARGIN}\" y=\"25\" font-family=\"sans-serif\" font-size=\"16\">{}</text>", escape(title));

    for (k, q) in &weekly {
        let x0 = sx((p.origin + 7 * (k - 1)) as f64 + 0.5);
        let x1 = sx((p.origin + 7 * k) as f64 + 0.5);
        for (level, opacity) in BANDS {
            let lo = q.quantiles[level_index((1.0 - level) / 2.0)] / 7.0;
            let hi = q.quantiles[level_index((1.0 + level) / 2.0)] / 7.0;
            let _ = writeln!(
                svg,
                "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\" fill-opacity=\"{opacity}\"/>",
                sy(hi),
                x1 - x0,
                sy(lo) - sy(hi)
            );
        }
    }
    for (i, &v) in obs.iter().enumerate().skip(first) {
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#bbbbbb\"/>",
            sx(i as f64) - 0.4 * bar,
            sy(v),
            0.8 * bar,
            sy(0.0) - sy(v)
        );
    }
    let trend: Vec<(f64, f64)> = p.trend.iter().enumerate().skip(first).map(|(i, &v)| (sx(i as f64), sy(v))).collect();
    svg.push_str(&polyline(&trend, "firebrick"));
    let mut fore = vec![(sx(p.anchor as f64), sy(p.trend[p.anchor]))];
    fore.extend(p.method.values.iter().enumerate().map(|(h, &v)| (sx((p.origin + h + 1) as f64), sy(v))));
    svg.push_str(&polyline(&fore, "navy"));

    let _ = writeln!(
        svg,
        "<line x1=\"{MARGIN}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"black\"/>",
        sy(0.0),
        WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        "<text x=\"5\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{:.0}</text>",
        sy(y_max / 1.05) + 4.0,
        y_max / 1.05
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
