//! Static SVG line charts. Output depends only on the input numbers, so the
//! same data always produces the same bytes.

use std::fmt::Write as _;

use crate::ensemble::{EnsembleStatistics, SweepTable};
use crate::trajectory::Trajectory;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Half-width of a shaded band around each point.
    pub spread: Option<Vec<f64>>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let rounded = format!("{v:.4e}").parse::<f64>().unwrap_or(v);
    let s = rounded.to_string();
    if s.len() > 9 {
        format!("{rounded:.3e}")
    } else {
        s
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

pub fn line_chart(title: &str, x_label: &str, series: &[Series]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| {
        s.points.iter().enumerate().flat_map(move |(i, p)| {
            let w = s.spread.as_ref().map_or(0.0, |sp| sp[i]);
            [p.1 - w, p.1 + w]
        })
    }));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="18" font-size="14">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            out,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if let Some(spread) = &s.spread {
            let mut pts = String::new();
            for (p, w) in s.points.iter().zip(spread) {
                let _ = write!(pts, "{:.2},{:.2} ", sx(p.0), sy(p.1 + w));
            }
            for (p, w) in s.points.iter().zip(spread).rev() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(p.0), sy(p.1 - w));
            }
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.trim_end()
            );
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn trajectory_svg(title: &str, trajectory: &Trajectory, species: &[&str]) -> String {
    let series: Vec<Series> = species
        .iter()
        .enumerate()
        .map(|(s, name)| Series {
            label: name.to_string(),
            points: trajectory
                .grid
                .iter()
                .zip(&trajectory.samples)
                .map(|(&t, x)| (t, x[s]))
                .collect(),
            spread: None,
        })
        .collect();
    line_chart(title, "time", &series)
}

/// Means with a ±1 standard deviation band.
pub fn statistics_svg(title: &str, stats: &EnsembleStatistics, species: &[&str]) -> String {
    let series: Vec<Series> = species
        .iter()
        .enumerate()
        .map(|(s, name)| Series {
            label: format!("{name} mean"),
            points: stats
                .grid()
                .iter()
                .enumerate()
                .map(|(k, &t)| (t, stats.mean(k, s)))
                .collect(),
            spread: Some((0..stats.grid().len()).map(|k| stats.variance(k, s).sqrt()).collect()),
        })
        .collect();
    line_chart(title, "time", &series)
}

/// One mean curve per (point, species).
pub fn sweep_svg(title: &str, table: &SweepTable) -> String {
    let mut series = Vec::new();
    let mut start = 0;
    while start < table.rows.len() {
        let point = &table.rows[start].point;
        let end = start + table.rows[start..].iter().take_while(|r| &r.point == point).count();
        let coords: Vec<String> = table
            .parameters
            .iter()
            .zip(point)
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        for (s, name) in table.species.iter().enumerate() {
            let rows = &table.rows[start..end];
            series.push(Series {
                label: format!("{name} ({})", coords.join(", ")),
                points: rows.iter().map(|r| (r.time, r.mean[s])).collect(),
                spread: Some(rows.iter().map(|r| r.variance[s].sqrt()).collect()),
            });
        }
        start = end;
    }
    line_chart(title, "time", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Counters;

    fn traj(samples: Vec<Vec<f64>>) -> Trajectory {
        Trajectory {
            grid: (0..samples.len()).map(|i| i as f64).collect(),
            samples,
            method: "ssa",
            seed: None,
            counters: Counters::default(),
        }
    }

    fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
        svg.lines()
            .filter_map(|l| l.strip_prefix("<polyline points=\""))
            .map(|l| {
                l.split('"')
                    .next()
                    .unwrap()
                    .split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn flat_trajectory_is_horizontal() {
        let svg = trajectory_svg("flat", &traj(vec![vec![4.0]; 5]), &["A"]);
        let lines = polylines(&svg);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].iter().all(|p| p.1 == lines[0][0].1));
    }

    #[test]
    fn one_polyline_per_species_and_stable_bytes() {
        let t = traj(vec![vec![1.0, 5.0], vec![2.0, 3.0], vec![0.0, 9.0]]);
        let svg = trajectory_svg("two", &t, &["A", "B"]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg, trajectory_svg("two", &t, &["A", "B"]));
    }

    #[test]
    fn ensembles_get_bands() {
        let mut s = EnsembleStatistics::new(vec![0.0, 1.0], 1);
        s.push(&traj(vec![vec![1.0], vec![2.0]])).unwrap();
        s.push(&traj(vec![vec![3.0], vec![2.0]])).unwrap();
        let svg = statistics_svg("ens", &s, &["<X>"]);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("&lt;X&gt; mean"));
    }
}
