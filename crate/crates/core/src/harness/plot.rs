use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::Path;

use super::HarnessError;
use crate::env::{read_trace, TraceRecord};
use crate::trainer::read_metrics;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_Y: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Trailing moving average; `window = 1` returns the input.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= w {
            sum -= values[i - w];
        }
        let n = (i + 1).min(w);
        out.push(if w == 1 { values[i] } else { sum / n as f64 });
    }
    out
}

/// Labels a run from its directory layout: `<label>/seed_<s>/metrics.csv`
/// gives `<label>`, otherwise the parent directory name.
pub fn run_label(path: &Path) -> String {
    let parent = path.parent();
    let name = |p: Option<&Path>| p.and_then(Path::file_name).map(|s| s.to_string_lossy().into_owned());
    match name(parent) {
        Some(dir) if dir.starts_with("seed_") => name(parent.and_then(Path::parent)).unwrap_or(dir),
        Some(dir) if !dir.is_empty() => dir,
        _ => path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned()),
    }
}

/// One reward curve: a label and `(iteration, reward)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Maps data coordinates into the plotting area.
#[derive(Clone, Copy, Debug)]
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    area: (f64, f64, f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone, area: (f64, f64, f64, f64)) -> Self {
        Self {
            x: padded_range(xs, false),
            y: padded_range(ys, true),
            area,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let (l, _, r, _) = self.area;
        l + (x - self.x.0) / (self.x.1 - self.x.0) * (r - l)
    }

    fn py(&self, y: f64) -> f64 {
        let (_, t, _, b) = self.area;
        b - (y - self.y.0) / (self.y.1 - self.y.0) * (b - t)
    }
}

fn padded_range(values: impl Iterator<Item = f64>, pad: bool) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let d = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - d, hi + d);
    }
    if pad {
        let d = (hi - lo) * 0.05;
        (lo - d, hi + d)
    } else {
        (lo, hi)
    }
}

fn axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, t, r, b) = f.area;
    let _ = writeln!(svg, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="dimgray"/>"#, r - l, b - t);
    for i in 0..=4 {
        let fx = f.x.0 + (f.x.1 - f.x.0) * i as f64 / 4.0;
        let fy = f.y.0 + (f.y.1 - f.y.0) * i as f64 / 4.0;
        let (px, py) = (f.px(fx), f.py(fy));
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{}" stroke="dimgray"/>"#, b + 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, b + 18.0, tick(fx));
        let _ = writeln!(svg, r#"<line x1="{}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="dimgray"/>"#, l - 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#, l - 8.0, py + 4.0, tick(fy));
    }
    let _ = writeln!(svg, r#"<text class="x-label" x="{}" y="{}" font-size="13" text-anchor="middle">{x_label}</text>"#, (l + r) / 2.0, b + 38.0);
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="20" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 20 {})">{y_label}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn header(title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="28" font-size="15" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG with one smoothed polyline per series.
pub fn reward_plot_svg(series: &[RewardSeries], window: usize) -> Result<String, HarnessError> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(HarnessError::Invalid("no reward points to plot".into()));
    }
    let smoothed: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            let ys: Vec<f64> = s.points.iter().map(|p| p.1).collect();
            let avg = moving_average(&ys, window);
            (s.label.clone(), s.points.iter().map(|p| p.0).zip(avg).collect())
        })
        .collect();
    let all = smoothed.iter().flat_map(|s| s.1.iter().copied());
    let area = (MARGIN_LEFT, MARGIN_Y, WIDTH - MARGIN_RIGHT, HEIGHT - MARGIN_Y);
    let frame = Frame::new(all.clone().map(|p| p.0), all.map(|p| p.1), area);
    let mut svg = header(&format!("Mean episode reward (moving average, window {window})"));
    axes(&mut svg, &frame, "iteration", "mean episode reward");
    for (k, (label, pts)) in smoothed.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.3},{:.3}", frame.px(x), frame.py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(label),
            coords.join(" ")
        );
        let ly = MARGIN_Y + 14.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, lx + 26.0, ly + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads metrics files, averages runs sharing a label per iteration, and
/// writes one curve per label and agent.
pub fn emit_reward_plot(metrics: &[impl AsRef<Path>], window: usize, out: &Path) -> Result<(), HarnessError> {
    if metrics.is_empty() {
        return Err(HarnessError::Invalid("no metrics files given".into()));
    }
    // (label, agent) -> iteration -> (sum, count)
    let mut acc: BTreeMap<(String, usize), BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for path in metrics {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        let label = run_label(path);
        for r in read_metrics(file)? {
            let slot = acc.entry((label.clone(), r.agent)).or_default().entry(r.iteration).or_insert((0.0, 0));
            slot.0 += r.mean_episode_reward;
            slot.1 += 1;
        }
    }
    let series: Vec<RewardSeries> = acc
        .into_iter()
        .map(|((label, agent), pts)| RewardSeries {
            label: format!("{label} agent {agent}"),
            points: pts.into_iter().map(|(i, (s, n))| (i as f64, s / n as f64)).collect(),
        })
        .collect();
    let svg = reward_plot_svg(&series, window)?;
    fs::write(out, svg).map_err(|e| HarnessError::io(out, e))
}

/// Top-down view of the last `last_k` steps: UAV paths, final GU positions,
/// and pairing lines at the start (dashed) and end (solid) of the window.
pub fn trajectory_plot_svg(records: &[TraceRecord], last_k: usize) -> Result<String, HarnessError> {
    if last_k == 0 {
        return Err(HarnessError::Invalid("last_k must be positive".into()));
    }
    if records.len() < last_k + 1 {
        return Err(HarnessError::Invalid(format!(
            "trajectory has {} steps, fewer than last_k = {last_k}",
            records.len().saturating_sub(1)
        )));
    }
    let window = &records[records.len() - last_k - 1..];
    let (start, end) = (&window[0], &window[window.len() - 1]);
    let m = end.num_uavs();
    let xs = window
        .iter()
        .flat_map(|r| r.uav_positions.iter().map(|p| p[0]).chain(r.gu_positions.iter().map(|p| p[0])));
    let ys = window
        .iter()
        .flat_map(|r| r.uav_positions.iter().map(|p| p[1]).chain(r.gu_positions.iter().map(|p| p[1])));
    let side = HEIGHT - 2.0 * MARGIN_Y;
    let area = (MARGIN_LEFT, MARGIN_Y, MARGIN_LEFT + side, MARGIN_Y + side);
    let frame = Frame::new(xs, ys, area);
    let mut svg = header(&format!("UAV trajectories, last {last_k} steps"));
    axes(&mut svg, &frame, "x (m)", "y (m)");
    let pairing_lines = |svg: &mut String, rec: &TraceRecord, class: &str, dash: &str| {
        for (i, row) in rec.pairing.iter().enumerate() {
            let u = rec.uav_positions[i];
            for (j, &on) in row.iter().enumerate() {
                if on {
                    let g = rec.gu_positions[j];
                    let _ = writeln!(
                        svg,
                        r#"<line class="{class}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-opacity="0.6"{dash}/>"#,
                        frame.px(u[0]),
                        frame.py(u[1]),
                        frame.px(g[0]),
                        frame.py(g[1]),
                        PALETTE[i % PALETTE.len()]
                    );
                }
            }
        }
    };
    pairing_lines(&mut svg, start, "pair-start", r#" stroke-dasharray="4 3""#);
    pairing_lines(&mut svg, end, "pair-end", "");
    for i in 0..m {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = window
            .iter()
            .map(|r| format!("{:.3},{:.3}", frame.px(r.uav_positions[i][0]), frame.py(r.uav_positions[i][1])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="uav-path" data-uav="{i}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let s = start.uav_positions[i];
        let e = end.uav_positions[i];
        let _ = writeln!(
            svg,
            r#"<rect class="uav-start" x="{:.2}" y="{:.2}" width="8" height="8" fill="white" stroke="{color}"/>"#,
            frame.px(s[0]) - 4.0,
            frame.py(s[1]) - 4.0
        );
        let (ex, ey) = (frame.px(e[0]), frame.py(e[1]));
        let _ = writeln!(
            svg,
            r#"<polygon class="uav-end" points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            ex,
            ey - 6.0,
            ex - 5.0,
            ey + 4.0,
            ex + 5.0,
            ey + 4.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{color}">UAV {i}</text>"#, ex + 7.0, ey - 7.0);
    }
    for (j, g) in end.gu_positions.iter().enumerate() {
        let (gx, gy) = (frame.px(g[0]), frame.py(g[1]));
        let _ = writeln!(svg, r##"<circle class="gu" data-gu="{j}" cx="{gx:.2}" cy="{gy:.2}" r="4" fill="#444"/>"##);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="10">GU {j}</text>"#, gx + 5.0, gy + 12.0);
    }
    let lx = area.2 + 20.0;
    for (k, text) in ["square: window start", "triangle: window end", "dashed: start pairing", "solid: end pairing"]
        .iter()
        .enumerate()
    {
        let _ = writeln!(svg, r#"<text x="{lx}" y="{}" font-size="11">{text}</text>"#, MARGIN_Y + 14.0 + 16.0 * k as f64);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_trajectory_plot(trajectory: &Path, last_k: usize, out: &Path) -> Result<(), HarnessError> {
    let file = File::open(trajectory).map_err(|e| HarnessError::io(trajectory, e))?;
    let svg = trajectory_plot_svg(&read_trace(file)?, last_k)?;
    fs::write(out, svg).map_err(|e| HarnessError::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_points(svg: &str, class: &str) -> Vec<Vec<(f64, f64)>> {
        svg.lines()
            .filter(|l| l.contains(&format!(r#"class="{class}""#)))
            .map(|l| {
                let start = l.find("points=\"").unwrap() + 8;
                let rest = &l[start..];
                let body = &rest[..rest.find('"').unwrap()];
                body.split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    fn series(label: &str, ys: &[f64]) -> RewardSeries {
        RewardSeries {
            label: label.into(),
            points: ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect(),
        }
    }

    #[test]
    fn moving_average_windows() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0], 1), vec![1.0, 2.0, 3.0]);
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert!(moving_average(&[], 3).is_empty());
    }

    #[test]
    fn one_curve_per_series() {
        let svg = reward_plot_svg(&[series("a agent 0", &[1.0, 2.0]), series("a agent 1", &[3.0, 1.0])], 3).unwrap();
        assert_eq!(parse_points(&svg, "series").len(), 2);
        assert!(svg.contains("iteration") && svg.contains("mean episode reward"));
    }

    #[test]
    fn window_one_plots_raw_values() {
        let ys = [4.0, -1.0, 2.5, 7.0];
        let svg = reward_plot_svg(&[series("s", &ys)], 1).unwrap();
        let pts = &parse_points(&svg, "series")[0];
        let area = (MARGIN_LEFT, MARGIN_Y, WIDTH - MARGIN_RIGHT, HEIGHT - MARGIN_Y);
        let f = Frame::new((0..4).map(|i| i as f64), ys.iter().copied(), area);
        for (p, &y) in pts.iter().zip(&ys) {
            assert!((p.1 - f.py(y)).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_series_is_horizontal_at_its_value() {
        let svg = reward_plot_svg(&[series("c", &[5.0; 6])], 3).unwrap();
        let pts = &parse_points(&svg, "series")[0];
        let area = (MARGIN_LEFT, MARGIN_Y, WIDTH - MARGIN_RIGHT, HEIGHT - MARGIN_Y);
        let f = Frame::new((0..6).map(|i| i as f64), std::iter::once(5.0), area);
        assert!(pts.iter().all(|p| (p.1 - f.py(5.0)).abs() < 1e-3));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(reward_plot_svg(&[series("e", &[])], 1).is_err());
        let none: [&Path; 0] = [];
        assert!(emit_reward_plot(&none, 1, Path::new("unused.svg")).is_err());
    }

    #[test]
    fn labels_follow_layout() {
        assert_eq!(run_label(Path::new("out/ga-matr/seed_3/metrics.csv")), "ga-matr");
        assert_eq!(run_label(Path::new("out/custom/metrics.csv")), "custom");
    }

    fn trace(m: usize, n: usize, steps: usize) -> Vec<TraceRecord> {
        (0..=steps)
            .map(|t| TraceRecord {
                t,
                uav_positions: (0..m).map(|i| [t as f64 + i as f64, -(t as f64), 50.0]).collect(),
                gu_positions: (0..n).map(|j| [j as f64 * 10.0, 5.0]).collect(),
                pairing: (0..m).map(|i| (0..n).map(|j| j % m == i).collect()).collect(),
                rewards: vec![0.0; m],
            })
            .collect()
    }

    #[test]
    fn trajectory_plot_counts() {
        let svg = trajectory_plot_svg(&trace(3, 7, 40), 25).unwrap();
        let paths = parse_points(&svg, "uav-path");
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().all(|p| p.len() == 26));
        assert_eq!(svg.matches(r#"class="gu""#).count(), 7);
        assert_eq!(svg.matches(r#"class="pair-end""#).count(), 7);
    }

    #[test]
    fn short_trajectory_is_an_error() {
        assert!(trajectory_plot_svg(&trace(2, 4, 10), 25).is_err());
        assert!(trajectory_plot_svg(&trace(2, 4, 25), 25).is_ok());
    }
}
