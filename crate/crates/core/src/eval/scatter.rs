//! Ground-truth angle versus absolute error, as CSV and a standalone SVG.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Angle, EvalReport};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Writes `<stem>.csv` (`truth_deg,abs_error_deg`, one row per sample) and
/// `<stem>.svg`.
pub fn scatter_export(report: &EvalReport, angle: Angle, stem: &Path) -> Result<ScatterFiles> {
    if report.per_sample.is_empty() {
        return Err(Error::invalid("eval", "cannot plot an empty report"));
    }
    let a = angle.index();
    let points: Vec<(f64, f64)> = report.per_sample.iter().map(|s| (s.truth.to_array()[a], s.abs_err[a])).collect();
    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let csv_path = stem.with_extension("csv");
    let svg_path = stem.with_extension("svg");

    let io = |e: csv::Error| Error::io(&csv_path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(&csv_path).map_err(io)?;
    w.write_record(["truth_deg", "abs_error_deg"]).map_err(io)?;
    for (x, y) in &points {
        w.write_record([x.to_string(), y.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    std::fs::write(&svg_path, render_svg(&points, angle.name())).map_err(|e| Error::io(&svg_path, e))?;
    Ok(ScatterFiles { csv: csv_path, svg: svg_path })
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn render_svg(points: &[(f64, f64)], angle: &str) -> String {
    let (mut x0, mut x1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    if x1 - x0 < 1.0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let y1 = points.iter().map(|p| p.1).fold(0.0, f64::max).max(1.0);
    let (xs, ys) = (nice_step(x1 - x0), nice_step(y1));
    let (x0, x1, y1) = ((x0 / xs).floor() * xs, (x1 / xs).ceil() * xs, (y1 / ys).ceil() * ys);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_TOP + (1.0 - y / y1) * plot_h;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g id="axes" stroke="black">"#);
    let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, px(x0), py(0.0), px(x1), py(0.0));
    let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, px(x0), py(0.0), px(x0), py(y1));
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="ticks" text-anchor="middle">"#);
    let mut t = x0;
    while t <= x1 + 1e-9 {
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/><text x="{0:.2}" y="{3:.2}">{4}</text>"#, px(t), py(0.0), py(0.0) + 5.0, py(0.0) + 20.0, tick_label(t, xs));
        t += xs;
    }
    let mut t = 0.0;
    while t <= y1 + 1e-9 {
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"#, px(x0) - 5.0, py(t), px(x0), px(x0) - 8.0, py(t) + 4.0, tick_label(t, ys));
        t += ys;
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<text id="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{angle} (degrees)</text>"#, MARGIN_LEFT + plot_w / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        s,
        r#"<text id="y-label" transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">absolute {angle} error (degrees)</text>"#,
        MARGIN_TOP + plot_h / 2.0
    );
    let _ = writeln!(s, r#"<g id="points" fill="steelblue" fill-opacity="0.6">"#);
    for (x, y) in points {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, px(*x), py(*y));
    }
    let _ = writeln!(s, "</g>\n</svg>");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EulerPose;

    fn report(pairs: &[(f64, f64)]) -> EvalReport {
        EvalReport::from_predictions(pairs.iter().enumerate().map(|(i, (t, p))| (i.to_string(), EulerPose::new(*t, 0.0, 0.0), EulerPose::new(*p, 0.0, 0.0)))).unwrap()
    }

    fn circles(svg: &str) -> Vec<(f64, f64)> {
        svg.lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| {
                let attr = |name: &str| {
                    let i = l.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
                    l[i..].split('"').next().unwrap().parse::<f64>().unwrap()
                };
                (attr("cx"), attr("cy"))
            })
            .collect()
    }

    #[test]
    fn one_sample_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let f = scatter_export(&report(&[(10.0, 12.5)]), Angle::Yaw, &dir.path().join("yaw")).unwrap();
        let text = std::fs::read_to_string(&f.csv).unwrap();
        assert_eq!(text.lines().collect::<Vec<_>>(), ["truth_deg,abs_error_deg", "10,2.5"]);
        let svg = std::fs::read_to_string(&f.svg).unwrap();
        assert!(svg.contains("yaw (degrees)"));
        assert!(svg.contains("absolute yaw error (degrees)"));
        assert_eq!(circles(&svg).len(), 1);
    }

    #[test]
    fn row_count_matches_report() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(&[(1.0, 2.0), (-40.0, -38.0), (70.0, 60.0), (5.0, 5.0)]);
        let f = scatter_export(&r, Angle::Yaw, &dir.path().join("sub/yaw")).unwrap();
        let rows = std::fs::read_to_string(&f.csv).unwrap().lines().count() - 1;
        assert_eq!(rows, r.count);
    }

    #[test]
    fn zero_error_points_sit_on_the_x_axis() {
        let dir = tempfile::tempdir().unwrap();
        let f = scatter_export(&report(&[(-20.0, -20.0), (0.0, 0.0), (35.0, 35.0)]), Angle::Yaw, &dir.path().join("z")).unwrap();
        let svg = std::fs::read_to_string(&f.svg).unwrap();
        let axis_y = HEIGHT - MARGIN_BOTTOM;
        assert!(circles(&svg).iter().all(|(_, cy)| (cy - axis_y).abs() < 1e-9));
    }
}
