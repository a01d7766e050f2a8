//! Standalone SVG emission: embedding scatter plots with prototype
//! stars, and iris boundary panels. Output is byte-deterministic in the
//! inputs.

use std::path::Path;

use crate::boundary::LinearBoundary;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const PLOT_X0: f64 = 45.0;
const PLOT_Y0: f64 = 20.0;
const PLOT_X1: f64 = 490.0;
const PLOT_Y1: f64 = 450.0;

/// Fixed ten-color palette; label `l` uses `PALETTE[l % 10]`.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

struct Frame {
    min: [f64; 2],
    max: [f64; 2],
}

impl Frame {
    fn around<'a>(point_sets: impl Iterator<Item = &'a [f64; 2]>) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in point_sets {
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        // 5% padding; a degenerate axis widens to a unit band.
        for k in 0..2 {
            if !min[k].is_finite() || !max[k].is_finite() {
                min[k] = 0.0;
                max[k] = 1.0;
            }
            let range = max[k] - min[k];
            let pad = if range > 0.0 { 0.05 * range } else { 0.5 };
            min[k] -= pad;
            max[k] += pad;
        }
        Self { min, max }
    }

    fn to_px(&self, p: [f64; 2]) -> (f64, f64) {
        let fx = (p[0] - self.min[0]) / (self.max[0] - self.min[0]);
        let fy = (p[1] - self.min[1]) / (self.max[1] - self.min[1]);
        (
            PLOT_X0 + fx * (PLOT_X1 - PLOT_X0),
            // SVG y grows downward.
            PLOT_Y1 - fy * (PLOT_Y1 - PLOT_Y0),
        )
    }

    /// Clip `w . x + b = 0` to the frame, in data coordinates.
    fn clip_line(&self, boundary: &LinearBoundary) -> Option<([f64; 2], [f64; 2])> {
        let [w0, w1] = boundary.normal;
        let b = boundary.offset;
        let mut hits: Vec<[f64; 2]> = Vec::new();
        let mut push = |p: [f64; 2]| {
            if hits
                .iter()
                .all(|q| (q[0] - p[0]).abs() > 1e-9 || (q[1] - p[1]).abs() > 1e-9)
            {
                hits.push(p);
            }
        };
        if w1 != 0.0 {
            for x in [self.min[0], self.max[0]] {
                let y = -(b + w0 * x) / w1;
                if y >= self.min[1] && y <= self.max[1] {
                    push([x, y]);
                }
            }
        }
        if w0 != 0.0 {
            for y in [self.min[1], self.max[1]] {
                let x = -(b + w1 * y) / w0;
                if x >= self.min[0] && x <= self.max[0] {
                    push([x, y]);
                }
            }
        }
        if hits.len() >= 2 {
            Some((hits[0], hits[1]))
        } else {
            None
        }
    }
}

fn header(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"{PLOT_X0}\" y=\"{PLOT_Y0}\" width=\"{:.2}\" height=\"{:.2}\" \
         fill=\"white\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
        PLOT_X1 - PLOT_X0,
        PLOT_Y1 - PLOT_Y0
    ));
}

fn star_path(cx: f64, cy: f64) -> String {
    let outer = 7.0;
    let inner = 3.0;
    let mut d = String::new();
    for i in 0..10 {
        let r = if i % 2 == 0 { outer } else { inner };
        let angle = -std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 5.0;
        let (x, y) = (cx + r * angle.cos(), cy + r * angle.sin());
        if i == 0 {
            d.push_str(&format!("M {x:.2} {y:.2}"));
        } else {
            d.push_str(&format!(" L {x:.2} {y:.2}"));
        }
    }
    d.push_str(" Z");
    d
}

fn legend(out: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = PLOT_Y0 + 12.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"11\" height=\"11\" fill=\"{}\"/>\n",
            PLOT_X1 + 10.0,
            y - 9.0,
            PALETTE[i % PALETTE.len()]
        ));
        out.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            PLOT_X1 + 26.0,
            y,
            name
        ));
    }
}

/// Scatter plot: one circle per point colored by label, one star per
/// prototype, and a legend of relation names.
pub fn scatter_svg(
    points: &[[f64; 2]],
    labels: &[usize],
    relation_names: &[String],
    prototypes: &[[f64; 2]],
) -> Result<String> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "scatter plot needs at least one point".to_string(),
        ));
    }
    if points.len() != labels.len() {
        return Err(Error::Dimension {
            context: "scatter labels",
            expected: points.len(),
            got: labels.len(),
        });
    }
    let frame = Frame::around(points.iter().chain(prototypes.iter()));
    let mut out = String::new();
    header(&mut out);
    for (p, &l) in points.iter().zip(labels) {
        let (x, y) = frame.to_px(*p);
        out.push_str(&format!(
            "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            PALETTE[l % PALETTE.len()]
        ));
    }
    for (k, z) in prototypes.iter().enumerate() {
        let (x, y) = frame.to_px(*z);
        out.push_str(&format!(
            "  <path d=\"{}\" fill=\"{}\" stroke=\"#222222\" stroke-width=\"1\"/>\n",
            star_path(x, y),
            PALETTE[k % PALETTE.len()]
        ));
    }
    legend(&mut out, relation_names);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Write a scatter plot to `path`.
pub fn emit_svg_scatter(
    points: &[[f64; 2]],
    labels: &[usize],
    relation_names: &[String],
    prototypes: &[[f64; 2]],
    path: impl AsRef<Path>,
) -> Result<()> {
    let svg = scatter_svg(points, labels, relation_names, prototypes)?;
    std::fs::write(path, svg)?;
    Ok(())
}

/// One iris panel: points colored by binary label, the clean-fit
/// boundary drawn thick, each noisy-fit boundary drawn thin.
pub fn boundary_panel_svg(
    points: &[[f64; 2]],
    labels: &[f64],
    clean: &LinearBoundary,
    noisy: &[LinearBoundary],
) -> String {
    let frame = Frame::around(points.iter());
    let mut out = String::new();
    header(&mut out);
    for boundary in noisy {
        if let Some((a, b)) = frame.clip_line(boundary) {
            let (x1, y1) = frame.to_px(a);
            let (x2, y2) = frame.to_px(b);
            out.push_str(&format!(
                "  <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
                 stroke=\"#d62728\" stroke-width=\"0.6\" stroke-opacity=\"0.45\"/>\n"
            ));
        }
    }
    if let Some((a, b)) = frame.clip_line(clean) {
        let (x1, y1) = frame.to_px(a);
        let (x2, y2) = frame.to_px(b);
        out.push_str(&format!(
            "  <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
             stroke=\"#111111\" stroke-width=\"2.5\"/>\n"
        ));
    }
    for (p, &l) in points.iter().zip(labels) {
        let color = if l > 0.0 { PALETTE[0] } else { PALETTE[1] };
        let (x, y) = frame.to_px(*p);
        out.push_str(&format!(
            "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.5\" fill=\"{color}\" \
             fill-opacity=\"0.8\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn element_counts_match_inputs() {
        let svg = scatter_svg(
            &[[0.0, 0.0], [1.0, 1.0]],
            &[0, 1],
            &["a".to_string(), "b".to_string()],
            &[[0.5, 0.5]],
        )
        .unwrap();
        assert_eq!(count(&svg, "<circle"), 2);
        assert_eq!(count(&svg, "<path"), 1);
    }

    #[test]
    fn no_prototypes_is_still_valid() {
        let svg = scatter_svg(
            &[[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]],
            &[0, 0, 1],
            &["a".to_string(), "b".to_string()],
            &[],
        )
        .unwrap();
        assert_eq!(count(&svg, "<path"), 0);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let make = || {
            scatter_svg(
                &[[0.3, -0.2], [1.4, 2.2], [0.0, 0.9]],
                &[0, 1, 2],
                &["x".to_string(), "y".to_string(), "z".to_string()],
                &[[0.1, 0.1], [1.0, 1.0]],
            )
            .unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn empty_points_are_rejected() {
        assert!(scatter_svg(&[], &[], &[], &[]).is_err());
    }

    #[test]
    fn boundary_panel_draws_lines_inside_the_frame() {
        let points = vec![[0.0, 0.0], [2.0, 2.0], [0.0, 2.0], [2.0, 0.0]];
        let labels = vec![1.0, -1.0, 1.0, -1.0];
        let clean = LinearBoundary {
            normal: [1.0, -1.0],
            offset: 0.0,
        };
        let noisy = vec![LinearBoundary {
            normal: [1.0, -0.8],
            offset: 0.1,
        }];
        let svg = boundary_panel_svg(&points, &labels, &clean, &noisy);
        assert_eq!(count(&svg, "<line"), 2);
        assert_eq!(count(&svg, "<circle"), 4);
    }

    #[test]
    fn off_frame_boundary_is_skipped() {
        let points = vec![[0.0, 0.0], [1.0, 1.0]];
        let labels = vec![1.0, -1.0];
        let far = LinearBoundary {
            normal: [1.0, 0.0],
            offset: -100.0,
        };
        let svg = boundary_panel_svg(&points, &labels, &far, &[]);
        assert_eq!(count(&svg, "<line"), 0);
    }
}
