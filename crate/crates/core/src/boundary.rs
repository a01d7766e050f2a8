//! Prototype-level vs instance-level decision boundaries on the iris
//! plane: fitting, label flipping, and distortion measurement.
//!
//! The prototype classifier assigns a point to the nearer class mean;
//! `sign(|x - z_minus|^2 - |x - z_plus|^2)` is equivalent to the linear
//! boundary `w = z_plus - z_minus`, `b = (|z_minus|^2 - |z_plus|^2) / 2`.
//! The instance-level classifier is full-batch logistic regression on
//! standardized features. Distortion between two boundaries is the
//! angle between their normals, orientation-insensitive.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::iris::{self, BinaryView, Feature, Species};
use crate::error::{Error, Result};
use crate::svg;
use crate::vecmath::sigmoid;

/// A line `w . x + b = 0` in the feature plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBoundary {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl LinearBoundary {
    pub fn validate(&self) -> Result<()> {
        if self.normal[0] == 0.0 && self.normal[1] == 0.0 {
            return Err(Error::InvalidArgument(
                "boundary normal must be nonzero".to_string(),
            ));
        }
        Ok(())
    }

    pub fn decision(&self, x: [f64; 2]) -> f64 {
        self.normal[0] * x[0] + self.normal[1] * x[1] + self.offset
    }

    /// Classify with ties to +1.
    pub fn classify(&self, x: [f64; 2]) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn accuracy(&self, points: &[[f64; 2]], labels: &[f64]) -> f64 {
        let correct = points
            .iter()
            .zip(labels)
            .filter(|(&p, &l)| self.classify(p) == l)
            .count();
        correct as f64 / points.len() as f64
    }
}

/// Class means of the +1 and -1 points.
pub fn mean_prototypes(points: &[[f64; 2]], labels: &[f64]) -> Result<([f64; 2], [f64; 2])> {
    let mut sums = [[0.0; 2]; 2];
    let mut counts = [0usize; 2];
    for (p, &l) in points.iter().zip(labels) {
        let slot = if l > 0.0 { 0 } else { 1 };
        sums[slot][0] += p[0];
        sums[slot][1] += p[1];
        counts[slot] += 1;
    }
    for (slot, sign) in [(0usize, "+1"), (1, "-1")] {
        if counts[slot] == 0 {
            return Err(Error::InvalidArgument(format!(
                "class {sign} has no points; both classes are needed for mean prototypes"
            )));
        }
    }
    Ok((
        [sums[0][0] / counts[0] as f64, sums[0][1] / counts[0] as f64],
        [sums[1][0] / counts[1] as f64, sums[1][1] / counts[1] as f64],
    ))
}

/// Nearer-prototype decision: +1 if `x` is closer to `z_plus`, -1 if
/// closer to `z_minus`, +1 on an exact tie.
pub fn proto_decision(z_plus: [f64; 2], z_minus: [f64; 2], x: [f64; 2]) -> f64 {
    let d = |z: [f64; 2]| (x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2);
    if d(z_minus) - d(z_plus) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// The linear form of the nearer-prototype decision.
pub fn proto_linear_form(z_plus: [f64; 2], z_minus: [f64; 2]) -> Result<LinearBoundary> {
    if z_plus == z_minus {
        return Err(Error::InvalidArgument(
            "equal prototypes give a degenerate boundary".to_string(),
        ));
    }
    let normal = [z_plus[0] - z_minus[0], z_plus[1] - z_minus[1]];
    let offset = ((z_minus[0].powi(2) + z_minus[1].powi(2))
        - (z_plus[0].powi(2) + z_plus[1].powi(2)))
        / 2.0;
    Ok(LinearBoundary { normal, offset })
}

/// Convenience: fit the prototype classifier end to end.
pub fn fit_prototype(points: &[[f64; 2]], labels: &[f64]) -> Result<LinearBoundary> {
    let (z_plus, z_minus) = mean_prototypes(points, labels)?;
    proto_linear_form(z_plus, z_minus)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub iterations: usize,
    pub rate: f64,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            rate: 0.1,
            l2: 1e-4,
        }
    }
}

/// Full-batch logistic regression on standardized features, boundary
/// returned in the original coordinates. Deterministic: zero init,
/// fixed iteration count.
pub fn fit_logistic(
    points: &[[f64; 2]],
    labels: &[f64],
    config: &LogisticConfig,
) -> Result<LinearBoundary> {
    if points.len() != labels.len() {
        return Err(Error::Dimension {
            context: "logistic labels",
            expected: points.len(),
            got: labels.len(),
        });
    }
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "logistic regression needs at least 2 points".to_string(),
        ));
    }
    if !labels.iter().any(|&l| l > 0.0) || !labels.iter().any(|&l| l < 0.0) {
        return Err(Error::InvalidArgument(
            "logistic regression needs both classes present".to_string(),
        ));
    }
    let n = points.len() as f64;
    let mut mean = [0.0; 2];
    for p in points {
        mean[0] += p[0] / n;
        mean[1] += p[1] / n;
    }
    let mut var = [0.0; 2];
    for p in points {
        var[0] += (p[0] - mean[0]).powi(2) / n;
        var[1] += (p[1] - mean[1]).powi(2) / n;
    }
    let std = [
        if var[0] > 1e-24 { var[0].sqrt() } else { 1.0 },
        if var[1] > 1e-24 { var[1].sqrt() } else { 1.0 },
    ];
    let standardized: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [(p[0] - mean[0]) / std[0], (p[1] - mean[1]) / std[1]])
        .collect();

    let mut w = [0.0f64; 2];
    let mut b = 0.0f64;
    for _ in 0..config.iterations {
        let mut gw = [config.l2 * w[0], config.l2 * w[1]];
        let mut gb = 0.0;
        for (x, &y) in standardized.iter().zip(labels) {
            let margin = y * (w[0] * x[0] + w[1] * x[1] + b);
            let pull = -y * sigmoid(-margin) / n;
            gw[0] += pull * x[0];
            gw[1] += pull * x[1];
            gb += pull;
        }
        w[0] -= config.rate * gw[0];
        w[1] -= config.rate * gw[1];
        b -= config.rate * gb;
    }

    let normal = [w[0] / std[0], w[1] / std[1]];
    let offset = b - w[0] * mean[0] / std[0] - w[1] * mean[1] / std[1];
    let boundary = LinearBoundary { normal, offset };
    boundary.validate().map_err(|_| {
        Error::InvalidArgument("logistic fit degenerated to a zero normal".to_string())
    })?;
    Ok(boundary)
}

/// Negate exactly `round(fraction * n)` labels, chosen uniformly.
pub fn flip_labels(labels: &[f64], fraction: f64, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "flip fraction must be in [0, 1], got {fraction}"
        )));
    }
    let n = labels.len();
    let flips = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, n, flips);
    let mut out = labels.to_vec();
    for i in chosen {
        out[i] = -out[i];
    }
    Ok(out)
}

/// Angle between two boundary normals in degrees, orientation-
/// insensitive, in `[0, 90]`. Bitwise-identical normals score exactly 0.
pub fn boundary_distortion(a: &LinearBoundary, b: &LinearBoundary) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    if a.normal == b.normal {
        return Ok(0.0);
    }
    let norm = |v: [f64; 2]| (v[0] * v[0] + v[1] * v[1]).sqrt();
    let (na, nb) = (norm(a.normal), norm(b.normal));
    let cos = ((a.normal[0] * b.normal[0] + a.normal[1] * b.normal[1]) / (na * nb))
        .abs()
        .clamp(0.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// One classifier in the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    Proto,
    Logistic,
}

impl Classifier {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classifier::Proto => "proto",
            Classifier::Logistic => "logistic",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryRun {
    pub seed: u64,
    pub noise: f64,
    pub classifier: Classifier,
    pub angle_deg: f64,
    pub clean_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryReport {
    pub runs: Vec<BoundaryRun>,
    pub clean_proto: LinearBoundary,
    pub clean_logistic: LinearBoundary,
}

impl BoundaryReport {
    pub fn median_angle(&self, classifier: Classifier, noise: f64) -> Option<f64> {
        let mut angles: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.classifier == classifier && r.noise == noise)
            .map(|r| r.angle_deg)
            .collect();
        if angles.is_empty() {
            return None;
        }
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = angles.len() / 2;
        Some(if angles.len() % 2 == 1 {
            angles[mid]
        } else {
            (angles[mid - 1] + angles[mid]) / 2.0
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,noise,classifier,angle_deg,clean_acc\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.seed,
                r.noise,
                r.classifier.as_str(),
                r.angle_deg,
                r.clean_accuracy
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryExperimentConfig {
    pub noise_fractions: Vec<f64>,
    pub seeds: u64,
    pub classes: (Species, Species),
    pub features: (Feature, Feature),
    pub logistic: LogisticConfig,
}

impl Default for BoundaryExperimentConfig {
    fn default() -> Self {
        Self {
            noise_fractions: vec![0.0, 0.2, 0.5],
            seeds: 100,
            classes: iris::DEFAULT_CLASSES,
            features: iris::DEFAULT_FEATURES,
            logistic: LogisticConfig::default(),
        }
    }
}

/// For every (noise, seed) cell, fit both classifiers on clean and on
/// flipped labels, recording the boundary distortion angle and each
/// noisy boundary's accuracy against the clean labels. With an output
/// directory, emits `runs.csv` and one scatter-plus-boundaries SVG per
/// (classifier, noise) panel.
pub fn run_boundary_experiment(
    config: &BoundaryExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<BoundaryReport> {
    let view: BinaryView = iris::load_iris().binary_view(config.classes, config.features);
    run_boundary_experiment_on(config, &view, out_dir)
}

/// Same experiment on an explicit binary dataset.
pub fn run_boundary_experiment_on(
    config: &BoundaryExperimentConfig,
    view: &BinaryView,
    out_dir: Option<&Path>,
) -> Result<BoundaryReport> {
    if config.seeds == 0 || config.noise_fractions.is_empty() {
        return Err(Error::InvalidArgument(
            "boundary experiment needs at least one seed and one noise fraction".to_string(),
        ));
    }
    let points = &view.points;
    let labels = &view.labels;
    let clean_proto = fit_prototype(points, labels)?;
    let clean_logistic = fit_logistic(points, labels, &config.logistic)?;

    let mut runs = Vec::new();
    let mut panels: Vec<(Classifier, f64, Vec<LinearBoundary>)> = Vec::new();
    for (noise_idx, &noise) in config.noise_fractions.iter().enumerate() {
        let mut proto_boundaries = Vec::new();
        let mut logistic_boundaries = Vec::new();
        for seed in 0..config.seeds {
            let cell_seed = seed.wrapping_add((noise_idx as u64) << 32);
            let flipped = flip_labels(labels, noise, cell_seed)?;
            let proto = fit_prototype(points, &flipped)?;
            let logistic = fit_logistic(points, &flipped, &config.logistic)?;
            runs.push(BoundaryRun {
                seed,
                noise,
                classifier: Classifier::Proto,
                angle_deg: boundary_distortion(&clean_proto, &proto)?,
                clean_accuracy: proto.accuracy(points, labels),
            });
            runs.push(BoundaryRun {
                seed,
                noise,
                classifier: Classifier::Logistic,
                angle_deg: boundary_distortion(&clean_logistic, &logistic)?,
                clean_accuracy: logistic.accuracy(points, labels),
            });
            proto_boundaries.push(proto);
            logistic_boundaries.push(logistic);
        }
        panels.push((Classifier::Proto, noise, proto_boundaries));
        panels.push((Classifier::Logistic, noise, logistic_boundaries));
    }

    let report = BoundaryReport {
        runs,
        clean_proto,
        clean_logistic,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("runs.csv"), report.to_csv())?;
        for (classifier, noise, boundaries) in &panels {
            let clean = match classifier {
                Classifier::Proto => &report.clean_proto,
                Classifier::Logistic => &report.clean_logistic,
            };
            let svg = svg::boundary_panel_svg(points, labels, clean, boundaries);
            let name = format!("boundary_{}_{}.svg", classifier.as_str(), noise);
            std::fs::write(dir.join(name), svg)?;
        }
    }
    Ok(report)
}
