//! The embedded iris table and binary two-feature views of it.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const IRIS_CSV: &str = include_str!("iris_data.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    Setosa,
    Versicolor,
    Virginica,
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Species::Setosa => "setosa",
            Species::Versicolor => "versicolor",
            Species::Virginica => "virginica",
        };
        f.write_str(name)
    }
}

impl FromStr for Species {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "setosa" => Ok(Species::Setosa),
            "versicolor" => Ok(Species::Versicolor),
            "virginica" => Ok(Species::Virginica),
            other => Err(Error::Parse(format!("unknown iris species `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    SepalLength,
    SepalWidth,
    PetalLength,
    PetalWidth,
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Feature::SepalLength => "sepal_length",
            Feature::SepalWidth => "sepal_width",
            Feature::PetalLength => "petal_length",
            Feature::PetalWidth => "petal_width",
        };
        f.write_str(name)
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sepal_length" => Ok(Feature::SepalLength),
            "sepal_width" => Ok(Feature::SepalWidth),
            "petal_length" => Ok(Feature::PetalLength),
            "petal_width" => Ok(Feature::PetalWidth),
            other => Err(Error::Parse(format!("unknown iris feature `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrisRow {
    pub measurements: [f64; 4],
    pub species: Species,
}

impl IrisRow {
    pub fn get(&self, feature: Feature) -> f64 {
        let idx = match feature {
            Feature::SepalLength => 0,
            Feature::SepalWidth => 1,
            Feature::PetalLength => 2,
            Feature::PetalWidth => 3,
        };
        self.measurements[idx]
    }
}

/// The 150-row iris table, 50 rows per species.
#[derive(Debug, Clone)]
pub struct IrisTable {
    pub rows: Vec<IrisRow>,
}

/// Default class pair for binary tasks: not perfectly separable, so
/// boundary distortion is visible.
pub const DEFAULT_CLASSES: (Species, Species) = (Species::Versicolor, Species::Virginica);
/// Default feature pair for binary tasks.
pub const DEFAULT_FEATURES: (Feature, Feature) = (Feature::PetalLength, Feature::PetalWidth);

/// A two-feature binary view: points in the plane with labels +1 for the
/// first class of the pair and -1 for the second.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryView {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<f64>,
    pub classes: (Species, Species),
    pub features: (Feature, Feature),
}

impl IrisTable {
    pub fn species_count(&self, species: Species) -> usize {
        self.rows.iter().filter(|r| r.species == species).count()
    }

    pub fn binary_view(
        &self,
        classes: (Species, Species),
        features: (Feature, Feature),
    ) -> BinaryView {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for row in &self.rows {
            let label = if row.species == classes.0 {
                1.0
            } else if row.species == classes.1 {
                -1.0
            } else {
                continue;
            };
            points.push([row.get(features.0), row.get(features.1)]);
            labels.push(label);
        }
        BinaryView {
            points,
            labels,
            classes,
            features,
        }
    }
}

/// Parse the embedded table. Always 150 rows, 50 per species.
pub fn load_iris() -> IrisTable {
    let mut rows = Vec::with_capacity(150);
    for line in IRIS_CSV.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5, "malformed embedded iris row: {line}");
        let mut measurements = [0.0; 4];
        for (m, field) in measurements.iter_mut().zip(&fields[..4]) {
            *m = field.parse().expect("embedded iris value");
        }
        let species = fields[4].parse().expect("embedded iris species");
        rows.push(IrisRow {
            measurements,
            species,
        });
    }
    assert_eq!(rows.len(), 150, "embedded iris table must have 150 rows");
    IrisTable { rows }
}
