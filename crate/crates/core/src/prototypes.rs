//! Per-relation prototype vectors: storage, initialization,
//! nearest-prototype queries, and the fixed surrogate prototypes with
//! per-statement weights.
//!
//! A prototype is a unit vector in the embedding space; statements of
//! the relation cluster around it on the unit ball. Rows are
//! renormalized after every optimizer step so the stored values keep
//! that reading.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{RelationId, StatementSet};
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};
use crate::metric::similarity;
use crate::vecmath::{dot, mean_rows, norm, normalized};

/// K unit vectors, row k for relation id k.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeStore {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

/// Frozen per-statement weights in `[0, 1]` used by the independent
/// prototype baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct IndWeights(pub Vec<f64>);

/// How to initialize a store.
pub enum InitScheme<'a> {
    /// Rows i.i.d. standard normal, then normalized.
    RandomUnit,
    /// Row k is the normalized mean of the encoded statements labeled k.
    ClassMean {
        encoder: &'a EncoderModel,
        set: &'a StatementSet,
    },
}

impl PrototypeStore {
    pub fn num_relations(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, relation: RelationId) -> Result<&[f64]> {
        self.rows
            .get(relation)
            .map(|r| r.as_slice())
            .ok_or(Error::MissingPrototype { relation })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension {
                    context: "prototype row",
                    expected: dim,
                    got: row.len(),
                });
            }
            if norm(row) == 0.0 {
                return Err(Error::InvalidArgument(format!("prototype {k} is zero")));
            }
        }
        Ok(Self { dim, rows })
    }

    /// Flat row-major view of all rows; the optimizer updates this.
    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.rows.len() * self.dim {
            return Err(Error::Dimension {
                context: "prototype store",
                expected: self.rows.len() * self.dim,
                got: values.len(),
            });
        }
        for (k, row) in self.rows.iter_mut().enumerate() {
            row.copy_from_slice(&values[k * self.dim..(k + 1) * self.dim]);
        }
        Ok(())
    }

    /// Rescale every row to unit length. Called after each optimizer
    /// step; only the direction of a prototype carries meaning.
    pub fn renormalize(&mut self) -> Result<()> {
        for (k, row) in self.rows.iter_mut().enumerate() {
            match normalized(row) {
                Some(unit) => *row = unit,
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "prototype {k} collapsed to zero"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Smallest pairwise angle between prototype rows, in radians.
    pub fn min_pairwise_angle(&self) -> f64 {
        let mut min = std::f64::consts::PI;
        for i in 0..self.rows.len() {
            for j in (i + 1)..self.rows.len() {
                let ui = normalized(&self.rows[i]).expect("nonzero prototype");
                let uj = normalized(&self.rows[j]).expect("nonzero prototype");
                let angle = dot(&ui, &uj).clamp(-1.0, 1.0).acos();
                min = min.min(angle);
            }
        }
        min
    }
}

/// Initialize a store of `k` prototypes of dimension `m`.
pub fn init_prototypes(k: usize, m: usize, seed: u64, scheme: InitScheme) -> Result<PrototypeStore> {
    if k == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "prototype store needs k >= 1 and m >= 1".to_string(),
        ));
    }
    match scheme {
        InitScheme::RandomUnit => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = (0..k)
                .map(|_| {
                    loop {
                        let row: Vec<f64> =
                            (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
                        if let Some(unit) = normalized(&row) {
                            return unit;
                        }
                    }
                })
                .collect();
            PrototypeStore::from_rows(rows)
        }
        InitScheme::ClassMean { encoder, set } => {
            let mut rows = Vec::with_capacity(k);
            for relation in 0..k {
                let class: Vec<Vec<f64>> = set
                    .statements
                    .iter()
                    .filter(|s| s.relation == relation)
                    .map(|s| encoder.encode(s))
                    .collect::<Result<_>>()?;
                let mean = mean_rows(&class).ok_or_else(|| Error::Relation {
                    name: set
                        .relation_vocab
                        .get(relation)
                        .cloned()
                        .unwrap_or_else(|| format!("id {relation}")),
                    problem: "has no statements for class-mean initialization".to_string(),
                })?;
                let unit = normalized(&mean).ok_or_else(|| Error::Relation {
                    name: set.relation_vocab[relation].clone(),
                    problem: "class-mean embedding is zero".to_string(),
                })?;
                rows.push(unit);
            }
            PrototypeStore::from_rows(rows)
        }
    }
}

/// Relation id whose prototype is most similar to `s`; ties break to the
/// lowest id.
pub fn nearest_prototype(store: &PrototypeStore, s: &[f64]) -> Result<RelationId> {
    if norm(s) == 0.0 {
        return Err(Error::ZeroNorm {
            context: "nearest_prototype",
        });
    }
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (k, row) in store.rows.iter().enumerate() {
        let sim = similarity(s, row)?;
        if sim > best_sim {
            best_sim = sim;
            best = k;
        }
    }
    Ok(best)
}

/// Cosine between two nonzero vectors, clamped into `[0, 1]` so that 0
/// means "no contribution".
pub(crate) fn clamped_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let ua = normalized(a).ok_or(Error::ZeroNorm {
        context: "clamped_cosine",
    })?;
    let ub = normalized(b).ok_or(Error::ZeroNorm {
        context: "clamped_cosine",
    })?;
    Ok(dot(&ua, &ub).clamp(0.0, 1.0))
}

/// Fixed prototypes and weights for the independent-prototype baseline:
/// class means under a frozen initial encoder, with each statement
/// weighted by its clamped cosine to its own class prototype. Computed
/// once and never updated. Every vocabulary relation must be populated.
pub fn surrogate_ind_prototypes(
    encoder: &EncoderModel,
    set: &StatementSet,
) -> Result<(PrototypeStore, IndWeights)> {
    let store = init_prototypes(
        set.num_relations(),
        encoder.spec.output_dim,
        0,
        InitScheme::ClassMean { encoder, set },
    )?;
    let mut weights = Vec::with_capacity(set.len());
    for s in &set.statements {
        let embedding = encoder.encode(s)?;
        weights.push(clamped_cosine(&embedding, store.row(s.relation)?)?);
    }
    Ok((store, IndWeights(weights)))
}
