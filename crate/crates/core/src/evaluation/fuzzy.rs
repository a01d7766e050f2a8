//! Fuzzy relation evaluation: separate true positives from false
//! positives with no supervision beyond the encoder.
//!
//! Per relation, the threshold `T` is the minimum pairwise similarity
//! among true positives (excluding the instance under test). Each
//! instance is scored by the mean similarity to `k` sampled true
//! positives; it counts as positive iff the mean strictly exceeds `T`.
//! The instance-level prediction is the majority over the resamples;
//! the mean per-resample accuracy is reported alongside, as is the
//! accept-everything baseline whose accuracy equals the true-positive
//! fraction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{RelationId, StatementSet};
use crate::encoder::StatementEncoder;
use crate::error::{Error, Result};
use crate::metric::similarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzyConfig {
    pub k_shot: usize,
    pub resamples: usize,
}

impl FuzzyConfig {
    pub fn new(k_shot: usize) -> Self {
        Self {
            k_shot,
            resamples: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_shot == 0 || self.resamples == 0 {
            return Err(Error::InvalidArgument(
                "fuzzy evaluation needs k_shot >= 1 and resamples >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Minimum pairwise similarity among a pool of embeddings.
pub fn min_pairwise_similarity(embeddings: &[Vec<f64>]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "threshold needs at least 2 true positives, got {}",
            embeddings.len()
        )));
    }
    let mut min = f64::INFINITY;
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            min = min.min(similarity(&embeddings[i], &embeddings[j])?);
        }
    }
    Ok(min)
}

/// The relation's threshold: minimum pairwise similarity among its
/// `expresses = true` statements.
pub fn fuzzy_threshold(
    encoder: &dyn StatementEncoder,
    set: &StatementSet,
    relation: RelationId,
) -> Result<f64> {
    let tps: Vec<Vec<f64>> = set
        .statements
        .iter()
        .enumerate()
        .filter(|(_, s)| s.relation == relation && s.expresses == Some(true))
        .map(|(i, s)| encoder.encode_statement(i, s))
        .collect::<Result<_>>()?;
    min_pairwise_similarity(&tps)
}

#[derive(Debug, Clone)]
pub struct FuzzyRelationScore {
    pub relation: String,
    pub instances: usize,
    pub true_positives: usize,
    pub majority_accuracy: f64,
    pub resample_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct FuzzyReport {
    pub instances: usize,
    /// Accuracy of the per-instance majority decision.
    pub majority_accuracy: f64,
    /// Mean accuracy over every individual resample.
    pub resample_accuracy: f64,
    /// Accept-everything baseline: the true-positive fraction.
    pub ds_baseline: f64,
    pub per_relation: Vec<FuzzyRelationScore>,
}

/// Classify every labeled instance as expressing its relation or not.
/// Instance `i` draws its resamples from RNG stream `(seed, i)`, so the
/// outcome does not depend on evaluation order.
pub fn eval_fuzzy(
    encoder: &dyn StatementEncoder,
    set: &StatementSet,
    config: &FuzzyConfig,
    seed: u64,
) -> Result<FuzzyReport> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::InvalidArgument(
            "fuzzy evaluation needs a nonempty set".to_string(),
        ));
    }
    let k = config.k_shot;
    let mut by_relation: Vec<Vec<usize>> = vec![Vec::new(); set.num_relations()];
    for (i, s) in set.statements.iter().enumerate() {
        by_relation[s.relation].push(i);
    }

    let mut total_instances = 0usize;
    let mut total_tp = 0usize;
    let mut total_majority_correct = 0usize;
    let mut total_resample_correct = 0u64;
    let mut per_relation = Vec::new();

    for (relation, instances) in by_relation.iter().enumerate() {
        if instances.is_empty() {
            continue;
        }
        let name = set.relation_vocab[relation].clone();
        let flags: Vec<bool> = instances
            .iter()
            .map(|&i| {
                set.statements[i].expresses.ok_or_else(|| Error::InvalidStatement {
                    index: i,
                    message: "fuzzy evaluation needs an expresses flag".to_string(),
                })
            })
            .collect::<Result<_>>()?;
        let tp_slots: Vec<usize> = (0..instances.len()).filter(|&s| flags[s]).collect();
        let required = (k + 1).max(3);
        if tp_slots.len() < required {
            return Err(Error::Relation {
                name,
                problem: format!(
                    "has {} true positives; fuzzy evaluation at k = {k} needs at least {required}",
                    tp_slots.len()
                ),
            });
        }
        let embeddings: Vec<Vec<f64>> = instances
            .iter()
            .map(|&i| encoder.encode_statement(i, &set.statements[i]))
            .collect::<Result<_>>()?;
        // Pairwise similarities among true positives, and every
        // instance's similarity to every true positive.
        let t = tp_slots.len();
        let mut tp_sim = vec![vec![0.0; t]; t];
        for a in 0..t {
            for b in (a + 1)..t {
                let sim = similarity(&embeddings[tp_slots[a]], &embeddings[tp_slots[b]])?;
                tp_sim[a][b] = sim;
                tp_sim[b][a] = sim;
            }
        }
        let mut inst_sim = vec![vec![0.0; t]; instances.len()];
        for slot in 0..instances.len() {
            for (a, &tp_slot) in tp_slots.iter().enumerate() {
                inst_sim[slot][a] = if tp_slot == slot {
                    f64::NAN // never sampled; the pool excludes the instance
                } else {
                    similarity(&embeddings[slot], &embeddings[tp_slot])?
                };
            }
        }

        let mut majority_correct = 0usize;
        let mut resample_correct = 0u64;
        for (slot, &index) in instances.iter().enumerate() {
            // Sampling pool: true positives other than this instance.
            let pool: Vec<usize> = (0..t).filter(|&a| tp_slots[a] != slot).collect();
            let mut threshold = f64::INFINITY;
            for (pa, &a) in pool.iter().enumerate() {
                for &b in &pool[pa + 1..] {
                    threshold = threshold.min(tp_sim[a][b]);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let mut positives = 0usize;
            for _ in 0..config.resamples {
                let draw = rand::seq::index::sample(&mut rng, pool.len(), k);
                let mean: f64 = draw
                    .iter()
                    .map(|d| inst_sim[slot][pool[d]])
                    .sum::<f64>()
                    / k as f64;
                if mean > threshold {
                    positives += 1;
                }
            }
            let majority_positive = 2 * positives > config.resamples;
            if majority_positive == flags[slot] {
                majority_correct += 1;
            }
            let correct_resamples = if flags[slot] {
                positives
            } else {
                config.resamples - positives
            };
            resample_correct += correct_resamples as u64;
        }

        total_instances += instances.len();
        total_tp += tp_slots.len();
        total_majority_correct += majority_correct;
        total_resample_correct += resample_correct;
        per_relation.push(FuzzyRelationScore {
            relation: name,
            instances: instances.len(),
            true_positives: tp_slots.len(),
            majority_accuracy: majority_correct as f64 / instances.len() as f64,
            resample_accuracy: resample_correct as f64
                / (instances.len() * config.resamples) as f64,
        });
    }

    Ok(FuzzyReport {
        instances: total_instances,
        majority_accuracy: total_majority_correct as f64 / total_instances as f64,
        resample_accuracy: total_resample_correct as f64
            / (total_instances * config.resamples) as f64,
        ds_baseline: total_tp as f64 / total_instances as f64,
        per_relation,
    })
}
