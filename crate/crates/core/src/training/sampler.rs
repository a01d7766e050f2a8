//! Equal-relation batch sampling.
//!
//! Batches draw from every populated relation with per-relation counts
//! differing by at most one, so the contrast denominators always see
//! every relation. Within a relation, statements are drawn uniformly
//! without replacement and the pool reshuffles once exhausted.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{RelationId, StatementSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BatchSampler {
    batch_size: usize,
    relations: Vec<RelationId>,
    pools: Vec<Vec<usize>>,
    queues: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    /// `batch_size` must be at least the number of populated relations
    /// so every batch can cover all of them.
    pub fn new(set: &StatementSet, batch_size: usize, seed: u64) -> Result<Self> {
        let relations = set.populated_relations();
        if relations.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot sample batches from an empty statement set".to_string(),
            ));
        }
        if batch_size < relations.len() {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} is smaller than the {} populated relations; \
                 equal-relation batches need every relation represented",
                relations.len()
            )));
        }
        let mut pools = vec![Vec::new(); relations.len()];
        for (i, s) in set.statements.iter().enumerate() {
            if let Ok(slot) = relations.binary_search(&s.relation) {
                pools[slot].push(i);
            }
        }
        let queues = vec![Vec::new(); pools.len()];
        Ok(Self {
            batch_size,
            relations,
            pools,
            queues,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    /// Statement indices of the next batch.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let k = self.relations.len();
        let base = self.batch_size / k;
        let extras = self.batch_size % k;
        // Which relations get one extra statement this batch.
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut self.rng);
        let mut counts = vec![base; k];
        for &slot in order.iter().take(extras) {
            counts[slot] += 1;
        }
        let mut batch = Vec::with_capacity(self.batch_size);
        for slot in 0..k {
            for _ in 0..counts[slot] {
                if self.queues[slot].is_empty() {
                    let mut refill = self.pools[slot].clone();
                    refill.shuffle(&mut self.rng);
                    self.queues[slot] = refill;
                }
                batch.push(self.queues[slot].pop().expect("nonempty queue"));
            }
        }
        batch
    }
}
