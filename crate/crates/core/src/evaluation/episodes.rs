//! N-way K-shot episodes: sampling, episodic training, and inference.
//!
//! Training scores a query against each way by the mean similarity to
//! that way's supports and applies cross-entropy over those logits.
//! Inference picks the single most similar support; the two rules agree
//! exactly at one shot.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{RelationId, StatementSet};
use crate::encoder::{EncoderGrads, StatementEncoder, PARAM_EMBED, PARAM_PROJ_B, PARAM_PROJ_W};
use crate::error::{Error, Result};
use crate::losses;
use crate::metric::{similarity, similarity_grad};
use crate::training::{Checkpoint, SgdMomentum};
use crate::vecmath::add_scaled;

/// One sampled N-way K-shot task: supports and queries are disjoint
/// statement indices into the owning set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub n_way: usize,
    pub k_shot: usize,
    /// The sampled relation ids, ascending; way `w` is `relations[w]`.
    pub relations: Vec<RelationId>,
    /// `n_way` lists of `k_shot` support statement indices.
    pub supports: Vec<Vec<usize>>,
    /// `(statement index, way)` pairs with gold ways.
    pub queries: Vec<(usize, usize)>,
}

/// Sample an episode: `n_way` relations uniformly without replacement
/// among those with at least `k_shot + n_queries` statements, then
/// disjoint supports and queries uniformly within each.
pub fn sample_episode(
    set: &StatementSet,
    n_way: usize,
    k_shot: usize,
    n_queries: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 || n_queries == 0 {
        return Err(Error::InvalidArgument(
            "episodes need n_way, k_shot, and n_queries of at least 1".to_string(),
        ));
    }
    let mut pools: Vec<(RelationId, Vec<usize>)> = Vec::new();
    {
        let mut by_relation = vec![Vec::new(); set.num_relations()];
        for (i, s) in set.statements.iter().enumerate() {
            by_relation[s.relation].push(i);
        }
        for (r, pool) in by_relation.into_iter().enumerate() {
            if !pool.is_empty() {
                pools.push((r, pool));
            }
        }
    }
    if pools.len() < n_way {
        return Err(Error::InvalidArgument(format!(
            "{n_way}-way episodes need {n_way} relations, only {} have statements",
            pools.len()
        )));
    }
    let required = k_shot + n_queries;
    let eligible: Vec<usize> = (0..pools.len())
        .filter(|&p| pools[p].1.len() >= required)
        .collect();
    if eligible.len() < n_way {
        // Name the best-populated relation that still falls short.
        let limiting = (0..pools.len())
            .filter(|&p| pools[p].1.len() < required)
            .max_by_key(|&p| pools[p].1.len())
            .expect("some relation is ineligible");
        return Err(Error::Relation {
            name: set.relation_vocab[pools[limiting].0].clone(),
            problem: format!(
                "has {} statements but {n_way}-way {k_shot}-shot episodes with {n_queries} \
                 queries need {required}",
                pools[limiting].1.len()
            ),
        });
    }
    let mut chosen: Vec<usize> = rand::seq::index::sample(rng, eligible.len(), n_way)
        .into_iter()
        .map(|e| eligible[e])
        .collect();
    chosen.sort_by_key(|&p| pools[p].0);

    let mut relations = Vec::with_capacity(n_way);
    let mut supports = Vec::with_capacity(n_way);
    let mut queries = Vec::new();
    for (way, &p) in chosen.iter().enumerate() {
        let (relation, pool) = &pools[p];
        relations.push(*relation);
        let drawn: Vec<usize> = rand::seq::index::sample(rng, pool.len(), required)
            .into_iter()
            .map(|x| pool[x])
            .collect();
        supports.push(drawn[..k_shot].to_vec());
        for &q in &drawn[k_shot..] {
            queries.push((q, way));
        }
    }
    Ok(Episode {
        n_way,
        k_shot,
        relations,
        supports,
        queries,
    })
}

fn encode_indices(
    encoder: &dyn StatementEncoder,
    set: &StatementSet,
    indices: impl Iterator<Item = usize>,
) -> Result<Vec<(usize, Vec<f64>)>> {
    indices
        .map(|i| Ok((i, encoder.encode_statement(i, &set.statements[i])?)))
        .collect()
}

/// Training-rule logits: one row per query, `logit[way]` is the mean
/// similarity to that way's supports.
pub fn fewshot_logits(
    encoder: &dyn StatementEncoder,
    set: &StatementSet,
    episode: &Episode,
) -> Result<Vec<Vec<f64>>> {
    let support_embeds: Vec<Vec<Vec<f64>>> = episode
        .supports
        .iter()
        .map(|way| {
            way.iter()
                .map(|&i| encoder.encode_statement(i, &set.statements[i]))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(episode.queries.len());
    for &(q, _) in &episode.queries {
        let q_embed = encoder.encode_statement(q, &set.statements[q])?;
        let mut row = Vec::with_capacity(episode.n_way);
        for way in &support_embeds {
            let mut total = 0.0;
            for s in way {
                total += similarity(&q_embed, s)?;
            }
            row.push(total / way.len() as f64);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Inference rule: each query takes the relation of its single most
/// similar support; exact ties go to the lowest relation id.
pub fn fewshot_predict(
    encoder: &dyn StatementEncoder,
    set: &StatementSet,
    episode: &Episode,
) -> Result<Vec<RelationId>> {
    let support_embeds: Vec<Vec<Vec<f64>>> = episode
        .supports
        .iter()
        .map(|way| {
            way.iter()
                .map(|&i| encoder.encode_statement(i, &set.statements[i]))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut predictions = Vec::with_capacity(episode.queries.len());
    for &(q, _) in &episode.queries {
        let q_embed = encoder.encode_statement(q, &set.statements[q])?;
        let mut best_way = 0;
        let mut best = f64::NEG_INFINITY;
        // Ways ascend by relation id, so strict improvement implements
        // the lowest-id tie rule.
        for (way, embeds) in support_embeds.iter().enumerate() {
            for s in embeds {
                let sim = similarity(&q_embed, s)?;
                if sim > best {
                    best = sim;
                    best_way = way;
                }
            }
        }
        predictions.push(episode.relations[best_way]);
    }
    Ok(predictions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewshotTrainConfig {
    pub episodes: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub queries: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub warmup_steps: u64,
    pub seed: u64,
}

impl Default for FewshotTrainConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            n_way: 5,
            k_shot: 1,
            queries: 1,
            learning_rate: 0.02,
            momentum: 0.9,
            warmup_steps: 0,
            seed: 0,
        }
    }
}

/// Episodic fine-tuning: per episode, cross-entropy over the
/// mean-similarity logits, one optimizer step. Zero episodes return the
/// checkpoint unchanged.
pub fn fewshot_train(
    ckpt: &Checkpoint,
    train_set: &StatementSet,
    config: &FewshotTrainConfig,
) -> Result<Checkpoint> {
    let mut out = ckpt.clone();
    if config.episodes == 0 {
        return Ok(out);
    }
    let mut opt = SgdMomentum::new(config.learning_rate, config.momentum, config.warmup_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let encoder = &mut out.encoder;
    let m = encoder.spec.output_dim;
    for _ in 0..config.episodes {
        let episode = sample_episode(
            train_set,
            config.n_way,
            config.k_shot,
            config.queries,
            &mut rng,
        )?;
        let supports: Vec<Vec<(usize, Vec<f64>)>> = episode
            .supports
            .iter()
            .map(|way| encode_indices(&*encoder, train_set, way.iter().copied()))
            .collect::<Result<_>>()?;
        let queries =
            encode_indices(&*encoder, train_set, episode.queries.iter().map(|&(q, _)| q))?;

        let inv_l = 1.0 / config.k_shot as f64;
        let mut logits = vec![vec![0.0; episode.n_way]; queries.len()];
        for (slot, (_, q_embed)) in queries.iter().enumerate() {
            for (way, way_supports) in supports.iter().enumerate() {
                for (_, s_embed) in way_supports {
                    logits[slot][way] += inv_l * similarity(q_embed, s_embed)?;
                }
            }
        }
        let gold: Vec<usize> = episode.queries.iter().map(|&(_, way)| way).collect();
        let ce = losses::cross_entropy(&logits, &gold)?;
        if !ce.value.is_finite() {
            return Err(Error::NonFinite("few-shot episode loss".to_string()));
        }

        let mut query_grads = vec![vec![0.0; m]; queries.len()];
        let mut support_grads: Vec<Vec<Vec<f64>>> = supports
            .iter()
            .map(|way| vec![vec![0.0; m]; way.len()])
            .collect();
        for (slot, (_, q_embed)) in queries.iter().enumerate() {
            for (way, way_supports) in supports.iter().enumerate() {
                let upstream = ce.logit_grads[slot][way] * inv_l;
                if upstream == 0.0 {
                    continue;
                }
                for (s_slot, (_, s_embed)) in way_supports.iter().enumerate() {
                    let sg = similarity_grad(q_embed, s_embed)?;
                    add_scaled(&mut query_grads[slot], &sg.grad_a, upstream);
                    add_scaled(&mut support_grads[way][s_slot], &sg.grad_b, upstream);
                }
            }
        }
        let mut encoder_grads = EncoderGrads::zeros_like(encoder);
        for (slot, (i, _)) in queries.iter().enumerate() {
            encoder.backward(&train_set.statements[*i], &query_grads[slot], &mut encoder_grads)?;
        }
        for (way, way_supports) in supports.iter().enumerate() {
            for (s_slot, (i, _)) in way_supports.iter().enumerate() {
                encoder.backward(
                    &train_set.statements[*i],
                    &support_grads[way][s_slot],
                    &mut encoder_grads,
                )?;
            }
        }
        opt.apply(&mut [
            (PARAM_EMBED, &mut encoder.embed, &encoder_grads.embed),
            (PARAM_PROJ_W, &mut encoder.proj_w, &encoder_grads.proj_w),
            (PARAM_PROJ_B, &mut encoder.proj_b, &encoder_grads.proj_b),
        ])?;
    }
    out.step += config.episodes as u64;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FewshotReport {
    pub mean_accuracy: f64,
    pub per_episode: Vec<f64>,
}

/// Mean query accuracy over independently sampled episodes, one query
/// per way. Episode `e` draws from its own RNG stream `(seed, e)`.
pub fn eval_fewshot(
    encoder: &dyn StatementEncoder,
    set: &StatementSet,
    n_way: usize,
    k_shot: usize,
    episodes: usize,
    seed: u64,
) -> Result<FewshotReport> {
    if episodes == 0 {
        return Err(Error::InvalidArgument(
            "few-shot evaluation needs at least one episode".to_string(),
        ));
    }
    let mut per_episode = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(e as u64);
        let episode = sample_episode(set, n_way, k_shot, 1, &mut rng)?;
        let predictions = fewshot_predict(encoder, set, &episode)?;
        let correct = episode
            .queries
            .iter()
            .zip(&predictions)
            .filter(|(&(_, way), &p)| episode.relations[way] == p)
            .count();
        per_episode.push(correct as f64 / episode.queries.len() as f64);
    }
    let mean_accuracy = per_episode.iter().sum::<f64>() / episodes as f64;
    Ok(FewshotReport {
        mean_accuracy,
        per_episode,
    })
}
