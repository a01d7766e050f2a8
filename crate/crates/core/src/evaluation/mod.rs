//! Downstream harnesses: supervised fine-tuning and scoring, episodic
//! few-shot training/inference, zero-shot, and fuzzy relation
//! evaluation.

pub mod episodes;
pub mod fuzzy;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::StatementSet;
use crate::encoder::{EncoderGrads, EncoderModel, StatementEncoder, PARAM_EMBED, PARAM_PROJ_B, PARAM_PROJ_W};
use crate::error::{Error, Result};
use crate::losses::{self, LinearSoftmax};
use crate::prototypes::{nearest_prototype, PrototypeStore};
use crate::training::{Checkpoint, SgdMomentum};
use crate::vecmath::add_scaled;

/// A feed-forward classification head over the target relation set.
pub type ClassifierHead = LinearSoftmax;

const HEAD_SEED: u64 = 0x1f83_d9ab_fb41_bd6b;

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub warmup_steps: u64,
    /// Train the encoder together with the head, or freeze it.
    pub train_encoder: bool,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 20,
            learning_rate: 0.05,
            momentum: 0.9,
            warmup_steps: 0,
            train_encoder: true,
            seed: 0,
        }
    }
}

/// Plain shuffled mini-batches over `0..n`, one pass per epoch.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Fit a classification head over a frozen encoder with cross-entropy.
/// With `config.epochs == 0` the returned head is exactly its
/// initialization.
pub fn fit_head(
    encoder: &dyn StatementEncoder,
    train: &StatementSet,
    config: &FinetuneConfig,
) -> Result<ClassifierHead> {
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "supervised fine-tuning needs a nonempty training set".to_string(),
        ));
    }
    let classes = train.num_relations();
    let mut head = LinearSoftmax::init(classes, encoder.output_dim(), config.seed ^ HEAD_SEED);
    let mut opt = SgdMomentum::new(config.learning_rate, config.momentum, config.warmup_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let embeddings: Vec<Vec<f64>> = train
        .statements
        .iter()
        .enumerate()
        .map(|(i, s)| encoder.encode_statement(i, s))
        .collect::<Result<_>>()?;
    for _ in 0..config.epochs {
        for batch in epoch_batches(train.len(), config.batch_size, &mut rng) {
            let logits: Vec<Vec<f64>> =
                batch.iter().map(|&i| head.logits(&embeddings[i])).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train.statements[i].relation).collect();
            let ce = losses::cross_entropy(&logits, &labels)?;
            let mut weight_grads = vec![vec![0.0; head.dim()]; classes];
            let mut bias_grads = vec![0.0; classes];
            for (slot, &i) in batch.iter().enumerate() {
                for c in 0..classes {
                    let g = ce.logit_grads[slot][c];
                    bias_grads[c] += g;
                    add_scaled(&mut weight_grads[c], &embeddings[i], g);
                }
            }
            let mut w_flat: Vec<f64> = head.weight.iter().flatten().copied().collect();
            let wg_flat: Vec<f64> = weight_grads.iter().flatten().copied().collect();
            let mut b = head.bias.clone();
            opt.apply(&mut [
                ("head_w", &mut w_flat, &wg_flat),
                ("head_b", &mut b, &bias_grads),
            ])?;
            let dim = head.dim();
            for (r, row) in head.weight.iter_mut().enumerate() {
                row.copy_from_slice(&w_flat[r * dim..(r + 1) * dim]);
            }
            head.bias = b;
        }
    }
    Ok(head)
}

/// Supervised fine-tuning: train a head (and, per config, the encoder)
/// with cross-entropy over mini-batches.
pub fn finetune_supervised(
    ckpt: &Checkpoint,
    train: &StatementSet,
    config: &FinetuneConfig,
) -> Result<(EncoderModel, ClassifierHead)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "supervised fine-tuning needs a nonempty training set".to_string(),
        ));
    }
    let mut encoder = ckpt.encoder.clone();
    if !config.train_encoder {
        let head = fit_head(&encoder, train, config)?;
        return Ok((encoder, head));
    }
    let classes = train.num_relations();
    let mut head = LinearSoftmax::init(classes, encoder.spec.output_dim, config.seed ^ HEAD_SEED);
    let mut opt = SgdMomentum::new(config.learning_rate, config.momentum, config.warmup_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.epochs {
        for batch in epoch_batches(train.len(), config.batch_size, &mut rng) {
            let embeddings: Vec<Vec<f64>> = batch
                .iter()
                .map(|&i| encoder.encode(&train.statements[i]))
                .collect::<Result<_>>()?;
            let logits: Vec<Vec<f64>> = embeddings.iter().map(|e| head.logits(e)).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train.statements[i].relation).collect();
            let ce = losses::cross_entropy(&logits, &labels)?;
            let mut weight_grads = vec![vec![0.0; head.dim()]; classes];
            let mut bias_grads = vec![0.0; classes];
            let mut encoder_grads = EncoderGrads::zeros_like(&encoder);
            for (slot, &i) in batch.iter().enumerate() {
                let mut embed_grad = vec![0.0; encoder.spec.output_dim];
                for c in 0..classes {
                    let g = ce.logit_grads[slot][c];
                    bias_grads[c] += g;
                    add_scaled(&mut weight_grads[c], &embeddings[slot], g);
                    add_scaled(&mut embed_grad, &head.weight[c], g);
                }
                encoder.backward(&train.statements[i], &embed_grad, &mut encoder_grads)?;
            }
            let mut w_flat: Vec<f64> = head.weight.iter().flatten().copied().collect();
            let wg_flat: Vec<f64> = weight_grads.iter().flatten().copied().collect();
            let mut b = head.bias.clone();
            opt.apply(&mut [
                (PARAM_EMBED, &mut encoder.embed, &encoder_grads.embed),
                (PARAM_PROJ_W, &mut encoder.proj_w, &encoder_grads.proj_w),
                (PARAM_PROJ_B, &mut encoder.proj_b, &encoder_grads.proj_b),
                ("head_w", &mut w_flat, &wg_flat),
                ("head_b", &mut b, &bias_grads),
            ])?;
            let dim = head.dim();
            for (r, row) in head.weight.iter_mut().enumerate() {
                row.copy_from_slice(&w_flat[r * dim..(r + 1) * dim]);
            }
            head.bias = b;
        }
    }
    Ok((encoder, head))
}

/// Precision/recall/F1 triple; 0/0 counts score zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassScore {
    pub relation: String,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub prf: Prf,
}

#[derive(Debug, Clone)]
pub struct SupervisedReport {
    pub per_class: Vec<ClassScore>,
    pub micro: Prf,
    /// Averaged over classes with gold support.
    pub macro_: Prf,
    pub accuracy: f64,
}

/// Argmax prediction per statement, scored with per-class, micro, and
/// macro precision/recall/F1.
pub fn eval_supervised(
    encoder: &dyn StatementEncoder,
    head: &ClassifierHead,
    test: &StatementSet,
) -> Result<SupervisedReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument(
            "supervised evaluation needs a nonempty test set".to_string(),
        ));
    }
    let classes = head.classes();
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    let mut support = vec![0usize; classes];
    let mut correct = 0usize;
    for (i, s) in test.statements.iter().enumerate() {
        if s.relation >= classes {
            return Err(Error::InvalidStatement {
                index: i,
                message: format!("gold relation id {} outside the head's classes", s.relation),
            });
        }
        let logits = head.logits(&encoder.encode_statement(i, s)?);
        let predicted = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(c, _)| c)
            .unwrap();
        support[s.relation] += 1;
        if predicted == s.relation {
            tp[predicted] += 1;
            correct += 1;
        } else {
            fp[predicted] += 1;
            fn_[s.relation] += 1;
        }
    }
    let per_class: Vec<ClassScore> = (0..classes)
        .map(|c| ClassScore {
            relation: test
                .relation_vocab
                .get(c)
                .cloned()
                .unwrap_or_else(|| format!("class_{c}")),
            support: support[c],
            tp: tp[c],
            fp: fp[c],
            fn_: fn_[c],
            prf: Prf::from_counts(tp[c], fp[c], fn_[c]),
        })
        .collect();
    let micro = Prf::from_counts(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let with_support: Vec<&ClassScore> =
        per_class.iter().filter(|c| c.support > 0).collect();
    let macro_ = Prf {
        precision: with_support.iter().map(|c| c.prf.precision).sum::<f64>()
            / with_support.len() as f64,
        recall: with_support.iter().map(|c| c.prf.recall).sum::<f64>() / with_support.len() as f64,
        f1: with_support.iter().map(|c| c.prf.f1).sum::<f64>() / with_support.len() as f64,
    };
    Ok(SupervisedReport {
        per_class,
        micro,
        macro_,
        accuracy: correct as f64 / test.len() as f64,
    })
}

/// Fraction of statements whose nearest prototype is their own relation.
pub fn nearest_prototype_accuracy(
    encoder: &dyn StatementEncoder,
    store: &PrototypeStore,
    set: &StatementSet,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(
            "nearest-prototype accuracy needs a nonempty set".to_string(),
        ));
    }
    let mut correct = 0usize;
    for (i, s) in set.statements.iter().enumerate() {
        let embedding = encoder.encode_statement(i, s)?;
        if nearest_prototype(store, &embedding)? == s.relation {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.len() as f64)
}
