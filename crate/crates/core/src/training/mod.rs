//! Pretraining: equal-relation batches, momentum descent with warmup,
//! the per-mode objectives, and checkpoint persistence.

pub mod checkpoint;
pub mod optimizer;
pub mod sampler;

use serde::{Deserialize, Serialize};

use crate::data::StatementSet;
use crate::encoder::{EncoderGrads, EncoderModel, EncoderSpec, PARAM_EMBED, PARAM_PROJ_B, PARAM_PROJ_W};
use crate::error::{Error, Result};
use crate::losses::{self, ContrastForm, LinearSoftmax, LossWeights};
use crate::prototypes::{init_prototypes, surrogate_ind_prototypes, IndWeights, InitScheme};
use crate::vecmath::add_scaled;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use optimizer::SgdMomentum;
pub use sampler::BatchSampler;

const PROTO_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const CLS_SEED: u64 = 0x517c_c1b7_2722_0a95;
const SAMPLER_SEED: u64 = 0xd1b5_4a32_d192_ed03;

/// Which objective drives pretraining. The ablation modes keep the
/// lambda weights of whichever components they include.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LossMode {
    /// `lambda1 * s2s + lambda2 * (s2z + s2z') + lambda3 * cls`
    #[default]
    #[serde(rename = "combined")]
    Combined,
    /// Statement-statement contrast alone.
    #[serde(rename = "s2s-only")]
    S2sOnly,
    /// Plain cross-entropy on the distant labels.
    #[serde(rename = "ce-only")]
    CeOnly,
    /// The contrast loss weighted by fixed independent-prototype weights.
    #[serde(rename = "ind")]
    Ind,
    /// Prototype losses plus the prototype classifier, no contrast term.
    #[serde(rename = "s2z+cls")]
    ZCls,
    /// Log-form contrast plus the prototype losses and classifier.
    #[serde(rename = "s2s'+z+cls")]
    S2sLogZCls,
}

impl LossMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossMode::Combined => "combined",
            LossMode::S2sOnly => "s2s-only",
            LossMode::CeOnly => "ce-only",
            LossMode::Ind => "ind",
            LossMode::ZCls => "s2z+cls",
            LossMode::S2sLogZCls => "s2s'+z+cls",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(LossMode::Combined),
            "s2s-only" => Ok(LossMode::S2sOnly),
            "ce-only" => Ok(LossMode::CeOnly),
            "ind" => Ok(LossMode::Ind),
            "s2z+cls" => Ok(LossMode::ZCls),
            "s2s'+z+cls" | "s2s-log+z+cls" => Ok(LossMode::S2sLogZCls),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss mode `{other}` (expected combined, s2s-only, ce-only, ind, \
                 s2z+cls, or s2s'+z+cls)"
            ))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub warmup_steps: u64,
    pub loss_weights: LossWeights,
    pub loss_mode: LossMode,
    pub seed: u64,
    pub token_dim: usize,
    pub output_dim: usize,
    pub context_mix: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 5,
            learning_rate: 0.05,
            momentum: 0.9,
            warmup_steps: 100,
            loss_weights: LossWeights::default(),
            loss_mode: LossMode::Combined,
            seed: 0,
            token_dim: 16,
            output_dim: 16,
            context_mix: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 2".to_string(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".to_string(),
            ));
        }
        if self.token_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "encoder dimensions must be positive".to_string(),
            ));
        }
        if !self.context_mix.is_finite() {
            return Err(Error::InvalidArgument(
                "context mix must be finite".to_string(),
            ));
        }
        self.loss_weights.validate()
    }
}

/// One logged training step: component values and the optimized total.
/// Components a mode does not compute are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub step: u64,
    pub s2s: f64,
    pub s2z: f64,
    pub s2z_prime: f64,
    pub cls: f64,
    pub combined: f64,
}

impl StepLoss {
    pub const CSV_HEADER: &'static str = "step,s2s,s2z,s2z_prime,cls,combined";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.s2s, self.s2z, self.s2z_prime, self.cls, self.combined
        )
    }
}

struct StepEval {
    row: StepLoss,
    embedding_grads: Vec<Vec<f64>>,
    prototype_grads: Option<Vec<Vec<f64>>>,
    classifier_weight_grads: Option<Vec<Vec<f64>>>,
    classifier_bias_grads: Option<Vec<f64>>,
}

fn evaluate_step(
    config: &TrainConfig,
    step: u64,
    embeddings: &[Vec<f64>],
    labels: &[usize],
    store: &crate::prototypes::PrototypeStore,
    classifier: &LinearSoftmax,
    ind_weights: Option<&IndWeights>,
) -> Result<StepEval> {
    let w = &config.loss_weights;
    let blank = StepLoss {
        step,
        s2s: 0.0,
        s2z: 0.0,
        s2z_prime: 0.0,
        cls: 0.0,
        combined: 0.0,
    };
    match config.loss_mode {
        LossMode::Combined | LossMode::ZCls => {
            let weights = if config.loss_mode == LossMode::ZCls {
                LossWeights {
                    lambda1: 0.0,
                    ..*w
                }
            } else {
                *w
            };
            let report = losses::combined(embeddings, labels, store, classifier, &weights)?;
            Ok(StepEval {
                row: StepLoss {
                    s2s: report.s2s,
                    s2z: report.s2z,
                    s2z_prime: report.s2z_prime,
                    cls: report.cls,
                    combined: report.combined,
                    ..blank
                },
                embedding_grads: report.embedding_grads,
                prototype_grads: Some(report.prototype_grads),
                classifier_weight_grads: Some(report.classifier_weight_grads),
                classifier_bias_grads: Some(report.classifier_bias_grads),
            })
        }
        LossMode::S2sLogZCls => {
            let contrast = losses::s2s_with_form(ContrastForm::Log, embeddings, labels)?;
            let z = losses::s2z(embeddings, labels, store)?;
            let z_prime = losses::s2z_prime(embeddings, labels, store)?;
            let cls = losses::prototype_cls(store, classifier)?;
            let total = w.lambda1 * contrast.value
                + w.lambda2 * (z.value + z_prime.value)
                + w.lambda3 * cls.value;
            let m = embeddings.first().map(|e| e.len()).unwrap_or(0);
            let mut embedding_grads = vec![vec![0.0; m]; embeddings.len()];
            for i in 0..embeddings.len() {
                add_scaled(&mut embedding_grads[i], &contrast.embedding_grads[i], w.lambda1);
                add_scaled(&mut embedding_grads[i], &z.embedding_grads[i], w.lambda2);
                add_scaled(&mut embedding_grads[i], &z_prime.embedding_grads[i], w.lambda2);
            }
            let mut prototype_grads = vec![vec![0.0; store.dim()]; store.num_relations()];
            for r in 0..store.num_relations() {
                add_scaled(&mut prototype_grads[r], &z.prototype_grads[r], w.lambda2);
                add_scaled(&mut prototype_grads[r], &z_prime.prototype_grads[r], w.lambda2);
                add_scaled(&mut prototype_grads[r], &cls.prototype_grads[r], w.lambda3);
            }
            let classifier_weight_grads = cls
                .weight_grads
                .iter()
                .map(|row| row.iter().map(|g| w.lambda3 * g).collect())
                .collect();
            let classifier_bias_grads =
                cls.bias_grads.iter().map(|g| w.lambda3 * g).collect();
            Ok(StepEval {
                row: StepLoss {
                    s2s: contrast.value,
                    s2z: z.value,
                    s2z_prime: z_prime.value,
                    cls: cls.value,
                    combined: total,
                    ..blank
                },
                embedding_grads,
                prototype_grads: Some(prototype_grads),
                classifier_weight_grads: Some(classifier_weight_grads),
                classifier_bias_grads: Some(classifier_bias_grads),
            })
        }
        LossMode::S2sOnly => {
            let contrast = losses::s2s(embeddings, labels)?;
            let total = w.lambda1 * contrast.value;
            let embedding_grads = contrast
                .embedding_grads
                .iter()
                .map(|row| row.iter().map(|g| w.lambda1 * g).collect())
                .collect();
            Ok(StepEval {
                row: StepLoss {
                    s2s: contrast.value,
                    combined: total,
                    ..blank
                },
                embedding_grads,
                prototype_grads: None,
                classifier_weight_grads: None,
                classifier_bias_grads: None,
            })
        }
        LossMode::Ind => {
            let weights = ind_weights.ok_or_else(|| {
                Error::InvalidArgument("ind mode requires precomputed weights".to_string())
            })?;
            let contrast = losses::ind(embeddings, labels, weights)?;
            let total = w.lambda1 * contrast.value;
            let embedding_grads = contrast
                .embedding_grads
                .iter()
                .map(|row| row.iter().map(|g| w.lambda1 * g).collect())
                .collect();
            Ok(StepEval {
                row: StepLoss {
                    s2s: contrast.value,
                    combined: total,
                    ..blank
                },
                embedding_grads,
                prototype_grads: None,
                classifier_weight_grads: None,
                classifier_bias_grads: None,
            })
        }
        LossMode::CeOnly => {
            let logits: Vec<Vec<f64>> = embeddings.iter().map(|e| classifier.logits(e)).collect();
            let ce = losses::cross_entropy(&logits, labels)?;
            let m = embeddings.first().map(|e| e.len()).unwrap_or(0);
            let mut embedding_grads = vec![vec![0.0; m]; embeddings.len()];
            let mut weight_grads = vec![vec![0.0; classifier.dim()]; classifier.classes()];
            let mut bias_grads = vec![0.0; classifier.classes()];
            for i in 0..embeddings.len() {
                for c in 0..classifier.classes() {
                    let g = ce.logit_grads[i][c];
                    bias_grads[c] += g;
                    add_scaled(&mut weight_grads[c], &embeddings[i], g);
                    add_scaled(&mut embedding_grads[i], &classifier.weight[c], g);
                }
            }
            Ok(StepEval {
                row: StepLoss {
                    combined: ce.value,
                    ..blank
                },
                embedding_grads,
                prototype_grads: None,
                classifier_weight_grads: Some(weight_grads),
                classifier_bias_grads: Some(bias_grads),
            })
        }
    }
}

/// Pretrain an encoder, prototypes, and classifier on `data` under the
/// configured objective. Returns the checkpoint and the per-step loss
/// log. Deterministic in `(config, data)`.
pub fn pretrain(config: &TrainConfig, data: &StatementSet) -> Result<(Checkpoint, Vec<StepLoss>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "pretrain needs a nonempty statement set".to_string(),
        ));
    }
    let k = data.num_relations();
    let spec = EncoderSpec::with_markers_appended(
        data.token_vocab.len(),
        config.token_dim,
        config.output_dim,
        config.context_mix,
    );
    let mut encoder = EncoderModel::init(spec, config.seed)?;
    let mut store = init_prototypes(
        k,
        config.output_dim,
        config.seed ^ PROTO_SEED,
        InitScheme::RandomUnit,
    )?;
    let mut classifier = LinearSoftmax::init(k, config.output_dim, config.seed ^ CLS_SEED);
    let ind_weights = if config.loss_mode == LossMode::Ind {
        let (fixed_store, weights) = surrogate_ind_prototypes(&encoder, data)?;
        store = fixed_store;
        Some(weights)
    } else {
        None
    };

    let mut batches = BatchSampler::new(data, config.batch_size, config.seed ^ SAMPLER_SEED)?;
    let mut opt = SgdMomentum::new(config.learning_rate, config.momentum, config.warmup_steps)?;
    let steps_per_epoch = data.len().div_ceil(config.batch_size);
    let total_steps = (config.epochs * steps_per_epoch) as u64;
    let mut log = Vec::with_capacity(total_steps as usize);

    for step in 0..total_steps {
        let indices = batches.next_batch();
        let labels: Vec<usize> = indices.iter().map(|&i| data.statements[i].relation).collect();
        let embeddings: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| encoder.encode(&data.statements[i]))
            .collect::<Result<_>>()?;
        let batch_ind_weights = ind_weights
            .as_ref()
            .map(|w| IndWeights(indices.iter().map(|&i| w.0[i]).collect()));

        let eval = evaluate_step(
            config,
            step,
            &embeddings,
            &labels,
            &store,
            &classifier,
            batch_ind_weights.as_ref(),
        )?;
        if !eval.row.combined.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step}")));
        }

        let mut encoder_grads = EncoderGrads::zeros_like(&encoder);
        for (slot, &i) in indices.iter().enumerate() {
            encoder.backward(
                &data.statements[i],
                &eval.embedding_grads[slot],
                &mut encoder_grads,
            )?;
        }

        let mut proto_flat = store.flat();
        let proto_grad_flat: Vec<f64> = eval
            .prototype_grads
            .as_ref()
            .map(|g| g.iter().flatten().copied().collect())
            .unwrap_or_default();
        let mut cls_w_flat: Vec<f64> = classifier.weight.iter().flatten().copied().collect();
        let cls_w_grad_flat: Vec<f64> = eval
            .classifier_weight_grads
            .as_ref()
            .map(|g| g.iter().flatten().copied().collect())
            .unwrap_or_default();
        let mut cls_b = classifier.bias.clone();

        {
            let mut updates: Vec<(&str, &mut [f64], &[f64])> = vec![
                (PARAM_EMBED, &mut encoder.embed, &encoder_grads.embed),
                (PARAM_PROJ_W, &mut encoder.proj_w, &encoder_grads.proj_w),
                (PARAM_PROJ_B, &mut encoder.proj_b, &encoder_grads.proj_b),
            ];
            if eval.prototype_grads.is_some() {
                updates.push(("prototypes", &mut proto_flat, &proto_grad_flat));
            }
            if eval.classifier_weight_grads.is_some() {
                updates.push(("cls_w", &mut cls_w_flat, &cls_w_grad_flat));
                updates.push((
                    "cls_b",
                    &mut cls_b,
                    eval.classifier_bias_grads.as_ref().unwrap(),
                ));
            }
            opt.apply(&mut updates)?;
        }

        if eval.prototype_grads.is_some() {
            store.set_flat(&proto_flat)?;
            store.renormalize()?;
        }
        if eval.classifier_weight_grads.is_some() {
            let dim = classifier.dim();
            for (r, row) in classifier.weight.iter_mut().enumerate() {
                row.copy_from_slice(&cls_w_flat[r * dim..(r + 1) * dim]);
            }
            classifier.bias = cls_b;
        }
        if !encoder.is_finite() || !classifier.is_finite() {
            return Err(Error::NonFinite(format!("parameters after step {step}")));
        }
        log.push(eval.row);
    }

    Ok((
        Checkpoint {
            encoder,
            token_vocab: data.token_vocab.clone(),
            prototypes: store,
            classifier,
            relation_vocab: data.relation_vocab.clone(),
            config: config.clone(),
            step: total_steps,
        },
        log,
    ))
}
