//! Versioned JSON checkpoints.
//!
//! Every 64-bit parameter value is stored as the 16-hex-digit IEEE-754
//! bit pattern, so save/load round-trips bitwise. The document carries
//! the encoder (spec plus parameters), the token and relation
//! vocabularies, prototypes, classifier, a config echo, and the step
//! counter.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderModel, EncoderSpec, PARAM_EMBED, PARAM_PROJ_B, PARAM_PROJ_W};
use crate::error::{Error, Result};
use crate::losses::LinearSoftmax;
use crate::prototypes::PrototypeStore;
use crate::training::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained (or freshly initialized) model bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderModel,
    pub token_vocab: Vec<String>,
    pub prototypes: PrototypeStore,
    pub classifier: LinearSoftmax,
    pub relation_vocab: Vec<String>,
    pub config: TrainConfig,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct TensorFile {
    shape: Vec<usize>,
    /// One 16-hex-digit bit pattern per f64, row-major.
    data: Vec<String>,
}

impl TensorFile {
    fn from_values(shape: Vec<usize>, values: &[f64]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            shape,
            data: values.iter().map(|v| format!("{:016x}", v.to_bits())).collect(),
        }
    }

    fn values(&self) -> Result<Vec<f64>> {
        let expected: usize = self.shape.iter().product();
        if self.data.len() != expected {
            return Err(Error::Parse(format!(
                "tensor of shape {:?} carries {} values",
                self.shape,
                self.data.len()
            )));
        }
        self.data
            .iter()
            .map(|s| {
                u64::from_str_radix(s, 16)
                    .map(f64::from_bits)
                    .map_err(|_| Error::Parse(format!("bad f64 bit pattern `{s}`")))
            })
            .collect()
    }

    fn rows(&self) -> Result<Vec<Vec<f64>>> {
        if self.shape.len() != 2 {
            return Err(Error::Parse(format!(
                "expected a 2-d tensor, got shape {:?}",
                self.shape
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let flat = self.values()?;
        Ok((0..r).map(|i| flat[i * c..(i + 1) * c].to_vec()).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    spec: EncoderSpec,
    params: BTreeMap<String, TensorFile>,
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    weight: TensorFile,
    bias: TensorFile,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    encoder: EncoderFile,
    token_vocab: Vec<String>,
    prototypes: TensorFile,
    classifier: ClassifierFile,
    relation_vocab: Vec<String>,
    config: TrainConfig,
    step: u64,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let spec = &self.encoder.spec;
        let mut params = BTreeMap::new();
        params.insert(
            PARAM_EMBED.to_string(),
            TensorFile::from_values(vec![spec.vocab_size, spec.token_dim], &self.encoder.embed),
        );
        params.insert(
            PARAM_PROJ_W.to_string(),
            TensorFile::from_values(
                vec![spec.output_dim, 2 * spec.token_dim],
                &self.encoder.proj_w,
            ),
        );
        params.insert(
            PARAM_PROJ_B.to_string(),
            TensorFile::from_values(vec![1, spec.output_dim], &self.encoder.proj_b),
        );
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            encoder: EncoderFile {
                spec: spec.clone(),
                params,
            },
            token_vocab: self.token_vocab.clone(),
            prototypes: TensorFile::from_values(
                vec![self.prototypes.num_relations(), self.prototypes.dim()],
                &self.prototypes.flat(),
            ),
            classifier: ClassifierFile {
                weight: TensorFile::from_values(
                    vec![self.classifier.classes(), self.classifier.dim()],
                    &self
                        .classifier
                        .weight
                        .iter()
                        .flatten()
                        .copied()
                        .collect::<Vec<_>>(),
                ),
                bias: TensorFile::from_values(
                    vec![1, self.classifier.bias.len()],
                    &self.classifier.bias,
                ),
            },
            relation_vocab: self.relation_vocab.clone(),
            config: self.config.clone(),
            step: self.step,
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse("checkpoint has no version field".to_string()))?
            as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let file: CheckpointFile = serde_json::from_value(value)
            .map_err(|e| Error::Parse(format!("checkpoint: {e}")))?;

        let spec = file.encoder.spec.clone();
        spec.validate()?;
        let take = |name: &str| -> Result<&TensorFile> {
            file.encoder
                .params
                .get(name)
                .ok_or_else(|| Error::Parse(format!("checkpoint missing encoder tensor `{name}`")))
        };
        let encoder = EncoderModel {
            spec: spec.clone(),
            embed: take(PARAM_EMBED)?.values()?,
            proj_w: take(PARAM_PROJ_W)?.values()?,
            proj_b: take(PARAM_PROJ_B)?.values()?,
        };
        if encoder.embed.len() != spec.vocab_size * spec.token_dim
            || encoder.proj_w.len() != spec.output_dim * 2 * spec.token_dim
            || encoder.proj_b.len() != spec.output_dim
        {
            return Err(Error::Parse(
                "checkpoint encoder tensors do not match the spec shapes".to_string(),
            ));
        }
        let prototypes = PrototypeStore::from_rows(file.prototypes.rows()?)?;
        let classifier = LinearSoftmax {
            weight: file.classifier.weight.rows()?,
            bias: file.classifier.bias.values()?,
        };
        Ok(Self {
            encoder,
            token_vocab: file.token_vocab,
            prototypes,
            classifier,
            relation_vocab: file.relation_vocab,
            config: file.config,
            step: file.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
