//! Prototype-based metric learning for relation representations.
//!
//! The crate trains a small statement encoder together with one unit
//! prototype vector per relation, using contrastive statement-statement
//! and prototype-statement objectives plus a prototype-level classifier.
//! It ships the downstream harnesses (supervised, few-shot episodic,
//! zero-shot, fuzzy relation evaluation), a synthetic
//! distant-supervision generator with controllable false-positive noise,
//! and the iris decision-boundary robustness lab.

pub mod boundary;
pub mod data;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod metric;
pub mod project;
pub mod prototypes;
pub mod svg;
pub mod training;
pub mod vecmath;

pub use data::generator::{generate_synthetic, GeneratorSpec};
pub use data::iris::{load_iris, IrisTable};
pub use data::{inject_label_noise, load_statements, split, Statement, StatementSet};
pub use encoder::{insert_markers, EncoderModel, EncoderSpec, FrozenEncoder, StatementEncoder};
pub use error::{Error, Result};
pub use evaluation::episodes::{
    eval_fewshot, fewshot_predict, fewshot_train, sample_episode, Episode, FewshotTrainConfig,
};
pub use evaluation::fuzzy::{eval_fuzzy, fuzzy_threshold, FuzzyConfig, FuzzyReport};
pub use evaluation::{
    eval_supervised, finetune_supervised, fit_head, nearest_prototype_accuracy, ClassifierHead,
    FinetuneConfig, SupervisedReport,
};
pub use losses::{LinearSoftmax, LossReport, LossWeights, PrototypeClassifier};
pub use metric::{grad_check, pairwise_similarity, similarity, MetricForm, Params};
pub use project::{project_pca, Pca2};
pub use prototypes::{
    init_prototypes, nearest_prototype, surrogate_ind_prototypes, IndWeights, InitScheme,
    PrototypeStore,
};
pub use training::{pretrain, Checkpoint, LossMode, StepLoss, TrainConfig};
