//! Training objectives with analytic gradients.
//!
//! All losses operate on a batch of statement embeddings `s_1..s_N` with
//! relation labels, the prototype store `z^1..z^K`, and a linear-softmax
//! classifier. `delta(i, j)` is 1 when two statements share a label and
//! 0 otherwise; `sim` is the metric module's similarity.
//!
//! * statement-statement contrast:
//!   `L = -(1/N^2) sum_{i != j} exp(delta_ij sim_ij) / sum_{j' != i} exp((1 - delta_ij') sim_ij')`
//!   (self-pairs excluded; a log-form variant takes the logarithm of the
//!   fraction instead).
//! * statement-prototype, in-batch negatives:
//!   `L = sum_r -(1/N^2) sum_{i in S^r, j notin S^r} [ln sim(z^r, s_i) + ln(1 - sim(z^r, s_j))]`
//! * statement-prototype, prototype negatives:
//!   `L = sum_r -(1/N^2) sum_{i in S^r, z' != z^r} [ln sim(z^r, s_i) + ln(1 - sim(z', s_i))]`
//! * prototype classification: mean negative log-likelihood of each
//!   prototype's own relation under the classifier.
//! * plain cross-entropy over statement logits, and the
//!   independent-prototype variant of the contrast loss where each
//!   ordered pair's fraction is scaled by the product of the two
//!   statements' fixed weights.
//!
//! Every gradient here is checked against central finite differences in
//! the tests and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::RelationId;
use crate::error::{Error, Result};
use crate::metric::{similarity_grad, SimGrad};
use crate::prototypes::{IndWeights, PrototypeStore};
use crate::vecmath::{add_scaled, all_finite, softmax};

/// Mixing weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return Err(Error::InvalidArgument(
                "loss weights must be nonnegative".to_string(),
            ));
        }
        Ok(())
    }
}

/// A linear-softmax classifier: `K x m` weight rows plus a `K` bias.
/// Classifies prototypes during pretraining and statement embeddings in
/// the cross-entropy baseline and fine-tuning heads.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmax {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// The prototype-level classifier of the combined objective.
pub type PrototypeClassifier = LinearSoftmax;

impl LinearSoftmax {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weight: vec![vec![0.0; dim]; classes],
            bias: vec![0.0; classes],
        }
    }

    /// Per-matrix uniform init in `[-a, a]`, `a = sqrt(6/(rows+cols))`,
    /// zero bias.
    pub fn init(classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (6.0 / (classes + dim) as f64).sqrt();
        Self {
            weight: (0..classes)
                .map(|_| (0..dim).map(|_| rng.gen_range(-a..a)).collect())
                .collect(),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.weight.len()
    }

    pub fn dim(&self) -> usize {
        self.weight.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().all(|r| all_finite(r)) && all_finite(&self.bias)
    }
}

/// Which algebraic form of the statement-statement contrast to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum ContrastForm {
    /// The fraction itself, summed over ordered pairs. Default.
    #[default]
    Literal,
    /// The logarithm of the fraction, the conventional contrastive shape.
    Log,
}

/// Value and embedding gradients of a statement-statement loss.
#[derive(Debug, Clone)]
pub struct StatementLoss {
    pub value: f64,
    /// Gradient per batch embedding, `N x m`.
    pub embedding_grads: Vec<Vec<f64>>,
    /// Set when every statement in the batch carries the same label; the
    /// denominator then carries no negative signal.
    pub single_label: bool,
}

/// Value plus embedding and prototype gradients.
#[derive(Debug, Clone)]
pub struct ProtoLoss {
    pub value: f64,
    pub embedding_grads: Vec<Vec<f64>>,
    /// Dense `K x m`; rows of relations absent from the batch are zero.
    pub prototype_grads: Vec<Vec<f64>>,
}

/// Value plus prototype and classifier gradients.
#[derive(Debug, Clone)]
pub struct ClsLoss {
    pub value: f64,
    pub prototype_grads: Vec<Vec<f64>>,
    pub weight_grads: Vec<Vec<f64>>,
    pub bias_grads: Vec<f64>,
}

/// Value plus logit gradients of the cross-entropy baseline.
#[derive(Debug, Clone)]
pub struct CeLoss {
    pub value: f64,
    pub logit_grads: Vec<Vec<f64>>,
}

/// Per-component values and named gradients of the combined objective.
/// `combined = lambda1 * s2s + lambda2 * (s2z + s2z_prime) + lambda3 * cls`.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub s2s: f64,
    pub s2z: f64,
    pub s2z_prime: f64,
    pub cls: f64,
    pub combined: f64,
    pub embedding_grads: Vec<Vec<f64>>,
    pub prototype_grads: Vec<Vec<f64>>,
    pub classifier_weight_grads: Vec<Vec<f64>>,
    pub classifier_bias_grads: Vec<f64>,
    pub warnings: Vec<String>,
}

fn check_batch(embeddings: &[Vec<f64>], labels: &[RelationId]) -> Result<usize> {
    if embeddings.len() != labels.len() {
        return Err(Error::Dimension {
            context: "loss batch labels",
            expected: embeddings.len(),
            got: labels.len(),
        });
    }
    let m = embeddings.first().map(|e| e.len()).unwrap_or(0);
    for e in embeddings {
        if e.len() != m {
            return Err(Error::Dimension {
                context: "loss batch embedding",
                expected: m,
                got: e.len(),
            });
        }
    }
    Ok(m)
}

/// Distinct labels in ascending order.
fn relations_present(labels: &[RelationId]) -> Vec<RelationId> {
    let mut present: Vec<RelationId> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    present
}

/// Shared core of the statement-statement and independent-prototype
/// losses. `pair_weights` scales each ordered pair's fraction by
/// `w_i * w_j`; `None` leaves the fractions untouched.
fn contrast_core(
    form: ContrastForm,
    embeddings: &[Vec<f64>],
    labels: &[RelationId],
    pair_weights: Option<&[f64]>,
) -> Result<StatementLoss> {
    let n = embeddings.len();
    let m = check_batch(embeddings, labels)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "statement contrast needs a batch of at least 2, got {n}"
        )));
    }
    if let Some(w) = pair_weights {
        if w.len() != n {
            return Err(Error::Dimension {
                context: "pair weights",
                expected: n,
                got: w.len(),
            });
        }
    }
    let single_label = labels.iter().all(|&l| l == labels[0]);
    let weight = |i: usize| pair_weights.map(|w| w[i]).unwrap_or(1.0);
    let delta = |i: usize, j: usize| -> f64 {
        if labels[i] == labels[j] {
            1.0
        } else {
            0.0
        }
    };

    // Pairwise similarities with gradients, upper triangle.
    let mut sims: Vec<Vec<Option<SimGrad>>> =
        (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            sims[i][j] = Some(similarity_grad(&embeddings[i], &embeddings[j])?);
        }
    }
    let sim_of = |i: usize, j: usize| -> &SimGrad {
        if i < j {
            sims[i][j].as_ref().unwrap()
        } else {
            sims[j][i].as_ref().unwrap()
        }
    };

    // Row sums: D_i = sum_{j' != i} exp((1 - delta) d), plus the weighted
    // numerator sums needed by the denominator gradient.
    let mut denom = vec![0.0; n];
    let mut numer_sum = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = sim_of(i, j).value;
            denom[i] += ((1.0 - delta(i, j)) * d).exp();
            let numer = match form {
                ContrastForm::Literal => (delta(i, j) * d).exp(),
                ContrastForm::Log => 1.0,
            };
            numer_sum[i] += weight(i) * weight(j) * numer;
        }
    }

    let inv_n2 = 1.0 / (n * n) as f64;
    let mut value = 0.0;
    // Accumulated d(loss)/d(similarity) per unordered pair.
    let mut coeff = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = sim_of(i, j).value;
            let w = weight(i) * weight(j);
            let dl = delta(i, j);
            let (a, b) = (i.min(j), i.max(j));
            match form {
                ContrastForm::Literal => {
                    let numer = (dl * d).exp();
                    value -= inv_n2 * w * numer / denom[i];
                    let mut c = -inv_n2 * w * dl * numer / denom[i];
                    c += inv_n2 * numer_sum[i] / (denom[i] * denom[i])
                        * (1.0 - dl)
                        * ((1.0 - dl) * d).exp();
                    coeff[a][b] += c;
                }
                ContrastForm::Log => {
                    value -= inv_n2 * w * (dl * d - denom[i].ln());
                    let mut c = -inv_n2 * w * dl;
                    c += inv_n2 * numer_sum[i] / denom[i] * (1.0 - dl) * ((1.0 - dl) * d).exp();
                    coeff[a][b] += c;
                }
            }
        }
    }

    let mut grads = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = coeff[i][j];
            if c == 0.0 {
                continue;
            }
            let sg = sims[i][j].as_ref().unwrap();
            add_scaled(&mut grads[i], &sg.grad_a, c);
            add_scaled(&mut grads[j], &sg.grad_b, c);
        }
    }

    Ok(StatementLoss {
        value,
        embedding_grads: grads,
        single_label,
    })
}

/// Statement-statement contrast, literal form.
pub fn s2s(embeddings: &[Vec<f64>], labels: &[RelationId]) -> Result<StatementLoss> {
    contrast_core(ContrastForm::Literal, embeddings, labels, None)
}

/// Statement-statement contrast under an explicit form.
pub fn s2s_with_form(
    form: ContrastForm,
    embeddings: &[Vec<f64>],
    labels: &[RelationId],
) -> Result<StatementLoss> {
    contrast_core(form, embeddings, labels, None)
}

/// Independent-prototype contrast. With all-unit weights this is bitwise
/// equal to [`s2s`].
pub fn ind(
    embeddings: &[Vec<f64>],
    labels: &[RelationId],
    weights: &IndWeights,
) -> Result<StatementLoss> {
    contrast_core(ContrastForm::Literal, embeddings, labels, Some(&weights.0))
}

/// One relation's statement-prototype term with in-batch negatives:
/// `-(1/N^2) sum_{i in S^r, j notin S^r} [ln sim(z^r, s_i) + ln(1 - sim(z^r, s_j))]`.
///
/// Zero when the batch has no in-class or no out-class statements.
pub fn s2z_for_relation(
    relation: RelationId,
    embeddings: &[Vec<f64>],
    labels: &[RelationId],
    store: &PrototypeStore,
) -> Result<ProtoLoss> {
    let n = embeddings.len();
    let m = check_batch(embeddings, labels)?;
    let k = store.num_relations();
    let z = store.row(relation)?;
    let mut value = 0.0;
    let mut embedding_grads = vec![vec![0.0; m]; n];
    let mut prototype_grads = vec![vec![0.0; store.dim()]; k];

    let n_in = labels.iter().filter(|&&l| l == relation).count();
    let n_out = n - n_in;
    if n_in == 0 || n_out == 0 {
        return Ok(ProtoLoss {
            value: 0.0,
            embedding_grads,
            prototype_grads,
        });
    }
    let inv_n2 = 1.0 / (n * n) as f64;
    for i in 0..n {
        let sg = similarity_grad(z, &embeddings[i])?;
        // Each in-class log pairs with every out-class statement and
        // vice versa, hence the multiplicities.
        let c = if labels[i] == relation {
            value -= inv_n2 * n_out as f64 * sg.value.ln();
            -inv_n2 * n_out as f64 / sg.value
        } else {
            value -= inv_n2 * n_in as f64 * (1.0 - sg.value).ln();
            inv_n2 * n_in as f64 / (1.0 - sg.value)
        };
        add_scaled(&mut prototype_grads[relation], &sg.grad_a, c);
        add_scaled(&mut embedding_grads[i], &sg.grad_b, c);
    }
    Ok(ProtoLoss {
        value,
        embedding_grads,
        prototype_grads,
    })
}

/// Statement-prototype loss with in-batch negatives, summed over every
/// relation present in the batch. Every batch label must have a
/// prototype.
pub fn s2z(
    embeddings: &[Vec<f64>],
    labels: &[RelationId],
    store: &PrototypeStore,
) -> Result<ProtoLoss> {
    let n = embeddings.len();
    let m = check_batch(embeddings, labels)?;
    let present = relations_present(labels);
    for &r in &present {
        store.row(r)?;
    }
    let mut total = ProtoLoss {
        value: 0.0,
        embedding_grads: vec![vec![0.0; m]; n],
        prototype_grads: vec![vec![0.0; store.dim()]; store.num_relations()],
    };
    for &r in &present {
        let part = s2z_for_relation(r, embeddings, labels, store)?;
        total.value += part.value;
        for (acc, g) in total.embedding_grads.iter_mut().zip(&part.embedding_grads) {
            add_scaled(acc, g, 1.0);
        }
        for (acc, g) in total.prototype_grads.iter_mut().zip(&part.prototype_grads) {
            add_scaled(acc, g, 1.0);
        }
    }
    Ok(total)
}

/// Statement-prototype loss with prototype negatives:
/// `sum_r -(1/N^2) sum_{i in S^r, z' != z^r} [ln sim(z^r, s_i) + ln(1 - sim(z', s_i))]`.
///
/// Needs at least two prototypes in the store.
pub fn s2z_prime(
    embeddings: &[Vec<f64>],
    labels: &[RelationId],
    store: &PrototypeStore,
) -> Result<ProtoLoss> {
    let n = embeddings.len();
    let m = check_batch(embeddings, labels)?;
    let k = store.num_relations();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "prototype-negative loss needs at least 2 prototypes".to_string(),
        ));
    }
    let present = relations_present(labels);
    for &r in &present {
        store.row(r)?;
    }
    let inv_n2 = 1.0 / (n * n) as f64;
    let mut value = 0.0;
    let mut embedding_grads = vec![vec![0.0; m]; n];
    let mut prototype_grads = vec![vec![0.0; store.dim()]; k];

    for &r in &present {
        let z = store.row(r)?;
        for i in (0..n).filter(|&i| labels[i] == r) {
            let sg = similarity_grad(z, &embeddings[i])?;
            value -= inv_n2 * (k - 1) as f64 * sg.value.ln();
            let c = -inv_n2 * (k - 1) as f64 / sg.value;
            add_scaled(&mut prototype_grads[r], &sg.grad_a, c);
            add_scaled(&mut embedding_grads[i], &sg.grad_b, c);
            for other in (0..k).filter(|&o| o != r) {
                let sg = similarity_grad(store.row(other)?, &embeddings[i])?;
                value -= inv_n2 * (1.0 - sg.value).ln();
                let c = inv_n2 / (1.0 - sg.value);
                add_scaled(&mut prototype_grads[other], &sg.grad_a, c);
                add_scaled(&mut embedding_grads[i], &sg.grad_b, c);
            }
        }
    }
    Ok(ProtoLoss {
        value,
        embedding_grads,
        prototype_grads,
    })
}

/// Prototype-level classification: mean negative log-likelihood of each
/// prototype's own relation under the classifier.
pub fn prototype_cls(store: &PrototypeStore, classifier: &LinearSoftmax) -> Result<ClsLoss> {
    let k = store.num_relations();
    if classifier.classes() != k {
        return Err(Error::Dimension {
            context: "prototype classifier classes",
            expected: k,
            got: classifier.classes(),
        });
    }
    if classifier.dim() != store.dim() {
        return Err(Error::Dimension {
            context: "prototype classifier input",
            expected: store.dim(),
            got: classifier.dim(),
        });
    }
    let inv_k = 1.0 / k as f64;
    let mut value = 0.0;
    let mut prototype_grads = vec![vec![0.0; store.dim()]; k];
    let mut weight_grads = vec![vec![0.0; classifier.dim()]; k];
    let mut bias_grads = vec![0.0; k];
    for target in 0..k {
        let z = store.row(target)?;
        let probs = softmax(&classifier.logits(z));
        value -= inv_k * probs[target].ln();
        for c in 0..k {
            let residual = inv_k * (probs[c] - if c == target { 1.0 } else { 0.0 });
            bias_grads[c] += residual;
            add_scaled(&mut weight_grads[c], z, residual);
            add_scaled(
                &mut prototype_grads[target],
                &classifier.weight[c],
                residual,
            );
        }
    }
    Ok(ClsLoss {
        value,
        prototype_grads,
        weight_grads,
        bias_grads,
    })
}

/// Mean negative log-likelihood of `labels` under softmax over `logits`.
pub fn cross_entropy(logits: &[Vec<f64>], labels: &[RelationId]) -> Result<CeLoss> {
    if logits.len() != labels.len() {
        return Err(Error::Dimension {
            context: "cross-entropy labels",
            expected: logits.len(),
            got: labels.len(),
        });
    }
    if logits.is_empty() {
        return Err(Error::InvalidArgument(
            "cross-entropy needs a nonempty batch".to_string(),
        ));
    }
    let classes = logits[0].len();
    let inv_n = 1.0 / logits.len() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels) {
        if label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        let probs = softmax(row);
        value -= inv_n * probs[label].ln();
        let grad: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(c, &p)| inv_n * (p - if c == label { 1.0 } else { 0.0 }))
            .collect();
        grads.push(grad);
    }
    Ok(CeLoss {
        value,
        logit_grads: grads,
    })
}

/// The combined objective
/// `lambda1 * s2s + lambda2 * (s2z + s2z_prime) + lambda3 * cls`
/// with gradients aggregated per parameter family.
pub fn combined(
    embeddings: &[Vec<f64>],
    labels: &[RelationId],
    store: &PrototypeStore,
    classifier: &LinearSoftmax,
    weights: &LossWeights,
) -> Result<LossReport> {
    weights.validate()?;
    let n = embeddings.len();
    let m = check_batch(embeddings, labels)?;
    let s2s_part = s2s(embeddings, labels)?;
    let s2z_part = s2z(embeddings, labels, store)?;
    let s2z_prime_part = s2z_prime(embeddings, labels, store)?;
    let cls_part = prototype_cls(store, classifier)?;

    let combined_value = weights.lambda1 * s2s_part.value
        + weights.lambda2 * (s2z_part.value + s2z_prime_part.value)
        + weights.lambda3 * cls_part.value;

    let mut embedding_grads = vec![vec![0.0; m]; n];
    for i in 0..n {
        add_scaled(
            &mut embedding_grads[i],
            &s2s_part.embedding_grads[i],
            weights.lambda1,
        );
        add_scaled(
            &mut embedding_grads[i],
            &s2z_part.embedding_grads[i],
            weights.lambda2,
        );
        add_scaled(
            &mut embedding_grads[i],
            &s2z_prime_part.embedding_grads[i],
            weights.lambda2,
        );
    }
    let k = store.num_relations();
    let mut prototype_grads = vec![vec![0.0; store.dim()]; k];
    for r in 0..k {
        add_scaled(
            &mut prototype_grads[r],
            &s2z_part.prototype_grads[r],
            weights.lambda2,
        );
        add_scaled(
            &mut prototype_grads[r],
            &s2z_prime_part.prototype_grads[r],
            weights.lambda2,
        );
        add_scaled(
            &mut prototype_grads[r],
            &cls_part.prototype_grads[r],
            weights.lambda3,
        );
    }
    let mut classifier_weight_grads = vec![vec![0.0; classifier.dim()]; k];
    for r in 0..k {
        add_scaled(
            &mut classifier_weight_grads[r],
            &cls_part.weight_grads[r],
            weights.lambda3,
        );
    }
    let classifier_bias_grads: Vec<f64> = cls_part
        .bias_grads
        .iter()
        .map(|g| weights.lambda3 * g)
        .collect();

    let mut warnings = Vec::new();
    if s2s_part.single_label {
        warnings.push(
            "single-label batch: the statement contrast denominator carries no negative signal"
                .to_string(),
        );
    }

    Ok(LossReport {
        s2s: s2s_part.value,
        s2z: s2z_part.value,
        s2z_prime: s2z_prime_part.value,
        cls: cls_part.value,
        combined: combined_value,
        embedding_grads,
        prototype_grads,
        classifier_weight_grads,
        classifier_bias_grads,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{grad_check, Params, SIM_MAX};
    use crate::vecmath::dot;
    use proptest::prelude::*;
    use rand::Rng;

    fn sigma(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn s2s_identical_pair_scalar_value() {
        // Two statements of one relation with identical unit embeddings:
        // every ordered pair contributes exp(sigma(1)) / exp(0).
        let embeddings = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let labels = vec![0, 0];
        let out = s2s(&embeddings, &labels).unwrap();
        let expected = -(2.0 * sigma(1.0).exp()) / 4.0;
        assert!((out.value - expected).abs() < 1e-12, "{} vs {expected}", out.value);
        assert!((out.value - (-1.038_639_203_363_631_8)).abs() < 1e-12);
        assert!(out.single_label);
    }

    #[test]
    fn s2s_orthogonal_cross_relation_scalar_value() {
        let embeddings = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let labels = vec![0, 1];
        let out = s2s(&embeddings, &labels).unwrap();
        let expected = -(2.0 * (1.0f64 / sigma(0.0).exp())) / 4.0;
        assert!((out.value - expected).abs() < 1e-12);
        assert!((out.value - (-0.303_265)).abs() < 1e-6);
        assert!(!out.single_label);
    }

    #[test]
    fn s2s_needs_two_statements() {
        assert!(s2s(&[vec![1.0, 0.0]], &[0]).is_err());
    }

    #[test]
    fn s2s_invariant_under_positive_rescaling() {
        let embeddings = vec![
            vec![0.4, -0.2, 0.9],
            vec![-0.3, 0.8, 0.1],
            vec![0.5, 0.5, -0.7],
            vec![1.0, 0.2, 0.3],
        ];
        let labels = vec![0, 1, 0, 1];
        let base = s2s(&embeddings, &labels).unwrap().value;
        let mut scaled = embeddings.clone();
        for v in &mut scaled[2] {
            *v *= 37.5;
        }
        let rescaled = s2s(&scaled, &labels).unwrap().value;
        assert!((base - rescaled).abs() < 1e-12);
    }

    fn random_batch(
        seed: u64,
        n: usize,
        m: usize,
        k: usize,
    ) -> (Vec<Vec<f64>>, Vec<RelationId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        // Force at least two distinct labels.
        let labels = (0..n).map(|i| if i < 2 { i % k } else { rng.gen_range(0..k) }).collect();
        (embeddings, labels)
    }

    fn embeddings_to_params(embeddings: &[Vec<f64>]) -> Params {
        let mut p = Params::new();
        p.insert("embeddings", embeddings.iter().flatten().copied().collect());
        p
    }

    fn params_to_embeddings(p: &Params, n: usize, m: usize) -> Vec<Vec<f64>> {
        let flat = p.get("embeddings").unwrap();
        (0..n).map(|i| flat[i * m..(i + 1) * m].to_vec()).collect()
    }

    fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().flatten().copied().collect()
    }

    #[test]
    fn s2s_gradient_matches_finite_differences() {
        let (n, m, k) = (12, 5, 3);
        let (embeddings, labels) = random_batch(21, n, m, k);
        let params = embeddings_to_params(&embeddings);
        let loss = |p: &Params| {
            let e = params_to_embeddings(p, n, m);
            let out = s2s(&e, &labels)?;
            let mut g = Params::new();
            g.insert("embeddings", flatten(&out.embedding_grads));
            Ok((out.value, g))
        };
        let report = grad_check(loss, &params, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn s2s_log_form_gradient_matches_finite_differences() {
        let (n, m, k) = (8, 4, 3);
        let (embeddings, labels) = random_batch(33, n, m, k);
        let params = embeddings_to_params(&embeddings);
        let loss = |p: &Params| {
            let e = params_to_embeddings(p, n, m);
            let out = s2s_with_form(ContrastForm::Log, &e, &labels)?;
            let mut g = Params::new();
            g.insert("embeddings", flatten(&out.embedding_grads));
            Ok((out.value, g))
        };
        let report = grad_check(loss, &params, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn ind_with_unit_weights_is_bitwise_s2s() {
        for seed in 0..10 {
            let (embeddings, labels) = random_batch(seed, 9, 4, 3);
            let plain = s2s(&embeddings, &labels).unwrap();
            let weighted =
                ind(&embeddings, &labels, &IndWeights(vec![1.0; 9])).unwrap();
            assert_eq!(plain.value.to_bits(), weighted.value.to_bits());
            for (a, b) in plain.embedding_grads.iter().zip(&weighted.embedding_grads) {
                for (x, y) in a.iter().zip(b) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn ind_with_zero_weights_vanishes() {
        let (embeddings, labels) = random_batch(5, 6, 4, 2);
        let out = ind(&embeddings, &labels, &IndWeights(vec![0.0; 6])).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.embedding_grads.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn ind_weighted_identical_pair_scalar_value() {
        let embeddings = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let labels = vec![0, 0];
        let out = ind(&embeddings, &labels, &IndWeights(vec![1.0, 0.5])).unwrap();
        let expected = -(2.0 * 0.5 * sigma(1.0).exp()) / 4.0;
        assert!((out.value - expected).abs() < 1e-12);
        assert!((out.value - (-0.519_319_601_681_815_9)).abs() < 1e-12);
    }

    #[test]
    fn ind_weight_length_mismatch_is_an_error() {
        let (embeddings, labels) = random_batch(5, 4, 3, 2);
        assert!(ind(&embeddings, &labels, &IndWeights(vec![1.0; 3])).is_err());
    }

    #[test]
    fn ind_gradient_matches_finite_differences() {
        let (n, m, k) = (7, 4, 3);
        let (embeddings, labels) = random_batch(44, n, m, k);
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let weights = IndWeights((0..n).map(|_| rng.gen_range(0.0..1.0)).collect());
        let params = embeddings_to_params(&embeddings);
        let loss = |p: &Params| {
            let e = params_to_embeddings(p, n, m);
            let out = ind(&e, &labels, &weights)?;
            let mut g = Params::new();
            g.insert("embeddings", flatten(&out.embedding_grads));
            Ok((out.value, g))
        };
        let report = grad_check(loss, &params, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn s2z_anchored_scalar_value() {
        // In-class statement aligned with its prototype, out-class
        // statement opposite: the pair term is 2 ln sigma(1).
        let store =
            PrototypeStore::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let embeddings = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let labels = vec![0, 1];
        let out = s2z_for_relation(0, &embeddings, &labels, &store).unwrap();
        let expected = -(2.0 * sigma(1.0).ln()) / 4.0;
        assert!((out.value - expected).abs() < 1e-12);
        assert!((out.value - 0.156_631).abs() < 1e-6);
    }

    #[test]
    fn s2z_aggregates_over_present_relations() {
        // Symmetric two-relation batch: each relation contributes the
        // anchored value, so the total doubles it.
        let store =
            PrototypeStore::from_rows(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let embeddings = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let labels = vec![0, 1];
        let anchored = s2z_for_relation(0, &embeddings, &labels, &store).unwrap();
        let total = s2z(&embeddings, &labels, &store).unwrap();
        assert!((total.value - 2.0 * anchored.value).abs() < 1e-12);
        assert!((total.value - 0.313_262).abs() < 1e-6);
    }

    #[test]
    fn s2z_single_relation_batch_is_zero() {
        let store =
            PrototypeStore::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let embeddings = vec![vec![1.0, 0.2], vec![0.9, -0.1]];
        let labels = vec![0, 0];
        let out = s2z(&embeddings, &labels, &store).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn s2z_missing_prototype_is_an_error() {
        let store = PrototypeStore::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let embeddings = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            s2z(&embeddings, &[0, 1], &store),
            Err(Error::MissingPrototype { relation: 1 })
        ));
    }

    #[test]
    fn s2z_monotonic_in_alignment() {
        // Rotating the in-class statement toward its prototype lowers
        // the loss; rotating the out-class statement toward it raises it.
        let store =
            PrototypeStore::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let at = |theta_in: f64, theta_out: f64| {
            let embeddings = vec![
                vec![theta_in.cos(), theta_in.sin()],
                vec![theta_out.cos(), theta_out.sin()],
            ];
            s2z_for_relation(0, &embeddings, &[0, 1], &store)
                .unwrap()
                .value
        };
        assert!(at(0.2, 2.6) < at(0.7, 2.6));
        assert!(at(0.2, 1.8) > at(0.2, 2.6));
    }

    #[test]
    fn s2z_gradient_matches_finite_differences() {
        let (n, m, k) = (10, 4, 3);
        let (embeddings, labels) = random_batch(7, n, m, k);
        let store_rows: Vec<Vec<f64>> = {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            (0..k)
                .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        };
        let mut params = embeddings_to_params(&embeddings);
        params.insert("prototypes", flatten(&store_rows));
        let loss = |p: &Params| {
            let e = params_to_embeddings(p, n, m);
            let flat = p.get("prototypes").unwrap();
            let rows: Vec<Vec<f64>> = (0..k).map(|r| flat[r * m..(r + 1) * m].to_vec()).collect();
            let store = PrototypeStore::from_rows(rows)?;
            let out = s2z(&e, &labels, &store)?;
            let mut g = Params::new();
            g.insert("embeddings", flatten(&out.embedding_grads));
            g.insert("prototypes", flatten(&out.prototype_grads));
            Ok((out.value, g))
        };
        let report = grad_check(loss, &params, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn s2z_prime_scalar_value() {
        let store =
            PrototypeStore::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let embeddings = vec![vec![1.0, 0.0]];
        let labels = vec![0];
        let out = s2z_prime(&embeddings, &labels, &store).unwrap();
        let expected = -(sigma(1.0).ln() + (1.0 - sigma(0.0)).ln());
        assert!((out.value - expected).abs() < 1e-12);
        assert!((out.value - 1.006_409).abs() < 1e-6);
    }

    #[test]
    fn s2z_prime_anti_aligned_negative_is_the_floor() {
        // Aligned with own prototype and opposite the sole other
        // prototype: no perturbed configuration scores lower.
        let store =
            PrototypeStore::from_rows(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let at = |theta: f64| {
            let embeddings = vec![vec![theta.cos(), theta.sin()]];
            s2z_prime(&embeddings, &[0], &store).unwrap().value
        };
        let floor = at(0.0);
        let expected = -2.0 * SIM_MAX.ln();
        assert!((floor - expected).abs() < 1e-12);
        for theta in [0.3, 0.9, 1.7, 2.8] {
            assert!(at(theta) > floor, "theta {theta}");
        }
    }

    #[test]
    fn s2z_prime_needs_two_prototypes() {
        let store = PrototypeStore::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        assert!(s2z_prime(&[vec![1.0, 0.0]], &[0], &store).is_err());
    }

    #[test]
    fn s2z_prime_gradient_matches_finite_differences() {
        let (n, m, k) = (9, 5, 4);
        let (embeddings, labels) = random_batch(71, n, m, k);
        let store_rows: Vec<Vec<f64>> = {
            let mut rng = ChaCha8Rng::seed_from_u64(72);
            (0..k)
                .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        };
        let mut params = embeddings_to_params(&embeddings);
        params.insert("prototypes", flatten(&store_rows));
        let loss = |p: &Params| {
            let e = params_to_embeddings(p, n, m);
            let flat = p.get("prototypes").unwrap();
            let rows: Vec<Vec<f64>> = (0..k).map(|r| flat[r * m..(r + 1) * m].to_vec()).collect();
            let store = PrototypeStore::from_rows(rows)?;
            let out = s2z_prime(&e, &labels, &store)?;
            let mut g = Params::new();
            g.insert("embeddings", flatten(&out.embedding_grads));
            g.insert("prototypes", flatten(&out.prototype_grads));
            Ok((out.value, g))
        };
        let report = grad_check(loss, &params, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn cls_uniform_classifier_gives_ln_k() {
        let store = PrototypeStore::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let classifier = LinearSoftmax::zeros(4, 2);
        let out = prototype_cls(&store, &classifier).unwrap();
        assert!((out.value - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cls_perfect_classifier_approaches_zero() {
        let store =
            PrototypeStore::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut classifier = LinearSoftmax::zeros(2, 2);
        classifier.weight = vec![vec![50.0, 0.0], vec![0.0, 50.0]];
        let out = prototype_cls(&store, &classifier).unwrap();
        assert!(out.value < 1e-12, "value {}", out.value);
    }

    #[test]
    fn cls_two_prototype_scalar_value() {
        let store =
            PrototypeStore::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut classifier = LinearSoftmax::zeros(2, 2);
        classifier.weight = vec![vec![2.0, 0.0], vec![0.0, 2.0]];
        let out = prototype_cls(&store, &classifier).unwrap();
        let p = 2.0f64.exp() / (2.0f64.exp() + 1.0);
        assert!((out.value - (-p.ln())).abs() < 1e-12);
        assert!((out.value - 0.126_928).abs() < 1e-6);
    }

    #[test]
    fn cls_gradient_matches_finite_differences() {
        let (m, k) = (4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let store_rows: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let weight: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let bias: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut params = Params::new();
        params.insert("prototypes", flatten(&store_rows));
        params.insert("cls_w", flatten(&weight));
        params.insert("cls_b", bias);
        let loss = |p: &Params| {
            let flat = p.get("prototypes").unwrap();
            let rows: Vec<Vec<f64>> = (0..k).map(|r| flat[r * m..(r + 1) * m].to_vec()).collect();
            let store = PrototypeStore::from_rows(rows)?;
            let wf = p.get("cls_w").unwrap();
            let classifier = LinearSoftmax {
                weight: (0..k).map(|r| wf[r * m..(r + 1) * m].to_vec()).collect(),
                bias: p.get("cls_b").unwrap().to_vec(),
            };
            let out = prototype_cls(&store, &classifier)?;
            let mut g = Params::new();
            g.insert("prototypes", flatten(&out.prototype_grads));
            g.insert("cls_w", flatten(&out.weight_grads));
            g.insert("cls_b", out.bias_grads);
            Ok((out.value, g))
        };
        let report = grad_check(loss, &params, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn ce_uniform_logits_give_ln_k() {
        let logits = vec![vec![0.0; 4]; 3];
        let out = cross_entropy(&logits, &[0, 1, 3]).unwrap();
        assert!((out.value - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_scalar_value() {
        let out = cross_entropy(&[vec![1.0, 0.0]], &[0]).unwrap();
        let expected = -(1.0f64.exp() / (1.0f64.exp() + 1.0)).ln();
        assert!((out.value - expected).abs() < 1e-12);
        assert!((out.value - 0.313_262).abs() < 1e-6);
    }

    #[test]
    fn ce_perfect_logits_approach_zero() {
        let out = cross_entropy(&[vec![60.0, 0.0], vec![0.0, 60.0]], &[0, 1]).unwrap();
        assert!(out.value < 1e-12);
    }

    #[test]
    fn ce_label_out_of_range_is_an_error() {
        assert!(cross_entropy(&[vec![0.0, 0.0]], &[2]).is_err());
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (n, k) = (6, 4);
        let logits: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let mut params = Params::new();
        params.insert("logits", flatten(&logits));
        let loss = |p: &Params| {
            let flat = p.get("logits").unwrap();
            let rows: Vec<Vec<f64>> = (0..n).map(|i| flat[i * k..(i + 1) * k].to_vec()).collect();
            let out = cross_entropy(&rows, &labels)?;
            let mut g = Params::new();
            g.insert("logits", flatten(&out.logit_grads));
            Ok((out.value, g))
        };
        let report = grad_check(loss, &params, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    fn random_setup(
        seed: u64,
        n: usize,
        m: usize,
        k: usize,
    ) -> (Vec<Vec<f64>>, Vec<RelationId>, PrototypeStore, LinearSoftmax) {
        let (embeddings, labels) = random_batch(seed, n, m, k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let store = PrototypeStore::from_rows(rows).unwrap();
        let classifier = LinearSoftmax::init(k, m, seed ^ 0xa5a5);
        (embeddings, labels, store, classifier)
    }

    #[test]
    fn combined_reduces_to_s2s() {
        let (embeddings, labels, store, classifier) = random_setup(3, 8, 4, 3);
        let weights = LossWeights {
            lambda1: 1.0,
            lambda2: 0.0,
            lambda3: 0.0,
        };
        let report = combined(&embeddings, &labels, &store, &classifier, &weights).unwrap();
        let plain = s2s(&embeddings, &labels).unwrap();
        assert_eq!(report.combined, plain.value);
    }

    #[test]
    fn combined_reduces_to_cls() {
        let store = PrototypeStore::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        let classifier = LinearSoftmax::zeros(4, 2);
        let embeddings = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let labels = vec![0, 1];
        let weights = LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 1.0,
        };
        let report = combined(&embeddings, &labels, &store, &classifier, &weights).unwrap();
        assert!((report.combined - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn combined_decomposition_identity() {
        let (embeddings, labels, store, classifier) = random_setup(17, 10, 5, 4);
        let weights = LossWeights::default();
        let report = combined(&embeddings, &labels, &store, &classifier, &weights).unwrap();
        let recomposed = weights.lambda1 * report.s2s
            + weights.lambda2 * (report.s2z + report.s2z_prime)
            + weights.lambda3 * report.cls;
        assert!((report.combined - recomposed).abs() < 1e-12);

        // Component values match independent recomputation.
        assert_eq!(report.s2s, s2s(&embeddings, &labels).unwrap().value);
        assert_eq!(report.s2z, s2z(&embeddings, &labels, &store).unwrap().value);
        assert_eq!(
            report.s2z_prime,
            s2z_prime(&embeddings, &labels, &store).unwrap().value
        );
        assert_eq!(report.cls, prototype_cls(&store, &classifier).unwrap().value);
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        let (n, m, k) = (12, 4, 3);
        let (embeddings, labels, store, classifier) = random_setup(29, n, m, k);
        let weights = LossWeights {
            lambda1: 0.7,
            lambda2: 1.3,
            lambda3: 0.5,
        };
        let mut params = embeddings_to_params(&embeddings);
        params.insert("prototypes", store.flat());
        params.insert("cls_w", flatten(&classifier.weight));
        params.insert("cls_b", classifier.bias.clone());
        let loss = |p: &Params| {
            let e = params_to_embeddings(p, n, m);
            let flat = p.get("prototypes").unwrap();
            let rows: Vec<Vec<f64>> = (0..k).map(|r| flat[r * m..(r + 1) * m].to_vec()).collect();
            let store = PrototypeStore::from_rows(rows)?;
            let wf = p.get("cls_w").unwrap();
            let classifier = LinearSoftmax {
                weight: (0..k).map(|r| wf[r * m..(r + 1) * m].to_vec()).collect(),
                bias: p.get("cls_b").unwrap().to_vec(),
            };
            let report = combined(&e, &labels, &store, &classifier, &weights)?;
            let mut g = Params::new();
            g.insert("embeddings", flatten(&report.embedding_grads));
            g.insert("prototypes", flatten(&report.prototype_grads));
            g.insert("cls_w", flatten(&report.classifier_weight_grads));
            g.insert("cls_b", report.classifier_bias_grads);
            Ok((report.combined, g))
        };
        let report = grad_check(loss, &params, 1e-5).unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn combined_flags_single_label_batches() {
        let (_, _, store, classifier) = random_setup(3, 4, 4, 3);
        let embeddings = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.9, 0.1, 0.0, 0.0]];
        let report =
            combined(&embeddings, &[1, 1], &store, &classifier, &LossWeights::default()).unwrap();
        assert_eq!(report.warnings.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn losses_are_finite_on_nonzero_batches(seed in 0u64..4000) {
            let (embeddings, labels, store, classifier) = random_setup(seed, 6, 4, 3);
            let report = combined(
                &embeddings,
                &labels,
                &store,
                &classifier,
                &LossWeights::default(),
            ).unwrap();
            prop_assert!(report.combined.is_finite());
            prop_assert!(report.embedding_grads.iter().flatten().all(|g| g.is_finite()));
            prop_assert!(report.prototype_grads.iter().flatten().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn dot_sanity_for_test_helpers() {
        // Guard for the helpers above.
        assert_eq!(dot(&[1.0, 2.0], &[2.0, 0.5]), 3.0);
    }
}
