//! The similarity metric between embeddings and the finite-difference
//! gradient checker.
//!
//! The metric is `similarity(a, b) = sigmoid(a_hat . b_hat)` over the
//! unit-normalized inputs. Values live in `[sigmoid(-1), sigmoid(1)]`,
//! roughly `(0.26894, 0.73106)`, and higher means more similar. A second
//! form, [`printed_distance`], is `sigmoid(-a_hat . b_hat)`; the two are
//! related by `printed_distance = 1 - similarity` and the similarity form
//! is the default everywhere in this crate.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::vecmath::{dot, norm, normalized, sigmoid};

/// `sigmoid(1)`, the similarity of two identical directions.
pub const SIM_MAX: f64 = 0.731_058_578_630_004_9;
/// `sigmoid(-1)`, the similarity of two opposite directions.
pub const SIM_MIN: f64 = 0.268_941_421_369_995_1;

/// Which algebraic form of the metric to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricForm {
    /// `sigmoid(+x)`: large for aligned directions. Default.
    #[default]
    Similarity,
    /// `sigmoid(-x)`: the complementary form, kept for side-by-side
    /// inspection. Equal to `1 - Similarity`.
    PrintedDistance,
}

/// Similarity between two nonzero vectors: `sigmoid(a_hat . b_hat)`.
///
/// Symmetric, invariant under positive rescaling of either argument.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let ua = normalized(a).ok_or(Error::ZeroNorm {
        context: "similarity",
    })?;
    let ub = normalized(b).ok_or(Error::ZeroNorm {
        context: "similarity",
    })?;
    Ok(sigmoid(dot(&ua, &ub)))
}

/// The complementary metric form `sigmoid(-a_hat . b_hat)`.
pub fn printed_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - similarity(a, b)?)
}

/// Evaluate the metric under the requested form.
pub fn score(form: MetricForm, a: &[f64], b: &[f64]) -> Result<f64> {
    match form {
        MetricForm::Similarity => similarity(a, b),
        MetricForm::PrintedDistance => printed_distance(a, b),
    }
}

/// Similarity together with its gradients with respect to both inputs.
pub(crate) struct SimGrad {
    pub value: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
}

/// d = sigmoid(x), x = a_hat . b_hat;
/// dd/da = d(1-d) * (b_hat - x a_hat) / |a|, and symmetrically for b.
pub(crate) fn similarity_grad(a: &[f64], b: &[f64]) -> Result<SimGrad> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm {
            context: "similarity",
        });
    }
    let ua: Vec<f64> = a.iter().map(|x| x / na).collect();
    let ub: Vec<f64> = b.iter().map(|x| x / nb).collect();
    let x = dot(&ua, &ub);
    let d = sigmoid(x);
    let slope = d * (1.0 - d);
    let grad_a = ua
        .iter()
        .zip(&ub)
        .map(|(&uai, &ubi)| slope * (ubi - x * uai) / na)
        .collect();
    let grad_b = ua
        .iter()
        .zip(&ub)
        .map(|(&uai, &ubi)| slope * (uai - x * ubi) / nb)
        .collect();
    Ok(SimGrad {
        value: d,
        grad_a,
        grad_b,
    })
}

/// Symmetric matrix of pairwise similarities; the diagonal is the
/// self-similarity constant `sigmoid(1)`.
pub fn pairwise_similarity(embeddings: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = embeddings.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = SIM_MAX;
        for j in (i + 1)..n {
            let s = similarity(&embeddings[i], &embeddings[j])?;
            m[i][j] = s;
            m[j][i] = s;
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

/// A named collection of flat parameter vectors, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    groups: BTreeMap<String, Vec<f64>>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.groups.insert(name.into(), values);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.groups.get(name).map(|v| v.as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.groups.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Worst relative error for one named parameter group.
#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: String,
    pub max_rel_err: f64,
    /// Coordinate index attaining the maximum.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Relative-error denominator floor, guarding against zero gradients.
const REL_ERR_FLOOR: f64 = 1e-8;

/// Check the analytic gradient of `loss` against central finite
/// differences at `params`.
///
/// `loss` returns the scalar value and the analytic gradient laid out
/// like `params`. The numeric gradient of each coordinate is
/// `(f(x+eps) - f(x-eps)) / (2 eps)` and the relative error uses the
/// denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(loss: F, params: &Params, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Params) -> Result<(f64, Params)>,
{
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "grad_check step must be positive, got {eps}"
        )));
    }
    let (value, analytic) = loss(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }
    let mut groups = Vec::new();
    let mut global_max = 0.0f64;
    for (name, base) in params.iter() {
        let grad = analytic.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!("loss returned no gradient for parameter `{name}`"))
        })?;
        if grad.len() != base.len() {
            return Err(Error::Dimension {
                context: "grad_check gradient",
                expected: base.len(),
                got: grad.len(),
            });
        }
        let mut worst = GroupCheck {
            name: name.to_string(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..base.len() {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap()[k] = base[k] + eps;
            let (f_plus, _) = loss(&plus)?;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap()[k] = base[k] - eps;
            let (f_minus, _) = loss(&minus)?;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(Error::NonFinite("grad_check perturbed loss".into()));
            }
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let denom = grad[k].abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            let rel = (grad[k] - numeric).abs() / denom;
            if rel > worst.max_rel_err {
                worst.max_rel_err = rel;
                worst.worst_index = k;
                worst.analytic = grad[k];
                worst.numeric = numeric;
            }
        }
        global_max = global_max.max(worst.max_rel_err);
        groups.push(worst);
    }
    Ok(GradCheckReport {
        groups,
        max_rel_err: global_max,
    })
}
