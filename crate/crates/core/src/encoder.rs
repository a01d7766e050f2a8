//! Trainable statement encoder with entity-marker pooling, plus a frozen
//! precomputed-embedding encoder for plugging in external features.
//!
//! The trainable encoder is deliberately small: a token embedding table,
//! a bag-of-words context mix, and a linear projection over the two
//! marker positions. With marker positions `p_h`, `p_t` in the marked
//! sequence and `mu` the mean embedding over all marked positions,
//!
//! ```text
//! h_p = E[token_p] + rho * mu
//! s   = W . concat(h_{p_h}, h_{p_t}) + b
//! ```
//!
//! Gradients with respect to every parameter are hand-derived and are
//! checked against finite differences in the tests.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Statement, TokenId};
use crate::error::{Error, Result};
use crate::vecmath::all_finite;

/// Hyperparameters of the trainable encoder. The vocabulary size counts
/// the two reserved marker tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub vocab_size: usize,
    pub token_dim: usize,
    pub output_dim: usize,
    /// Weight of the bag-of-words context mix; fixed, not trained.
    pub context_mix: f64,
    pub marker_head_id: TokenId,
    pub marker_tail_id: TokenId,
}

impl EncoderSpec {
    /// Conventional layout: markers occupy the two ids after the data
    /// vocabulary.
    pub fn with_markers_appended(
        data_vocab: usize,
        token_dim: usize,
        output_dim: usize,
        context_mix: f64,
    ) -> Self {
        Self {
            vocab_size: data_vocab + 2,
            token_dim,
            output_dim,
            context_mix,
            marker_head_id: data_vocab,
            marker_tail_id: data_vocab + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.token_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "encoder needs vocab_size >= 2 and positive dimensions".to_string(),
            ));
        }
        if self.marker_head_id == self.marker_tail_id
            || self.marker_head_id >= self.vocab_size
            || self.marker_tail_id >= self.vocab_size
        {
            return Err(Error::InvalidArgument(
                "marker ids must be distinct and inside the vocabulary".to_string(),
            ));
        }
        Ok(())
    }
}

/// A statement's tokens with the two markers inserted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedSequence {
    pub tokens: Vec<TokenId>,
    pub head_marker_pos: usize,
    pub tail_marker_pos: usize,
}

/// Insert the head marker immediately before the head span and the tail
/// marker immediately before the tail span. The marker at the higher
/// index goes in first so earlier indices stay valid; the relative order
/// of the original tokens never changes.
pub fn insert_markers(statement: &Statement, spec: &EncoderSpec) -> Result<MarkedSequence> {
    statement
        .validate()
        .map_err(|message| Error::InvalidStatement { index: 0, message })?;
    let mut tokens = statement.tokens.clone();
    let (i1, j1) = (statement.head.start, statement.tail.start);
    if i1 >= j1 {
        tokens.insert(i1, spec.marker_head_id);
        tokens.insert(j1, spec.marker_tail_id);
    } else {
        tokens.insert(j1, spec.marker_tail_id);
        tokens.insert(i1, spec.marker_head_id);
    }
    let head_marker_pos = i1 + usize::from(j1 < i1);
    let tail_marker_pos = j1 + usize::from(i1 <= j1);
    Ok(MarkedSequence {
        tokens,
        head_marker_pos,
        tail_marker_pos,
    })
}

/// Named gradient buffers matching [`EncoderModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub embed: Vec<f64>,
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        Self {
            embed: vec![0.0; model.embed.len()],
            proj_w: vec![0.0; model.proj_w.len()],
            proj_b: vec![0.0; model.proj_b.len()],
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in self
            .embed
            .iter_mut()
            .chain(self.proj_w.iter_mut())
            .chain(self.proj_b.iter_mut())
        {
            *v *= k;
        }
    }
}

pub const PARAM_EMBED: &str = "embed";
pub const PARAM_PROJ_W: &str = "proj_w";
pub const PARAM_PROJ_B: &str = "proj_b";

/// The trainable encoder. Parameters are flat row-major `f64` buffers:
/// `embed` is `vocab_size x token_dim`, `proj_w` is
/// `output_dim x 2*token_dim`, `proj_b` is `output_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub spec: EncoderSpec,
    pub embed: Vec<f64>,
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
}

impl EncoderModel {
    /// Initialize with per-matrix uniform draws in `[-a, a]`,
    /// `a = sqrt(6 / (rows + cols))`, and zero bias.
    pub fn init(spec: EncoderSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize| -> Vec<f64> {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect()
        };
        let embed = uniform(spec.vocab_size, spec.token_dim);
        let proj_w = uniform(spec.output_dim, 2 * spec.token_dim);
        let proj_b = vec![0.0; spec.output_dim];
        Ok(Self {
            spec,
            embed,
            proj_w,
            proj_b,
        })
    }

    fn embedding(&self, token: TokenId) -> &[f64] {
        let e = self.spec.token_dim;
        &self.embed[token * e..(token + 1) * e]
    }

    fn check_tokens(&self, marked: &MarkedSequence) -> Result<()> {
        if let Some(&t) = marked.tokens.iter().find(|&&t| t >= self.spec.vocab_size) {
            return Err(Error::InvalidArgument(format!(
                "token id {t} outside encoder vocabulary of size {}",
                self.spec.vocab_size
            )));
        }
        Ok(())
    }

    /// Multiplicity of each token in the marked sequence, in ascending
    /// token order so the context mean is independent of token order.
    fn bag(marked: &MarkedSequence) -> BTreeMap<TokenId, usize> {
        let mut bag = BTreeMap::new();
        for &t in &marked.tokens {
            *bag.entry(t).or_insert(0usize) += 1;
        }
        bag
    }

    fn context_mean(&self, bag: &BTreeMap<TokenId, usize>, positions: usize) -> Vec<f64> {
        let e = self.spec.token_dim;
        let mut mu = vec![0.0; e];
        for (&t, &count) in bag {
            let row = self.embedding(t);
            for (m, &x) in mu.iter_mut().zip(row) {
                *m += count as f64 * x;
            }
        }
        let inv = 1.0 / positions as f64;
        for m in &mut mu {
            *m *= inv;
        }
        mu
    }

    /// Encode a statement to an `output_dim` embedding.
    pub fn encode(&self, statement: &Statement) -> Result<Vec<f64>> {
        let marked = insert_markers(statement, &self.spec)?;
        self.check_tokens(&marked)?;
        let e = self.spec.token_dim;
        let m = self.spec.output_dim;
        let rho = self.spec.context_mix;
        let mu = self.context_mean(&Self::bag(&marked), marked.tokens.len());

        // h at the two marker positions; the tokens there are the markers.
        let mut pooled = vec![0.0; 2 * e];
        let head_row = self.embedding(self.spec.marker_head_id);
        let tail_row = self.embedding(self.spec.marker_tail_id);
        for i in 0..e {
            pooled[i] = head_row[i] + rho * mu[i];
            pooled[e + i] = tail_row[i] + rho * mu[i];
        }

        let mut out = self.proj_b.clone();
        for row in 0..m {
            let w = &self.proj_w[row * 2 * e..(row + 1) * 2 * e];
            out[row] += w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(out)
    }

    /// Elementwise [`encode`](Self::encode), order preserved.
    pub fn encode_batch(&self, statements: &[Statement]) -> Result<Vec<Vec<f64>>> {
        statements.iter().map(|s| self.encode(s)).collect()
    }

    /// Accumulate parameter gradients for `upstream` (the gradient of a
    /// scalar loss with respect to this statement's embedding).
    pub fn backward(
        &self,
        statement: &Statement,
        upstream: &[f64],
        grads: &mut EncoderGrads,
    ) -> Result<()> {
        let marked = insert_markers(statement, &self.spec)?;
        self.check_tokens(&marked)?;
        let e = self.spec.token_dim;
        let m = self.spec.output_dim;
        if upstream.len() != m {
            return Err(Error::Dimension {
                context: "encoder backward upstream gradient",
                expected: m,
                got: upstream.len(),
            });
        }
        let rho = self.spec.context_mix;
        let bag = Self::bag(&marked);
        let positions = marked.tokens.len();
        let mu = self.context_mean(&bag, positions);

        let head_row = self.embedding(self.spec.marker_head_id);
        let tail_row = self.embedding(self.spec.marker_tail_id);
        let mut pooled = vec![0.0; 2 * e];
        for i in 0..e {
            pooled[i] = head_row[i] + rho * mu[i];
            pooled[e + i] = tail_row[i] + rho * mu[i];
        }

        // b and W.
        for row in 0..m {
            grads.proj_b[row] += upstream[row];
            let w_row = &mut grads.proj_w[row * 2 * e..(row + 1) * 2 * e];
            for (g, &p) in w_row.iter_mut().zip(&pooled) {
                *g += upstream[row] * p;
            }
        }

        // u = W^T upstream, split into the head and tail halves.
        let mut u = vec![0.0; 2 * e];
        for row in 0..m {
            let w = &self.proj_w[row * 2 * e..(row + 1) * 2 * e];
            for (ui, &wi) in u.iter_mut().zip(w) {
                *ui += upstream[row] * wi;
            }
        }
        let (u_head, u_tail) = u.split_at(e);

        // Direct marker terms.
        let head_base = self.spec.marker_head_id * e;
        let tail_base = self.spec.marker_tail_id * e;
        for i in 0..e {
            grads.embed[head_base + i] += u_head[i];
            grads.embed[tail_base + i] += u_tail[i];
        }

        // Context-mean term: every occurrence contributes rho/P of
        // (u_head + u_tail) to its token row.
        let inv = rho / positions as f64;
        for (&t, &count) in &bag {
            let base = t * e;
            let k = count as f64 * inv;
            for i in 0..e {
                grads.embed[base + i] += k * (u_head[i] + u_tail[i]);
            }
        }
        Ok(())
    }

    /// Named views of the parameter buffers, in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            (PARAM_EMBED, self.embed.as_slice()),
            (PARAM_PROJ_W, self.proj_w.as_slice()),
            (PARAM_PROJ_B, self.proj_b.as_slice()),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        vec![
            (PARAM_EMBED, &mut self.embed),
            (PARAM_PROJ_W, &mut self.proj_w),
            (PARAM_PROJ_B, &mut self.proj_b),
        ]
    }

    pub fn grads_as_params(grads: &EncoderGrads) -> Vec<(&'static str, &[f64])> {
        vec![
            (PARAM_EMBED, grads.embed.as_slice()),
            (PARAM_PROJ_W, grads.proj_w.as_slice()),
            (PARAM_PROJ_B, grads.proj_b.as_slice()),
        ]
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.embed) && all_finite(&self.proj_w) && all_finite(&self.proj_b)
    }
}

/// Anything that can embed the statements of a set: the trainable
/// encoder, or a table of precomputed vectors keyed by statement index.
pub trait StatementEncoder {
    fn output_dim(&self) -> usize;
    fn encode_statement(&self, index: usize, statement: &Statement) -> Result<Vec<f64>>;
}

impl StatementEncoder for EncoderModel {
    fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    fn encode_statement(&self, _index: usize, statement: &Statement) -> Result<Vec<f64>> {
        self.encode(statement)
    }
}

/// Precomputed embeddings keyed by statement index; gradients are zero.
#[derive(Debug, Clone)]
pub struct FrozenEncoder {
    dim: usize,
    vectors: BTreeMap<usize, Vec<f64>>,
}

impl FrozenEncoder {
    pub fn new(dim: usize, vectors: BTreeMap<usize, Vec<f64>>) -> Self {
        Self { dim, vectors }
    }

    /// Parse a CSV file with columns `index, v0, ..., v(m-1)`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty embedding file".to_string()))?;
        let columns = header.split(',').count();
        if columns < 2 {
            return Err(Error::Parse(
                "embedding file needs columns index, v0, ...".to_string(),
            ));
        }
        let dim = columns - 1;
        let mut vectors = BTreeMap::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse_err = |what: &str| Error::Malformed {
                line: lineno + 1,
                message: format!("bad {what} in embedding file"),
            };
            let index: usize = fields
                .next()
                .ok_or_else(|| parse_err("index"))?
                .trim()
                .parse()
                .map_err(|_| parse_err("index"))?;
            let values: Vec<f64> = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err("value"))?;
            if values.len() != dim {
                return Err(Error::Malformed {
                    line: lineno + 1,
                    message: format!("expected {dim} values, got {}", values.len()),
                });
            }
            vectors.insert(index, values);
        }
        Ok(Self { dim, vectors })
    }

    /// Frozen contract: no trainable parameters, all gradients zero.
    pub fn parameter_gradients(&self) -> Vec<(&'static str, Vec<f64>)> {
        Vec::new()
    }
}

impl StatementEncoder for FrozenEncoder {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn encode_statement(&self, index: usize, _statement: &Statement) -> Result<Vec<f64>> {
        self.vectors
            .get(&index)
            .cloned()
            .ok_or(Error::MissingEmbedding(index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Span;
    use crate::metric::{grad_check, Params};
    use proptest::prelude::*;

    fn spec(vocab: usize, e: usize, m: usize, rho: f64) -> EncoderSpec {
        EncoderSpec::with_markers_appended(vocab, e, m, rho)
    }

    fn stmt(tokens: Vec<TokenId>, head: (usize, usize), tail: (usize, usize)) -> Statement {
        Statement {
            tokens,
            head: Span::new(head.0, head.1),
            tail: Span::new(tail.0, tail.1),
            relation: 0,
            expresses: None,
            true_relation: None,
        }
    }

    #[test]
    fn markers_inserted_head_first_in_sentence() {
        let s = stmt(vec![0, 1, 2], (0, 1), (2, 3));
        let spec = spec(3, 2, 2, 1.0);
        let marked = insert_markers(&s, &spec).unwrap();
        assert_eq!(marked.tokens, vec![3, 0, 1, 4, 2]);
        assert_eq!((marked.head_marker_pos, marked.tail_marker_pos), (0, 3));
    }

    #[test]
    fn markers_inserted_tail_first_in_sentence() {
        let s = stmt(vec![0, 1, 2], (2, 3), (0, 1));
        let spec = spec(3, 2, 2, 1.0);
        let marked = insert_markers(&s, &spec).unwrap();
        assert_eq!(marked.tokens, vec![4, 0, 1, 3, 2]);
        assert_eq!((marked.head_marker_pos, marked.tail_marker_pos), (3, 0));
    }

    #[test]
    fn markers_with_adjacent_spans() {
        let s = stmt(vec![0, 1], (0, 1), (1, 2));
        let spec = spec(2, 2, 2, 1.0);
        let marked = insert_markers(&s, &spec).unwrap();
        assert_eq!(marked.tokens, vec![2, 0, 3, 1]);
        assert_eq!((marked.head_marker_pos, marked.tail_marker_pos), (0, 2));
    }

    proptest! {
        #[test]
        fn markers_preserve_original_token_order(
            len in 2usize..12,
            seed in 0u64..500,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let tokens: Vec<TokenId> = (0..len).map(|_| rng.gen_range(0..20)).collect();
            // Carve two non-overlapping spans.
            let a = rng.gen_range(0..len);
            let b = rng.gen_range(0..len);
            prop_assume!(a != b);
            let (h, t) = (a.min(b), a.max(b));
            let s = stmt(tokens.clone(), (h, h + 1), (t, t + 1));
            let spec = spec(20, 2, 2, 1.0);
            let marked = insert_markers(&s, &spec).unwrap();
            let originals: Vec<TokenId> = marked
                .tokens
                .iter()
                .copied()
                .filter(|&t| t < 20)
                .collect();
            prop_assert_eq!(originals, tokens);
        }
    }

    #[test]
    fn zero_mix_with_selector_projection_is_a_marker_lookup() {
        // rho = 0, W = [I | 0], b = 0: the output is E[marker_head_id].
        let spec = spec(3, 2, 2, 0.0);
        let mut model = EncoderModel::init(spec.clone(), 0).unwrap();
        model.proj_w = vec![
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0,
        ];
        model.proj_b = vec![0.0, 0.0];
        let s = stmt(vec![0, 1, 2], (0, 1), (2, 3));
        let out = model.encode(&s).unwrap();
        let e = spec.token_dim;
        let head = &model.embed[spec.marker_head_id * e..(spec.marker_head_id + 1) * e];
        assert_eq!(out, head.to_vec());
    }

    #[test]
    fn context_mean_ignores_token_order_bitwise() {
        let spec = spec(6, 3, 4, 1.0);
        let model = EncoderModel::init(spec, 7).unwrap();
        // Same multiset, same marker contexts, permuted context tokens.
        let a = stmt(vec![0, 1, 2, 3, 4], (0, 1), (4, 5));
        let b = stmt(vec![0, 3, 2, 1, 4], (0, 1), (4, 5));
        let ea = model.encode(&a).unwrap();
        let eb = model.encode(&b).unwrap();
        assert_eq!(ea, eb);
    }

    #[test]
    fn encode_batch_basics() {
        let spec = spec(5, 2, 3, 1.0);
        let model = EncoderModel::init(spec, 1).unwrap();
        assert!(model.encode_batch(&[]).unwrap().is_empty());
        let s = stmt(vec![0, 1, 2], (0, 1), (2, 3));
        let batch = model.encode_batch(std::slice::from_ref(&s)).unwrap();
        assert_eq!(batch[0], model.encode(&s).unwrap());

        let s2 = stmt(vec![4, 1], (0, 1), (1, 2));
        let fwd = model.encode_batch(&[s.clone(), s2.clone()]).unwrap();
        let rev = model.encode_batch(&[s2, s]).unwrap();
        assert_eq!(fwd[0], rev[1]);
        assert_eq!(fwd[1], rev[0]);
    }

    #[test]
    fn out_of_range_token_is_an_error() {
        let spec = spec(3, 2, 2, 1.0);
        let model = EncoderModel::init(spec, 1).unwrap();
        let s = stmt(vec![0, 9, 2], (0, 1), (2, 3));
        assert!(model.encode(&s).is_err());
    }

    #[test]
    fn init_is_deterministic_and_bias_is_zero() {
        let a = EncoderModel::init(spec(10, 4, 3, 1.0), 42).unwrap();
        let b = EncoderModel::init(spec(10, 4, 3, 1.0), 42).unwrap();
        assert_eq!(a, b);
        assert!(a.proj_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_embedding_mean_is_near_zero() {
        // 1000 x 32 table of uniform[-a, a]: the sample mean should land
        // within 3 standard errors of zero.
        let spec = EncoderSpec {
            vocab_size: 1000,
            token_dim: 32,
            output_dim: 4,
            context_mix: 1.0,
            marker_head_id: 0,
            marker_tail_id: 1,
        };
        let model = EncoderModel::init(spec, 5).unwrap();
        let n = model.embed.len() as f64;
        let mean = model.embed.iter().sum::<f64>() / n;
        let a = (6.0f64 / (1000.0 + 32.0)).sqrt();
        let se = (a * a / 3.0 / n).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let spec = spec(8, 3, 4, 1.0);
        let model = EncoderModel::init(spec, 3).unwrap();
        let statements = vec![
            stmt(vec![0, 1, 2, 3], (0, 1), (2, 4)),
            stmt(vec![4, 5, 1], (2, 3), (0, 1)),
        ];
        // Scalar function: sum of squares of all embeddings.
        let mut params = Params::new();
        for (name, values) in model.params() {
            params.insert(name, values.to_vec());
        }
        let loss = |p: &Params| {
            let mut m = model.clone();
            m.embed = p.get(PARAM_EMBED).unwrap().to_vec();
            m.proj_w = p.get(PARAM_PROJ_W).unwrap().to_vec();
            m.proj_b = p.get(PARAM_PROJ_B).unwrap().to_vec();
            let mut value = 0.0;
            let mut grads = EncoderGrads::zeros_like(&m);
            for s in &statements {
                let out = m.encode(s)?;
                value += out.iter().map(|x| x * x).sum::<f64>();
                let upstream: Vec<f64> = out.iter().map(|x| 2.0 * x).collect();
                m.backward(s, &upstream, &mut grads)?;
            }
            let mut g = Params::new();
            g.insert(PARAM_EMBED, grads.embed);
            g.insert(PARAM_PROJ_W, grads.proj_w);
            g.insert(PARAM_PROJ_B, grads.proj_b);
            Ok((value, g))
        };
        let report = grad_check(loss, &params, 1e-4).unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "max rel err {}",
            report.max_rel_err
        );
    }

    #[test]
    fn frozen_encoder_lookup_and_missing_index() {
        let mut vectors = BTreeMap::new();
        vectors.insert(0, vec![1.0, 0.0]);
        vectors.insert(1, vec![0.5, 0.5]);
        vectors.insert(2, vec![0.0, 1.0]);
        let enc = FrozenEncoder::new(2, vectors);
        let s = stmt(vec![0, 1], (0, 1), (1, 2));
        assert_eq!(enc.encode_statement(1, &s).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(
            enc.encode_statement(3, &s),
            Err(Error::MissingEmbedding(3))
        ));
        assert!(enc.parameter_gradients().is_empty());
    }

    #[test]
    fn frozen_encoder_parses_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        std::fs::write(&path, "index,v0,v1\n0,1.0,2.0\n1,-0.5,0.25\n").unwrap();
        let enc = FrozenEncoder::from_file(&path).unwrap();
        assert_eq!(enc.output_dim(), 2);
        let s = stmt(vec![0, 1], (0, 1), (1, 2));
        assert_eq!(enc.encode_statement(1, &s).unwrap(), vec![-0.5, 0.25]);
    }
}
