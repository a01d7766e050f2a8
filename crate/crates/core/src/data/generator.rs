//! Synthetic distant-supervision generator with controllable
//! false-positive noise.
//!
//! Each relation owns a handful of token templates with head/tail entity
//! slots. A clean statement realizes one of its own relation's templates
//! (`expresses = true`). With probability `noise_rate` a statement keeps
//! its label but its surface form is drawn from another relation's
//! template or from a background template, mirroring a knowledge-base
//! label that the sentence does not express (`expresses = false`,
//! `true_relation` = the generating relation, or the reserved `none`
//! relation for background surfaces).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Span, Statement, StatementSet, TokenId, NONE_RELATION_NAME};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorSpec {
    pub num_relations: usize,
    pub per_relation: usize,
    /// Fraction of statements whose surface form does not express the
    /// label, in [0, 1].
    pub noise_rate: f64,
    pub vocab_size: usize,
    pub templates_per_relation: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_relations == 0
            || self.per_relation == 0
            || self.vocab_size == 0
            || self.templates_per_relation == 0
        {
            return Err(Error::InvalidArgument(
                "generator counts must be at least 1".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::InvalidArgument(format!(
                "noise rate must be in [0, 1], got {}",
                self.noise_rate
            )));
        }
        Ok(())
    }
}

/// A concrete token sequence with unfilled entity slots.
struct Template {
    /// `None` marks an entity-slot position.
    tokens: Vec<Option<TokenId>>,
    head: Span,
    tail: Span,
}

struct Pools {
    entity: Vec<TokenId>,
    background: Vec<TokenId>,
    per_relation: Vec<Vec<TokenId>>,
}

fn build_pools(vocab_size: usize, num_relations: usize) -> Pools {
    let all: Vec<TokenId> = (0..vocab_size).collect();
    if vocab_size < 3 * (num_relations + 2) {
        // Too few tokens to keep the pools apart; share everything.
        return Pools {
            entity: all.clone(),
            background: all.clone(),
            per_relation: vec![all; num_relations],
        };
    }
    let entity_len = (vocab_size / 4).max(2);
    let background_len = (vocab_size / 6).max(2);
    let entity: Vec<TokenId> = (0..entity_len).collect();
    let background: Vec<TokenId> = (entity_len..entity_len + background_len).collect();
    let rest_start = entity_len + background_len;
    let mut per_relation = vec![Vec::new(); num_relations];
    for t in rest_start..vocab_size {
        per_relation[(t - rest_start) % num_relations].push(t);
    }
    Pools {
        entity,
        background,
        per_relation,
    }
}

fn pick(rng: &mut ChaCha8Rng, pool: &[TokenId]) -> TokenId {
    pool[rng.gen_range(0..pool.len())]
}

/// Lay out `[pre][slot A][mid][slot B][post]` and randomly assign which
/// slot is the head. Content positions mix the relation's signature pool
/// with background tokens.
fn build_template(rng: &mut ChaCha8Rng, signature: &[TokenId], background: &[TokenId]) -> Template {
    let pre = rng.gen_range(1..=3usize);
    let first_len = rng.gen_range(1..=2usize);
    let mid = rng.gen_range(1..=3usize);
    let second_len = rng.gen_range(1..=2usize);
    let post = rng.gen_range(1..=3usize);
    let head_first = rng.gen_bool(0.5);

    let mut tokens = Vec::new();
    let content = |rng: &mut ChaCha8Rng, tokens: &mut Vec<Option<TokenId>>, count: usize| {
        for _ in 0..count {
            let pool = if rng.gen_bool(0.75) { signature } else { background };
            tokens.push(Some(pick(rng, pool)));
        }
    };
    content(rng, &mut tokens, pre);
    let first = Span::new(tokens.len(), tokens.len() + first_len);
    tokens.extend(std::iter::repeat(None).take(first_len));
    content(rng, &mut tokens, mid);
    let second = Span::new(tokens.len(), tokens.len() + second_len);
    tokens.extend(std::iter::repeat(None).take(second_len));
    content(rng, &mut tokens, post);

    let (head, tail) = if head_first {
        (first, second)
    } else {
        (second, first)
    };
    Template { tokens, head, tail }
}

fn realize(rng: &mut ChaCha8Rng, template: &Template, entity_pool: &[TokenId]) -> Vec<TokenId> {
    template
        .tokens
        .iter()
        .map(|slot| match slot {
            Some(t) => *t,
            None => pick(rng, entity_pool),
        })
        .collect()
}

/// Generate `num_relations * per_relation` statements, deterministic in
/// `spec.seed`. When `noise_rate > 0` the reserved `none` relation is
/// appended to the vocabulary as the source of background surfaces.
pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<StatementSet> {
    spec.validate()?;
    let k = spec.num_relations;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pools = build_pools(spec.vocab_size, k);

    // Template families: one per relation plus one background family.
    let mut families: Vec<Vec<Template>> = Vec::with_capacity(k + 1);
    for r in 0..k {
        families.push(
            (0..spec.templates_per_relation)
                .map(|_| build_template(&mut rng, &pools.per_relation[r], &pools.background))
                .collect(),
        );
    }
    families.push(
        (0..spec.templates_per_relation)
            .map(|_| build_template(&mut rng, &pools.background, &pools.background))
            .collect(),
    );
    let background_family = k;

    let with_noise = spec.noise_rate > 0.0;
    let mut relation_vocab: Vec<String> = (0..k).map(|r| format!("rel_{r}")).collect();
    let none_id = if with_noise {
        relation_vocab.push(NONE_RELATION_NAME.to_string());
        Some(k)
    } else {
        None
    };

    let mut statements = Vec::with_capacity(k * spec.per_relation);
    for label in 0..k {
        for _ in 0..spec.per_relation {
            let noisy = rng.gen_bool(spec.noise_rate);
            let source_family = if noisy {
                // Uniform over the other relations plus the background
                // family.
                let mut choice = rng.gen_range(0..k);
                if choice == label {
                    choice = background_family;
                }
                choice
            } else {
                label
            };
            let templates = &families[source_family];
            let template = &templates[rng.gen_range(0..templates.len())];
            let tokens = realize(&mut rng, template, &pools.entity);
            let true_relation = if source_family == background_family {
                none_id.unwrap_or(label)
            } else {
                source_family
            };
            statements.push(Statement {
                tokens,
                head: template.head,
                tail: template.tail,
                relation: label,
                expresses: Some(!noisy),
                true_relation: Some(if noisy { true_relation } else { label }),
            });
        }
    }

    let token_vocab: Vec<String> = (0..spec.vocab_size).map(|t| format!("w{t}")).collect();
    let set = StatementSet {
        statements,
        relation_vocab,
        token_vocab,
    };
    set.validate()?;
    Ok(set)
}
