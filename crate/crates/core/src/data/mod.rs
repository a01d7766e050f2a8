//! Statement representation, JSONL ingestion, splits, and label-noise
//! injection.
//!
//! The on-disk form is JSON Lines, one object per statement:
//!
//! ```text
//! {"tokens": ["w3", "w7", ...], "head": [0, 1], "tail": [3, 4],
//!  "relation": "rel_0", "expresses": true, "true_relation": "rel_0"}
//! ```
//!
//! `expresses` and `true_relation` are optional. Token and relation
//! strings are interned to ids in file order of first appearance.

pub mod generator;
pub mod iris;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;
pub type RelationId = usize;

/// Name of the reserved background relation used by the synthetic
/// generator for statements whose surface form expresses nothing.
pub const NONE_RELATION_NAME: &str = "none";

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// A token sequence with marked head/tail entity spans and a relation
/// label. `expresses` records whether the surface form actually
/// expresses the label; `true_relation` the relation it does express.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub tokens: Vec<TokenId>,
    pub head: Span,
    pub tail: Span,
    pub relation: RelationId,
    pub expresses: Option<bool>,
    pub true_relation: Option<RelationId>,
}

impl Statement {
    /// Span and consistency invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        for (name, span) in [("head", &self.head), ("tail", &self.tail)] {
            if span.is_empty() {
                return Err(format!(
                    "{name} span [{}, {}) is empty",
                    span.start, span.end
                ));
            }
            if span.end > n {
                return Err(format!(
                    "{name} span [{}, {}) out of range for {n} tokens",
                    span.start, span.end
                ));
            }
        }
        if self.head.overlaps(&self.tail) {
            return Err(format!(
                "head span [{}, {}) overlaps tail span [{}, {})",
                self.head.start, self.head.end, self.tail.start, self.tail.end
            ));
        }
        if self.expresses == Some(true) {
            if let Some(t) = self.true_relation {
                if t != self.relation {
                    return Err(
                        "expresses=true but true_relation differs from relation".to_string()
                    );
                }
            }
        }
        Ok(())
    }
}

/// An ordered collection of statements with its relation and token
/// vocabularies. Immutable after construction; operations that change
/// labels or membership return a new set.
#[derive(Debug, Clone, PartialEq)]
pub struct StatementSet {
    pub statements: Vec<Statement>,
    /// Relation names; index is the relation id.
    pub relation_vocab: Vec<String>,
    /// Token strings; index is the token id.
    pub token_vocab: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StatementRecord {
    tokens: Vec<String>,
    head: [usize; 2],
    tail: [usize; 2],
    relation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expresses: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_relation: Option<String>,
}

impl StatementSet {
    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// Number of relations in the vocabulary.
    pub fn num_relations(&self) -> usize {
        self.relation_vocab.len()
    }

    /// Id of the reserved background relation, when present.
    pub fn none_relation(&self) -> Option<RelationId> {
        self.relation_vocab
            .iter()
            .position(|n| n == NONE_RELATION_NAME)
    }

    /// Statement count per relation id (labels only).
    pub fn relation_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.relation_vocab.len()];
        for s in &self.statements {
            counts[s.relation] += 1;
        }
        counts
    }

    /// Relation ids that label at least one statement.
    pub fn populated_relations(&self) -> Vec<RelationId> {
        self.relation_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(r, _)| r)
            .collect()
    }

    /// Validate vocabulary ranges and per-statement invariants.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, name) in self.relation_vocab.iter().enumerate() {
            if let Some(prev) = seen.insert(name.clone(), i) {
                return Err(Error::Relation {
                    name: name.clone(),
                    problem: format!("duplicated in vocabulary at indices {prev} and {i}"),
                });
            }
        }
        for (i, s) in self.statements.iter().enumerate() {
            s.validate()
                .map_err(|message| Error::InvalidStatement { index: i, message })?;
            if s.relation >= self.relation_vocab.len() {
                return Err(Error::InvalidStatement {
                    index: i,
                    message: format!("relation id {} outside vocabulary", s.relation),
                });
            }
            if let Some(t) = s.true_relation {
                if t >= self.relation_vocab.len() {
                    return Err(Error::InvalidStatement {
                        index: i,
                        message: format!("true_relation id {t} outside vocabulary"),
                    });
                }
            }
            if let Some(&t) = s.tokens.iter().find(|&&t| t >= self.token_vocab.len()) {
                return Err(Error::InvalidStatement {
                    index: i,
                    message: format!("token id {t} outside vocabulary"),
                });
            }
        }
        Ok(())
    }

    /// Parse a JSONL document. Errors carry 1-based line numbers.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut token_ids: HashMap<String, TokenId> = HashMap::new();
        let mut token_vocab: Vec<String> = Vec::new();
        let mut relation_ids: HashMap<String, RelationId> = HashMap::new();
        let mut relation_vocab: Vec<String> = Vec::new();
        let mut statements = Vec::new();

        let mut intern_token = |name: &str, vocab: &mut Vec<String>| -> TokenId {
            *token_ids.entry(name.to_string()).or_insert_with(|| {
                vocab.push(name.to_string());
                vocab.len() - 1
            })
        };
        let mut intern_relation = |name: &str, vocab: &mut Vec<String>| -> RelationId {
            *relation_ids.entry(name.to_string()).or_insert_with(|| {
                vocab.push(name.to_string());
                vocab.len() - 1
            })
        };

        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: StatementRecord =
                serde_json::from_str(line).map_err(|e| Error::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })?;
            let statement = Statement {
                tokens: record
                    .tokens
                    .iter()
                    .map(|t| intern_token(t, &mut token_vocab))
                    .collect(),
                head: Span::new(record.head[0], record.head[1]),
                tail: Span::new(record.tail[0], record.tail[1]),
                relation: intern_relation(&record.relation, &mut relation_vocab),
                expresses: record.expresses,
                true_relation: record
                    .true_relation
                    .as_deref()
                    .map(|r| intern_relation(r, &mut relation_vocab)),
            };
            statement.validate().map_err(|message| Error::Malformed {
                line: lineno,
                message,
            })?;
            statements.push(statement);
        }
        Ok(Self {
            statements,
            relation_vocab,
            token_vocab,
        })
    }

    /// Serialize to JSONL, one statement per line, trailing newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.statements {
            let record = StatementRecord {
                tokens: s.tokens.iter().map(|&t| self.token_vocab[t].clone()).collect(),
                head: [s.head.start, s.head.end],
                tail: [s.tail.start, s.tail.end],
                relation: self.relation_vocab[s.relation].clone(),
                expresses: s.expresses,
                true_relation: s.true_relation.map(|r| self.relation_vocab[r].clone()),
            };
            writeln!(out, "{}", serde_json::to_string(&record).unwrap()).unwrap();
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    /// Keep only statements labeled with `keep` relations, re-interning
    /// the relation vocabulary in `keep` order. `true_relation` values
    /// pointing at dropped relations are cleared.
    pub fn filter_relations(&self, keep: &[RelationId]) -> Result<Self> {
        let mut remap: HashMap<RelationId, RelationId> = HashMap::new();
        let mut relation_vocab = Vec::new();
        for &r in keep {
            let name = self
                .relation_vocab
                .get(r)
                .ok_or_else(|| Error::Relation {
                    name: format!("id {r}"),
                    problem: "not in vocabulary".to_string(),
                })?
                .clone();
            remap.insert(r, relation_vocab.len());
            relation_vocab.push(name);
        }
        let statements = self
            .statements
            .iter()
            .filter(|s| remap.contains_key(&s.relation))
            .map(|s| {
                let mut s = s.clone();
                s.relation = remap[&s.relation];
                s.true_relation = s.true_relation.and_then(|t| remap.get(&t).copied());
                s
            })
            .collect();
        Ok(Self {
            statements,
            relation_vocab,
            token_vocab: self.token_vocab.clone(),
        })
    }

    /// Re-express all token ids against a different token vocabulary,
    /// matching by token string. Fails on tokens absent from `vocab`.
    pub fn reindex_tokens(&self, vocab: &[String]) -> Result<Self> {
        let lookup: HashMap<&str, TokenId> = vocab
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut statements = self.statements.clone();
        for (i, s) in statements.iter_mut().enumerate() {
            for t in &mut s.tokens {
                let name = &self.token_vocab[*t];
                *t = *lookup.get(name.as_str()).ok_or_else(|| Error::InvalidStatement {
                    index: i,
                    message: format!("token `{name}` not in the model vocabulary"),
                })?;
            }
        }
        Ok(Self {
            statements,
            relation_vocab: self.relation_vocab.clone(),
            token_vocab: vocab.to_vec(),
        })
    }

    /// Re-express relation ids against a different relation vocabulary,
    /// matching by name. Fails on relations absent from `vocab`.
    pub fn reindex_relations(&self, vocab: &[String]) -> Result<Self> {
        let lookup: HashMap<&str, RelationId> = vocab
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let remap = |id: RelationId, index: usize| -> Result<RelationId> {
            let name = &self.relation_vocab[id];
            lookup
                .get(name.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidStatement {
                    index,
                    message: format!("relation `{name}` not in the model vocabulary"),
                })
        };
        let mut statements = self.statements.clone();
        for (i, s) in statements.iter_mut().enumerate() {
            s.relation = remap(s.relation, i)?;
            s.true_relation = match s.true_relation {
                Some(t) => Some(remap(t, i)?),
                None => None,
            };
        }
        Ok(Self {
            statements,
            relation_vocab: vocab.to_vec(),
            token_vocab: self.token_vocab.clone(),
        })
    }
}

/// Load a StatementSet from a JSONL file.
pub fn load_statements(path: impl AsRef<Path>) -> Result<StatementSet> {
    let text = std::fs::read_to_string(path)?;
    StatementSet::from_jsonl(&text)
}

/// Uniformly relabel `round(rate * n)` statements to a different
/// relation. The original label is kept in `true_relation` and
/// `expresses` becomes `false` for relabeled statements. The reserved
/// background relation is never used as a replacement label.
pub fn inject_label_noise(set: &StatementSet, rate: f64, seed: u64) -> Result<StatementSet> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "noise rate must be in [0, 1], got {rate}"
        )));
    }
    let none = set.none_relation();
    let universe: Vec<RelationId> = (0..set.relation_vocab.len())
        .filter(|r| Some(*r) != none)
        .collect();
    if rate > 0.0 && universe.len() < 2 {
        return Err(Error::InvalidArgument(
            "label noise needs at least 2 relations to choose an alternative label".to_string(),
        ));
    }
    let n = set.len();
    let flips = (rate * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, n, flips.min(n)).into_vec();
    chosen.sort_unstable();

    let mut out = set.clone();
    for i in chosen {
        let current = out.statements[i].relation;
        let candidates: Vec<RelationId> =
            universe.iter().copied().filter(|&r| r != current).collect();
        let new = candidates[rng.gen_range(0..candidates.len())];
        out.statements[i].true_relation = Some(current);
        out.statements[i].expresses = Some(false);
        out.statements[i].relation = new;
    }
    Ok(out)
}

/// Disjoint stratified partition into (train, val, test).
///
/// Fractions must be nonnegative and sum to 1. Every relation is split
/// proportionally; each part with a positive fraction receives at least
/// one statement per relation, so relations smaller than the number of
/// positive parts are an error.
pub fn split(
    set: &StatementSet,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(StatementSet, StatementSet, StatementSet)> {
    let fracs = [fractions.0, fractions.1, fractions.2];
    if fracs.iter().any(|f| *f < 0.0) {
        return Err(Error::InvalidArgument(
            "split fractions must be nonnegative".to_string(),
        ));
    }
    if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must sum to 1, got {}",
            fracs.iter().sum::<f64>()
        )));
    }
    let active: Vec<usize> = (0..3).filter(|&i| fracs[i] > 0.0).collect();

    let mut by_relation: Vec<Vec<usize>> = vec![Vec::new(); set.relation_vocab.len()];
    for (i, s) in set.statements.iter().enumerate() {
        by_relation[s.relation].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (r, indices) in by_relation.iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        let n = indices.len();
        if n < active.len() {
            return Err(Error::Relation {
                name: set.relation_vocab[r].clone(),
                problem: format!(
                    "has {n} statements but the split needs at least {}",
                    active.len()
                ),
            });
        }
        let mut counts = [0usize; 3];
        let mut remainders: Vec<(usize, f64)> = Vec::new();
        for &p in &active {
            let exact = fracs[p] * n as f64;
            counts[p] = exact.floor() as usize;
            remainders.push((p, exact - exact.floor()));
        }
        let mut leftover = n - counts.iter().sum::<usize>();
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (p, _) in remainders {
            if leftover == 0 {
                break;
            }
            counts[p] += 1;
            leftover -= 1;
        }
        // Every active part gets at least one statement.
        for &p in &active {
            while counts[p] == 0 {
                let donor = active
                    .iter()
                    .copied()
                    .max_by_key(|&q| counts[q])
                    .expect("active parts");
                counts[donor] -= 1;
                counts[p] += 1;
            }
        }
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        let mut cursor = 0;
        for p in 0..3 {
            parts[p].extend(&shuffled[cursor..cursor + counts[p]]);
            cursor += counts[p];
        }
    }

    let build = |mut indices: Vec<usize>| {
        indices.sort_unstable();
        StatementSet {
            statements: indices.iter().map(|&i| set.statements[i].clone()).collect(),
            relation_vocab: set.relation_vocab.clone(),
            token_vocab: set.token_vocab.clone(),
        }
    };
    let [train, val, test] = parts;
    Ok((build(train), build(val), build(test)))
}
