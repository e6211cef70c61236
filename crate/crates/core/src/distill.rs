//! Per-word latent directions by ridge regression of annotated directions
//! on the words used to describe them, plus concept application and
//! composition.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CleanedAnnotation;
use crate::directions::{Direction, DirectionSource};
use crate::generator::{GeneratorError, ImageBuffer, SyntheticWorld};
use crate::numerics::{self, norm, Matrix, NumericsError, Vector};

pub const DEFAULT_LAMBDA: f64 = 100.0;
pub const DEFAULT_ALPHA: f64 = 6.0;
pub const DEFAULT_MIN_FREQ: usize = 2;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("annotation references unknown direction {0:?}")]
    UnresolvedDirection(String),
    #[error("no token reaches the frequency threshold {min_freq}")]
    EmptyVocabulary { min_freq: usize },
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("lambda must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
    #[error("normal-equation residual {residual:.3e} exceeds bound {bound:.3e}")]
    Residual { residual: f64, bound: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

pub type Result<T> = std::result::Result<T, DistillError>;

/// How negated tokens enter the word matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegationMode {
    /// A −1 entry in the token's own column.
    #[default]
    Signed,
    /// A +1 entry in a separate `not-<token>` column.
    SplitColumn,
}

pub fn negated_column_name(token: &str) -> String {
    format!("not-{token}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordMatrix {
    pub matrix: Matrix,
    pub tokens: Vec<String>,
    pub freq: Vec<usize>,
    /// Per token, how many occurrences came from each class.
    pub class_counts: Vec<BTreeMap<String, usize>>,
    /// `direction_id` of each row.
    pub row_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionMatrix {
    pub matrix: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleOptions {
    pub min_freq: usize,
    pub negation: NegationMode,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            min_freq: DEFAULT_MIN_FREQ,
            negation: NegationMode::Signed,
        }
    }
}

/// Builds W (annotations × tokens, entries in {−1, 0, 1}) and D (the
/// direction shown for each annotation). Rows left without any frequent
/// token are dropped from both.
pub fn assemble_matrices(
    corpus: &[CleanedAnnotation],
    directions: &HashMap<String, Direction>,
    opts: &AssembleOptions,
) -> Result<(WordMatrix, DirectionMatrix)> {
    let min_freq = opts.min_freq.max(1);
    let column_of = |token: &str, sign: i8| -> (String, f64) {
        match (opts.negation, sign < 0) {
            (NegationMode::SplitColumn, true) => (negated_column_name(token), 1.0),
            (_, neg) => (token.to_string(), if neg { -1.0 } else { 1.0 }),
        }
    };

    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_class: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for ann in corpus {
        if !directions.contains_key(&ann.direction_id) {
            return Err(DistillError::UnresolvedDirection(ann.direction_id.clone()));
        }
        for t in &ann.tokens {
            let (col, _) = column_of(&t.token, t.sign);
            if let Some(class) = &ann.class {
                *per_class
                    .entry(col.clone())
                    .or_default()
                    .entry(class.clone())
                    .or_default() += 1;
            }
            *freq.entry(col).or_default() += 1;
        }
    }
    let tokens: Vec<String> = freq
        .iter()
        .filter(|&(_, &n)| n >= min_freq)
        .map(|(t, _)| t.clone())
        .collect();
    if tokens.is_empty() {
        return Err(DistillError::EmptyVocabulary { min_freq });
    }
    let index: HashMap<&str, usize> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();

    let mut w_rows: Vec<Vector> = Vec::new();
    let mut d_rows: Vec<Vector> = Vec::new();
    let mut row_ids = Vec::new();
    for ann in corpus {
        let mut row = vec![0.0; tokens.len()];
        let mut any = false;
        for t in &ann.tokens {
            let (col, value) = column_of(&t.token, t.sign);
            if let Some(&j) = index.get(col.as_str()) {
                row[j] = value;
                any = true;
            }
        }
        if any {
            w_rows.push(row);
            d_rows.push(directions[&ann.direction_id].vector.clone());
            row_ids.push(ann.direction_id.clone());
        }
    }
    let word = WordMatrix {
        matrix: Matrix::from_rows(&w_rows)?,
        freq: tokens.iter().map(|t| freq[t]).collect(),
        class_counts: tokens
            .iter()
            .map(|t| per_class.get(t).cloned().unwrap_or_default())
            .collect(),
        tokens,
        row_ids,
    };
    Ok((
        word,
        DirectionMatrix {
            matrix: Matrix::from_rows(&d_rows)?,
        },
    ))
}

/// Ridge solution `E = (WᵀW + λI)⁻¹ WᵀD`, one row per token.
pub fn solve_embeddings(w: &Matrix, d: &Matrix, lambda: f64) -> Result<Matrix> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(DistillError::InvalidLambda(lambda));
    }
    let mut gram = w.transpose_matmul(w)?;
    gram.add_diagonal(lambda);
    let rhs = w.transpose_matmul(d)?;
    let e = numerics::solve_spd(&gram, &rhs)?;
    let residual = gram.matmul(&e)?.sub(&rhs)?.frobenius_norm();
    let bound = 1e-8 * (1.0 + rhs.frobenius_norm());
    if !(residual <= bound) {
        return Err(DistillError::Residual { residual, bound });
    }
    Ok(e)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negation: Option<NegationMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbedding {
    pub token: String,
    pub freq: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub class_counts: BTreeMap<String, usize>,
    pub raw_norm: f64,
    /// Not normalized.
    pub vector: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptVocabulary {
    pub lambda: f64,
    pub min_freq: usize,
    /// `None` for a vocabulary pooled over all classes.
    pub class: Option<String>,
    pub tokens: Vec<TokenEmbedding>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl ConceptVocabulary {
    pub fn get(&self, token: &str) -> Option<&TokenEmbedding> {
        self.tokens.iter().find(|t| t.token == token)
    }

    pub fn token_names(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.token.as_str())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn distill(
    w: &WordMatrix,
    d: &DirectionMatrix,
    lambda: f64,
    min_freq: usize,
    class: Option<String>,
) -> Result<ConceptVocabulary> {
    let e = solve_embeddings(&w.matrix, &d.matrix, lambda)?;
    let tokens = w
        .tokens
        .iter()
        .enumerate()
        .map(|(j, token)| {
            let vector = e.row(j).to_vec();
            TokenEmbedding {
                token: token.clone(),
                freq: w.freq[j],
                class_counts: w.class_counts[j].clone(),
                raw_norm: norm(&vector),
                vector,
            }
        })
        .collect();
    Ok(ConceptVocabulary {
        lambda,
        min_freq,
        class,
        tokens,
        provenance: Provenance::default(),
    })
}

/// Restricts the corpus to one class (or keeps everything for `None`),
/// assembles, and distills.
pub fn distill_corpus(
    corpus: &[CleanedAnnotation],
    directions: &HashMap<String, Direction>,
    class: Option<&str>,
    lambda: f64,
    opts: &AssembleOptions,
) -> Result<ConceptVocabulary> {
    let selected: Vec<CleanedAnnotation> = corpus
        .iter()
        .filter(|a| class.is_none() || a.class.as_deref() == class)
        .cloned()
        .collect();
    let (w, d) = assemble_matrices(&selected, directions, opts)?;
    let mut vocab = distill(&w, &d, lambda, opts.min_freq, class.map(str::to_string))?;
    if opts.negation != NegationMode::Signed {
        vocab.provenance.negation = Some(opts.negation);
    }
    Ok(vocab)
}

/// Unit-norm copy of a token's embedding, with the raw norm.
pub fn concept_direction(vocab: &ConceptVocabulary, token: &str) -> Result<(Direction, f64)> {
    let emb = vocab
        .get(token)
        .ok_or_else(|| DistillError::UnknownToken(token.to_string()))?;
    let vector = numerics::normalized(&emb.vector, 0.0).ok_or_else(|| {
        NumericsError::DegenerateInput(format!("embedding of {token:?} is zero"))
    })?;
    Ok((
        Direction {
            vector,
            layer: None,
            source: DirectionSource::Distilled,
        },
        emb.raw_norm,
    ))
}

/// Renders the world at `z + α·d`. The direction is used as given, so a
/// composed direction keeps its shorter length.
pub fn apply_direction(
    world: &SyntheticWorld,
    z: &[f64],
    y: usize,
    direction: &Direction,
    alpha: f64,
) -> Result<ImageBuffer> {
    if direction.dim() != z.len() {
        return Err(NumericsError::DimensionMismatch(format!(
            "direction has length {}, latent has {}",
            direction.dim(),
            z.len()
        ))
        .into());
    }
    let mut moved = z.to_vec();
    numerics::axpy(alpha, &direction.vector, &mut moved);
    Ok(world.render(&moved, y)?)
}

pub fn apply_concept(
    world: &SyntheticWorld,
    vocab: &ConceptVocabulary,
    z: &[f64],
    y: usize,
    token: &str,
    alpha: f64,
) -> Result<ImageBuffer> {
    let (d, _) = concept_direction(vocab, token)?;
    apply_direction(world, z, y, &d, alpha)
}

/// `(a + b) / 2`, deliberately not renormalized.
pub fn compose(a: &Direction, b: &Direction) -> Result<Direction> {
    if a.dim() != b.dim() {
        return Err(NumericsError::DimensionMismatch(format!(
            "composing directions of length {} and {}",
            a.dim(),
            b.dim()
        ))
        .into());
    }
    let vector = numerics::scale(&numerics::add(&a.vector, &b.vector), 0.5);
    if norm(&vector) <= 1e-12 * (a.norm() + b.norm()).max(f64::MIN_POSITIVE) {
        return Err(NumericsError::DegenerateInput("composing opposite directions".into()).into());
    }
    Ok(Direction {
        vector,
        layer: None,
        source: DirectionSource::Composed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SignedToken;

    fn ann(dir: &str, tokens: &[(&str, i8)]) -> CleanedAnnotation {
        CleanedAnnotation {
            direction_id: dir.into(),
            annotator_id: "a".into(),
            class: Some("lake".into()),
            tokens: tokens
                .iter()
                .map(|&(t, sign)| SignedToken {
                    token: t.into(),
                    sign,
                })
                .collect(),
        }
    }

    fn dir(v: &[f64]) -> Direction {
        Direction::unit(v, None, DirectionSource::Lsd).unwrap()
    }

    fn store(entries: &[(&str, &[f64])]) -> HashMap<String, Direction> {
        entries
            .iter()
            .map(|(id, v)| (id.to_string(), dir(v)))
            .collect()
    }

    fn one_token_opts() -> AssembleOptions {
        AssembleOptions {
            min_freq: 1,
            ..AssembleOptions::default()
        }
    }

    #[test]
    fn single_annotation_matrices() {
        let dirs = store(&[("d", &[0.6, 0.8])]);
        let (w, d) = assemble_matrices(&[ann("d", &[("a", 1)])], &dirs, &one_token_opts()).unwrap();
        assert_eq!(w.matrix.as_slice(), &[1.0]);
        assert_eq!(d.matrix.as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn exact_interpolation_and_shrinkage() {
        let dirs = store(&[("d", &[0.6, 0.8])]);
        let corpus = [ann("d", &[("a", 1)])];
        let (w, d) = assemble_matrices(&corpus, &dirs, &one_token_opts()).unwrap();
        let v0 = distill(&w, &d, 0.0, 1, None).unwrap();
        assert_eq!(v0.tokens[0].vector, vec![0.6, 0.8]);
        let v100 = distill(&w, &d, 100.0, 1, None).unwrap();
        for (x, y) in v100.tokens[0].vector.iter().zip([0.6, 0.8]) {
            assert!((x - y / 101.0).abs() < 1e-15);
        }
        let (unit, raw) = concept_direction(&v0, "a").unwrap();
        assert_eq!(unit.vector, vec![0.6, 0.8]);
        assert!((raw - 1.0).abs() < 1e-15);
        assert!(matches!(
            concept_direction(&v0, "zzz"),
            Err(DistillError::UnknownToken(_))
        ));
    }

    #[test]
    fn threshold_and_signs() {
        let dirs = store(&[("d1", &[1.0, 0.0]), ("d2", &[0.0, 1.0])]);
        let corpus = [
            ann("d1", &[("snow", -1), ("rare", 1)]),
            ann("d2", &[("snow", 1)]),
        ];
        let (w, d) = assemble_matrices(&corpus, &dirs, &AssembleOptions::default()).unwrap();
        assert_eq!(w.tokens, vec!["snow"]);
        assert_eq!(w.matrix.as_slice(), &[-1.0, 1.0]);
        assert_eq!(d.matrix.rows(), 2);

        let split = AssembleOptions {
            min_freq: 1,
            negation: NegationMode::SplitColumn,
        };
        let (w, _) = assemble_matrices(&corpus, &dirs, &split).unwrap();
        assert_eq!(w.tokens, vec!["not-snow", "rare", "snow"]);
        assert_eq!(w.matrix.row(0), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn dropped_rows_and_errors() {
        let dirs = store(&[("d1", &[1.0, 0.0]), ("d2", &[0.0, 1.0])]);
        let corpus = [
            ann("d1", &[("tree", 1)]),
            ann("d2", &[("tree", 1)]),
            ann("d2", &[("once", 1)]),
        ];
        let (w, d) = assemble_matrices(&corpus, &dirs, &AssembleOptions::default()).unwrap();
        assert_eq!(w.matrix.rows(), 2);
        assert_eq!(d.matrix.rows(), 2);
        assert_eq!(w.row_ids, vec!["d1", "d2"]);

        let bad = [ann("nope", &[("tree", 1)])];
        assert!(matches!(
            assemble_matrices(&bad, &dirs, &one_token_opts()),
            Err(DistillError::UnresolvedDirection(_))
        ));
        let sparse = [ann("d1", &[("tree", 1)])];
        assert!(matches!(
            assemble_matrices(&sparse, &dirs, &AssembleOptions::default()),
            Err(DistillError::EmptyVocabulary { .. })
        ));
    }

    #[test]
    fn co_occurring_tokens_share_an_embedding() {
        let dirs = store(&[("d1", &[1.0, 2.0, 0.0]), ("d2", &[0.0, 1.0, -1.0])]);
        let corpus = [
            ann("d1", &[("red", 1), ("brick", 1), ("sky", 1)]),
            ann("d2", &[("red", 1), ("brick", 1)]),
            ann("d2", &[("sky", -1)]),
        ];
        let (w, d) = assemble_matrices(&corpus, &dirs, &one_token_opts()).unwrap();
        let v = distill(&w, &d, 100.0, 1, None).unwrap();
        let red = &v.get("red").unwrap().vector;
        let brick = &v.get("brick").unwrap().vector;
        for (a, b) in red.iter().zip(brick) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_gram_without_ridge_fails() {
        let dirs = store(&[("d1", &[1.0, 0.0])]);
        let corpus = [ann("d1", &[("red", 1), ("brick", 1)])];
        let (w, d) = assemble_matrices(&corpus, &dirs, &one_token_opts()).unwrap();
        assert!(matches!(
            distill(&w, &d, 0.0, 1, None),
            Err(DistillError::Numerics(NumericsError::NotPositiveDefinite { .. }))
        ));
        assert!(distill(&w, &d, -1.0, 1, None).is_err());
    }

    #[test]
    fn composition_examples() {
        let a = dir(&[1.0, 0.0, 0.0]);
        let b = dir(&[0.0, 1.0, 0.0]);
        assert_eq!(compose(&a, &a).unwrap().vector, a.vector);
        assert_eq!(compose(&a, &b).unwrap().vector, compose(&b, &a).unwrap().vector);
        let ab = compose(&a, &b).unwrap();
        assert!((ab.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(ab.source, DirectionSource::Composed);
        let neg = dir(&[-1.0, 0.0, 0.0]);
        assert!(compose(&a, &neg).is_err());
        assert!(compose(&a, &dir(&[1.0, 0.0])).is_err());
    }
}
