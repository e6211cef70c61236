//! Annotation records, the cleaning pipeline, and corpus-level metrics.

mod clean;
mod lexicon;
mod metrics;

pub use clean::{
    clean, clean_text, lemmatize, levenshtein, normalized_words, spell_correct,
    MAX_CORRECTION_DISTANCE,
};
pub use lexicon::{Lexicon, Modifier, Polarity};
pub use metrics::{
    corpus_statistics, inter_annotator_bleu, ngram_diversity, sentence_bleu, BleuSummary,
    ClassStats, CorpusStats,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("annotation {annotator_id} on {direction_id} has no content tokens")]
    EmptyResult {
        direction_id: String,
        annotator_id: String,
    },
    #[error("no direction group has at least two annotations")]
    InsufficientReferences,
    #[error("n-gram order must be 1, 2 or 3, got {0}")]
    InvalidOrder(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One freeform description of an image change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub direction_id: String,
    pub annotator_id: String,
    pub class: String,
    pub alpha: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedToken {
    pub token: String,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedAnnotation {
    pub direction_id: String,
    pub annotator_id: String,
    /// Class the annotator saw, carried along for per-class statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub tokens: Vec<SignedToken>,
}

impl CleanedAnnotation {
    /// Renders the tokens back as text ("more tree, less snow"). Cleaning
    /// this text reproduces the same tokens.
    pub fn to_text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| {
                let modifier = if t.sign < 0 { "less" } else { "more" };
                format!("{modifier} {}", t.token)
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}
