//! Oracle annotator and the evaluation protocols built on it.

pub mod choice;
pub mod oracle;
pub mod recovery;
pub mod stats;
pub mod svm;

pub use choice::{
    oracle_choose, resolve_token, run_composition, run_generalize_y, run_generalize_z,
    CompositionOptions, ExperimentReport, ExperimentRun, ForcedChoiceOptions, TrialResult,
};
pub use oracle::{inject_typo, ConceptChange, OracleAnnotator, NO_CHANGE_TEXT};
pub use recovery::{recovery_report, RecoveryReport};
pub use stats::{binomial_upper_tail, clopper_pearson, Tally};
pub use svm::{
    svm_concept_accuracy, train_linear_classifier, LinearClassifier, SvmExperimentOptions,
    SvmOptions, SvmResult,
};

use thiserror::Error;

use crate::distill::{ConceptVocabulary, DistillError, TokenEmbedding};
use crate::generator::{GeneratorError, SyntheticWorld};
use crate::numerics::{norm, NumericsError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("vocabulary has {found} usable concepts, need at least {needed}")]
    VocabularyTooSmall { needed: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// A vocabulary whose entries are the planted directions themselves, for
/// checking the protocols independently of distillation.
pub fn planted_vocabulary(world: &SyntheticWorld, freq: usize) -> ConceptVocabulary {
    ConceptVocabulary {
        lambda: 0.0,
        min_freq: 1,
        class: None,
        tokens: (0..world.concept_count())
            .map(|k| {
                let vector = world.planted_direction(k).to_vec();
                TokenEmbedding {
                    token: world.concept_token(k).to_string(),
                    freq,
                    class_counts: Default::default(),
                    raw_norm: norm(&vector),
                    vector,
                }
            })
            .collect(),
        provenance: Default::default(),
    }
}
