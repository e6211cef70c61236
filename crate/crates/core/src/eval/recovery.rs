//! Comparison of distilled directions with the world's planted ones.

use serde::{Deserialize, Serialize};

use crate::distill::ConceptVocabulary;
use crate::generator::SyntheticWorld;
use crate::numerics::cosine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// World concept tokens, in concept order.
    pub tokens: Vec<String>,
    /// `cosines[k][j] = |cos(e_k, u_j)|`; `None` when the vocabulary has
    /// no entry for concept `k`.
    pub cosines: Vec<Option<Vec<f64>>>,
    pub argmax: Vec<Option<usize>>,
    pub correct: Vec<bool>,
    pub correct_count: usize,
    /// Median of `|cos(e_k, u_k)|` over all concepts, missing ones as 0.
    pub median_matched_cosine: f64,
    pub missing: Vec<String>,
}

pub fn recovery_report(vocab: &ConceptVocabulary, world: &SyntheticWorld) -> RecoveryReport {
    let k_count = world.concept_count();
    let mut cosines = Vec::with_capacity(k_count);
    let mut argmax = Vec::with_capacity(k_count);
    let mut missing = Vec::new();
    let mut diag = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let token = world.concept_token(k);
        match vocab.get(token) {
            Some(emb) => {
                let row: Vec<f64> = (0..k_count)
                    .map(|j| cosine(&emb.vector, world.planted_direction(j)).abs())
                    .collect();
                let best = (0..k_count)
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                    .expect("at least one concept");
                diag.push(row[k]);
                argmax.push(Some(best));
                cosines.push(Some(row));
            }
            None => {
                log::warn!("vocabulary has no entry for concept {token:?}");
                missing.push(token.to_string());
                diag.push(0.0);
                argmax.push(None);
                cosines.push(None);
            }
        }
    }
    let correct: Vec<bool> = argmax
        .iter()
        .enumerate()
        .map(|(k, a)| *a == Some(k))
        .collect();
    diag.sort_by(f64::total_cmp);
    let median = if diag.is_empty() {
        0.0
    } else if diag.len() % 2 == 1 {
        diag[diag.len() / 2]
    } else {
        0.5 * (diag[diag.len() / 2 - 1] + diag[diag.len() / 2])
    };
    RecoveryReport {
        tokens: world.concept_tokens().to_vec(),
        correct_count: correct.iter().filter(|&&c| c).count(),
        cosines,
        argmax,
        correct,
        median_matched_cosine: median,
        missing,
    }
}
