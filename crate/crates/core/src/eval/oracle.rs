//! Programmatic annotator: reads attribute changes and describes them.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::corpus::{RawAnnotation, SignedToken};
use crate::directions::Direction;
use crate::generator::SyntheticWorld;
use crate::numerics::axpy;
use crate::rng::{derive_seed, seeded, SeededRng};

pub const NO_CHANGE_TEXT: &str = "no change";
pub const DEFAULT_THRESHOLD: f64 = 0.15;

/// Sentence frames; `{}` is replaced by the comma-joined change list. Every
/// other word is a stopword of the bundled lexicon.
pub const DEFAULT_TEMPLATES: [&str; 5] = [
    "{}",
    "the image has {}",
    "{} in the picture",
    "there is {}",
    "this photo shows {}",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnnotator {
    pub threshold: f64,
    pub templates: Vec<String>,
    /// Concept token -> alternative surface words that clean back to it.
    pub synonyms: BTreeMap<String, Vec<String>>,
    pub p_typo: f64,
    pub p_syn: f64,
    pub seed: u64,
    /// Logistic (softmax) choice noise; `None` picks the argmax.
    #[serde(default)]
    pub choice_temperature: Option<f64>,
}

pub fn default_synonyms() -> BTreeMap<String, Vec<String>> {
    [
        ("mountain", "mountains"),
        ("building", "buildings"),
        ("reflection", "reflections"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), vec![v.to_string()]))
    .collect()
}

impl Default for OracleAnnotator {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            templates: DEFAULT_TEMPLATES.iter().map(|t| t.to_string()).collect(),
            synonyms: default_synonyms(),
            p_typo: 0.0,
            p_syn: 0.0,
            seed: 0,
            choice_temperature: None,
        }
    }
}

/// A concept whose attribute moved past the detection threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConceptChange {
    pub concept: usize,
    pub delta: f64,
}

impl OracleAnnotator {
    pub fn with_noise(p_typo: f64, p_syn: f64, seed: u64) -> Self {
        Self {
            p_typo,
            p_syn,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        for (name, p) in [("p_typo", self.p_typo), ("p_syn", self.p_syn)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvalError::InvalidConfig(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.templates.is_empty() || self.templates.iter().any(|t| !t.contains("{}")) {
            return Err(EvalError::InvalidConfig(
                "every template needs a {} placeholder".into(),
            ));
        }
        if matches!(self.choice_temperature, Some(t) if !(t > 0.0)) {
            return Err(EvalError::InvalidConfig("choice temperature must be > 0".into()));
        }
        Ok(())
    }

    /// `a(z + αd) − a(z)` for every concept, zeroed where the class never
    /// shows the concept.
    pub fn perceived_deltas(
        &self,
        world: &SyntheticWorld,
        z: &[f64],
        y: usize,
        d: &[f64],
        alpha: f64,
    ) -> Result<Vec<f64>> {
        let before = world.attributes(z, y)?;
        let mut moved = z.to_vec();
        axpy(alpha, d, &mut moved);
        let after = world.attributes(&moved, y)?;
        Ok(before
            .iter()
            .zip(&after)
            .enumerate()
            .map(|(k, (b, a))| if world.is_visible(k, y) { a - b } else { 0.0 })
            .collect())
    }

    /// Visible changes above threshold, largest first (ties by index).
    pub fn detected_changes(
        &self,
        world: &SyntheticWorld,
        z: &[f64],
        y: usize,
        d: &[f64],
        alpha: f64,
    ) -> Result<Vec<ConceptChange>> {
        let mut changes: Vec<ConceptChange> = self
            .perceived_deltas(world, z, y, d, alpha)?
            .into_iter()
            .enumerate()
            .filter(|&(_, delta)| delta.abs() > self.threshold)
            .map(|(concept, delta)| ConceptChange { concept, delta })
            .collect();
        changes.sort_by(|a, b| {
            b.delta
                .abs()
                .total_cmp(&a.delta.abs())
                .then(a.concept.cmp(&b.concept))
        });
        Ok(changes)
    }

    /// The signed tokens a perfect cleaner should extract.
    pub fn expected_tokens(
        &self,
        world: &SyntheticWorld,
        z: &[f64],
        y: usize,
        d: &[f64],
        alpha: f64,
    ) -> Result<Vec<SignedToken>> {
        Ok(self
            .detected_changes(world, z, y, d, alpha)?
            .into_iter()
            .map(|c| SignedToken {
                token: world.concept_token(c.concept).to_string(),
                sign: if c.delta > 0.0 { 1 } else { -1 },
            })
            .collect())
    }

    /// Free-text description of the change `z -> z + αd`. The random
    /// stream is keyed by `(seed, direction_id, annotator_id)`, so the same
    /// request always yields the same text.
    #[allow(clippy::too_many_arguments)]
    pub fn annotate(
        &self,
        world: &SyntheticWorld,
        z: &[f64],
        y: usize,
        d: &Direction,
        alpha: f64,
        direction_id: &str,
        annotator_id: &str,
    ) -> Result<RawAnnotation> {
        let changes = self.detected_changes(world, z, y, &d.vector, alpha)?;
        let mut rng = seeded(derive_seed(
            self.seed,
            &format!("annotate/{direction_id}/{annotator_id}"),
        ));
        let text = if changes.is_empty() {
            NO_CHANGE_TEXT.to_string()
        } else {
            let phrases: Vec<String> = changes
                .iter()
                .map(|c| {
                    let modifier = if c.delta > 0.0 { "more" } else { "less" };
                    let word = self.surface_word(world.concept_token(c.concept), &mut rng);
                    format!("{modifier} {word}")
                })
                .collect();
            let template = &self.templates[rng.random_range(0..self.templates.len())];
            template.replacen("{}", &phrases.join(", "), 1)
        };
        Ok(RawAnnotation {
            direction_id: direction_id.to_string(),
            annotator_id: annotator_id.to_string(),
            class: world.class_names()[y].clone(),
            alpha,
            text,
        })
    }

    fn surface_word(&self, token: &str, rng: &mut SeededRng) -> String {
        let mut word = token.to_string();
        // Both draws always happen so that the stream does not depend on
        // which synonym lists exist.
        let syn_roll = rng.random::<f64>();
        let typo_roll = rng.random::<f64>();
        if syn_roll < self.p_syn {
            if let Some(alts) = self.synonyms.get(token).filter(|a| !a.is_empty()) {
                word = alts[rng.random_range(0..alts.len())].clone();
            }
        }
        if typo_roll < self.p_typo {
            word = inject_typo(&word, rng);
        }
        word
    }
}

/// One random substitution, deletion or insertion of a lowercase letter.
/// The result always differs from the input.
pub fn inject_typo<R: Rng + ?Sized>(word: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let letter = |rng: &mut R| (b'a' + rng.random_range(0..26u8)) as char;
    let kind = if chars.len() <= 1 {
        2
    } else {
        rng.random_range(0..3)
    };
    match kind {
        0 => {
            let i = rng.random_range(0..chars.len());
            let mut c = letter(rng);
            while c == chars[i] {
                c = letter(rng);
            }
            chars[i] = c;
        }
        1 => {
            chars.remove(rng.random_range(0..chars.len()));
        }
        _ => {
            let i = rng.random_range(0..=chars.len());
            chars.insert(i, letter(rng));
        }
    }
    chars.into_iter().collect()
}
