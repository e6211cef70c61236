//! Four-way forced-choice experiments: across latent codes, across
//! classes, and for pairwise compositions.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::OracleAnnotator;
use super::stats::Tally;
use super::{EvalError, Result};
use crate::directions::Direction;
use crate::distill::{compose, concept_direction, ConceptVocabulary};
use crate::generator::SyntheticWorld;
use crate::rng::{derive_indexed, derive_seed, gaussian_vector, sample_distinct, seeded, shuffle};

pub const CHANCE: f64 = 0.25;
pub const CANDIDATES: usize = 4;
/// Tokens must occur at least this often to serve as targets or
/// distractors.
pub const DEFAULT_EVAL_MIN_FREQ: usize = 5;

pub fn resolve_token(world: &SyntheticWorld, token: &str) -> Result<usize> {
    world
        .concept_index(token)
        .ok_or_else(|| EvalError::UnknownToken(token.to_string()))
}

/// Scores each candidate by the summed perceived change of the target
/// concepts and returns the winner (lowest index on ties) with the scores.
/// With a choice temperature set, the winner is drawn from a softmax over
/// the scores instead.
#[allow(clippy::too_many_arguments)]
pub fn oracle_choose<R: Rng + ?Sized>(
    world: &SyntheticWorld,
    oracle: &OracleAnnotator,
    z: &[f64],
    y: usize,
    targets: &[usize],
    candidates: &[Direction],
    alpha: f64,
    rng: &mut R,
) -> Result<(usize, Vec<f64>)> {
    if candidates.len() != CANDIDATES {
        return Err(EvalError::InvalidConfig(format!(
            "forced choice needs {CANDIDATES} candidates, got {}",
            candidates.len()
        )));
    }
    let mut scores = Vec::with_capacity(CANDIDATES);
    for c in candidates {
        let deltas = oracle.perceived_deltas(world, z, y, &c.vector, alpha)?;
        scores.push(targets.iter().map(|&k| deltas[k]).sum::<f64>());
    }
    let chosen = match oracle.choice_temperature {
        None => argmax_first(&scores),
        Some(t) => {
            let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = scores.iter().map(|s| ((s - top) / t).exp()).collect();
            let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
            let mut pick = CANDIDATES - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        }
    };
    Ok((chosen, scores))
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcedChoiceOptions {
    pub trials_per_concept: usize,
    pub alpha: f64,
    pub seed: u64,
    pub min_freq: usize,
}

impl Default for ForcedChoiceOptions {
    fn default() -> Self {
        Self {
            trials_per_concept: 3,
            alpha: 6.0,
            seed: 0,
            min_freq: DEFAULT_EVAL_MIN_FREQ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionOptions {
    pub pair_count: usize,
    pub alpha: f64,
    pub seed: u64,
    pub min_freq: usize,
}

impl Default for CompositionOptions {
    fn default() -> Self {
        Self {
            pair_count: 50,
            alpha: 6.0,
            seed: 0,
            min_freq: DEFAULT_EVAL_MIN_FREQ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub target: Vec<String>,
    /// Candidate labels in presentation order.
    pub candidates: Vec<String>,
    /// `permutation[p]` is the unshuffled index shown at position `p`;
    /// unshuffled index 0 is the target.
    pub permutation: Vec<usize>,
    pub z_seed: u64,
    pub class: usize,
    pub alpha: f64,
    pub chosen: usize,
    pub correct: bool,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptResult {
    pub token: String,
    #[serde(flatten)]
    pub tally: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub per_concept: Vec<ConceptResult>,
    pub overall: Tally,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub buckets: BTreeMap<String, Tally>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<BTreeMap<String, usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub trials: Vec<TrialResult>,
}

/// Tokens usable as targets/distractors, in vocabulary order, with their
/// unit directions.
fn eligible_pool(
    vocab: &ConceptVocabulary,
    min_freq: usize,
) -> Result<Vec<(String, Direction)>> {
    vocab
        .tokens
        .iter()
        .filter(|t| t.freq >= min_freq)
        .map(|t| Ok((t.token.clone(), concept_direction(vocab, &t.token)?.0)))
        .collect()
}

struct Trial {
    targets: Vec<usize>,
    target_labels: Vec<String>,
    /// Unshuffled; index 0 is the correct answer.
    candidates: Vec<(String, Direction)>,
    z_seed: u64,
    class: usize,
    stream: u64,
}

fn run_trial(
    world: &SyntheticWorld,
    oracle: &OracleAnnotator,
    trial: Trial,
    alpha: f64,
) -> Result<TrialResult> {
    let mut rng = seeded(trial.stream);
    let mut permutation: Vec<usize> = (0..CANDIDATES).collect();
    shuffle(&mut rng, &mut permutation);
    let shown: Vec<Direction> = permutation
        .iter()
        .map(|&i| trial.candidates[i].1.clone())
        .collect();
    let z = gaussian_vector(&mut seeded(trial.z_seed), world.latent_dim());
    let (chosen, scores) = oracle_choose(
        world,
        oracle,
        &z,
        trial.class,
        &trial.targets,
        &shown,
        alpha,
        &mut rng,
    )?;
    Ok(TrialResult {
        target: trial.target_labels,
        candidates: permutation
            .iter()
            .map(|&i| trial.candidates[i].0.clone())
            .collect(),
        correct: permutation[chosen] == 0,
        permutation,
        z_seed: trial.z_seed,
        class: trial.class,
        alpha,
        chosen,
        scores,
    })
}

fn per_concept(trials: &[TrialResult], order: &[String]) -> Vec<ConceptResult> {
    order
        .iter()
        .map(|token| {
            let mine: Vec<&TrialResult> = trials
                .iter()
                .filter(|t| t.target.len() == 1 && &t.target[0] == token)
                .collect();
            let correct = mine.iter().filter(|t| t.correct).count();
            ConceptResult {
                token: token.clone(),
                tally: Tally::new(correct, mine.len(), CHANCE),
            }
        })
        .collect()
}

fn overall(trials: &[TrialResult]) -> Tally {
    Tally::new(
        trials.iter().filter(|t| t.correct).count(),
        trials.len(),
        CHANCE,
    )
}

/// Shared scaffolding for the two single-concept protocols. `class_for`
/// picks the rendering class of each trial from its random stream.
fn single_concept_trials<F>(
    world: &SyntheticWorld,
    vocab: &ConceptVocabulary,
    oracle: &OracleAnnotator,
    opts: &ForcedChoiceOptions,
    label: &str,
    class_for: F,
) -> Result<(Vec<TrialResult>, Vec<String>)>
where
    F: Fn(&mut crate::rng::SeededRng) -> usize + Sync,
{
    oracle.validate()?;
    let pool = eligible_pool(vocab, opts.min_freq)?;
    if pool.len() < CANDIDATES {
        return Err(EvalError::VocabularyTooSmall {
            needed: CANDIDATES,
            found: pool.len(),
        });
    }
    let concepts: Vec<(usize, usize)> = pool
        .iter()
        .enumerate()
        .filter_map(|(i, (tok, _))| world.concept_index(tok).map(|k| (i, k)))
        .collect();
    let mut jobs = Vec::new();
    for &(pool_idx, k) in &concepts {
        let token = &pool[pool_idx].0;
        for t in 0..opts.trials_per_concept {
            let trial_seed = derive_indexed(opts.seed, &format!("{label}/{token}"), t as u64);
            let mut rng = seeded(trial_seed);
            let class = class_for(&mut rng);
            let others: Vec<usize> = (0..pool.len()).filter(|&i| i != pool_idx).collect();
            let picks = sample_distinct(&mut rng, others.len(), CANDIDATES - 1);
            let mut candidates = vec![pool[pool_idx].clone()];
            candidates.extend(picks.into_iter().map(|p| pool[others[p]].clone()));
            jobs.push(Trial {
                targets: vec![k],
                target_labels: vec![token.clone()],
                candidates,
                z_seed: derive_seed(trial_seed, "z"),
                class,
                stream: derive_seed(trial_seed, "present"),
                });
        }
    }
    let trials = jobs
        .into_par_iter()
        .map(|job| run_trial(world, oracle, job, opts.alpha))
        .collect::<Result<Vec<_>>>()?;
    let order = concepts.iter().map(|&(i, _)| pool[i].0.clone()).collect();
    Ok((trials, order))
}

/// Distilled concepts applied at fresh latent codes of the training class.
pub fn run_generalize_z(
    world: &SyntheticWorld,
    vocab: &ConceptVocabulary,
    y: usize,
    oracle: &OracleAnnotator,
    opts: &ForcedChoiceOptions,
) -> Result<ExperimentRun> {
    let (trials, order) =
        single_concept_trials(world, vocab, oracle, opts, "generalize-z", |_| y)?;
    Ok(ExperimentRun {
        report: ExperimentReport {
            experiment: "generalize-z".into(),
            seed: opts.seed,
            config: serde_json::json!({ "options": opts, "class": y, "oracle": oracle }),
            per_concept: per_concept(&trials, &order),
            overall: overall(&trials),
            buckets: BTreeMap::new(),
            histogram: None,
        },
        trials,
    })
}

/// Distilled concepts applied under classes other than the training class.
/// Trials are bucketed by whether the target concept is visible in the
/// test class.
pub fn run_generalize_y(
    world: &SyntheticWorld,
    vocab: &ConceptVocabulary,
    train_class: usize,
    oracle: &OracleAnnotator,
    opts: &ForcedChoiceOptions,
) -> Result<ExperimentRun> {
    let c = world.class_count();
    if c < 2 {
        return Err(EvalError::InvalidConfig("need at least two classes".into()));
    }
    let (trials, order) = single_concept_trials(world, vocab, oracle, opts, "generalize-y", |rng| {
        let r = rng.random_range(0..c - 1);
        if r >= train_class {
            r + 1
        } else {
            r
        }
    })?;
    let mut shared = (0, 0);
    let mut unshared = (0, 0);
    for t in &trials {
        let k = world.concept_index(&t.target[0]).expect("targets are concepts");
        let slot = if world.is_visible(k, t.class) {
            &mut shared
        } else {
            &mut unshared
        };
        slot.0 += t.correct as usize;
        slot.1 += 1;
    }
    let buckets = [("shared", shared), ("unshared", unshared)]
        .into_iter()
        .map(|(name, (ok, n))| (name.to_string(), Tally::new(ok, n, CHANCE)))
        .collect();
    Ok(ExperimentRun {
        report: ExperimentReport {
            experiment: "generalize-y".into(),
            seed: opts.seed,
            config: serde_json::json!({
                "options": opts,
                "train_class": train_class,
                "oracle": oracle,
            }),
            per_concept: per_concept(&trials, &order),
            overall: overall(&trials),
            buckets,
            histogram: None,
        },
        trials,
    })
}

pub const COMPOSITION_SLOTS: [&str; 4] = ["target", "a+c", "b+d", "c+d"];

/// Target `a∘b` against `a∘c`, `b∘d` and `c∘d`, with the oracle looking for
/// both `a` and `b`.
pub fn run_composition(
    world: &SyntheticWorld,
    vocab: &ConceptVocabulary,
    y: usize,
    oracle: &OracleAnnotator,
    opts: &CompositionOptions,
) -> Result<ExperimentRun> {
    oracle.validate()?;
    let pool: Vec<(String, Direction, usize)> = eligible_pool(vocab, opts.min_freq)?
        .into_iter()
        .filter_map(|(tok, d)| world.concept_index(&tok).map(|k| (tok, d, k)))
        .collect();
    if pool.len() < CANDIDATES {
        return Err(EvalError::VocabularyTooSmall {
            needed: CANDIDATES,
            found: pool.len(),
        });
    }
    let mut jobs = Vec::with_capacity(opts.pair_count);
    for t in 0..opts.pair_count {
        let trial_seed = derive_indexed(opts.seed, "compose", t as u64);
        let mut rng = seeded(trial_seed);
        let pick = sample_distinct(&mut rng, pool.len(), 4);
        let [a, b, c, d] = [pick[0], pick[1], pick[2], pick[3]].map(|i| &pool[i]);
        let pair = |p: &(String, Direction, usize), q: &(String, Direction, usize)| {
            Ok::<_, EvalError>((format!("{}+{}", p.0, q.0), compose(&p.1, &q.1)?))
        };
        jobs.push(Trial {
            targets: vec![a.2, b.2],
            target_labels: vec![a.0.clone(), b.0.clone()],
            candidates: vec![pair(a, b)?, pair(a, c)?, pair(b, d)?, pair(c, d)?],
            z_seed: derive_seed(trial_seed, "z"),
            class: y,
            stream: derive_seed(trial_seed, "present"),
        });
    }
    let trials = jobs
        .into_par_iter()
        .map(|job| run_trial(world, oracle, job, opts.alpha))
        .collect::<Result<Vec<_>>>()?;
    let mut histogram: BTreeMap<String, usize> =
        COMPOSITION_SLOTS.iter().map(|s| (s.to_string(), 0)).collect();
    for t in &trials {
        *histogram
            .get_mut(COMPOSITION_SLOTS[t.permutation[t.chosen]])
            .expect("fixed slots") += 1;
    }
    Ok(ExperimentRun {
        report: ExperimentReport {
            experiment: "compose".into(),
            seed: opts.seed,
            config: serde_json::json!({ "options": opts, "class": y, "oracle": oracle }),
            per_concept: Vec::new(),
            overall: overall(&trials),
            buckets: BTreeMap::new(),
            histogram: Some(histogram),
        },
        trials,
    })
}
