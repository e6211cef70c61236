//! Linear concept detector on raw pixels.

use serde::{Deserialize, Serialize};

use super::choice::DEFAULT_EVAL_MIN_FREQ;
use super::{EvalError, Result};
use crate::distill::{apply_direction, concept_direction, ConceptVocabulary};
use crate::generator::{ImageBuffer, SyntheticWorld};
use crate::numerics::{dot, norm};
use crate::rng::{derive_indexed, derive_seed, gaussian_vector, seeded, shuffle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            epochs: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// Over standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    /// Reciprocal standard deviation times `1/sqrt(dim)`, 0 for constant
    /// features.
    pub inv_std: Vec<f64>,
    /// Regularized hinge objective of the kept model after each epoch.
    pub objective_trace: Vec<f64>,
}

impl LinearClassifier {
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, &self.standardize(x)) + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) >= 0.0
    }

    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

fn objective(w: &[f64], data: &[(Vec<f64>, f64)], lambda: f64) -> f64 {
    let hinge: f64 = data
        .iter()
        .map(|(x, y)| (1.0 - y * dot(w, x)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge / data.len() as f64
}

/// L2-regularized hinge loss minimized by seeded stochastic subgradient
/// steps of size `1/(λt)`. At the end of each epoch the average iterate of
/// that epoch replaces the kept model when it does not raise the objective,
/// so the recorded objective never increases. The bias is an extra
/// constant feature and shares the (tiny) regularization. Visiting order
/// depends only on the examples' values, never on their labels, so
/// swapping the two sets yields the negated classifier.
pub fn train_linear_classifier(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    opts: &SvmOptions,
) -> Result<LinearClassifier> {
    if positives.len() < 2 || negatives.len() < 2 {
        return Err(EvalError::InvalidConfig(
            "need at least two examples per class".into(),
        ));
    }
    if !(opts.lambda > 0.0) || opts.epochs == 0 {
        return Err(EvalError::InvalidConfig(
            "lambda must be > 0 and epochs >= 1".into(),
        ));
    }
    let dim = positives[0].len();
    if positives.iter().chain(negatives).any(|x| x.len() != dim) {
        return Err(EvalError::InvalidConfig("examples differ in length".into()));
    }
    if same_multiset(positives, negatives) {
        return Err(EvalError::DegenerateInput(
            "positive and negative sets are identical".into(),
        ));
    }

    let n = (positives.len() + negatives.len()) as f64;
    let mut mean = vec![0.0; dim];
    for x in positives.iter().chain(negatives) {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; dim];
    for x in positives.iter().chain(negatives) {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    // Per-feature z-scores, further scaled by 1/sqrt(dim) so an example has
    // unit mean squared norm; otherwise the subgradient steps overshoot for
    // thousands of iterations on pixel-sized inputs.
    let scale = 1.0 / (dim as f64).sqrt();
    let inv_std: Vec<f64> = var
        .iter()
        .map(|v| if v.sqrt() > 1e-12 { scale / v.sqrt() } else { 0.0 })
        .collect();
    let augment = |x: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = x
            .iter()
            .zip(&mean)
            .zip(&inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect();
        out.push(1.0);
        out
    };
    let data: Vec<(Vec<f64>, f64)> = positives
        .iter()
        .map(|x| (augment(x), 1.0))
        .chain(negatives.iter().map(|x| (augment(x), -1.0)))
        .collect();

    let lambda = opts.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut rng = seeded(derive_seed(opts.seed, "svm"));
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| {
        let (xa, xb) = (&data[a].0, &data[b].0);
        xa.iter()
            .zip(xb)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(data[a].1.total_cmp(&data[b].1))
    });
    let mut w = vec![0.0; dim + 1];
    let mut kept = w.clone();
    let mut kept_obj = objective(&kept, &data, lambda);
    let mut trace = Vec::with_capacity(opts.epochs);
    let mut t = 0usize;
    for _ in 0..opts.epochs {
        shuffle(&mut rng, &mut order);
        let mut avg = vec![0.0; dim + 1];
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = &data[i];
            let margin = y * dot(&w, x);
            let shrink = 1.0 - eta * lambda;
            for wi in w.iter_mut() {
                *wi *= shrink;
            }
            if margin < 1.0 {
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += eta * y * xi;
                }
            }
            let len = norm(&w);
            if len > radius {
                let s = radius / len;
                for wi in w.iter_mut() {
                    *wi *= s;
                }
            }
            for (a, wi) in avg.iter_mut().zip(&w) {
                *a += wi / order.len() as f64;
            }
        }
        let obj = objective(&avg, &data, lambda);
        if obj <= kept_obj {
            kept = avg;
            kept_obj = obj;
        }
        trace.push(kept_obj);
    }
    if kept.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::DegenerateInput("non-finite classifier weights".into()));
    }
    let bias = kept.pop().expect("bias slot");
    Ok(LinearClassifier {
        weights: kept,
        bias,
        mean,
        inv_std,
        objective_trace: trace,
    })
}

fn same_multiset(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let key = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    let mut ka: Vec<_> = a.iter().map(key).collect();
    let mut kb: Vec<_> = b.iter().map(key).collect();
    ka.sort();
    kb.sort();
    ka == kb
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmExperimentOptions {
    pub n_z: usize,
    pub holdout: f64,
    pub alpha: f64,
    pub seed: u64,
    pub min_freq: usize,
    pub svm: SvmOptions,
}

impl Default for SvmExperimentOptions {
    fn default() -> Self {
        Self {
            n_z: 64,
            holdout: 0.2,
            alpha: 6.0,
            seed: 0,
            min_freq: DEFAULT_EVAL_MIN_FREQ,
            svm: SvmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmResult {
    pub token: String,
    pub train_images: usize,
    pub test_images: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub final_objective: f64,
}

/// Held-out accuracy of a pixel classifier separating `G(z + α·d_token)`
/// from `G(z + α·d_j)`, `d_j` drawn afresh per latent code from the other
/// vocabulary tokens. The split is by latent code.
pub fn svm_concept_accuracy(
    world: &SyntheticWorld,
    vocab: &ConceptVocabulary,
    token: &str,
    y: usize,
    opts: &SvmExperimentOptions,
) -> Result<SvmResult> {
    let others: Vec<&str> = vocab
        .tokens
        .iter()
        .filter(|t| t.freq >= opts.min_freq && t.token != token)
        .map(|t| t.token.as_str())
        .collect();
    if others.is_empty() {
        return Err(EvalError::VocabularyTooSmall {
            needed: 2,
            found: others.len() + 1,
        });
    }
    if !(opts.holdout > 0.0 && opts.holdout < 1.0) {
        return Err(EvalError::InvalidConfig(format!(
            "holdout fraction {} outside (0, 1)",
            opts.holdout
        )));
    }
    let (target, _) = concept_direction(vocab, token)?;
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(opts.n_z);
    for i in 0..opts.n_z {
        let sample_seed = derive_indexed(opts.seed, &format!("svm/{token}"), i as u64);
        let mut rng = seeded(sample_seed);
        let z = gaussian_vector(&mut rng, world.latent_dim());
        let other = others[rand::Rng::random_range(&mut rng, 0..others.len())];
        let (neg_dir, _) = concept_direction(vocab, other)?;
        let pos: ImageBuffer = apply_direction(world, &z, y, &target, opts.alpha)?;
        let neg: ImageBuffer = apply_direction(world, &z, y, &neg_dir, opts.alpha)?;
        pairs.push((pos.pixels, neg.pixels));
    }
    let mut idx: Vec<usize> = (0..opts.n_z).collect();
    shuffle(&mut seeded(derive_seed(opts.seed, &format!("svm-split/{token}"))), &mut idx);
    let n_test = ((opts.n_z as f64) * opts.holdout).ceil() as usize;
    let (test_idx, train_idx) = idx.split_at(n_test.min(opts.n_z));
    let train_pos: Vec<Vec<f64>> = train_idx.iter().map(|&i| pairs[i].0.clone()).collect();
    let train_neg: Vec<Vec<f64>> = train_idx.iter().map(|&i| pairs[i].1.clone()).collect();
    let clf = train_linear_classifier(&train_pos, &train_neg, &opts.svm)?;
    let mut correct = 0;
    for &i in test_idx {
        correct += clf.predict(&pairs[i].0) as usize;
        correct += !clf.predict(&pairs[i].1) as usize;
    }
    let test_images = 2 * test_idx.len();
    Ok(SvmResult {
        token: token.to_string(),
        train_images: 2 * train_idx.len(),
        test_images,
        correct,
        accuracy: correct as f64 / test_images.max(1) as f64,
        final_objective: clf.final_objective(),
    })
}
