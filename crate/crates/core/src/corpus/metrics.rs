use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::clean::normalized_words;
use super::{CleanedAnnotation, CorpusError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub annotations: usize,
    /// Distinct tokens (sign ignored).
    pub distinct: usize,
    /// Tokens occurring more than once.
    pub repeated: usize,
    /// Tokens that occur in this class and in no other. For the overall
    /// entry: tokens that occur in exactly one class.
    pub unique_to_class: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_class: BTreeMap<String, ClassStats>,
    pub overall: ClassStats,
}

/// Distinct / repeated / class-unique token counts, per class and overall.
pub fn corpus_statistics(
    by_class: &BTreeMap<String, Vec<CleanedAnnotation>>,
) -> Result<CorpusStats, CorpusError> {
    if by_class.values().all(Vec::is_empty) {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, HashMap<&str, usize>> = BTreeMap::new();
    let mut overall_counts: HashMap<&str, usize> = HashMap::new();
    let mut classes_of: HashMap<&str, HashSet<&str>> = HashMap::new();
    for (class, annotations) in by_class {
        let class_counts = counts.entry(class.as_str()).or_default();
        for ann in annotations {
            for t in &ann.tokens {
                *class_counts.entry(t.token.as_str()).or_default() += 1;
                *overall_counts.entry(t.token.as_str()).or_default() += 1;
                classes_of
                    .entry(t.token.as_str())
                    .or_default()
                    .insert(class.as_str());
            }
        }
    }

    let mut per_class = BTreeMap::new();
    for (class, annotations) in by_class {
        let class_counts = &counts[class.as_str()];
        per_class.insert(
            class.clone(),
            ClassStats {
                annotations: annotations.len(),
                distinct: class_counts.len(),
                repeated: class_counts.values().filter(|&&c| c > 1).count(),
                unique_to_class: class_counts
                    .keys()
                    .filter(|t| classes_of[*t].len() == 1)
                    .count(),
            },
        );
    }
    let overall = ClassStats {
        annotations: by_class.values().map(Vec::len).sum(),
        distinct: overall_counts.len(),
        repeated: overall_counts.values().filter(|&&c| c > 1).count(),
        unique_to_class: classes_of.values().filter(|s| s.len() == 1).count(),
    };
    Ok(CorpusStats { per_class, overall })
}

fn ngrams(words: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    words.windows(n)
}

/// Number of distinct word n-grams across the given raw texts.
pub fn ngram_diversity<S: AsRef<str>>(texts: &[S], n: usize) -> Result<usize, CorpusError> {
    if !(1..=3).contains(&n) {
        return Err(CorpusError::InvalidOrder(n));
    }
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    for text in texts {
        let words = normalized_words(text.as_ref());
        for g in ngrams(&words, n) {
            if !seen.contains(g) {
                seen.insert(g.to_vec());
            }
        }
    }
    Ok(seen.len())
}

fn count_ngrams(words: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in ngrams(words, n) {
        *counts.entry(g).or_default() += 1;
    }
    counts
}

/// Sentence BLEU in [0, 1] with uniform weights up to `max_n`.
///
/// Unigram precision is unsmoothed; orders two and up use add-one
/// smoothing on both the clipped match count and the candidate count. The
/// brevity penalty uses the reference length closest to the hypothesis
/// (shorter wins ties).
pub fn sentence_bleu(hypothesis: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    if hypothesis.is_empty() || references.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let hyp_counts = count_ngrams(hypothesis, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in references {
            for (g, c) in count_ngrams(r, n) {
                let e = max_ref.entry(g).or_default();
                *e = (*e).max(c);
            }
        }
        let clipped: usize = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = hypothesis.len().saturating_sub(n - 1);
        let precision = if n == 1 {
            if clipped == 0 {
                return 0.0;
            }
            clipped as f64 / total as f64
        } else {
            (clipped as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += precision.ln() / max_n as f64;
    }
    let c = hypothesis.len() as f64;
    let closest = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(hypothesis.len()), len))
        .unwrap_or(0) as f64;
    let bp = if c > closest {
        1.0
    } else {
        (1.0 - closest / c).exp()
    };
    bp * log_sum.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuSummary {
    /// Mean sentence BLEU x 100.
    pub score: f64,
    pub scored_annotations: usize,
    pub skipped_groups: usize,
}

/// Mean leave-one-out BLEU: each annotation is scored against the other
/// annotations of the same direction.
pub fn inter_annotator_bleu<S: AsRef<str>>(
    groups: &[Vec<S>],
    max_n: usize,
) -> Result<BleuSummary, CorpusError> {
    let mut total = 0.0;
    let mut scored = 0usize;
    let mut skipped = 0usize;
    for group in groups {
        if group.len() < 2 {
            skipped += 1;
            continue;
        }
        let tokenized: Vec<Vec<String>> = group
            .iter()
            .map(|t| normalized_words(t.as_ref()))
            .collect();
        for (i, hyp) in tokenized.iter().enumerate() {
            let refs: Vec<Vec<String>> = tokenized
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, r)| r.clone())
                .collect();
            total += sentence_bleu(hyp, &refs, max_n);
            scored += 1;
        }
    }
    if skipped > 0 {
        log::warn!("inter-annotator BLEU skipped {skipped} direction(s) with a single annotation");
    }
    if scored == 0 {
        return Err(CorpusError::InsufficientReferences);
    }
    Ok(BleuSummary {
        score: 100.0 * total / scored as f64,
        scored_annotations: scored,
        skipped_groups: skipped,
    })
}
