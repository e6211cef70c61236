//! Turning freeform change descriptions into signed concept tokens.

use super::lexicon::Lexicon;
use super::{CleanedAnnotation, CorpusError, RawAnnotation, SignedToken};

/// Largest accepted edit distance for a spelling correction.
pub const MAX_CORRECTION_DISTANCE: usize = 2;

/// Plain Levenshtein distance (unit-cost insert, delete, substitute).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let subst = prev[j] + usize::from(ca != cb);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance if it is at most `bound`, else `None`. Stops as soon
/// as every cell of a DP row exceeds the bound.
fn bounded_levenshtein(a: &[char], b: &[char], bound: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > bound {
        return None;
    }
    let mut prev = [0usize; 64];
    let mut cur = [0usize; 64];
    if b.len() >= prev.len() {
        let d = levenshtein(&a.iter().collect::<String>(), &b.iter().collect::<String>());
        return (d <= bound).then_some(d);
    }
    for (j, p) in prev.iter_mut().enumerate().take(b.len() + 1) {
        *p = j;
    }
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, cb) in b.iter().enumerate() {
            let subst = prev[j] + usize::from(ca != cb);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > bound {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (prev[b.len()] <= bound).then_some(prev[b.len()])
}

/// Dictionary words are returned unchanged. Otherwise the closest dictionary
/// word within [`MAX_CORRECTION_DISTANCE`] wins. Among equally close words,
/// one reachable purely by re-inserting dropped letters is preferred: a
/// dropped letter is the likelier slip, since a substitution or insertion
/// also has to hit one particular letter. Remaining ties go to the more
/// frequent word, then lexicographic order. With no candidate the token is
/// kept.
pub fn spell_correct(token: &str, lexicon: &Lexicon) -> String {
    if lexicon.contains(token) {
        return token.to_string();
    }
    let chars: Vec<char> = token.chars().collect();
    let mut best: Option<(usize, bool, usize, &str)> = None;
    let lo = chars.len().saturating_sub(MAX_CORRECTION_DISTANCE);
    for len in lo..=chars.len() + MAX_CORRECTION_DISTANCE {
        for (word, wchars) in lexicon.words_of_length(len) {
            let Some(d) = bounded_levenshtein(&chars, wchars, MAX_CORRECTION_DISTANCE) else {
                continue;
            };
            let rank = lexicon.rank(word).unwrap_or(usize::MAX);
            let restores_omission = wchars.len() == chars.len() + d;
            let key = (d, !restores_omission, rank, word.as_str());
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    best.map_or_else(|| token.to_string(), |(_, _, _, w)| w.to_string())
}

const MIN_LEMMA_LEN: usize = 3;

/// One rewrite step; `None` when no rule produces a dictionary word.
fn lemma_step(token: &str, lexicon: &Lexicon) -> Option<String> {
    if let Some(lemma) = lexicon.exception(token) {
        return Some(lemma.to_string());
    }
    let accept = |cand: String| -> Option<String> {
        (cand.len() >= MIN_LEMMA_LEN && lexicon.contains(&cand)).then_some(cand)
    };

    if !lexicon.preserve_comparatives {
        for suffix in ["est", "er"] {
            if let Some(stem) = token.strip_suffix(suffix) {
                if let Some(l) = stem_candidates(stem, suffix).into_iter().find_map(accept) {
                    return Some(l);
                }
            }
        }
    }
    if let Some(stem) = token.strip_suffix("ies") {
        if let Some(l) = accept(format!("{stem}y")) {
            return Some(l);
        }
    }
    if let Some(stem) = token.strip_suffix("es") {
        if let Some(l) = accept(stem.to_string()) {
            return Some(l);
        }
    }
    if !token.ends_with("ss") {
        if let Some(stem) = token.strip_suffix('s') {
            if let Some(l) = accept(stem.to_string()) {
                return Some(l);
            }
        }
    }
    // "-ing" forms that are dictionary words in their own right ("building",
    // "ceiling") are treated as nouns and left alone.
    if !lexicon.contains(token) {
        if let Some(stem) = token.strip_suffix("ing") {
            if let Some(l) = stem_candidates(stem, "ing").into_iter().find_map(accept) {
                return Some(l);
            }
        }
    }
    None
}

/// Stem, silent-e restoration, then consonant un-doubling.
fn stem_candidates(stem: &str, suffix: &str) -> Vec<String> {
    let mut out = vec![stem.to_string(), format!("{stem}e")];
    let bytes = stem.as_bytes();
    if bytes.len() >= 2 && bytes[bytes.len() - 1] == bytes[bytes.len() - 2] {
        out.push(stem[..stem.len() - 1].to_string());
    }
    if suffix != "ing" && stem.ends_with('i') {
        out.push(format!("{}y", &stem[..stem.len() - 1]));
    }
    out
}

/// Rule-based lemmatizer: exception table, then suffix rules whose output
/// must be a dictionary word. Rules are applied until the form stops
/// changing so the result is a fixed point.
pub fn lemmatize(token: &str, lexicon: &Lexicon) -> String {
    let mut current = token.to_string();
    for _ in 0..4 {
        match lemma_step(&current, lexicon) {
            Some(next) if next != current => current = next,
            _ => break,
        }
    }
    current
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Word(String),
    Boundary,
}

/// Lowercases, splits on whitespace and punctuation, and keeps intra-word
/// hyphens and ampersands. `, ; . ! ? :` become clause boundaries.
fn tokenize(text: &str) -> Vec<Piece> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut pieces = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, pieces: &mut Vec<Piece>| {
        if !word.is_empty() {
            pieces.push(Piece::Word(std::mem::take(word)));
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            word.push(c);
        } else if c == '-' || c == '&' {
            let next_alnum = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if !word.is_empty() && next_alnum {
                word.push(c);
            } else {
                flush(&mut word, &mut pieces);
            }
        } else if c == '\'' || c == '\u{2019}' {
            // "don't" -> "dont"
        } else if matches!(c, ',' | ';' | '.' | '!' | '?' | ':') {
            flush(&mut word, &mut pieces);
            pieces.push(Piece::Boundary);
        } else {
            flush(&mut word, &mut pieces);
        }
    }
    flush(&mut word, &mut pieces);
    pieces
}

/// Lowercased, punctuation-stripped words, as used by the diversity and
/// BLEU metrics.
pub fn normalized_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter_map(|p| match p {
            Piece::Word(w) => Some(w),
            Piece::Boundary => None,
        })
        .collect()
}

fn is_valid_token(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '&' || c == '-')
}

const CLAUSE_WORDS: [&str; 2] = ["and", "but"];

/// Cleans one freeform description into signed tokens.
pub fn clean_text(text: &str, lexicon: &Lexicon) -> Vec<SignedToken> {
    let pieces = tokenize(text);
    let mut tokens: Vec<SignedToken> = Vec::new();
    // Sign set by the latest modifier in the current clause.
    let mut forward: Option<i8> = None;
    // Content tokens in this clause not yet covered by a modifier.
    let mut pending: Vec<usize> = Vec::new();

    let mut i = 0;
    while i < pieces.len() {
        let word = match &pieces[i] {
            Piece::Boundary => {
                forward = None;
                pending.clear();
                i += 1;
                continue;
            }
            Piece::Word(w) => w.as_str(),
        };
        if CLAUSE_WORDS.contains(&word) {
            forward = None;
            pending.clear();
            i += 1;
            continue;
        }
        // Two-word modifiers such as "goes from" are listed hyphenated.
        if let Some(Piece::Word(next)) = pieces.get(i + 1) {
            if let Some(m) = lexicon.modifier(&format!("{word}-{next}")) {
                apply_modifier(m, &mut forward, &mut pending, &mut tokens);
                i += 2;
                continue;
            }
        }
        i += 1;

        let corrected = spell_correct(word, lexicon);
        let lemma = lemmatize(&corrected, lexicon);
        let modifier = [word, corrected.as_str(), lemma.as_str()]
            .into_iter()
            .find_map(|w| lexicon.modifier(w));
        if let Some(m) = modifier {
            apply_modifier(m, &mut forward, &mut pending, &mut tokens);
            continue;
        }
        if CLAUSE_WORDS.contains(&corrected.as_str()) {
            forward = None;
            pending.clear();
            continue;
        }
        if lexicon.is_stopword(&corrected) || lexicon.is_stopword(&lemma) || !is_valid_token(&lemma)
        {
            continue;
        }
        match forward {
            Some(sign) => tokens.push(SignedToken { token: lemma, sign }),
            None => {
                pending.push(tokens.len());
                tokens.push(SignedToken {
                    token: lemma,
                    sign: 1,
                });
            }
        }
    }

    let mut seen = std::collections::HashSet::new();
    tokens.retain(|t| seen.insert(t.token.clone()));
    tokens
}

fn apply_modifier(
    m: super::lexicon::Modifier,
    forward: &mut Option<i8>,
    pending: &mut Vec<usize>,
    tokens: &mut [SignedToken],
) {
    let sign = m.polarity.sign();
    *forward = Some(sign);
    if m.applies_backward {
        for &idx in pending.iter() {
            tokens[idx].sign = sign;
        }
    }
    pending.clear();
}

pub fn clean(raw: &RawAnnotation, lexicon: &Lexicon) -> Result<CleanedAnnotation, CorpusError> {
    let tokens = clean_text(&raw.text, lexicon);
    if tokens.is_empty() {
        return Err(CorpusError::EmptyResult {
            direction_id: raw.direction_id.clone(),
            annotator_id: raw.annotator_id.clone(),
        });
    }
    Ok(CleanedAnnotation {
        direction_id: raw.direction_id.clone(),
        annotator_id: raw.annotator_id.clone(),
        class: Some(raw.class.clone()),
        tokens,
    })
}
