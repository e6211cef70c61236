use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::CorpusError;

const DICTIONARY: &str = include_str!("../../data/dictionary.txt");
const STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const LEMMA_EXCEPTIONS: &str = include_str!("../../data/lemma_exceptions.tsv");
const POSITIVE_MODIFIERS: &str = include_str!("../../data/modifiers_positive.txt");
const NEGATIVE_MODIFIERS: &str = include_str!("../../data/modifiers_negative.txt");

/// Which way a modifier pushes the concepts around it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modifier {
    pub polarity: Polarity,
    /// Also applies to unsigned content words earlier in the same clause
    /// ("snow is removed").
    pub applies_backward: bool,
}

/// Word lists driving annotation cleaning. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct Lexicon {
    /// Word -> frequency rank (0 = most frequent).
    ranks: HashMap<String, usize>,
    /// Dictionary words (as chars) bucketed by length, in rank order.
    by_length: Vec<Vec<(String, Vec<char>)>>,
    exceptions: HashMap<String, String>,
    stopwords: HashSet<String>,
    modifiers: HashMap<String, Modifier>,
    /// Keep "-er"/"-est" forms as their own concepts.
    pub preserve_comparatives: bool,
}

fn entries(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

impl Lexicon {
    /// The word lists shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_sources(
            DICTIONARY,
            STOPWORDS,
            LEMMA_EXCEPTIONS,
            POSITIVE_MODIFIERS,
            NEGATIVE_MODIFIERS,
        )
        .expect("bundled lexicon is well formed")
    }

    /// Loads `dictionary.txt`, `stopwords.txt`, `lemma_exceptions.tsv`,
    /// `modifiers_positive.txt` and `modifiers_negative.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| CorpusError::Io {
                path: path.display().to_string(),
                source: e,
            })
        };
        Self::from_sources(
            &read("dictionary.txt")?,
            &read("stopwords.txt")?,
            &read("lemma_exceptions.tsv")?,
            &read("modifiers_positive.txt")?,
            &read("modifiers_negative.txt")?,
        )
    }

    pub fn from_sources(
        dictionary: &str,
        stopwords: &str,
        exceptions: &str,
        positive: &str,
        negative: &str,
    ) -> Result<Self, CorpusError> {
        let mut ranks = HashMap::new();
        let mut by_length: Vec<Vec<(String, Vec<char>)>> = Vec::new();
        for word in entries(dictionary) {
            let word = word.to_lowercase();
            if ranks.contains_key(&word) {
                continue;
            }
            let chars: Vec<char> = word.chars().collect();
            let len = chars.len();
            if by_length.len() <= len {
                by_length.resize(len + 1, Vec::new());
            }
            by_length[len].push((word.clone(), chars));
            ranks.insert(word, ranks.len());
        }

        let mut exception_map = HashMap::new();
        for (lineno, line) in entries(exceptions).enumerate() {
            let (form, lemma) = line.split_once('\t').ok_or_else(|| {
                CorpusError::Lexicon(format!(
                    "lemma exception line {} is not form<TAB>lemma: {line:?}",
                    lineno + 1
                ))
            })?;
            exception_map.insert(form.trim().to_lowercase(), lemma.trim().to_lowercase());
        }

        let mut modifiers = HashMap::new();
        for (text, polarity) in [(positive, Polarity::Positive), (negative, Polarity::Negative)] {
            for line in entries(text) {
                let mut cols = line.split('\t');
                let word = cols.next().unwrap_or_default().trim().to_lowercase();
                let applies_backward = cols.any(|c| c.trim() == "post");
                let previous = modifiers.insert(
                    word.clone(),
                    Modifier {
                        polarity,
                        applies_backward,
                    },
                );
                if let Some(prev) = previous {
                    if prev.polarity != polarity {
                        return Err(CorpusError::Lexicon(format!(
                            "{word:?} is listed as both a positive and a negative modifier"
                        )));
                    }
                }
            }
        }

        let stopwords = entries(stopwords).map(str::to_lowercase).collect();
        Ok(Self {
            ranks,
            by_length,
            exceptions: exception_map,
            stopwords,
            modifiers,
            preserve_comparatives: true,
        })
    }

    pub fn with_comparatives_preserved(mut self, preserve: bool) -> Self {
        self.preserve_comparatives = preserve;
        self
    }

    /// Extra stopwords, e.g. class names of the current world.
    pub fn add_stopwords<I, S>(&mut self, words: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for w in words {
            self.stopwords.insert(w.as_ref().to_lowercase());
        }
    }

    /// Adds words to the end of the dictionary (lowest frequency rank).
    pub fn add_dictionary_words<I, S>(&mut self, words: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for w in words {
            let w = w.as_ref().to_lowercase();
            if self.ranks.contains_key(&w) {
                continue;
            }
            let chars: Vec<char> = w.chars().collect();
            let len = chars.len();
            if self.by_length.len() <= len {
                self.by_length.resize(len + 1, Vec::new());
            }
            self.by_length[len].push((w.clone(), chars));
            let rank = self.ranks.len();
            self.ranks.insert(w, rank);
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.ranks.contains_key(word)
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.ranks.get(word).copied()
    }

    pub fn dictionary_len(&self) -> usize {
        self.ranks.len()
    }

    /// Dictionary words in frequency-rank order.
    pub fn dictionary_words(&self) -> Vec<&str> {
        let mut words: Vec<(&str, usize)> =
            self.ranks.iter().map(|(w, &r)| (w.as_str(), r)).collect();
        words.sort_by_key(|&(_, r)| r);
        words.into_iter().map(|(w, _)| w).collect()
    }

    pub(crate) fn words_of_length(&self, len: usize) -> &[(String, Vec<char>)] {
        self.by_length.get(len).map_or(&[], Vec::as_slice)
    }

    pub fn exception(&self, form: &str) -> Option<&str> {
        self.exceptions.get(form).map(String::as_str)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    pub fn modifier(&self, word: &str) -> Option<Modifier> {
        self.modifiers.get(word).copied()
    }
}
