//! Rule-based noun-phrase chunking and object conflict derivation.
//!
//! A phrase is a maximal run `[determiner]? [adjective|unknown]* noun+`.
//! Unknown words are adjectives when a noun follows through the modifier run
//! and nouns otherwise. The last noun of the run is the core noun; a
//! contiguous run of nouns ("sea turtle") forms one core-noun group.
//!
//! Prompts may carry bracket annotations, `a [striped tiger] and a [spotted
//! leopard]`; when present they replace automatic chunking.

mod lexicon;

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use lexicon::{read_word_list, Lexicon, StopWords, WordClass, DEFAULT_STOP_WORDS};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("annotation {start}..{end} is outside the {len} prompt tokens")]
    AnnotationOutOfBounds { start: usize, end: usize, len: usize },
    #[error("annotations {0:?} and {1:?} overlap")]
    AnnotationOverlap(Range<usize>, Range<usize>),
    #[error("unbalanced bracket in prompt")]
    UnbalancedBracket,
    #[error("cannot read word list {path}: {message}")]
    WordList { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhrase {
    pub span: Range<usize>,
    /// Last token of the core-noun group.
    pub core_noun: usize,
    /// Tokens whose maps are averaged for detection.
    pub core_tokens: Range<usize>,
    pub object_id: usize,
}

/// Symmetric, irreflexive relation over object ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflicts {
    pairs: BTreeSet<(usize, usize)>,
}

impl Conflicts {
    pub fn insert(&mut self, a: usize, b: usize) {
        if a != b {
            self.pairs.insert((a.min(b), a.max(b)));
        }
    }

    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        a != b && self.pairs.contains(&(a.min(b), a.max(b)))
    }

    /// Unordered pairs `(a, b)` with `a < b`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStructure {
    pub tokens: Vec<Token>,
    pub noun_phrases: Vec<NounPhrase>,
    pub conflicts: Conflicts,
}

impl PromptStructure {
    pub fn object_count(&self) -> usize {
        self.noun_phrases.len()
    }

    pub fn phrase(&self, object_id: usize) -> Option<&NounPhrase> {
        self.noun_phrases.iter().find(|p| p.object_id == object_id)
    }

    /// The object whose phrase contains `token`, if any.
    pub fn object_of_token(&self, token: usize) -> Option<usize> {
        self.noun_phrases
            .iter()
            .find(|p| p.span.contains(&token))
            .map(|p| p.object_id)
    }

    pub fn core_noun_text(&self, object_id: usize) -> Option<&str> {
        self.phrase(object_id).map(|p| self.tokens[p.core_noun].text.as_str())
    }

    /// Marks every pair of distinct object phrases as conflicting.
    pub fn derive_conflicts(mut self) -> Self {
        let mut conflicts = Conflicts::default();
        let ids: Vec<usize> = self.noun_phrases.iter().map(|p| p.object_id).collect();
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                conflicts.insert(a, b);
            }
        }
        self.conflicts = conflicts;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Parser {
    pub lexicon: Lexicon,
    pub stop_words: StopWords,
}

impl Parser {
    pub fn new(lexicon: Lexicon, stop_words: StopWords) -> Self {
        Self { lexicon, stop_words }
    }

    /// Chunks `prompt` into noun phrases.
    ///
    /// Bracket annotations in the text and explicit token spans in
    /// `annotations` are merged; if either is present, only annotated spans
    /// become phrases. Phrases whose core noun is a stop word are dropped.
    pub fn parse(&self, prompt: &str, annotations: Option<&[Range<usize>]>) -> Result<PromptStructure, ParseError> {
        let (words, bracketed) = tokenize(prompt)?;
        if words.is_empty() {
            return Err(ParseError::EmptyPrompt);
        }
        let classes = self.resolve_classes(&words);

        let mut spans: Vec<Range<usize>> = bracketed;
        if let Some(extra) = annotations {
            spans.extend(extra.iter().cloned());
        }
        let candidates = if spans.is_empty() && annotations.is_none() {
            chunk(&classes)
        } else {
            validate_annotations(&mut spans, words.len())?;
            spans
                .into_iter()
                .map(|span| {
                    let core = span.end - 1;
                    let mut start = core;
                    while start > span.start && classes[start - 1] == WordClass::Noun && classes[core] == WordClass::Noun {
                        start -= 1;
                    }
                    (span, start..core + 1)
                })
                .collect()
        };

        let mut noun_phrases = Vec::new();
        for (span, core_tokens) in candidates {
            let core_noun = core_tokens.end - 1;
            if self.stop_words.contains(&words[core_noun]) {
                continue;
            }
            noun_phrases.push(NounPhrase {
                span,
                core_noun,
                core_tokens,
                object_id: noun_phrases.len(),
            });
        }
        Ok(PromptStructure {
            tokens: words
                .into_iter()
                .enumerate()
                .map(|(index, text)| Token { text, index })
                .collect(),
            noun_phrases,
            conflicts: Conflicts::default(),
        })
    }

    /// `parse` followed by `derive_conflicts`.
    pub fn analyze(&self, prompt: &str) -> Result<PromptStructure, ParseError> {
        Ok(self.parse(prompt, None)?.derive_conflicts())
    }

    fn resolve_classes(&self, words: &[String]) -> Vec<WordClass> {
        let mut classes: Vec<WordClass> = words.iter().map(|w| self.lexicon.class_of(w)).collect();
        // right to left: does a noun follow through a run of modifiers?
        let mut noun_ahead = false;
        for c in classes.iter_mut().rev() {
            if *c == WordClass::Unknown {
                *c = if noun_ahead { WordClass::Adjective } else { WordClass::Noun };
            }
            noun_ahead = match *c {
                WordClass::Noun => true,
                WordClass::Adjective => noun_ahead,
                _ => false,
            };
        }
        classes
    }
}

/// Lowercased words plus token spans of bracketed groups.
fn tokenize(prompt: &str) -> Result<(Vec<String>, Vec<Range<usize>>), ParseError> {
    let mut words = Vec::new();
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    let mut current = String::new();
    let flush = |current: &mut String, words: &mut Vec<String>| {
        let w = current.trim_matches(|c: char| c == '-' || c == '\'');
        if !w.is_empty() {
            words.push(w.to_lowercase());
        }
        current.clear();
    };
    for ch in prompt.chars() {
        match ch {
            '[' => {
                flush(&mut current, &mut words);
                if let Some(outer) = open {
                    return Err(ParseError::AnnotationOverlap(outer..words.len(), words.len()..words.len()));
                }
                open = Some(words.len());
            }
            ']' => {
                flush(&mut current, &mut words);
                let start = open.take().ok_or(ParseError::UnbalancedBracket)?;
                if words.len() > start {
                    spans.push(start..words.len());
                }
            }
            c if c.is_alphanumeric() || c == '-' || c == '\'' => current.push(c),
            _ => flush(&mut current, &mut words),
        }
    }
    flush(&mut current, &mut words);
    if open.is_some() {
        return Err(ParseError::UnbalancedBracket);
    }
    Ok((words, spans))
}

fn validate_annotations(spans: &mut [Range<usize>], len: usize) -> Result<(), ParseError> {
    for s in spans.iter() {
        if s.start >= s.end || s.end > len {
            return Err(ParseError::AnnotationOutOfBounds {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    spans.sort_by_key(|s| (s.start, s.end));
    for pair in spans.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(ParseError::AnnotationOverlap(pair[0].clone(), pair[1].clone()));
        }
    }
    Ok(())
}

/// Automatic chunking: `(phrase span, core-noun group)` pairs.
fn chunk(classes: &[WordClass]) -> Vec<(Range<usize>, Range<usize>)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < classes.len() {
        let start = i;
        let mut j = i;
        if classes[j] == WordClass::Determiner {
            j += 1;
        }
        while j < classes.len() && classes[j] == WordClass::Adjective {
            j += 1;
        }
        let nouns_start = j;
        while j < classes.len() && classes[j] == WordClass::Noun {
            j += 1;
        }
        if j > nouns_start {
            out.push((start..j, nouns_start..j));
            i = j;
        } else {
            i = (start + 1).max(nouns_start);
        }
    }
    out
}
