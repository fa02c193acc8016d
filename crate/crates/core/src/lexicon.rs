//! Gazetteer-based distant annotation of unlabeled text.

use std::collections::BTreeMap;

use crate::corpus::{BioLabel, LabelSpace, LabeledCorpus, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityLexicon {
    entries: BTreeMap<Vec<String>, String>,
    /// Lowercased keys; on a folded collision the lexicographically first
    /// original entry wins.
    folded: BTreeMap<Vec<String>, String>,
    max_entry_len: usize,
}

impl EntityLexicon {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_entry_len(&self) -> usize {
        self.max_entry_len
    }

    pub fn get(&self, surface: &[String]) -> Option<&str> {
        self.entries.get(surface).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[String], &str)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v.as_str()))
    }

    fn insert(&mut self, key: Vec<String>, entity_type: String) -> Result<()> {
        if let Some(prev) = self.entries.get(&key) {
            if *prev != entity_type {
                return Err(Error::DuplicateConflictingEntry {
                    surface: key.join(" "),
                    first: prev.clone(),
                    second: entity_type,
                });
            }
            return Ok(());
        }
        self.max_entry_len = self.max_entry_len.max(key.len());
        self.entries.insert(key, entity_type);
        Ok(())
    }

    fn rebuild_folded(&mut self) {
        self.folded.clear();
        for (k, v) in &self.entries {
            let folded: Vec<String> = k.iter().map(|s| s.to_lowercase()).collect();
            self.folded.entry(folded).or_insert_with(|| v.clone());
        }
    }
}

/// Loads `surface form<TAB>TYPE` lines. Exact duplicates collapse; the same
/// surface with two different types is an error.
pub fn load_lexicon(text: &str, space: &LabelSpace) -> Result<EntityLexicon> {
    let mut lex = EntityLexicon::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let (surface, ty) = raw.split_once('\t').ok_or_else(|| Error::MalformedLine {
            line,
            reason: "expected `surface<TAB>TYPE`".into(),
        })?;
        let ty = ty.trim();
        let key: Vec<String> = surface.split_whitespace().map(str::to_string).collect();
        if key.is_empty() {
            return Err(Error::MalformedLine {
                line,
                reason: "empty surface form".into(),
            });
        }
        if !space.contains(ty) {
            return Err(Error::UnknownType {
                line,
                entity_type: ty.to_string(),
            });
        }
        lex.insert(key, ty.to_string())?;
    }
    lex.rebuild_folded();
    Ok(lex)
}

/// Greedy left-to-right longest-match tagging.
pub fn annotate(tokens: &[String], lexicon: &EntityLexicon, case_insensitive: bool) -> Vec<BioLabel> {
    let folded_tokens: Vec<String>;
    let (probe, table) = if case_insensitive {
        folded_tokens = tokens.iter().map(|t| t.to_lowercase()).collect();
        (folded_tokens.as_slice(), &lexicon.folded)
    } else {
        (tokens, &lexicon.entries)
    };

    let mut labels = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < probe.len() {
        let longest = probe.len() - i;
        let hit = (1..=lexicon.max_entry_len.min(longest))
            .rev()
            .find_map(|len| table.get(&probe[i..i + len]).map(|ty| (len, ty)));
        match hit {
            Some((len, ty)) => {
                labels.push(BioLabel::begin(ty.clone()));
                labels.extend((1..len).map(|_| BioLabel::inside(ty.clone())));
                i += len;
            }
            None => {
                labels.push(BioLabel::outside());
                i += 1;
            }
        }
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnnotationSummary {
    pub sentences: usize,
    pub tokens: usize,
    pub entity_spans: usize,
    pub entity_tokens: usize,
}

impl AnnotationSummary {
    /// Fraction of tokens inside some matched span.
    pub fn coverage(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.entity_tokens as f64 / self.tokens as f64
        }
    }
}

/// Annotates every sentence of an unlabeled corpus.
pub fn annotate_corpus(
    sentences: &[Vec<String>],
    lexicon: &EntityLexicon,
    case_insensitive: bool,
) -> (LabeledCorpus, AnnotationSummary) {
    use rayon::prelude::*;
    let labelled: Vec<Vec<Token>> = sentences
        .par_iter()
        .map(|s| {
            annotate(s, lexicon, case_insensitive)
                .into_iter()
                .zip(s)
                .map(|(label, surface)| Token::new(surface.clone(), label))
                .collect()
        })
        .collect();
    let mut summary = AnnotationSummary {
        sentences: labelled.len(),
        ..Default::default()
    };
    for tok in labelled.iter().flatten() {
        summary.tokens += 1;
        match tok.label.kind {
            crate::corpus::BioKind::B => {
                summary.entity_spans += 1;
                summary.entity_tokens += 1;
            }
            crate::corpus::BioKind::I => summary.entity_tokens += 1,
            crate::corpus::BioKind::O => {}
        }
    }
    (LabeledCorpus::new(labelled), summary)
}
