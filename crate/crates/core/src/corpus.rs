//! Column-format NER corpora: parsing, validation, serialization and
//! word/label frequency counting.
//!
//! One token per line as `surface<SEP>label` where the separator is a space
//! or a tab; a blank line ends a sentence. Labels use the BIO scheme over a
//! declared set of entity types. For every distribution computed downstream
//! the BIO prefix is dropped and `O` counts as a category of its own.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Category name used for non-entity tokens.
pub const OUTSIDE: &str = "O";

/// The declared entity types. `O` is implicit and never stored here.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSpace {
    types: BTreeSet<String>,
}

impl LabelSpace {
    pub fn new<I, S>(types: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for t in types {
            let t = t.into();
            if t.is_empty() || t == OUTSIDE || t.chars().any(char::is_whitespace) || t.contains('-')
            {
                return Err(Error::Config(format!("invalid entity type `{t}`")));
            }
            set.insert(t);
        }
        Ok(Self { types: set })
    }

    pub fn contains(&self, entity_type: &str) -> bool {
        self.types.contains(entity_type)
    }

    pub fn entity_types(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(String::as_str)
    }

    /// All categories in lexicographic order, `O` included.
    pub fn categories(&self) -> Vec<String> {
        let mut all: BTreeSet<String> = self.types.clone();
        all.insert(OUTSIDE.to_string());
        all.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BioKind {
    O,
    B,
    I,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BioLabel {
    pub kind: BioKind,
    /// Absent exactly when `kind` is `O`.
    pub entity_type: Option<String>,
}

impl BioLabel {
    pub fn outside() -> Self {
        Self {
            kind: BioKind::O,
            entity_type: None,
        }
    }

    pub fn begin(entity_type: impl Into<String>) -> Self {
        Self {
            kind: BioKind::B,
            entity_type: Some(entity_type.into()),
        }
    }

    pub fn inside(entity_type: impl Into<String>) -> Self {
        Self {
            kind: BioKind::I,
            entity_type: Some(entity_type.into()),
        }
    }

    /// Collapsed category: the entity type, or `O`.
    pub fn category(&self) -> &str {
        self.entity_type.as_deref().unwrap_or(OUTSIDE)
    }

    fn parse(raw: &str, space: &LabelSpace, line: usize) -> Result<Self> {
        if raw == OUTSIDE {
            return Ok(Self::outside());
        }
        let unknown = || Error::UnknownLabel {
            line,
            label: raw.to_string(),
        };
        let (prefix, ty) = raw.split_once('-').ok_or_else(unknown)?;
        if !space.contains(ty) {
            return Err(unknown());
        }
        match prefix {
            "B" => Ok(Self::begin(ty)),
            "I" => Ok(Self::inside(ty)),
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for BioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, &self.entity_type) {
            (BioKind::B, Some(t)) => write!(f, "B-{t}"),
            (BioKind::I, Some(t)) => write!(f, "I-{t}"),
            _ => f.write_str(OUTSIDE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub label: BioLabel,
}

impl Token {
    pub fn new(surface: impl Into<String>, label: BioLabel) -> Self {
        Self {
            surface: surface.into(),
            label,
        }
    }
}

pub type Sentence = Vec<Token>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledCorpus {
    pub sentences: Vec<Sentence>,
}

impl LabeledCorpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        Self { sentences }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flatten()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Rewrite an `I-X` that does not continue an `X` span into `B-X`.
    pub repair_bio: bool,
}

/// Parses a column-format corpus.
pub fn parse_conll(text: &str, space: &LabelSpace, opts: ParseOptions) -> Result<LabeledCorpus> {
    let mut sentences = Vec::new();
    let mut current: Sentence = Vec::new();

    for (idx, raw_line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let mut fields = line.split([' ', '\t']).filter(|f| !f.is_empty());
        let (surface, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(s), Some(l), None) => (s, l),
            _ => {
                return Err(Error::MalformedLine {
                    line: line_no,
                    reason: "expected `surface label`".into(),
                })
            }
        };
        let mut label = BioLabel::parse(label, space, line_no)?;
        if label.kind == BioKind::I {
            let continues = current
                .last()
                .is_some_and(|prev| prev.label.kind != BioKind::O && prev.label.entity_type == label.entity_type);
            if !continues {
                if opts.repair_bio {
                    label.kind = BioKind::B;
                } else {
                    return Err(Error::IllegalBioTransition {
                        line: line_no,
                        label: label.to_string(),
                    });
                }
            }
        }
        current.push(Token {
            surface: surface.nfc().collect(),
            label,
        });
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(LabeledCorpus { sentences })
}

/// Serializes with a single space separator; sentences are separated by one
/// blank line and the output ends with a newline (empty corpus gives "").
pub fn serialize_conll(corpus: &LabeledCorpus) -> String {
    let mut out = String::new();
    for (i, sentence) in corpus.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for tok in sentence {
            out.push_str(&tok.surface);
            out.push(' ');
            out.push_str(&tok.label.to_string());
            out.push('\n');
        }
    }
    out
}

/// Reads unlabeled text: one sentence per line, whitespace-separated tokens.
pub fn parse_plain_text(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(|w| w.nfc().collect::<String>()).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

/// φ(w,y) and φ(w) over a corpus, BIO collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrequencyTable {
    pub word_label_count: BTreeMap<(String, String), u64>,
    pub word_count: BTreeMap<String, u64>,
}

impl FrequencyTable {
    pub fn total(&self) -> u64 {
        self.word_count.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.word_count.is_empty()
    }
}

pub fn count_frequencies(corpus: &LabeledCorpus) -> FrequencyTable {
    let mut table = FrequencyTable::default();
    for tok in corpus.tokens() {
        *table
            .word_label_count
            .entry((tok.surface.clone(), tok.label.category().to_string()))
            .or_insert(0) += 1;
        *table.word_count.entry(tok.surface.clone()).or_insert(0) += 1;
    }
    table
}
