//! Subword vocabulary, default WordPiece tokenization and enumeration of
//! every segmentation a word admits under the vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const CONTINUATION_MARKER: &str = "##";
pub const DEFAULT_UNK: &str = "[UNK]";
/// Default number of segmentations kept per word.
pub const DEFAULT_SEGMENTATION_CAP: usize = 64;
/// Words longer than this (in chars) keep only their default tokenization.
pub const MAX_ENUMERATION_CHARS: usize = 40;

#[derive(Debug, Clone)]
pub struct SubwordVocab {
    /// Word-initial pieces.
    initial: HashSet<String>,
    /// Continuation pieces, stored without the marker.
    continuation: HashSet<String>,
    unk_token: String,
    len: usize,
}

impl SubwordVocab {
    pub fn new<I, S>(tokens: I, unk_token: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut initial = HashSet::new();
        let mut continuation = HashSet::new();
        for tok in tokens {
            let tok = tok.as_ref();
            if tok.is_empty() {
                continue;
            }
            match tok.strip_prefix(CONTINUATION_MARKER) {
                Some(rest) if !rest.is_empty() => continuation.insert(rest.to_string()),
                _ => initial.insert(tok.to_string()),
            };
        }
        if !initial.contains(unk_token) {
            return Err(Error::MissingUnkToken(unk_token.to_string()));
        }
        let len = initial.len() + continuation.len();
        Ok(Self {
            initial,
            continuation,
            unk_token: unk_token.to_string(),
            len,
        })
    }

    /// Parses a `vocab.txt` file: one token per line, `##` marks continuation
    /// pieces, `[UNK]` must be present.
    pub fn from_vocab_text(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::trim), DEFAULT_UNK)
    }

    pub fn unk_token(&self) -> &str {
        &self.unk_token
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, token: &str) -> bool {
        match token.strip_prefix(CONTINUATION_MARKER) {
            Some(rest) if !rest.is_empty() => self.continuation.contains(rest),
            _ => self.initial.contains(token),
        }
    }

    fn has_piece(&self, piece: &str, word_initial: bool) -> bool {
        if word_initial {
            self.initial.contains(piece)
        } else {
            self.continuation.contains(piece)
        }
    }
}

/// An ordered split of a word into vocabulary pieces. Continuation pieces
/// carry the `##` marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segmentation {
    pub pieces: Vec<String>,
}

impl Segmentation {
    pub fn new(pieces: Vec<String>) -> Self {
        Self { pieces }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Concatenation of the pieces with markers stripped.
    pub fn reconstruct(&self) -> String {
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i > 0 {
                    p.strip_prefix(CONTINUATION_MARKER).unwrap_or(p)
                } else {
                    p.as_str()
                }
            })
            .collect()
    }

    /// Checks marker placement and that the pieces spell `word`.
    pub fn is_valid_for(&self, word: &str) -> bool {
        !self.pieces.is_empty()
            && self.pieces.iter().enumerate().all(|(i, p)| {
                let marked = p.starts_with(CONTINUATION_MARKER) && p.len() > CONTINUATION_MARKER.len();
                (i == 0) != marked
            })
            && self.reconstruct() == word
    }

    pub fn is_unk(&self, vocab: &SubwordVocab) -> bool {
        self.pieces.len() == 1 && self.pieces[0] == vocab.unk_token
    }

    fn ordering_key(&self) -> (usize, &[String]) {
        (self.pieces.len(), &self.pieces)
    }
}

impl fmt::Display for Segmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pieces.join(" "))
    }
}

fn char_boundaries(word: &str) -> Vec<usize> {
    word.char_indices().map(|(i, _)| i).chain(std::iter::once(word.len())).collect()
}

fn piece_name(piece: &str, start: usize) -> String {
    if start == 0 {
        piece.to_string()
    } else {
        format!("{CONTINUATION_MARKER}{piece}")
    }
}

/// Greedy longest-match-first WordPiece. Falls back to `[unk]` when some
/// suffix cannot be matched.
pub fn tokenize_default(word: &str, vocab: &SubwordVocab) -> Segmentation {
    let bounds = char_boundaries(word);
    let n = bounds.len() - 1;
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < n {
        let found = (start + 1..=n)
            .rev()
            .find(|&end| vocab.has_piece(&word[bounds[start]..bounds[end]], start == 0));
        match found {
            Some(end) => {
                pieces.push(piece_name(&word[bounds[start]..bounds[end]], start));
                start = end;
            }
            None => return Segmentation::new(vec![vocab.unk_token.clone()]),
        }
    }
    if pieces.is_empty() {
        return Segmentation::new(vec![vocab.unk_token.clone()]);
    }
    Segmentation::new(pieces)
}

/// The segmentation lattice of a word: node `i` is a char position, an edge
/// `i -> j` exists when `word[i..j]` is a vocabulary piece.
struct Lattice<'w> {
    word: &'w str,
    bounds: Vec<usize>,
    /// Outgoing edges sorted by piece name.
    edges: Vec<Vec<(usize, String)>>,
    /// Bit `k` of `reach[i]` is set when the end is reachable from `i` in
    /// exactly `k` pieces.
    reach: Vec<u64>,
}

impl<'w> Lattice<'w> {
    fn build(word: &'w str, vocab: &SubwordVocab) -> Self {
        let bounds = char_boundaries(word);
        let n = bounds.len() - 1;
        debug_assert!(n < 64);
        let mut edges = vec![Vec::new(); n];
        for (i, out) in edges.iter_mut().enumerate() {
            for j in i + 1..=n {
                let piece = &word[bounds[i]..bounds[j]];
                if vocab.has_piece(piece, i == 0) {
                    out.push((j, piece_name(piece, i)));
                }
            }
            out.sort_by(|a, b| a.1.cmp(&b.1));
        }
        let mut reach = vec![0u64; n + 1];
        reach[n] = 1;
        for i in (0..n).rev() {
            reach[i] = edges[i].iter().fold(0, |acc, (j, _)| acc | (reach[*j] << 1));
        }
        Self {
            word,
            bounds,
            edges,
            reach,
        }
    }

    fn collect(&self, node: usize, remaining: u32, path: &mut Vec<String>, out: &mut Vec<Segmentation>, cap: usize) {
        if out.len() >= cap {
            return;
        }
        if remaining == 0 {
            if node == self.bounds.len() - 1 {
                out.push(Segmentation::new(path.clone()));
            }
            return;
        }
        for (j, piece) in &self.edges[node] {
            if self.reach[*j] >> (remaining - 1) & 1 == 1 {
                path.push(piece.clone());
                self.collect(*j, remaining - 1, path, out, cap);
                path.pop();
            }
        }
    }
}

/// All distinct segmentations ordered by piece count then lexicographically,
/// truncated to `cap`. The default tokenization is kept under truncation
/// whenever it is valid. A word with no segmentation yields `[[unk]]`.
pub fn enumerate_segmentations(word: &str, vocab: &SubwordVocab, cap: usize) -> Vec<Segmentation> {
    let cap = cap.max(1);
    let default = tokenize_default(word, vocab);
    if word.is_empty() {
        return vec![Segmentation::new(vec![vocab.unk_token.clone()])];
    }
    if word.chars().count() > MAX_ENUMERATION_CHARS {
        return vec![default];
    }
    let lattice = Lattice::build(word, vocab);
    if lattice.reach[0] == 0 {
        return vec![Segmentation::new(vec![vocab.unk_token.clone()])];
    }
    let mut out = Vec::new();
    let mut path = Vec::new();
    for k in 1..64u32 {
        if out.len() >= cap {
            break;
        }
        if lattice.reach[0] >> k & 1 == 1 {
            lattice.collect(0, k, &mut path, &mut out, cap);
        }
    }
    if !default.is_unk(vocab) && !out.contains(&default) {
        out.pop();
        out.push(default);
        out.sort_by(|a, b| a.ordering_key().cmp(&b.ordering_key()));
    }
    debug_assert!(out.iter().all(|s| s.is_valid_for(lattice.word)));
    out
}

/// Number of segmentations, without enumerating them.
pub fn count_segmentations(word: &str, vocab: &SubwordVocab) -> u128 {
    let bounds = char_boundaries(word);
    let n = bounds.len() - 1;
    let mut ways = vec![0u128; n + 1];
    ways[n] = 1;
    for i in (0..n).rev() {
        ways[i] = (i + 1..=n)
            .filter(|&j| vocab.has_piece(&word[bounds[i]..bounds[j]], i == 0))
            .map(|j| ways[j])
            .sum();
    }
    if n == 0 {
        0
    } else {
        ways[0]
    }
}

/// `sub(w)`: every piece appearing in some enumerated segmentation.
pub fn subword_set(word: &str, vocab: &SubwordVocab, cap: usize) -> BTreeSet<String> {
    enumerate_segmentations(word, vocab, cap)
        .into_iter()
        .flat_map(|s| s.pieces)
        .collect()
}

/// Enumerated segmentations for a set of words, computed once and shared by
/// instance construction and policy derivation.
#[derive(Debug, Clone, Default)]
pub struct SegmentationTable {
    cap: usize,
    words: BTreeMap<String, WordSegmentations>,
}

#[derive(Debug, Clone)]
pub struct WordSegmentations {
    pub default: Segmentation,
    pub segmentations: Vec<Segmentation>,
    pub subwords: BTreeSet<String>,
}

impl SegmentationTable {
    pub fn build<'a, I>(words: I, vocab: &SubwordVocab, cap: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let list: Vec<&str> = words.into_iter().collect();
        let words = list
            .par_iter()
            .map(|w| {
                let segmentations = enumerate_segmentations(w, vocab, cap);
                let subwords = segmentations.iter().flat_map(|s| s.pieces.iter().cloned()).collect();
                (
                    w.to_string(),
                    WordSegmentations {
                        default: tokenize_default(w, vocab),
                        segmentations,
                        subwords,
                    },
                )
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        Self { cap, words }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn get(&self, word: &str) -> Option<&WordSegmentations> {
        self.words.get(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}
