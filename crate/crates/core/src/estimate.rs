//! Target-domain subword/category statistics and construction of the
//! transport instance: rows are source (word, category) pairs, columns are
//! the subwords those words can be split into.
//!
//! Row mass is `φ(w,y) * |sub(w)|`, column mass is `Σ_w φ(w) * [t ∈ sub(w)]`;
//! both are normalized to total 1. A cell is finite only when `t ∈ sub(w)`.
//! Conditional costs are `-ln(P_T(t,y) / P_T(t))`, joint costs
//! `-ln P_T(t,y)`; subwords the target never produced cost `UNSEEN_COST`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{FrequencyTable, LabelSpace, LabeledCorpus};
use crate::error::{Error, Result};
use crate::segment::{tokenize_default, SegmentationTable, SubwordVocab};
use crate::sinkhorn::TransportProblem;
use crate::sparse::CsrMatrix;

/// Cost assigned to legal cells whose target probability is zero (≈ -ln 1e-13).
pub const UNSEEN_COST: f64 = 30.0;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    /// Align `P(y|t)`.
    Conditional,
    /// Align `P(t,y)`.
    Joint,
}

impl std::str::FromStr for ObjectiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional" | "cond" => Ok(Self::Conditional),
            "joint" => Ok(Self::Joint),
            other => Err(Error::Config(format!("unknown objective mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ObjectiveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Conditional => "conditional",
            Self::Joint => "joint",
        })
    }
}

/// How `|sub(w)|` in the row mass is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubwordCardinality {
    /// Size of the set of possible subwords.
    #[default]
    PossibleSubwords,
    /// Number of pieces in the default tokenization.
    DefaultLength,
}

/// Subword/category counts over a corpus tokenized with the default
/// tokenizer; each piece inherits its word's collapsed category.
pub fn count_subword_labels(corpus: &LabeledCorpus, vocab: &SubwordVocab) -> BTreeMap<(String, String), f64> {
    let mut cache: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for tok in corpus.tokens() {
        let pieces = cache
            .entry(tok.surface.as_str())
            .or_insert_with(|| tokenize_default(&tok.surface, vocab).pieces);
        for p in pieces.iter() {
            *counts.entry((p.clone(), tok.label.category().to_string())).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// `P_T(t,y)` and `P_T(t)` estimated from the annotated target corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub categories: Vec<String>,
    /// Raw (unsmoothed) counts.
    pub counts: BTreeMap<(String, String), f64>,
    pub joint: BTreeMap<(String, String), f64>,
    pub marginal: BTreeMap<String, f64>,
    pub smoothing_alpha: f64,
}

impl TargetStats {
    pub fn joint(&self, subword: &str, category: &str) -> f64 {
        self.joint
            .get(&(subword.to_string(), category.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn marginal(&self, subword: &str) -> f64 {
        self.marginal.get(subword).copied().unwrap_or(0.0)
    }

    /// `P_T(y|t)`, or `None` when `t` was never observed.
    pub fn conditional(&self, subword: &str, category: &str) -> Option<f64> {
        let m = self.marginal(subword);
        (m > 0.0).then(|| self.joint(subword, category) / m)
    }

    pub fn subwords(&self) -> impl Iterator<Item = &str> {
        self.marginal.keys().map(String::as_str)
    }
}

/// Add-`alpha` smoothing over (observed subwords) x (categories).
pub fn estimate_target(
    corpus: &LabeledCorpus,
    vocab: &SubwordVocab,
    space: &LabelSpace,
    alpha: f64,
) -> Result<TargetStats> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing alpha must be >= 0, got {alpha}")));
    }
    if corpus.token_count() == 0 {
        return Err(Error::EmptyCorpus);
    }
    let categories = space.categories();
    let counts = count_subword_labels(corpus, vocab);
    for (_, y) in counts.keys() {
        if !categories.contains(y) {
            return Err(Error::InvalidArgument(format!("category `{y}` is outside the label space")));
        }
    }
    let subwords: BTreeSet<&str> = counts.keys().map(|(t, _)| t.as_str()).collect();
    let total: f64 = counts.values().sum();
    let denom = total + alpha * (subwords.len() * categories.len()) as f64;

    let mut joint = BTreeMap::new();
    let mut marginal = BTreeMap::new();
    for t in &subwords {
        let mut m = 0.0;
        for y in &categories {
            let key = (t.to_string(), y.clone());
            let p = (counts.get(&key).copied().unwrap_or(0.0) + alpha) / denom;
            if p > 0.0 {
                joint.insert(key, p);
                m += p;
            }
        }
        marginal.insert(t.to_string(), m);
    }
    Ok(TargetStats {
        categories,
        counts,
        joint,
        marginal,
        smoothing_alpha: alpha,
    })
}

/// Masked-cost transport instance over labelled indices.
#[derive(Debug, Clone)]
pub struct TransportInstance {
    /// (word, category), lexicographic.
    pub rows: Vec<(String, String)>,
    /// Subwords, lexicographic.
    pub cols: Vec<String>,
    pub raw_row_mass: Vec<f64>,
    pub raw_col_mass: Vec<f64>,
    pub problem: TransportProblem,
    pub gamma: f64,
    pub mode: ObjectiveMode,
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceOptions {
    pub gamma: f64,
    pub mode: ObjectiveMode,
    pub cardinality: SubwordCardinality,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            mode: ObjectiveMode::Conditional,
            cardinality: SubwordCardinality::default(),
        }
    }
}

/// Cell cost for subword `t` and category `y`.
pub fn cell_cost(target: &TargetStats, subword: &str, category: &str, mode: ObjectiveMode) -> f64 {
    let p = match mode {
        ObjectiveMode::Conditional => target.conditional(subword, category).unwrap_or(0.0),
        ObjectiveMode::Joint => target.joint(subword, category),
    };
    if p > 0.0 {
        (-p.ln()).clamp(0.0, UNSEEN_COST)
    } else {
        UNSEEN_COST
    }
}

pub fn build_instance(
    freq: &FrequencyTable,
    segmentations: &SegmentationTable,
    target: &TargetStats,
    opts: &InstanceOptions,
) -> Result<TransportInstance> {
    if !(opts.gamma > 0.0 && opts.gamma.is_finite()) {
        return Err(Error::NonPositiveGamma(opts.gamma));
    }
    if freq.is_empty() {
        return Err(Error::InstanceEmpty);
    }
    let lookup = |w: &str| segmentations.get(w).ok_or_else(|| Error::MissingSegmentations(w.to_string()));

    let mut col_raw: BTreeMap<&str, f64> = BTreeMap::new();
    for (w, &n) in &freq.word_count {
        for t in &lookup(w)?.subwords {
            *col_raw.entry(t.as_str()).or_insert(0.0) += n as f64;
        }
    }
    let cols: Vec<String> = col_raw.keys().map(|s| s.to_string()).collect();
    let col_pos: BTreeMap<&str, usize> = cols.iter().enumerate().map(|(j, t)| (t.as_str(), j)).collect();
    let raw_col_mass: Vec<f64> = col_raw.values().copied().collect();

    let mut rows = Vec::with_capacity(freq.word_label_count.len());
    let mut raw_row_mass = Vec::with_capacity(rows.capacity());
    let mut cells = Vec::with_capacity(rows.capacity());
    for ((w, y), &n) in &freq.word_label_count {
        let segs = lookup(w)?;
        let size = match opts.cardinality {
            SubwordCardinality::PossibleSubwords => segs.subwords.len(),
            SubwordCardinality::DefaultLength => segs.default.len(),
        };
        let row: Vec<(usize, f64)> = segs
            .subwords
            .iter()
            .map(|t| (col_pos[t.as_str()], cell_cost(target, t, y, opts.mode)))
            .collect();
        if row.is_empty() || size == 0 {
            return Err(Error::InfeasibleRow {
                word: w.clone(),
                category: y.clone(),
            });
        }
        rows.push((w.clone(), y.clone()));
        raw_row_mass.push(n as f64 * size as f64);
        cells.push(row);
    }

    let row_total: f64 = raw_row_mass.iter().sum();
    let col_total: f64 = raw_col_mass.iter().sum();
    let row_mass = raw_row_mass.iter().map(|m| m / row_total).collect();
    let col_mass = raw_col_mass.iter().map(|m| m / col_total).collect();
    let cost = CsrMatrix::from_rows(cols.len(), cells)?;
    let problem = TransportProblem::new(row_mass, col_mass, cost).map_err(|e| match e {
        Error::InfeasibleColumn(c) => {
            let j: usize = c.trim_start_matches('#').parse().unwrap_or(0);
            Error::InfeasibleColumn(cols.get(j).cloned().unwrap_or(c))
        }
        other => other,
    })?;

    Ok(TransportInstance {
        rows,
        cols,
        raw_row_mass,
        raw_col_mass,
        problem,
        gamma: opts.gamma,
        mode: opts.mode,
    })
}

impl TransportInstance {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn finite_cells(&self) -> usize {
        self.problem.cost.nnz()
    }

    pub fn row_index(&self, word: &str, category: &str) -> Option<usize> {
        self.rows
            .binary_search_by(|(w, y)| (w.as_str(), y.as_str()).cmp(&(word, category)))
            .ok()
    }

    pub fn col_index(&self, subword: &str) -> Option<usize> {
        self.cols.binary_search_by(|t| t.as_str().cmp(subword)).ok()
    }

    /// Cost of a cell; `+inf` when masked.
    pub fn cost(&self, row: usize, col: usize) -> f64 {
        self.problem.cost.get(row, col).unwrap_or(f64::INFINITY)
    }

    /// Text dump: header, row table, column table, then finite cells.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# subalign transport instance v1");
        let _ = writeln!(out, "mode\t{}", self.mode);
        let _ = writeln!(out, "gamma\t{}", self.gamma);
        let _ = writeln!(out, "rows\t{}", self.nrows());
        for (i, (w, y)) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{w}\t{y}\t{}", self.problem.row_mass[i]);
        }
        let _ = writeln!(out, "cols\t{}", self.ncols());
        for (j, t) in self.cols.iter().enumerate() {
            let _ = writeln!(out, "{j}\t{t}\t{}", self.problem.col_mass[j]);
        }
        let _ = writeln!(out, "cells\t{}", self.finite_cells());
        for i in 0..self.nrows() {
            for (j, c) in self.problem.cost.row(i) {
                let _ = writeln!(out, "{i}\t{j}\t{c}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{count_frequencies, BioLabel, Token};
    use crate::segment::subword_set;

    fn space() -> LabelSpace {
        LabelSpace::new(["LOC"]).unwrap()
    }

    fn corpus(tokens: &[(&str, BioLabel)]) -> LabeledCorpus {
        LabeledCorpus::new(vec![tokens.iter().map(|(w, l)| Token::new(*w, l.clone())).collect()])
    }

    fn abc_vocab() -> SubwordVocab {
        SubwordVocab::new(["[UNK]", "a", "ab", "abc", "##b", "##c", "##bc"], "[UNK]").unwrap()
    }

    #[test]
    fn unsmoothed_single_word() {
        let v = SubwordVocab::new(["[UNK]", "ab"], "[UNK]").unwrap();
        let s = estimate_target(&corpus(&[("ab", BioLabel::begin("LOC"))]), &v, &space(), 0.0).unwrap();
        assert_eq!(s.joint("ab", "LOC"), 1.0);
        assert_eq!(s.joint("ab", "O"), 0.0);
        assert_eq!(s.marginal("ab"), 1.0);
    }

    #[test]
    fn add_one_smoothing() {
        let v = SubwordVocab::new(["[UNK]", "ab"], "[UNK]").unwrap();
        let s = estimate_target(&corpus(&[("ab", BioLabel::begin("LOC"))]), &v, &space(), 1.0).unwrap();
        assert!((s.joint("ab", "LOC") - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.joint("ab", "O") - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.marginal("ab") - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_target_fails() {
        let err = estimate_target(&LabeledCorpus::default(), &abc_vocab(), &space(), 0.5).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus));
    }

    #[test]
    fn row_mass_follows_subword_count() {
        let src = corpus(&[
            ("abc", BioLabel::begin("LOC")),
            ("abc", BioLabel::begin("LOC")),
            ("abc", BioLabel::begin("LOC")),
        ]);
        let v = abc_vocab();
        let freq = count_frequencies(&src);
        let table = SegmentationTable::build(freq.word_count.keys().map(String::as_str), &v, 64);
        let target = estimate_target(&src, &v, &space(), 0.5).unwrap();
        let inst = build_instance(&freq, &table, &target, &InstanceOptions::default()).unwrap();
        assert_eq!(inst.raw_row_mass, vec![18.0]);
        assert_eq!(inst.raw_col_mass, vec![3.0; 6]);
        assert_eq!(inst.nrows(), 1);
        assert_eq!(inst.ncols(), 6);
        assert!((inst.problem.row_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((inst.problem.col_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let opts = InstanceOptions {
            cardinality: SubwordCardinality::DefaultLength,
            ..Default::default()
        };
        let inst = build_instance(&freq, &table, &target, &opts).unwrap();
        assert_eq!(inst.raw_row_mass, vec![3.0]);
    }

    fn stats_from(pairs: &[((&str, &str), f64)]) -> TargetStats {
        let joint: BTreeMap<(String, String), f64> =
            pairs.iter().map(|((t, y), p)| ((t.to_string(), y.to_string()), *p)).collect();
        let mut marginal = BTreeMap::new();
        for ((t, _), p) in &joint {
            *marginal.entry(t.clone()).or_insert(0.0) += p;
        }
        TargetStats {
            categories: vec!["LOC".into(), "O".into()],
            counts: BTreeMap::new(),
            joint,
            marginal,
            smoothing_alpha: 0.0,
        }
    }

    #[test]
    fn conditional_and_joint_costs() {
        let s = stats_from(&[(("t", "LOC"), 0.2), (("t", "O"), 0.3), (("u", "O"), 0.5)]);
        let c = cell_cost(&s, "t", "LOC", ObjectiveMode::Conditional);
        assert!((c - 0.916290731874155).abs() < 1e-12);
        assert!((cell_cost(&s, "t", "LOC", ObjectiveMode::Joint) - (-(0.2f64).ln())).abs() < 1e-15);
        // deterministic subword/label pair costs nothing
        assert_eq!(cell_cost(&s, "u", "O", ObjectiveMode::Conditional), 0.0);
        // zero or unobserved mass is capped
        assert_eq!(cell_cost(&s, "u", "LOC", ObjectiveMode::Conditional), UNSEEN_COST);
        assert_eq!(cell_cost(&s, "zzz", "LOC", ObjectiveMode::Joint), UNSEEN_COST);
    }

    #[test]
    fn mask_matches_subword_membership() {
        let v = abc_vocab();
        let src = corpus(&[("abc", BioLabel::begin("LOC")), ("ab", BioLabel::outside()), ("a", BioLabel::outside())]);
        let freq = count_frequencies(&src);
        let table = SegmentationTable::build(freq.word_count.keys().map(String::as_str), &v, 64);
        let target = estimate_target(&src, &v, &space(), 0.5).unwrap();
        let inst = build_instance(&freq, &table, &target, &InstanceOptions::default()).unwrap();
        for (i, (w, _)) in inst.rows.iter().enumerate() {
            let sub = subword_set(w, &v, 64);
            for (j, t) in inst.cols.iter().enumerate() {
                assert_eq!(inst.cost(i, j).is_finite(), sub.contains(t), "{w} {t}");
            }
        }
        // column `a` collects mass from all three words
        let a = inst.col_index("a").unwrap();
        assert_eq!(inst.raw_col_mass[a], 3.0);
        assert!(inst.dump().starts_with("# subalign transport instance v1\nmode\tconditional\n"));
    }

    #[test]
    fn rejects_bad_gamma() {
        let v = abc_vocab();
        let src = corpus(&[("abc", BioLabel::begin("LOC"))]);
        let freq = count_frequencies(&src);
        let table = SegmentationTable::build(["abc"], &v, 64);
        let target = estimate_target(&src, &v, &space(), 0.5).unwrap();
        let opts = InstanceOptions {
            gamma: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            build_instance(&freq, &table, &target, &opts).unwrap_err(),
            Error::NonPositiveGamma(_)
        ));
    }
}
