//! Recovering per-(word, category) segmentation distributions from a
//! transport plan, and re-tokenizing a corpus by sampling from them.
//!
//! `P(t|w,y)` is the plan row divided by the row mass. A segmentation scores
//! the smallest `P(t|w,y)` among its pieces; scores are then normalized. Each
//! token draws from its own counter-keyed ChaCha8 stream (seed, sentence
//! index, token index), so output is reproducible regardless of how
//! sentences are scheduled across threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{BioKind, BioLabel, LabeledCorpus, Token};
use crate::error::{Error, Result};
use crate::estimate::TransportInstance;
use crate::segment::{tokenize_default, Segmentation, SegmentationTable, SubwordVocab};
use crate::sinkhorn::TransportPlan;

/// `P(t|w,y)` for every row of the instance.
#[derive(Debug, Clone, Default)]
pub struct SubwordConditional {
    pub rows: BTreeMap<(String, String), BTreeMap<String, f64>>,
}

impl SubwordConditional {
    pub fn from_plan(plan: &TransportPlan, instance: &TransportInstance) -> Result<Self> {
        if !plan.plan.same_structure(&instance.problem.cost) {
            return Err(Error::ShapeMismatch("plan does not match instance".into()));
        }
        let mut rows = BTreeMap::new();
        for (i, key) in instance.rows.iter().enumerate() {
            let mass = instance.problem.row_mass[i];
            let dist = plan
                .plan
                .row(i)
                .map(|(j, p)| (instance.cols[j].clone(), p / mass))
                .collect();
            rows.insert(key.clone(), dist);
        }
        Ok(Self { rows })
    }

    pub fn get(&self, word: &str, category: &str) -> Option<&BTreeMap<String, f64>> {
        self.rows.get(&(word.to_string(), category.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub segs: Vec<(Segmentation, f64)>,
    /// Set when every segmentation scored zero and the default
    /// tokenization was substituted.
    pub fallback: bool,
}

impl PolicyEntry {
    pub fn probability_of(&self, seg: &Segmentation) -> f64 {
        self.segs.iter().find(|(s, _)| s == seg).map_or(0.0, |(_, p)| *p)
    }

    /// Index of the segmentation selected by a uniform draw `u ∈ [0, 1)`.
    pub fn pick(&self, u: f64) -> &Segmentation {
        let mut acc = 0.0;
        for (seg, p) in &self.segs {
            acc += p;
            if u < acc {
                return seg;
            }
        }
        // rounding left `acc` slightly below 1; take the last positive entry
        &self
            .segs
            .iter()
            .rev()
            .find(|(_, p)| *p > 0.0)
            .unwrap_or(&self.segs[self.segs.len() - 1])
            .0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetokenizationPolicy {
    pub entries: BTreeMap<(String, String), PolicyEntry>,
}

impl RetokenizationPolicy {
    pub fn get(&self, word: &str, category: &str) -> Option<&PolicyEntry> {
        self.entries.get(&(word.to_string(), category.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fallback_count(&self) -> usize {
        self.entries.values().filter(|e| e.fallback).count()
    }

    /// One JSON object per line, in (word, category) order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ((word, label), entry) in &self.entries {
            let rec = PolicyRecord {
                word: word.clone(),
                label: label.clone(),
                segs: entry
                    .segs
                    .iter()
                    .map(|(s, p)| SegRecord {
                        pieces: s.pieces.clone(),
                        p: *p,
                    })
                    .collect(),
                fallback: entry.fallback,
            };
            out.push_str(&serde_json::to_string(&rec).expect("policy record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::InvalidPolicy { line: line_no, reason };
            let rec: PolicyRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            if rec.segs.is_empty() {
                return Err(bad("no segmentations".into()));
            }
            let mut total = 0.0;
            let mut segs = Vec::with_capacity(rec.segs.len());
            for s in rec.segs {
                if !(s.p >= 0.0 && s.p.is_finite()) {
                    return Err(bad(format!("probability {} out of range", s.p)));
                }
                total += s.p;
                segs.push((Segmentation::new(s.pieces), s.p));
            }
            if (total - 1.0).abs() > 1e-9 {
                return Err(bad(format!("probabilities sum to {total}")));
            }
            let key = (rec.word, rec.label);
            if entries
                .insert(
                    key.clone(),
                    PolicyEntry {
                        segs,
                        fallback: rec.fallback,
                    },
                )
                .is_some()
            {
                return Err(bad(format!("duplicate entry for {}/{}", key.0, key.1)));
            }
        }
        Ok(Self { entries })
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Serialize, Deserialize)]
struct PolicyRecord {
    word: String,
    label: String,
    segs: Vec<SegRecord>,
    #[serde(default, skip_serializing_if = "is_false")]
    fallback: bool,
}

#[derive(Serialize, Deserialize)]
struct SegRecord {
    pieces: Vec<String>,
    p: f64,
}

/// Min-rule scores for each segmentation, normalized; `None` when every
/// score is zero.
pub fn score_segmentations(segs: &[Segmentation], cond: &BTreeMap<String, f64>) -> Option<Vec<f64>> {
    let raw: Vec<f64> = segs
        .iter()
        .map(|s| {
            s.pieces
                .iter()
                .map(|t| cond.get(t).copied().unwrap_or(0.0))
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    (total > 0.0 && total.is_finite()).then(|| raw.iter().map(|r| r / total).collect())
}

pub fn derive_policy(
    plan: &TransportPlan,
    instance: &TransportInstance,
    segmentations: &SegmentationTable,
) -> Result<RetokenizationPolicy> {
    let cond = SubwordConditional::from_plan(plan, instance)?;
    let mut entries = BTreeMap::new();
    for ((word, category), dist) in cond.rows {
        let ws = segmentations
            .get(&word)
            .ok_or_else(|| Error::MissingSegmentations(word.clone()))?;
        let entry = if ws.segmentations.len() == 1 {
            PolicyEntry {
                segs: vec![(ws.segmentations[0].clone(), 1.0)],
                fallback: false,
            }
        } else {
            match score_segmentations(&ws.segmentations, &dist) {
                Some(probs) => PolicyEntry {
                    segs: ws.segmentations.iter().cloned().zip(probs).collect(),
                    fallback: false,
                },
                None => PolicyEntry {
                    segs: vec![(ws.default.clone(), 1.0)],
                    fallback: true,
                },
            }
        };
        entries.insert((word, category), entry);
    }
    Ok(RetokenizationPolicy { entries })
}

/// Uniform draw in `[0, 1)` for one token position.
pub fn token_uniform(seed: u64, sentence: usize, token: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sentence as u64);
    rng.set_word_pos(token as u128 * 2);
    rng.gen::<f64>()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetokenizedWord {
    pub surface: String,
    pub label: BioLabel,
    pub pieces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RetokenizedCorpus {
    pub sentences: Vec<Vec<RetokenizedWord>>,
}

impl RetokenizedCorpus {
    /// One row per piece; a `B-X` word becomes `B-X` then `I-X` pieces.
    pub fn to_subword_corpus(&self) -> LabeledCorpus {
        let sentences = self
            .sentences
            .iter()
            .map(|s| {
                s.iter()
                    .flat_map(|w| {
                        w.pieces.iter().enumerate().map(move |(k, p)| {
                            let label = match (w.label.kind, k) {
                                (BioKind::B, 0) | (BioKind::O, _) => w.label.clone(),
                                _ => BioLabel::inside(w.label.category()),
                            };
                            Token::new(p.clone(), label)
                        })
                    })
                    .collect()
            })
            .collect();
        LabeledCorpus::new(sentences)
    }

    pub fn to_conll(&self) -> String {
        crate::corpus::serialize_conll(&self.to_subword_corpus())
    }
}

/// Samples one segmentation per token. Words without a policy entry keep
/// their default tokenization.
pub fn retokenize_corpus(
    corpus: &LabeledCorpus,
    policy: &RetokenizationPolicy,
    vocab: &SubwordVocab,
    seed: u64,
) -> RetokenizedCorpus {
    let sentences = corpus
        .sentences
        .par_iter()
        .enumerate()
        .map(|(si, sentence)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(si as u64);
            sentence
                .iter()
                .enumerate()
                .map(|(ti, tok)| {
                    let pieces = match policy.get(&tok.surface, tok.label.category()) {
                        Some(entry) => {
                            rng.set_word_pos(ti as u128 * 2);
                            entry.pick(rng.gen::<f64>()).pieces.clone()
                        }
                        None => tokenize_default(&tok.surface, vocab).pieces,
                    };
                    RetokenizedWord {
                        surface: tok.surface.clone(),
                        label: tok.label.clone(),
                        pieces,
                    }
                })
                .collect()
        })
        .collect();
    RetokenizedCorpus { sentences }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(p: &[&str]) -> Segmentation {
        Segmentation::new(p.iter().map(|s| s.to_string()).collect())
    }

    fn cond(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(t, p)| (t.to_string(), *p)).collect()
    }

    #[test]
    fn min_rule_then_normalize() {
        let segs = [seg(&["A", "##BC"]), seg(&["AB", "##C"])];
        let c = cond(&[("A", 0.3), ("##BC", 0.3), ("AB", 0.7), ("##C", 0.7)]);
        let p = score_segmentations(&segs, &c).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn overlapping_pieces_follow_literal_min() {
        // hand-computed: raw scores min(.5,.2)=.2, min(.5,.1)=.1, min(.3)=.3 -> /.6
        let segs = [seg(&["a", "##bc"]), seg(&["a", "##b", "##c"]), seg(&["abc"])];
        let c = cond(&[("a", 0.5), ("##bc", 0.2), ("##b", 0.4), ("##c", 0.1), ("abc", 0.3)]);
        let p = score_segmentations(&segs, &c).unwrap();
        let want = [0.2 / 0.6, 0.1 / 0.6, 0.3 / 0.6];
        for (g, w) in p.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn all_zero_scores_are_degenerate() {
        let segs = [seg(&["a", "##b"]), seg(&["ab"])];
        assert!(score_segmentations(&segs, &cond(&[("a", 0.5)])).is_none());
    }

    #[test]
    fn bio_expansion() {
        let corpus = RetokenizedCorpus {
            sentences: vec![vec![
                RetokenizedWord {
                    surface: "Madrid".into(),
                    label: BioLabel::begin("ORG"),
                    pieces: vec!["Mad".into(), "##rid".into()],
                },
                RetokenizedWord {
                    surface: "CF".into(),
                    label: BioLabel::inside("ORG"),
                    pieces: vec!["C".into(), "##F".into()],
                },
                RetokenizedWord {
                    surface: "won".into(),
                    label: BioLabel::outside(),
                    pieces: vec!["wo".into(), "##n".into()],
                },
            ]],
        };
        assert_eq!(
            corpus.to_conll(),
            "Mad B-ORG\n##rid I-ORG\nC I-ORG\n##F I-ORG\nwo O\n##n O\n"
        );
    }

    #[test]
    fn jsonl_round_trip_and_validation() {
        let mut policy = RetokenizationPolicy::default();
        policy.entries.insert(
            ("ab".into(), "LOC".into()),
            PolicyEntry {
                segs: vec![(seg(&["ab"]), 0.25), (seg(&["a", "##b"]), 0.75)],
                fallback: false,
            },
        );
        policy.entries.insert(
            ("x".into(), "O".into()),
            PolicyEntry {
                segs: vec![(seg(&["x"]), 1.0)],
                fallback: true,
            },
        );
        let text = policy.to_jsonl();
        assert_eq!(
            text.lines().next().unwrap(),
            r###"{"word":"ab","label":"LOC","segs":[{"pieces":["ab"],"p":0.25},{"pieces":["a","##b"],"p":0.75}]}"###
        );
        assert!(text.lines().nth(1).unwrap().ends_with(r#""fallback":true}"#));
        assert_eq!(RetokenizationPolicy::from_jsonl(&text).unwrap(), policy);

        let bad = r#"{"word":"ab","label":"LOC","segs":[{"pieces":["ab"],"p":0.5}]}"#;
        assert!(matches!(
            RetokenizationPolicy::from_jsonl(bad).unwrap_err(),
            Error::InvalidPolicy { line: 1, .. }
        ));
        assert!(RetokenizationPolicy::from_jsonl("not json\n").is_err());
    }

    #[test]
    fn pick_respects_cumulative_bounds() {
        let e = PolicyEntry {
            segs: vec![(seg(&["a"]), 0.3), (seg(&["b"]), 0.0), (seg(&["c"]), 0.7)],
            fallback: false,
        };
        assert_eq!(e.pick(0.0), &seg(&["a"]));
        assert_eq!(e.pick(0.2999), &seg(&["a"]));
        assert_eq!(e.pick(0.3), &seg(&["c"]));
        assert_eq!(e.pick(0.999_999_999), &seg(&["c"]));
        assert_eq!(e.pick(1.0), &seg(&["c"]));
    }

    #[test]
    fn token_stream_is_keyed_not_sequential() {
        let a = token_uniform(7, 3, 5);
        assert_eq!(a, token_uniform(7, 3, 5));
        assert_ne!(a, token_uniform(7, 3, 6));
        assert_ne!(a, token_uniform(7, 4, 5));
        assert_ne!(a, token_uniform(8, 3, 5));
    }

    proptest! {
        #[test]
        fn normalized_scores_sum_to_one(values in prop::collection::vec(0.0f64..1.0, 6)) {
            let segs = [seg(&["a", "##bc"]), seg(&["ab", "##c"]), seg(&["a", "##b", "##c"]), seg(&["abc"])];
            let names = ["a", "##bc", "ab", "##c", "##b", "abc"];
            let c: BTreeMap<String, f64> = names.iter().zip(&values).map(|(n, v)| (n.to_string(), *v)).collect();
            if let Some(p) = score_segmentations(&segs, &c) {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }

        #[test]
        fn draws_are_unit_interval(seed in any::<u64>(), s in 0usize..1000, t in 0usize..1000) {
            let u = token_uniform(seed, s, t);
            prop_assert!((0.0..1.0).contains(&u));
        }
    }
}
