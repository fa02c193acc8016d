//! Reference implementations used only by tests. Nothing here calls into
//! the solver, segmenter or estimator under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subalign::corpus::{BioLabel, LabeledCorpus, Token};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

/// Dense entropic OT by alternating row/column projections in the log
/// domain, iterated until the L1 violation of both marginals is below
/// `tol`. `cost[i][j] = inf` marks a forbidden cell.
pub fn dense_sinkhorn(a: &[f64], b: &[f64], cost: &[Vec<f64>], gamma: f64, tol: f64) -> Vec<Vec<f64>> {
    let (n, m) = (a.len(), b.len());
    let lse = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            return mx;
        }
        mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
    };
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let logk = |i: usize, j: usize| -cost[i][j] / gamma;
    let mut plan = vec![vec![0.0; m]; n];
    for _ in 0..1_000_000 {
        for i in 0..n {
            f[i] = a[i].ln() - lse(&mut (0..m).map(|j| logk(i, j) + g[j]));
        }
        for j in 0..m {
            g[j] = b[j].ln() - lse(&mut (0..n).map(|i| logk(i, j) + f[i]));
        }
        for i in 0..n {
            for j in 0..m {
                plan[i][j] = (logk(i, j) + f[i] + g[j]).exp();
            }
        }
        let mut err = 0.0;
        for i in 0..n {
            err += (plan[i].iter().sum::<f64>() - a[i]).abs();
        }
        for j in 0..m {
            err += ((0..n).map(|i| plan[i][j]).sum::<f64>() - b[j]).abs();
        }
        if err <= tol {
            break;
        }
    }
    plan
}

/// Exact optimum of the balanced transportation LP by enumerating basic
/// feasible solutions: every spanning tree of the bipartite row/column
/// graph with `n + m - 1` cells, solved by leaf elimination.
pub fn lp_optimum(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let k = n + m - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    fn rec(
        start: usize,
        k: usize,
        cells: &[(usize, usize)],
        chosen: &mut Vec<(usize, usize)>,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        if chosen.len() == k {
            visit(chosen);
            return;
        }
        for idx in start..cells.len() {
            if cells.len() - idx < k - chosen.len() {
                break;
            }
            chosen.push(cells[idx]);
            rec(idx + 1, k, cells, chosen, visit);
            chosen.pop();
        }
    }
    let mut visit = |basis: &[(usize, usize)]| {
        if let Some(x) = peel(a, b, basis) {
            let c: f64 = basis.iter().zip(&x).map(|(&(i, j), v)| cost[i][j] * v).sum();
            if c < best {
                best = c;
            }
        }
    };
    rec(0, k, &cells, &mut chosen, &mut visit);
    best
}

/// Solves for flows on a candidate basis by repeatedly fixing a cell whose
/// row or column has one remaining unknown. Returns `None` if the basis is
/// not a spanning tree or the solution is infeasible.
fn peel(a: &[f64], b: &[f64], basis: &[(usize, usize)]) -> Option<Vec<f64>> {
    let mut ra = a.to_vec();
    let mut rb = b.to_vec();
    let mut x = vec![f64::NAN; basis.len()];
    let mut open: Vec<bool> = vec![true; basis.len()];
    for _ in 0..basis.len() {
        let mut progressed = false;
        for (k, &(i, j)) in basis.iter().enumerate() {
            if !open[k] {
                continue;
            }
            let row_deg = basis.iter().enumerate().filter(|(q, c)| open[*q] && c.0 == i).count();
            let col_deg = basis.iter().enumerate().filter(|(q, c)| open[*q] && c.1 == j).count();
            let v = if row_deg == 1 {
                ra[i]
            } else if col_deg == 1 {
                rb[j]
            } else {
                continue;
            };
            x[k] = v;
            ra[i] -= v;
            rb[j] -= v;
            open[k] = false;
            progressed = true;
            break;
        }
        if !progressed {
            return None;
        }
    }
    let tol = 1e-12;
    if ra.iter().chain(&rb).any(|r| r.abs() > tol) || x.iter().any(|v| *v < -tol) {
        return None;
    }
    Some(x)
}

pub fn naive_kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..p.len() {
        if p[k] > 0.0 {
            s += p[k] * (p[k] / q[k]).ln();
        }
    }
    s
}

/// Every segmentation of `word`, found by checking all cut patterns.
pub fn brute_force_split_list(word: &str, vocab: &BTreeSet<String>) -> Vec<Vec<String>> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    for mask in 0u32..(1 << (n - 1)) {
        let mut start = 0;
        let mut pieces = Vec::new();
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let s: String = chars[start..end].iter().collect();
                pieces.push(if start == 0 { s } else { format!("##{s}") });
                start = end;
            }
        }
        if pieces.iter().all(|p| vocab.contains(p)) {
            out.push(pieces);
        }
    }
    out
}

pub fn brute_force_segmentations(word: &str, vocab: &BTreeSet<String>) -> u128 {
    brute_force_split_list(word, vocab).len() as u128
}

pub fn random_marginal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Word-level entity spans `(sentence, start, end, type)` of a BIO corpus.
pub fn entity_spans(corpus: &LabeledCorpus) -> BTreeMap<(usize, usize, usize, String), usize> {
    use subalign::corpus::BioKind;
    let mut out = BTreeMap::new();
    for (si, s) in corpus.sentences.iter().enumerate() {
        let mut open: Option<(usize, String)> = None;
        for (ti, tok) in s.iter().enumerate() {
            let continues = tok.label.kind == BioKind::I
                && open.as_ref().is_some_and(|(_, t)| Some(t.as_str()) == tok.label.entity_type.as_deref());
            if !continues {
                if let Some((start, t)) = open.take() {
                    *out.entry((si, start, ti, t)).or_insert(0) += 1;
                }
                if tok.label.kind != BioKind::O {
                    open = Some((ti, tok.label.entity_type.clone().unwrap()));
                }
            }
        }
        if let Some((start, t)) = open.take() {
            *out.entry((si, start, s.len(), t)).or_insert(0) += 1;
        }
    }
    out
}

/// Regroups a subword-level corpus into words: a piece without the `##`
/// prefix starts a new word; the word takes the first piece's label.
pub fn regroup_words(subwords: &LabeledCorpus) -> LabeledCorpus {
    let sentences = subwords
        .sentences
        .iter()
        .map(|s| {
            let mut words: Vec<Token> = Vec::new();
            for tok in s {
                match tok.surface.strip_prefix("##") {
                    Some(rest) if !words.is_empty() => words.last_mut().unwrap().surface.push_str(rest),
                    _ => words.push(tok.clone()),
                }
            }
            words
        })
        .collect();
    LabeledCorpus::new(sentences)
}

/// One synthetic source/target pair. Words are concatenations of shared
/// syllables; each syllable has a home category and the target labels
/// syllables by their home but labels whole source words with a shifted
/// category, so the default tokenization of the source disagrees with the
/// target while its syllable segmentations agree.
pub struct SyntheticDomains {
    pub vocab: Vec<String>,
    pub source: LabeledCorpus,
    pub target: LabeledCorpus,
    pub categories: Vec<String>,
}

pub const SYNTHETIC_TYPES: [&str; 3] = ["ALPHA", "BETA", "GAMMA"];

fn label_for(cat: &str, first: bool) -> BioLabel {
    if cat == "O" {
        BioLabel::outside()
    } else if first {
        BioLabel::begin(cat)
    } else {
        BioLabel::inside(cat)
    }
}

pub fn synthetic_domains(seed: u64) -> SyntheticDomains {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cats: Vec<String> = ["O", "ALPHA", "BETA", "GAMMA"].iter().map(|s| s.to_string()).collect();

    // syllables: consonant-vowel(-consonant), distinct
    let cons: Vec<char> = "bdfgklmnprstvz".chars().collect();
    let vows: Vec<char> = "aeiou".chars().collect();
    let mut syllables: BTreeSet<String> = BTreeSet::new();
    while syllables.len() < 24 {
        let mut s = String::new();
        s.push(*cons.choose(&mut rng).unwrap());
        s.push(*vows.choose(&mut rng).unwrap());
        if rng.gen_bool(0.5) {
            s.push(*cons.choose(&mut rng).unwrap());
        }
        syllables.insert(s);
    }
    let syllables: Vec<String> = syllables.into_iter().collect();
    let home: Vec<usize> = (0..syllables.len()).map(|k| k % cats.len()).collect();
    let by_cat: Vec<Vec<usize>> = (0..cats.len())
        .map(|c| (0..syllables.len()).filter(|&k| home[k] == c).collect())
        .collect();

    let mut vocab: BTreeSet<String> = BTreeSet::new();
    vocab.insert("[UNK]".into());
    for s in &syllables {
        vocab.insert(s.clone());
        vocab.insert(format!("##{s}"));
    }

    // source word types: 2 or 3 syllables of one home category
    let mut words: Vec<(String, usize)> = Vec::new();
    let mut seen = BTreeSet::new();
    while words.len() < 30 {
        let c = rng.gen_range(0..cats.len());
        let len = rng.gen_range(2..=3);
        let parts: Vec<&String> = (0..len).map(|_| &syllables[*by_cat[c].choose(&mut rng).unwrap()]).collect();
        let w: String = parts.iter().map(|s| s.as_str()).collect();
        if !seen.insert(w.clone()) {
            continue;
        }
        vocab.insert(w.clone());
        if len == 3 {
            vocab.insert(format!("##{}{}", parts[1], parts[2]));
        }
        words.push((w, c));
    }

    let sentence = |rng: &mut ChaCha8Rng, pool: &[(String, usize)], n: usize| -> Vec<Token> {
        (0..n)
            .map(|_| {
                let (w, c) = pool.choose(rng).unwrap();
                Token::new(w.clone(), label_for(&cats[*c], true))
            })
            .collect()
    };

    // source: ~200 tokens, a few words also carry a second category
    let mut src_sentences = Vec::new();
    let mut count = 0;
    while count < 200 {
        let mut s = sentence(&mut rng, &words, 8);
        for tok in s.iter_mut() {
            if rng.gen_bool(0.1) {
                let c = rng.gen_range(0..cats.len());
                tok.label = label_for(&cats[c], true);
            }
        }
        count += s.len();
        src_sentences.push(s);
    }

    // target: new syllable compounds labeled by home, plus the source words
    // labeled with the next category over
    let mut tgt_sentences = Vec::new();
    for _ in 0..40 {
        let mut s = Vec::new();
        for _ in 0..6 {
            let c = rng.gen_range(0..cats.len());
            let a = &syllables[*by_cat[c].choose(&mut rng).unwrap()];
            let b = &syllables[*by_cat[c].choose(&mut rng).unwrap()];
            let w = format!("{a}{b}");
            if vocab.contains(&w) {
                continue;
            }
            s.push(Token::new(w, label_for(&cats[c], true)));
        }
        let (w, c) = words.choose(&mut rng).unwrap();
        s.push(Token::new(w.clone(), label_for(&cats[(c + 1) % cats.len()], true)));
        tgt_sentences.push(s);
    }

    SyntheticDomains {
        vocab: vocab.into_iter().collect(),
        source: LabeledCorpus::new(src_sentences),
        target: LabeledCorpus::new(tgt_sentences),
        categories: cats,
    }
}
