//! KL divergences between subword/category distributions and the solver
//! timing benchmark.
//!
//! Conditional KL is weighted by the first argument's subword marginal:
//! `Σ_t p(t) Σ_y p(y|t) ln(p(y|t) / q(y|t))`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::estimate::{count_subword_labels, TargetStats};
use crate::segment::SubwordVocab;
use crate::sinkhorn::{solve, SolverConfig, Stabilization, TransportProblem};
use crate::sparse::CsrMatrix;

/// Joint distribution keyed by (subword, category).
pub type JointDistribution = BTreeMap<(String, String), f64>;
/// `t -> (y -> p(y|t))`.
pub type ConditionalFamily = BTreeMap<String, BTreeMap<String, f64>>;

/// Add-`alpha` smoothing of counts over `subwords x categories`.
pub fn smooth_counts(
    counts: &BTreeMap<(String, String), f64>,
    subwords: &BTreeSet<String>,
    categories: &[String],
    alpha: f64,
) -> JointDistribution {
    let total: f64 = counts
        .iter()
        .filter(|((t, y), _)| subwords.contains(t) && categories.contains(y))
        .map(|(_, c)| c)
        .sum();
    let denom = total + alpha * (subwords.len() * categories.len()) as f64;
    let mut out = BTreeMap::new();
    if denom <= 0.0 {
        return out;
    }
    for t in subwords {
        for y in categories {
            let key = (t.clone(), y.clone());
            let c = counts.get(&key).copied().unwrap_or(0.0);
            out.insert(key, (c + alpha) / denom);
        }
    }
    out
}

/// Splits a joint into `p(y|t)` and `p(t)`. Subwords with zero mass are
/// dropped.
pub fn conditional_family(joint: &JointDistribution) -> (ConditionalFamily, BTreeMap<String, f64>) {
    let mut marginal: BTreeMap<String, f64> = BTreeMap::new();
    for ((t, _), p) in joint {
        *marginal.entry(t.clone()).or_insert(0.0) += p;
    }
    marginal.retain(|_, m| *m > 0.0);
    let mut family: ConditionalFamily = BTreeMap::new();
    for ((t, y), p) in joint {
        if let Some(m) = marginal.get(t) {
            family.entry(t.clone()).or_default().insert(y.clone(), p / m);
        }
    }
    (family, marginal)
}

fn kl_terms<'a>(
    p: impl Iterator<Item = (&'a str, &'a str, f64)>,
    q: impl Fn(&str, &str) -> f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (t, y, pv) in p {
        if pv <= 0.0 {
            continue;
        }
        let qv = q(t, y);
        if qv <= 0.0 {
            return Err(Error::SupportViolation {
                subword: t.to_string(),
                category: y.to_string(),
            });
        }
        sum += pv * (pv / qv).ln();
    }
    Ok(sum)
}

/// `Σ p ln(p/q)` over the joint grid.
pub fn kl_joint(p: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    kl_terms(p.iter().map(|((t, y), v)| (t.as_str(), y.as_str(), *v)), |t, y| {
        q.get(&(t.to_string(), y.to_string())).copied().unwrap_or(0.0)
    })
}

/// Weighted conditional KL.
pub fn kl_conditional(p: &ConditionalFamily, q: &ConditionalFamily, weights: &BTreeMap<String, f64>) -> Result<f64> {
    let mut sum = 0.0;
    for (t, dist) in p {
        let w = weights.get(t).copied().unwrap_or(0.0);
        if w <= 0.0 {
            continue;
        }
        let inner = kl_terms(dist.iter().map(|(y, v)| (t.as_str(), y.as_str(), *v)), |t, y| {
            q.get(t).and_then(|d| d.get(y)).copied().unwrap_or(0.0)
        })?;
        sum += w * inner;
    }
    Ok(sum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub kl_conditional_before: f64,
    pub kl_conditional_after: f64,
    pub kl_joint_before: f64,
    pub kl_joint_after: f64,
    /// Jaccard overlap of source and target subword types.
    pub support_overlap: f64,
    pub grid_subwords: usize,
    pub categories: Vec<String>,
    pub smoothing_alpha: f64,
    pub conditional_weighting: String,
}

impl KlReport {
    pub fn delta_conditional(&self) -> f64 {
        self.kl_conditional_after - self.kl_conditional_before
    }

    pub fn delta_joint(&self) -> f64 {
        self.kl_joint_after - self.kl_joint_before
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned-column summary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# conditional KL weighted by {}; add-{} smoothing over {} subwords x {} categories",
            self.conditional_weighting,
            self.smoothing_alpha,
            self.grid_subwords,
            self.categories.len()
        );
        let _ = writeln!(out, "{:<12} {:>14} {:>14} {:>14}", "measure", "before", "after", "delta");
        let _ = writeln!(
            out,
            "{:<12} {:>14.6} {:>14.6} {:>14.6}",
            "conditional",
            self.kl_conditional_before,
            self.kl_conditional_after,
            self.delta_conditional()
        );
        let _ = writeln!(
            out,
            "{:<12} {:>14.6} {:>14.6} {:>14.6}",
            "joint",
            self.kl_joint_before,
            self.kl_joint_after,
            self.delta_joint()
        );
        let _ = writeln!(out, "{:<12} {:>14.6}", "overlap", self.support_overlap);
        out
    }
}

/// Counts (subword, category) rows of a subword-level corpus.
pub fn count_subword_rows(corpus: &LabeledCorpus) -> BTreeMap<(String, String), f64> {
    let mut counts = BTreeMap::new();
    for tok in corpus.tokens() {
        *counts
            .entry((tok.surface.clone(), tok.label.category().to_string()))
            .or_insert(0.0) += 1.0;
    }
    counts
}

/// KL of the source against the target before (default tokenization) and
/// after re-tokenization. All three distributions are smoothed on the union
/// of their subwords with the target's alpha.
pub fn compare_before_after(
    source: &LabeledCorpus,
    retokenized: &LabeledCorpus,
    target: &TargetStats,
    vocab: &SubwordVocab,
) -> Result<KlReport> {
    let before = count_subword_labels(source, vocab);
    let after = count_subword_rows(retokenized);
    let categories = target.categories.clone();
    for (_, y) in before.keys().chain(after.keys()) {
        if !categories.contains(y) {
            return Err(Error::InvalidArgument(format!("category `{y}` is outside the label space")));
        }
    }

    let source_types: BTreeSet<String> = before.keys().chain(after.keys()).map(|(t, _)| t.clone()).collect();
    let target_types: BTreeSet<String> = target
        .counts
        .iter()
        .filter(|(_, c)| **c > 0.0)
        .map(|((t, _), _)| t.clone())
        .collect();
    let grid: BTreeSet<String> = source_types.union(&target_types).cloned().collect();
    let overlap = if grid.is_empty() {
        0.0
    } else {
        source_types.intersection(&target_types).count() as f64 / grid.len() as f64
    };

    let alpha = target.smoothing_alpha;
    let q = smooth_counts(&target.counts, &grid, &categories, alpha);
    let p_before = smooth_counts(&before, &grid, &categories, alpha);
    let p_after = smooth_counts(&after, &grid, &categories, alpha);
    let (q_cond, _) = conditional_family(&q);
    let (b_cond, b_marg) = conditional_family(&p_before);
    let (a_cond, a_marg) = conditional_family(&p_after);

    Ok(KlReport {
        kl_conditional_before: kl_conditional(&b_cond, &q_cond, &b_marg)?,
        kl_conditional_after: kl_conditional(&a_cond, &q_cond, &a_marg)?,
        kl_joint_before: kl_joint(&p_before, &q)?,
        kl_joint_after: kl_joint(&p_after, &q)?,
        support_overlap: overlap,
        grid_subwords: grid.len(),
        categories,
        smoothing_alpha: alpha,
        conditional_weighting: "source subword marginal".into(),
    })
}

/// Seeded sparse instance: each row gets `round(density * cols)` random
/// columns, every column is touched at least once and costs are uniform in
/// `[0, 1)`. Marginals are the row and column sums of a random positive
/// plan (weights uniform in `[0.5, 1.5)`) on the same support, so the
/// instance is always feasible.
pub fn random_sparse_problem(rows: usize, cols: usize, density: f64, seed: u64) -> Result<TransportProblem> {
    if rows == 0 || cols == 0 {
        return Err(Error::InstanceEmpty);
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density must be in (0, 1], got {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_row = ((density * cols as f64).round() as usize).clamp(1, cols);
    let mut pattern: Vec<Vec<usize>> = (0..rows)
        .map(|_| sample(&mut rng, cols, per_row).into_vec())
        .collect();
    let mut touched = vec![false; cols];
    for r in &pattern {
        for &j in r {
            touched[j] = true;
        }
    }
    for (j, seen) in touched.iter().enumerate() {
        if !seen {
            pattern[rng.gen_range(0..rows)].push(j);
        }
    }
    let mut a = vec![0.0; rows];
    let mut b = vec![0.0; cols];
    let cells = pattern
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            r.sort_unstable();
            r.into_iter()
                .map(|j| {
                    let w: f64 = rng.gen_range(0.5..1.5);
                    a[i] += w;
                    b[j] += w;
                    (j, rng.gen::<f64>())
                })
                .collect()
        })
        .collect();
    let cost = CsrMatrix::from_rows(cols, cells)?;
    let total: f64 = a.iter().sum();
    a.iter_mut().for_each(|x| *x /= total);
    b.iter_mut().for_each(|x| *x /= total);
    TransportProblem::new(a, b, cost)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub rows: usize,
    pub cols: usize,
    pub finite_cells: usize,
    pub gamma: f64,
    pub stabilization: Stabilization,
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
    pub seconds: f64,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str =
        "rows,cols,finite_cells,gamma,stabilization,iterations,marginal_error,converged,seconds";

    pub fn csv_row(&self) -> String {
        let stab = match self.stabilization {
            Stabilization::Plain => "plain",
            Stabilization::LogDomain => "log_domain",
            Stabilization::Auto => "auto",
        };
        format!(
            "{},{},{},{},{},{},{:e},{},{:.6}",
            self.rows,
            self.cols,
            self.finite_cells,
            self.gamma,
            stab,
            self.iterations,
            self.marginal_error,
            self.converged,
            self.seconds
        )
    }
}

/// Times one solve of a seeded random instance. Generation is not timed.
pub fn bench_solver(
    rows: usize,
    cols: usize,
    density: f64,
    seed: u64,
    config: &SolverConfig,
) -> Result<BenchRecord> {
    let problem = random_sparse_problem(rows, cols, density, seed)?;
    let start = Instant::now();
    let plan = solve(&problem, config)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchRecord {
        rows,
        cols,
        finite_cells: problem.cost.nnz(),
        gamma: config.gamma,
        stabilization: plan.stabilization,
        iterations: plan.iterations,
        marginal_error: plan.marginal_error,
        converged: plan.converged,
        seconds,
    })
}
