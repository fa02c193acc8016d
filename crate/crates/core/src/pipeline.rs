//! Command implementations behind the CLI. Each command validates its
//! configuration and reads every input before any output is written; files
//! are written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{PipelineConfig, INSTANCE_DUMP_FILE, INSTANCE_STATS_FILE, REPORT_JSON_FILE, REPORT_TEXT_FILE, TRACE_FILE};
use crate::corpus::{parse_conll, parse_plain_text, serialize_conll, count_frequencies, LabelSpace, LabeledCorpus, ParseOptions};
use crate::diagnostics::{bench_solver, compare_before_after, BenchRecord, KlReport};
use crate::error::{Error, Result};
use crate::estimate::{build_instance, estimate_target, InstanceOptions, ObjectiveMode};
use crate::lexicon::{annotate_corpus, load_lexicon, AnnotationSummary};
use crate::policy::{derive_policy, retokenize_corpus, RetokenizationPolicy};
use crate::segment::{SegmentationTable, SubwordVocab};
use crate::sinkhorn::{plan_entropy, solve, transport_cost, Stabilization};

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_vocab(cfg: &PipelineConfig) -> Result<SubwordVocab> {
    let path = cfg.require_file("vocab", cfg.vocab.as_deref())?;
    SubwordVocab::new(read(&path)?.lines().map(str::trim), &cfg.unk_token)
}

fn load_labeled(path: &Path, space: &LabelSpace, cfg: &PipelineConfig) -> Result<LabeledCorpus> {
    parse_conll(&read(path)?, space, ParseOptions { repair_bio: cfg.repair_bio })
}

#[derive(Debug, Clone)]
pub struct AnnotateOutcome {
    pub summary: AnnotationSummary,
    pub output: PathBuf,
}

/// Tags the unlabeled target text with the lexicon.
pub fn cmd_annotate(cfg: &PipelineConfig) -> Result<AnnotateOutcome> {
    cfg.validate_values()?;
    let space = cfg.labels()?;
    let target = cfg.require_file("target", cfg.target.as_deref())?;
    let lexicon = cfg.require_file("lexicon", cfg.lexicon.as_deref())?;

    let lexicon = load_lexicon(&read(&lexicon)?, &space)?;
    let sentences = parse_plain_text(&read(&target)?);
    let (corpus, summary) = annotate_corpus(&sentences, &lexicon, cfg.case_insensitive_lexicon);

    let output = cfg.annotated_target_path();
    write_atomic(&output, serialize_conll(&corpus).as_bytes())?;
    Ok(AnnotateOutcome { summary, output })
}

/// Instance and solver summary written next to the policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceStats {
    pub rows: usize,
    pub cols: usize,
    pub finite_cells: usize,
    pub objective_mode: ObjectiveMode,
    pub gamma: f64,
    pub smoothing_alpha: f64,
    pub seg_cap: usize,
    pub stabilization: Stabilization,
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
    pub transport_cost: f64,
    pub plan_entropy: f64,
    pub policy_entries: usize,
    pub fallback_entries: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub stats: InstanceStats,
    pub policy: RetokenizationPolicy,
    pub files: Vec<PathBuf>,
}

/// Estimates target statistics, builds and solves the transport instance
/// and derives the re-tokenization policy. A solve that stops at the
/// iteration limit is an error only under `strict`.
pub fn cmd_solve(cfg: &PipelineConfig) -> Result<SolveOutcome> {
    cfg.validate_values()?;
    let space = cfg.labels()?;
    let source = cfg.require_file("source", cfg.source.as_deref())?;
    let annotated = cfg.require_file("annotated_target", Some(&cfg.annotated_target_path()))?;
    let vocab = load_vocab(cfg)?;

    let source = load_labeled(&source, &space, cfg)?;
    let target = load_labeled(&annotated, &space, cfg)?;
    let stats = estimate_target(&target, &vocab, &space, cfg.smoothing_alpha)?;
    let freq = count_frequencies(&source);
    let table = SegmentationTable::build(freq.word_count.keys().map(String::as_str), &vocab, cfg.seg_cap);
    let instance = build_instance(
        &freq,
        &table,
        &stats,
        &InstanceOptions {
            gamma: cfg.gamma,
            mode: cfg.objective_mode,
            cardinality: cfg.subword_cardinality,
        },
    )?;
    let plan = solve(&instance.problem, &cfg.solver())?;
    let plan = if cfg.strict { plan.ensure_converged()? } else { plan };
    let policy = derive_policy(&plan, &instance, &table)?;

    let stats = InstanceStats {
        rows: instance.nrows(),
        cols: instance.ncols(),
        finite_cells: instance.finite_cells(),
        objective_mode: cfg.objective_mode,
        gamma: cfg.gamma,
        smoothing_alpha: cfg.smoothing_alpha,
        seg_cap: cfg.seg_cap,
        stabilization: plan.stabilization,
        iterations: plan.iterations,
        marginal_error: plan.marginal_error,
        converged: plan.converged,
        transport_cost: transport_cost(&plan, &instance.problem)?,
        plan_entropy: plan_entropy(&plan),
        policy_entries: policy.len(),
        fallback_entries: policy.fallback_count(),
    };
    let mut stats_json = serde_json::to_string_pretty(&stats)?;
    stats_json.push('\n');

    let outputs = [
        (cfg.policy_path(), policy.to_jsonl()),
        (cfg.output_dir.join(TRACE_FILE), plan.trace_csv()),
        (cfg.output_dir.join(INSTANCE_STATS_FILE), stats_json),
        (cfg.output_dir.join(INSTANCE_DUMP_FILE), instance.dump()),
    ];
    let mut files = Vec::with_capacity(outputs.len());
    for (path, text) in outputs {
        write_atomic(&path, text.as_bytes())?;
        files.push(path);
    }
    Ok(SolveOutcome { stats, policy, files })
}

#[derive(Debug, Clone)]
pub struct RetokenizeOutcome {
    pub files: Vec<PathBuf>,
    pub words: usize,
    pub subwords: usize,
}

/// Samples segmentations for the source corpus, one pass per epoch seed.
/// Epoch `e` uses seed `seed + e`.
pub fn cmd_retokenize(cfg: &PipelineConfig) -> Result<RetokenizeOutcome> {
    cfg.validate_values()?;
    let space = cfg.labels()?;
    let source = cfg.require_file("source", cfg.source.as_deref())?;
    let policy = cfg.require_file("policy", Some(&cfg.policy_path()))?;
    let vocab = load_vocab(cfg)?;

    let source = load_labeled(&source, &space, cfg)?;
    let policy = RetokenizationPolicy::from_jsonl(&read(&policy)?)?;

    let mut passes = Vec::with_capacity(cfg.epoch_seeds);
    let mut subwords = 0;
    for epoch in 0..cfg.epoch_seeds {
        let retok = retokenize_corpus(&source, &policy, &vocab, cfg.seed.wrapping_add(epoch as u64));
        let text = retok.to_conll();
        if epoch == 0 {
            subwords = retok.to_subword_corpus().token_count();
        }
        passes.push((cfg.retokenized_path_for(epoch), text));
    }
    let mut files = Vec::with_capacity(passes.len());
    for (path, text) in passes {
        write_atomic(&path, text.as_bytes())?;
        files.push(path);
    }
    Ok(RetokenizeOutcome {
        files,
        words: source.token_count(),
        subwords,
    })
}

#[derive(Debug, Clone)]
pub struct DiagnoseOutcome {
    pub report: KlReport,
    pub files: Vec<PathBuf>,
}

/// KL of the source against the annotated target before and after
/// re-tokenization. With several epochs, the first pass is compared.
pub fn cmd_diagnose(cfg: &PipelineConfig) -> Result<DiagnoseOutcome> {
    cfg.validate_values()?;
    let space = cfg.labels()?;
    let source = cfg.require_file("source", cfg.source.as_deref())?;
    let annotated = cfg.require_file("annotated_target", Some(&cfg.annotated_target_path()))?;
    let retok = cfg.require_file("retokenized", Some(&cfg.retokenized_path_for(0)))?;
    let vocab = load_vocab(cfg)?;

    let source = load_labeled(&source, &space, cfg)?;
    let target = load_labeled(&annotated, &space, cfg)?;
    let retok = parse_conll(&read(&retok)?, &space, ParseOptions::default())?;
    let stats = estimate_target(&target, &vocab, &space, cfg.smoothing_alpha)?;
    let report = compare_before_after(&source, &retok, &stats, &vocab)?;

    let json = cfg.output_dir.join(REPORT_JSON_FILE);
    let text = cfg.output_dir.join(REPORT_TEXT_FILE);
    write_atomic(&json, report.to_json().as_bytes())?;
    write_atomic(&text, report.to_table().as_bytes())?;
    Ok(DiagnoseOutcome {
        report,
        files: vec![json, text],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchArgs {
    pub rows: usize,
    pub cols: usize,
    pub density: f64,
}

/// Times the solver on a seeded random instance using the configured
/// gamma, tolerance, iteration limit and stabilization.
pub fn cmd_bench(cfg: &PipelineConfig, args: BenchArgs) -> Result<BenchRecord> {
    let mut solver = cfg.solver();
    solver.record_trace = false;
    solver.validate()?;
    bench_solver(args.rows, args.cols, args.density, cfg.seed, &solver)
}
