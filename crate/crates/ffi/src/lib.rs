//! C ABI for subalign.
//!
//! Every fallible function returns an [`SaStatus`]. On failure a message is
//! kept per thread and can be read with [`sa_last_error_message`]. Strings
//! returned through `char **` out-parameters are owned by the caller and
//! must be released with [`sa_string_free`]. Handles are opaque and released
//! with their matching `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use subalign::config::PipelineConfig;
use subalign::corpus::{parse_conll, LabelSpace, ParseOptions};
use subalign::pipeline::{cmd_annotate, cmd_diagnose, cmd_retokenize, cmd_solve};
use subalign::policy::{retokenize_corpus, RetokenizationPolicy};
use subalign::segment::{enumerate_segmentations, tokenize_default, SubwordVocab};
use subalign::sinkhorn::{solve, SolverConfig, Stabilization, TransportProblem};
use subalign::{Error, ErrorClass};

/// Result codes. Values 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaStatus {
    Ok = 0,
    ConfigError = 2,
    DataError = 3,
    NumericalError = 4,
    NullArgument = 5,
    InvalidUtf8 = 6,
    Panic = 7,
}

/// Opaque subword vocabulary.
pub struct SaVocab(SubwordVocab);

/// Opaque re-tokenization policy.
pub struct SaPolicy(RetokenizationPolicy);

/// Solver summary filled by [`sa_solve_dense`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SaSolveInfo {
    pub iterations: usize,
    pub marginal_error: f64,
    /// 1 when the tolerance was reached.
    pub converged: i32,
    /// 1 when the log-domain iteration was used.
    pub log_domain: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Failure {
    Status(SaStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SaStatus::Ok,
        Ok(Err(Failure::Status(status, msg))) => {
            set_error(msg);
            status
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e.class() {
                ErrorClass::Config => SaStatus::ConfigError,
                ErrorClass::Data => SaStatus::DataError,
                ErrorClass::Numerical => SaStatus::NumericalError,
            }
        }
        Err(_) => {
            set_error("internal panic");
            SaStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure::Status(SaStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(SaStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| Failure::Status(SaStatus::DataError, "output contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message for the last failure on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a vocabulary: one token per line, `##` marks continuation pieces.
/// `unk_token` may be NULL for `[UNK]`.
#[no_mangle]
pub unsafe extern "C" fn sa_vocab_from_text(
    text: *const c_char,
    unk_token: *const c_char,
    out: *mut *mut SaVocab,
) -> SaStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let unk = if unk_token.is_null() { "[UNK]" } else { str_arg(unk_token, "unk_token")? };
        if out.is_null() {
            return Err(null("out"));
        }
        let vocab = SubwordVocab::new(text.lines().map(str::trim), unk)?;
        *out = Box::into_raw(Box::new(SaVocab(vocab)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sa_vocab_free(vocab: *mut SaVocab) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// Default (greedy longest-match) tokenization, pieces joined by spaces.
#[no_mangle]
pub unsafe extern "C" fn sa_tokenize(vocab: *const SaVocab, word: *const c_char, out: *mut *mut c_char) -> SaStatus {
    guard(|| {
        let vocab = vocab.as_ref().ok_or_else(|| null("vocab"))?;
        let word = str_arg(word, "word")?;
        write_string(out, tokenize_default(word, &vocab.0).pieces.join(" "))
    })
}

/// Up to `cap` segmentations of `word`, one per line, pieces separated by
/// spaces, ordered by piece count and then lexicographically.
#[no_mangle]
pub unsafe extern "C" fn sa_enumerate(
    vocab: *const SaVocab,
    word: *const c_char,
    cap: usize,
    out: *mut *mut c_char,
) -> SaStatus {
    guard(|| {
        let vocab = vocab.as_ref().ok_or_else(|| null("vocab"))?;
        let word = str_arg(word, "word")?;
        if cap == 0 {
            return Err(Failure::Status(SaStatus::ConfigError, "cap must be at least 1".into()));
        }
        let lines: Vec<String> = enumerate_segmentations(word, &vocab.0, cap)
            .iter()
            .map(|s| s.pieces.join(" "))
            .collect();
        write_string(out, lines.join("\n"))
    })
}

/// Entropic OT on a dense row-major cost matrix; `INFINITY` marks a
/// forbidden cell. `plan_out` receives `rows * cols` values. `info` may be
/// NULL. Returns `NumericalError` if the tolerance is not reached, with the
/// last iterate still written.
#[no_mangle]
pub unsafe extern "C" fn sa_solve_dense(
    rows: usize,
    cols: usize,
    row_mass: *const f64,
    col_mass: *const f64,
    cost: *const f64,
    gamma: f64,
    tolerance: f64,
    max_iters: usize,
    plan_out: *mut f64,
    info: *mut SaSolveInfo,
) -> SaStatus {
    guard(|| {
        if row_mass.is_null() || col_mass.is_null() || cost.is_null() || plan_out.is_null() {
            return Err(null("row_mass, col_mass, cost or plan_out"));
        }
        let a = std::slice::from_raw_parts(row_mass, rows).to_vec();
        let b = std::slice::from_raw_parts(col_mass, cols).to_vec();
        let c = std::slice::from_raw_parts(cost, rows * cols);
        let problem = TransportProblem::from_dense(a, b, c)?;
        let cfg = SolverConfig {
            gamma,
            tolerance,
            max_iters,
            ..SolverConfig::default()
        };
        let plan = solve(&problem, &cfg)?;
        let dense = plan.plan.to_dense(0.0);
        std::ptr::copy_nonoverlapping(dense.as_ptr(), plan_out, dense.len());
        if let Some(info) = info.as_mut() {
            *info = SaSolveInfo {
                iterations: plan.iterations,
                marginal_error: plan.marginal_error,
                converged: plan.converged as i32,
                log_domain: (plan.stabilization == Stabilization::LogDomain) as i32,
            };
        }
        plan.ensure_converged()?;
        Ok(())
    })
}

/// Loads a policy from its JSONL text.
#[no_mangle]
pub unsafe extern "C" fn sa_policy_from_jsonl(text: *const c_char, out: *mut *mut SaPolicy) -> SaStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let policy = RetokenizationPolicy::from_jsonl(text)?;
        *out = Box::into_raw(Box::new(SaPolicy(policy)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sa_policy_free(policy: *mut SaPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Number of (word, category) entries; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn sa_policy_len(policy: *const SaPolicy) -> usize {
    policy.as_ref().map_or(0, |p| p.0.len())
}

/// Re-tokenizes a CoNLL corpus with the policy. `labels` is a
/// comma-separated list of entity types. The result is a subword-level
/// CoNLL corpus.
#[no_mangle]
pub unsafe extern "C" fn sa_retokenize_conll(
    policy: *const SaPolicy,
    vocab: *const SaVocab,
    conll: *const c_char,
    labels: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> SaStatus {
    guard(|| {
        let policy = policy.as_ref().ok_or_else(|| null("policy"))?;
        let vocab = vocab.as_ref().ok_or_else(|| null("vocab"))?;
        let text = str_arg(conll, "conll")?;
        let labels = str_arg(labels, "labels")?;
        let space = LabelSpace::new(labels.split(',').map(str::trim).filter(|s| !s.is_empty()))?;
        let corpus = parse_conll(text, &space, ParseOptions::default())?;
        write_string(out, retokenize_corpus(&corpus, &policy.0, &vocab.0, seed).to_conll())
    })
}

/// Runs a pipeline command (`annotate`, `solve`, `retokenize` or
/// `diagnose`) with a TOML config file and `SUBALIGN_*` environment
/// overrides. `config_path` may be NULL to use defaults and environment
/// only.
#[no_mangle]
pub unsafe extern "C" fn sa_run_command(command: *const c_char, config_path: *const c_char) -> SaStatus {
    guard(|| {
        let command = str_arg(command, "command")?;
        let mut cfg = if config_path.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::from_file(&PathBuf::from(str_arg(config_path, "config_path")?))?
        };
        cfg.apply_env()?;
        match command {
            "annotate" => cmd_annotate(&cfg).map(|_| ()),
            "solve" => cmd_solve(&cfg).map(|_| ()),
            "retokenize" => cmd_retokenize(&cfg).map(|_| ()),
            "diagnose" => cmd_diagnose(&cfg).map(|_| ()),
            other => Err(Error::Config(format!("unknown command `{other}`"))),
        }?;
        Ok(())
    })
}
