use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subalign::config::PipelineConfig;
use subalign::diagnostics::BenchRecord;
use subalign::pipeline::{cmd_annotate, cmd_bench, cmd_diagnose, cmd_retokenize, cmd_solve, BenchArgs};
use subalign::{Error, Result};

/// Re-tokenize a labeled NER corpus toward a target domain.
///
/// Settings come from built-in defaults, then `--config`, then SUBALIGN_<KEY>
/// environment variables, then flags.
#[derive(Parser)]
#[command(name = "subalign", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override any config key, e.g. `--set seg_cap=32`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    source: Option<String>,
    #[arg(long, global = true)]
    target: Option<String>,
    #[arg(long, global = true)]
    lexicon: Option<String>,
    #[arg(long, global = true)]
    vocab: Option<String>,
    #[arg(long, global = true)]
    output_dir: Option<String>,
    /// Comma-separated entity types, e.g. `PER,LOC,ORG`.
    #[arg(long, global = true)]
    labels: Option<String>,
    /// `conditional` or `joint`.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    gamma: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    seg_cap: Option<String>,
    #[arg(long, global = true)]
    tolerance: Option<String>,
    #[arg(long, global = true)]
    max_iters: Option<String>,
    /// `auto`, `plain` or `log_domain`.
    #[arg(long, global = true)]
    stabilization: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    epoch_seeds: Option<String>,
    #[arg(long, global = true)]
    case_insensitive: bool,
    /// Turn orphan I- tags into B- instead of rejecting them.
    #[arg(long, global = true)]
    repair_bio: bool,
    /// Fail when the solver stops before reaching the tolerance.
    #[arg(long, global = true)]
    strict: bool,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let opts = [
            ("source", &self.source),
            ("target", &self.target),
            ("lexicon", &self.lexicon),
            ("vocab", &self.vocab),
            ("output_dir", &self.output_dir),
            ("label_space", &self.labels),
            ("objective_mode", &self.mode),
            ("gamma", &self.gamma),
            ("smoothing_alpha", &self.alpha),
            ("seg_cap", &self.seg_cap),
            ("tolerance", &self.tolerance),
            ("max_iters", &self.max_iters),
            ("stabilization", &self.stabilization),
            ("seed", &self.seed),
            ("epoch_seeds", &self.epoch_seeds),
        ];
        for (key, value) in opts {
            if let Some(v) = value {
                out.push((key, v.clone()));
            }
        }
        for (key, flag) in [
            ("case_insensitive_lexicon", self.case_insensitive),
            ("repair_bio", self.repair_bio),
            ("strict", self.strict),
        ] {
            if flag {
                out.push((key, "true".into()));
            }
        }
        out
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tag the unlabeled target text with the entity lexicon.
    Annotate,
    /// Solve the transport problem and write the re-tokenization policy.
    Solve,
    /// Sample a subword-level source corpus from the policy.
    Retokenize,
    /// Report KL divergences before and after re-tokenization.
    Diagnose,
    /// Time the solver on a seeded random sparse instance.
    Bench {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 0.01)]
        density: f64,
        /// Omit the CSV header line.
        #[arg(long)]
        no_header: bool,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env()?;
    for (key, value) in cli.overrides.pairs() {
        cfg.set(key, &value)?;
    }
    for kv in &cli.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{kv}`")))?;
        cfg.set(key.trim(), value)?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Annotate => {
            let out = cmd_annotate(&cfg)?;
            let s = out.summary;
            println!(
                "annotated {} sentences, {} tokens: {} entity spans, {} entity tokens (coverage {:.4})",
                s.sentences,
                s.tokens,
                s.entity_spans,
                s.entity_tokens,
                s.coverage()
            );
            println!("wrote {}", out.output.display());
        }
        Command::Solve => {
            let out = cmd_solve(&cfg)?;
            let s = &out.stats;
            if !s.converged {
                eprintln!(
                    "warning: solver stopped after {} iterations with marginal error {:e}",
                    s.iterations, s.marginal_error
                );
            }
            println!(
                "instance {}x{} with {} finite cells; {} iterations, marginal error {:e}; {} policy entries ({} fallback)",
                s.rows, s.cols, s.finite_cells, s.iterations, s.marginal_error, s.policy_entries, s.fallback_entries
            );
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Retokenize => {
            let out = cmd_retokenize(&cfg)?;
            println!("re-tokenized {} words into {} subwords", out.words, out.subwords);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Diagnose => {
            let out = cmd_diagnose(&cfg)?;
            print!("{}", out.report.to_table());
            for f in &out.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Bench {
            rows,
            cols,
            density,
            no_header,
        } => {
            let record = cmd_bench(
                &cfg,
                BenchArgs {
                    rows: *rows,
                    cols: *cols,
                    density: *density,
                },
            )?;
            if !no_header {
                println!("{}", BenchRecord::CSV_HEADER);
            }
            println!("{}", record.csv_row());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
