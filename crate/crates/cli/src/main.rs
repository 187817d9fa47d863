use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use nrel_core::config::Config;
use nrel_core::corpus::{load_corpus, Corpus};
use nrel_core::embed::{open_embeddings, EmbeddingStore};
use nrel_core::extractor::{train_low, ExtractorModel};
use nrel_core::graph::GraphConfig;
use nrel_core::harness::{
    ablation_variants, baseline_report, emit_report, evaluate_seeds, hash_store, load_reports, render_table,
    run_pipeline, split_corpus, synth_generate, Baseline, EvalReport, Mode, Models, OverallScope, SynthConfig,
};
use nrel_core::retriever::{train_high, RetrieverModel};

const SPLIT: (f64, f64, f64) = (0.6, 0.2, 0.2);

#[derive(Parser)]
#[command(name = "nrel", version, about = "Document-level N-ary relation extraction over paragraphs and tables")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a corpus file and print its statistics.
    Ingest { corpus: PathBuf },
    /// Generate a synthetic corpus plus matching hash embeddings.
    Synth {
        #[arg(long, default_value_t = 100)]
        docs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Output directory; receives `corpus.json` and `embeddings.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write hash embeddings for every key of a corpus.
    EmbedHash {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage and write its checkpoint.
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
        #[command(flatten)]
        data: Data,
        /// Labelled corpus used for early stopping.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a method, training one model per seed unless checkpoints are given.
    Eval {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        eval: EvalOpts,
        /// Score a zero-parameter baseline instead (high mode only).
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        /// Evaluate this trained retriever on the whole corpus.
        #[arg(long)]
        retriever: Option<PathBuf>,
        /// Evaluate this trained extractor on the whole corpus.
        #[arg(long)]
        extractor: Option<PathBuf>,
        #[arg(long, default_value = "ReSel")]
        method: String,
    },
    /// Compare the full model with each listed view removed.
    Ablate {
        /// Comma list drawn from cs,es,el (retriever) or bon,gat,os,mva (extractor).
        #[arg(long, value_delimiter = ',', required = true)]
        flags: Vec<String>,
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        eval: EvalOpts,
    },
    /// Merge saved reports into one aligned table.
    Report {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Merged JSON path; the table goes to the same path with `.txt`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct Data {
    #[arg(long)]
    corpus: PathBuf,
    /// Embedding file; texts without a record fall back to hash embeddings.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Fallback dimension when no embedding file is given.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvalOpts {
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long, value_enum, default_value_t = ScopeArg::Predicted)]
    scope: ScopeArg,
    /// Number of top-ranked components whose entities form the overall candidate set.
    #[arg(long, default_value_t = 1)]
    topk_union: usize,
    #[arg(long, default_value_t = 7)]
    split_seed: u64,
    /// JSON report path; a text table is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    High,
    Low,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    High,
    Low,
    Overall,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum ScopeArg {
    Predicted,
    Whole,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Tfidf,
    Bm25,
    Ecs,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::High => Mode::High,
            ModeArg::Low => Mode::Low,
            ModeArg::Overall => Mode::Overall,
        }
    }
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Tfidf => Baseline::Tfidf,
            BaselineArg::Bm25 => Baseline::Bm25,
            BaselineArg::Ecs => Baseline::Ecs,
        }
    }
}

impl EvalOpts {
    fn scope(&self) -> Result<OverallScope> {
        if self.topk_union == 0 {
            bail!("--topk-union must be at least 1");
        }
        Ok(match self.scope {
            ScopeArg::Predicted => OverallScope::Predicted { k: self.topk_union },
            ScopeArg::Whole => OverallScope::WholeDocument,
        })
    }
}

/// An input file that does not exist; reported with exit code 2.
#[derive(Debug)]
struct MissingArtifact(PathBuf);

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing artifact: {}", self.0.display())
    }
}

impl std::error::Error for MissingArtifact {}

fn need(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(MissingArtifact(path.to_path_buf()).into())
    }
}

impl Data {
    fn load(&self) -> Result<(Corpus, EmbeddingStore, Config)> {
        let corpus = load_corpus(need(&self.corpus)?)?;
        let store = match &self.embeddings {
            Some(p) => open_embeddings(need(p)?)?,
            None => EmbeddingStore::new(self.dim),
        };
        let cfg = match &self.config {
            Some(p) => Config::load(need(p)?)?,
            None => Config::default(),
        };
        Ok((corpus, store, cfg))
    }
}

fn write_reports(reports: &[EvalReport], out: Option<&Path>) -> Result<()> {
    print!("{}", render_table(reports));
    if let Some(path) = out {
        let txt = emit_report(reports, path)?;
        eprintln!("wrote {} and {}", path.display(), txt.display());
    }
    Ok(())
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Ingest { corpus } => {
            let c = load_corpus(need(&corpus)?)?;
            let comps: usize = c.documents.iter().map(|d| d.components.len()).sum();
            let tables: usize = c.documents.iter().flat_map(|d| &d.components).filter(|c| c.is_table()).count();
            let ents: usize = c.documents.iter().map(|d| d.entity_count()).sum();
            println!(
                "ok: n={} documents={} components={comps} tables={tables} entities={ents} queries={}",
                c.n,
                c.documents.len(),
                c.query_count()
            );
        }
        Cmd::Synth { docs, seed, noise, dim, out } => {
            let cfg = SynthConfig {
                n_docs: docs,
                seed,
                vocab_seed: seed,
                noise,
                emb_dim: dim,
                ..SynthConfig::default()
            };
            let (corpus, store) = synth_generate(&cfg)?;
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            corpus.save(out.join("corpus.json"))?;
            store.save(out.join("embeddings.jsonl"))?;
            println!("wrote {} documents, {} queries to {}", corpus.documents.len(), corpus.query_count(), out.display());
        }
        Cmd::EmbedHash { corpus, dim, out } => {
            if dim < 8 {
                bail!("--dim must be at least 8");
            }
            let c = load_corpus(need(&corpus)?)?;
            let store = hash_store(&c, dim);
            store.save(&out)?;
            println!("wrote {} vectors of dim {dim} to {}", store.len(), out.display());
        }
        Cmd::Train { stage, data, dev, out } => {
            let (corpus, store, cfg) = data.load()?;
            let dev = dev.map(|p| anyhow::Ok(load_corpus(need(&p)?)?)).transpose()?;
            let curve = match stage {
                Stage::High => {
                    let (m, curve) = train_high(&corpus, dev.as_ref(), &store, &cfg)?;
                    m.save(&out)?;
                    curve
                }
                Stage::Low => {
                    let (m, curve) = train_low(&corpus, dev.as_ref(), &store, &cfg)?;
                    m.save(&out)?;
                    curve
                }
            };
            println!(
                "trained {} epochs, loss {:.4} -> {:.4}, kept epoch {}; wrote {}",
                curve.epochs.len(),
                curve.initial,
                curve.epochs.last().copied().unwrap_or(curve.initial),
                curve.best_epoch,
                out.display()
            );
        }
        Cmd::Eval { mode, data, eval, baseline, retriever, extractor, method } => {
            let (corpus, store, cfg) = data.load()?;
            let mode = Mode::from(mode);
            let scope = eval.scope()?;
            let report = if let Some(b) = baseline {
                if mode != Mode::High {
                    bail!("baselines rank components; use --mode high");
                }
                baseline_report(b.into(), &corpus, &store, &cfg)
            } else if retriever.is_some() || extractor.is_some() {
                let models = Models {
                    retriever: retriever.map(|p| anyhow::Ok(RetrieverModel::load(need(&p)?)?)).transpose()?,
                    extractor: extractor.map(|p| anyhow::Ok(ExtractorModel::load(need(&p)?)?)).transpose()?,
                };
                let outcomes = run_pipeline(&corpus, &store, &models, mode, scope, &GraphConfig::from_config(&cfg))?;
                EvalReport::from_runs(&method, mode, &cfg, &[(cfg.seed, outcomes)])
            } else {
                let split = split_corpus(&corpus, SPLIT, eval.split_seed)?;
                evaluate_seeds(&method, &split, &store, &cfg, mode, scope, &eval.seeds)?
            };
            write_reports(&[report], eval.out.as_deref())?;
        }
        Cmd::Ablate { flags, data, eval } => {
            let (corpus, store, cfg) = data.load()?;
            let flags: Vec<String> = flags.iter().map(|f| f.trim().to_ascii_lowercase()).collect();
            let high = ["cs", "es", "el"];
            let low = ["bon", "gat", "os", "mva"];
            let mode = if flags.iter().all(|f| high.contains(&f.as_str())) {
                Mode::High
            } else if flags.iter().all(|f| low.contains(&f.as_str())) {
                Mode::Low
            } else {
                bail!("flags must all come from cs,es,el or all from bon,gat,os,mva");
            };
            let wanted: Vec<String> = flags.iter().map(|f| format!("w/o {}", f.to_ascii_uppercase())).collect();
            let split = split_corpus(&corpus, SPLIT, eval.split_seed)?;
            let scope = eval.scope()?;
            let mut reports = Vec::new();
            for (i, (name, variant)) in ablation_variants(&cfg, mode).into_iter().enumerate() {
                if i == 0 || wanted.contains(&name) {
                    reports.push(evaluate_seeds(&name, &split, &store, &variant, mode, scope, &eval.seeds)?);
                }
            }
            write_reports(&reports, eval.out.as_deref())?;
        }
        Cmd::Report { inputs, out } => {
            let mut reports = Vec::new();
            for p in &inputs {
                reports.extend(load_reports(need(p)?)?);
            }
            write_reports(&reports, Some(&out))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<MissingArtifact>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
