use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use orient_core::docstore::{self, store, CorpusRecord};
use orient_core::intent::{build_intent_index, evaluate_intent, read_labeled_jsonl, IntentParams};
use orient_core::service::{configured_embedder, http, ChatRequest, Config, Engine, IngestSummary};

#[derive(Parser)]
#[command(name = "orient", version, about = "Campus consultation engine")]
struct Cli {
    /// TOML config file; ALOHA_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        /// Overrides `bind` from the config.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Answer one message and print the wire response as JSON.
    Query {
        text: String,
        /// Language tag, or `auto` to detect.
        #[arg(long, default_value = "auto")]
        lang: String,
    },
    /// Build a store from corpus JSONL (a file or a directory of *.jsonl).
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge new records into an existing store.
    Refresh {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        add: PathBuf,
    },
    /// Intent accuracy and candidate recall on a labelled test set.
    EvalIntent {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long)]
        k_vote: Option<usize>,
        #[arg(long)]
        no_hic: bool,
    },
}

fn now() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn corpus_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .jsonl files in {}", path.display());
    }
    Ok(files)
}

/// Every record of every file, or all line errors at once.
fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for f in corpus_files(path)? {
        let text =
            std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        match docstore::parse_records(&text) {
            Ok(r) => records.extend(r),
            Err(errs) => problems.extend(
                errs.into_iter()
                    .map(|e| format!("{}:{}: {}", f.display(), e.line, e.message)),
            ),
        }
    }
    if !problems.is_empty() {
        bail!("invalid corpus records:\n  {}", problems.join("\n  "));
    }
    Ok(records)
}

fn summary(
    snapshot: &orient_core::CorpusSnapshot,
    added: usize,
    deduplicated: usize,
    replaced: usize,
) -> IngestSummary {
    IngestSummary {
        added,
        deduplicated,
        replaced,
        total: snapshot.len(),
        counts: snapshot.counts(),
        built_at: snapshot.built_at(),
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Serve { bind } => {
            let addr = bind.unwrap_or_else(|| config.bind.clone());
            let engine = Arc::new(Engine::from_config(config, now())?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                println!("listening on http://{}", listener.local_addr()?);
                http::serve(engine, listener).await?;
                Ok(())
            })
        }
        Command::Query { text, lang } => {
            let engine = Engine::from_config(config, now())?;
            let req = ChatRequest {
                message: text,
                lang: Some(lang),
                ..Default::default()
            };
            let r = engine
                .handle_chat(&req, now())
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            print_json(&r)
        }
        Command::Ingest { corpus, out } => {
            let records = read_corpus(&corpus)?;
            let embedder = configured_embedder(&config)?;
            let n = records.len();
            let snap = docstore::ingest(records, embedder.as_ref(), now())?;
            store::save_atomic(&snap, &out)?;
            print_json(&summary(&snap, n, 0, 0))
        }
        Command::Refresh { store: dir, add } => {
            let old =
                store::load(&dir).with_context(|| format!("loading store {}", dir.display()))?;
            let records = read_corpus(&add)?;
            let embedder = configured_embedder(&config)?;
            let out = docstore::refresh(&old, records, embedder.as_ref(), now())?;
            store::save_atomic(&out.snapshot, &dir)?;
            print_json(&summary(
                &out.snapshot,
                out.added,
                out.deduplicated,
                out.replaced,
            ))
        }
        Command::EvalIntent {
            train,
            test,
            k,
            k_vote,
            no_hic,
        } => {
            let read = |p: &Path| {
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
            };
            let train = read_labeled_jsonl(&read(&train)?)?;
            let test = read_labeled_jsonl(&read(&test)?)?;
            let embedder = configured_embedder(&config)?;
            let index = build_intent_index(&train, embedder.as_ref())?;
            let params = IntentParams {
                k,
                k_vote: k_vote.unwrap_or(config.k_vote),
                gate: config.intent_gate,
            };
            let report = evaluate_intent(&index, &test, embedder.as_ref(), &params, !no_hic)?;
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
