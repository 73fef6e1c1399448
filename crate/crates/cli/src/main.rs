use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use educhat_core::backend::{ChatBackend, MockBackend, RemoteBackend, RemoteConfig};
use educhat_core::dedup::{
    run_pipeline, DedupConfig, EmbeddingProvider, HashingEmbedder, HttpEmbeddingProvider, Parallelism, DEFAULT_BATCH_SIZE,
    DEFAULT_THRESHOLD, DEFAULT_TILE_SIZE,
};
use educhat_core::eval::{load_questions, run_eval, EvalConfig, EvalRetrieval};
use educhat_core::prompt::PromptComposer;
use educhat_core::retrieval::{HttpSearchProvider, RetrievalConfig};
use educhat_core::Locale;
use educhat_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "educhat", version, about = "Education chat service tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drop records whose embedding is too similar to an earlier kept one.
    Dedup(DedupArgs),
    /// Score a backend on multiple-choice questions.
    Eval(EvalArgs),
    /// Run the HTTP chat service.
    Serve {
        /// TOML configuration; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct DedupArgs {
    /// JSONL records with `id` and `text`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    tile_size: usize,
    /// Worker threads for the similarity pass; 0 uses every core, 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Embedding endpoint URL, or `hashing` for the built-in bag-of-words embedder.
    #[arg(long)]
    provider: String,
    #[arg(long, env = "EDUCHAT_EMBED_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum LocaleArg {
    En,
    Zh,
}

impl From<LocaleArg> for Locale {
    fn from(l: LocaleArg) -> Self {
        match l {
            LocaleArg::En => Locale::En,
            LocaleArg::Zh => Locale::Zh,
        }
    }
}

#[derive(clap::Args)]
struct EvalArgs {
    /// JSONL questions.
    #[arg(long)]
    questions: PathBuf,
    /// Generation endpoint URL, or `mock` for a backend that always answers A.
    #[arg(long)]
    backend: String,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    retrieval: Switch,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    self_check: Switch,
    /// Search endpoint, required with `--retrieval on`.
    #[arg(long)]
    search: Option<String>,
    #[arg(long, env = "EDUCHAT_SEARCH_API_KEY", hide_env_values = true)]
    search_key: Option<String>,
    #[arg(long, default_value_t = educhat_core::retrieval::DEFAULT_K)]
    k: usize,
    #[arg(long, value_enum, default_value_t = LocaleArg::Zh)]
    locale: LocaleArg,
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, env = "EDUCHAT_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
    /// Where to write the JSON report; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Dedup(args) => dedup(args),
        Command::Eval(args) => runtime().and_then(|rt| rt.block_on(eval(args))),
        Command::Serve { config } => runtime().and_then(|rt| rt.block_on(serve(config))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn dedup(args: DedupArgs) -> anyhow::Result<()> {
    let provider: Box<dyn EmbeddingProvider> = match args.provider.as_str() {
        "hashing" => Box::new(HashingEmbedder::default()),
        url if url.starts_with("http://") || url.starts_with("https://") => {
            Box::new(HttpEmbeddingProvider::new(url, args.api_key))
        }
        other => bail!("--provider must be an http(s) URL or `hashing`, got {other:?}"),
    };
    let config = DedupConfig {
        threshold: args.threshold,
        batch_size: args.batch_size,
        tile_size: args.tile_size,
        parallelism: match args.threads {
            0 => Parallelism::Parallel,
            1 => Parallelism::Sequential,
            n => Parallelism::Threads(n),
        },
    };
    let (_, summary) = run_pipeline(&args.input, &args.output, &args.report, provider.as_ref(), &config)?;
    println!("{summary}");
    Ok(())
}

async fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let questions = load_questions(&args.questions)?;
    let backend: Box<dyn ChatBackend> = if args.backend == "mock" {
        Box::new(MockBackend::new("A"))
    } else {
        Box::new(RemoteBackend::new(RemoteConfig {
            endpoint: args.backend.clone(),
            api_key: args.api_key.clone(),
            model: args.model.clone(),
        }))
    };
    let search = match (args.retrieval, &args.search) {
        (Switch::On, Some(url)) => Some(HttpSearchProvider::new(url.clone(), args.search_key.clone())),
        (Switch::On, None) => bail!("--retrieval on needs --search <url>"),
        (Switch::Off, _) => None,
    };
    let retrieval = search.as_ref().map(|provider| EvalRetrieval {
        provider,
        self_check: args.self_check == Switch::On,
        config: RetrievalConfig {
            k: args.k,
            ..RetrievalConfig::default()
        },
    });
    let config = EvalConfig {
        locale: args.locale.into(),
        concurrency: args.concurrency,
        ..EvalConfig::default()
    };
    let report = run_eval(&questions, backend.as_ref(), &PromptComposer::default(), retrieval, &config).await?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.report {
        Some(path) => write(path, &json)?,
        None => println!("{json}"),
    }
    eprintln!(
        "avg {:.4} over {} questions ({} unparseable, {} failed)",
        report.avg, report.n_total, report.n_unparseable, report.n_failed
    );
    Ok(())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}

async fn serve(config: Option<PathBuf>) -> anyhow::Result<()> {
    let config = match config {
        Some(path) => ServiceConfig::load(&path).with_context(|| format!("loading {}", path.display()))?,
        None => ServiceConfig::default(),
    };
    educhat_service::serve(&config).await?;
    Ok(())
}
