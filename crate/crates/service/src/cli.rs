//! The `tokenlattice` command line.
//!
//! Exit codes: 0 success, 2 usage or validation failure, 3 failure of
//! something external (model provider, embedding server, network bind).
//! Data goes to stdout, logs to stderr.

use crate::api::{router, AppState};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tokenlattice::client::{
    import_corpus, ClientError, CompletionProvider, DiskCache, OpenAiChatProvider, OpenAiConfig, Sampler,
    CACHE_DIR_ENV, MODEL_ENV,
};
use tokenlattice::embedding::{
    EmbeddingError, EmbeddingProvider, FallbackEmbedder, RemoteEmbedder, RemoteEmbedderConfig,
};
use tokenlattice::lattice::{TokenLattice, DEFAULT_MERGE_THRESHOLD};
use tokenlattice::layout::{compute_layout, render_svg, LayoutExport, LayoutParams, SvgOptions};
use tokenlattice::retry::RetryPolicy;
use tokenlattice::segment::SegmentationMode;
use tokenlattice::session::LatticeEngine;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EXTERNAL: i32 = 3;

/// Environment variable naming the remote embedding endpoint.
pub const EMBED_URL_ENV: &str = "TOKENLATTICE_EMBED_URL";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    External(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::External(_) => EXIT_EXTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::External(m) => f.write_str(m),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        if e.is_external() {
            Self::External(e.to_string())
        } else {
            Self::Usage(e.to_string())
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Provider { .. } => Self::External(e.to_string()),
            other => Self::Usage(other.to_string()),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "tokenlattice",
    version,
    about = "Summarize many sampled completions as a token lattice"
)]
pub struct Cli {
    /// Config file of `key = value` lines; `[build]`-style sections apply
    /// to one subcommand. Flags win over the file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a lattice from a corpus file (JSON lines or plain text).
    Build(BuildArgs),
    /// Lay out a lattice and write SVG or layout JSON.
    Render(RenderArgs),
    /// Print summary statistics for a lattice.
    Stats(StatsArgs),
    /// Sample completions from an OpenAI-compatible endpoint as JSON lines.
    Sample(SampleArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Fallback,
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildFormat {
    Json,
    Dot,
}

#[derive(Args, Debug, Default)]
pub struct EmbedderArgs {
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    /// Remote embedding endpoint (also `TOKENLATTICE_EMBED_URL`).
    #[arg(long, value_name = "URL")]
    pub embedder_url: Option<String>,
    #[arg(long, value_name = "ID")]
    pub embedder_model: Option<String>,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long, short, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<SegmentationMode>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Prompt id for records that do not name one.
    #[arg(long)]
    pub prompt_id: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<BuildFormat>,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    /// Accepted for uniformity; building is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long, short, value_name = "FILE")]
    pub lattice: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub longtail: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub char_width: Option<f64>,
    #[arg(long)]
    pub font_size: Option<f64>,
    /// SVG output path, `-` for stdout.
    #[arg(long, value_name = "OUT")]
    pub svg: Option<PathBuf>,
    /// Layout JSON output path, `-` for stdout. The default when no
    /// `--svg` is given.
    #[arg(long, value_name = "OUT")]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub no_labels: bool,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long, short, value_name = "FILE")]
    pub lattice: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long, short)]
    pub prompt: Option<String>,
    #[arg(long, short)]
    pub n: Option<usize>,
    #[arg(long, short)]
    pub temperature: Option<f64>,
    /// Model id (also `TOKENLATTICE_MODEL`).
    #[arg(long, short)]
    pub model: Option<String>,
    #[arg(long)]
    pub prompt_id: Option<String>,
    /// Endpoint root such as `https://api.openai.com/v1` (also
    /// `TOKENLATTICE_BASE_URL`). The key comes from `TOKENLATTICE_API_KEY`.
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Response cache (also `TOKENLATTICE_CACHE_DIR`).
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Passed to the provider as its sampling seed; part of the cache key.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long, short)]
    pub port: Option<u16>,
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Model used when a prompt does not name one.
    #[arg(long)]
    pub model: Option<String>,
    /// Allowed browser origin; any when unset.
    #[arg(long)]
    pub cors_origin: Option<String>,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_mode(s: &str) -> Result<SegmentationMode, String> {
    s.parse().map_err(|e: tokenlattice::segment::UnknownMode| e.to_string())
}

/// Flat `key = value` settings, optionally grouped by subcommand.
#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        text.parse::<toml::Table>()
            .map(|table| Self { table })
            .map_err(|e| e.message().to_string())
    }

    /// `[section] key` first, then top-level `key`.
    pub fn get<T: DeserializeOwned>(&self, section: &str, key: &str) -> Result<Option<T>, CliError> {
        let scoped = self
            .table
            .get(section)
            .and_then(|s| s.as_table())
            .and_then(|t| t.get(key));
        let Some(v) = scoped.or_else(|| self.table.get(key).filter(|v| !v.is_table())) else {
            return Ok(None);
        };
        v.clone()
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| usage(format!("config key `{key}`: {}", e.message())))
    }
}

/// Flag, else config, else default.
macro_rules! pick {
    ($cfg:expr, $section:expr, $flag:expr, $key:literal) => {
        match $flag.clone() {
            Some(v) => Some(v),
            None => $cfg.get($section, $key)?,
        }
    };
    ($cfg:expr, $section:expr, $flag:expr, $key:literal, $default:expr) => {
        pick!($cfg, $section, $flag, $key).unwrap_or_else(|| $default)
    };
}

fn env(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn mode_from(cfg: &ConfigFile, section: &str, flag: Option<SegmentationMode>) -> Result<SegmentationMode, CliError> {
    match flag {
        Some(m) => Ok(m),
        None => match cfg.get::<String>(section, "mode")? {
            Some(s) => s.parse().map_err(usage),
            None => Ok(SegmentationMode::Space),
        },
    }
}

fn embedder(cfg: &ConfigFile, section: &str, args: &EmbedderArgs) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
    let kind = match args.embedder {
        Some(k) => k,
        None => cfg.get(section, "embedder")?.unwrap_or(EmbedderKind::Fallback),
    };
    match kind {
        EmbedderKind::Fallback => Ok(Arc::new(FallbackEmbedder::default())),
        EmbedderKind::Remote => {
            let url = match &args.embedder_url {
                Some(u) => Some(u.clone()),
                None => cfg.get(section, "embedder_url")?.or_else(|| env(EMBED_URL_ENV)),
            }
            .ok_or_else(|| usage(format!("--embedder remote needs --embedder-url or {EMBED_URL_ENV}")))?;
            let mut config = RemoteEmbedderConfig::new(url);
            if let Some(m) = pick!(cfg, "embedder", args.embedder_model, "embedder_model") {
                config.model = m;
            }
            Ok(Arc::new(RemoteEmbedder::new(config)))
        }
    }
}

fn write_out(path: Option<&Path>, body: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, body).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            log::info!("wrote {}", p.display());
            Ok(())
        }
        _ => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body)
                .and_then(|_| stdout.flush())
                .map_err(|e| usage(format!("stdout: {e}")))
        }
    }
}

fn read_lattice(path: Option<PathBuf>) -> Result<TokenLattice, CliError> {
    let path = path.ok_or_else(|| usage("--lattice is required"))?;
    let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    TokenLattice::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn build(cfg: &ConfigFile, args: BuildArgs) -> Result<(), CliError> {
    let input: PathBuf = pick!(cfg, "build", args.input, "input").ok_or_else(|| usage("--input is required"))?;
    let mode = mode_from(cfg, "build", args.mode)?;
    let threshold: f64 = pick!(cfg, "build", args.threshold, "threshold", DEFAULT_MERGE_THRESHOLD);
    if !threshold.is_finite() {
        return Err(usage("--threshold must be a finite number"));
    }
    let prompt_id: String = pick!(cfg, "build", args.prompt_id, "prompt_id", "prompt".to_string());
    let format = pick!(cfg, "build", args.format, "format", BuildFormat::Json);
    let out: Option<PathBuf> = pick!(cfg, "build", args.out, "out");

    let gens = import_corpus(&input, &prompt_id).map_err(|e| usage(format!("{}: {e}", input.display())))?;
    if gens.is_empty() {
        return Err(usage(format!("{}: no completions", input.display())));
    }
    log::info!(
        "building {} generations, mode {mode}, threshold {threshold}",
        gens.len()
    );
    let engine = LatticeEngine::new(embedder(cfg, "build", &args.embedder)?);
    let refs: Vec<_> = gens.iter().collect();
    let lattice = engine.lattice(mode, &refs, threshold)?.lattice;
    let body = match format {
        BuildFormat::Json => lattice.to_json() + "\n",
        BuildFormat::Dot => lattice.to_dot(),
    };
    write_out(out.as_deref(), body.as_bytes())
}

pub fn render(cfg: &ConfigFile, args: RenderArgs) -> Result<(), CliError> {
    let lattice = read_lattice(pick!(cfg, "render", args.lattice, "lattice"))?;
    let defaults = LayoutParams::default();
    let params = LayoutParams {
        lambda: pick!(cfg, "render", args.lambda, "lambda", defaults.lambda),
        longtail: pick!(cfg, "render", args.longtail, "longtail", defaults.longtail),
        seed: pick!(cfg, "render", args.seed, "seed", defaults.seed),
        char_width: pick!(cfg, "render", args.char_width, "char_width", defaults.char_width),
        font_size: pick!(cfg, "render", args.font_size, "font_size", defaults.font_size),
        ..defaults
    };
    let layout = compute_layout(&lattice, &params).map_err(usage)?;
    if !layout.converged {
        log::warn!("layout did not converge in {} iterations", layout.iterations_used);
    }
    let svg: Option<PathBuf> = pick!(cfg, "render", args.svg, "svg");
    let json: Option<PathBuf> = pick!(cfg, "render", args.layout, "layout");
    if let Some(path) = &svg {
        let opts = SvgOptions {
            labels: !args.no_labels,
            ..SvgOptions::default()
        };
        write_out(Some(path), render_svg(&layout, &opts).as_bytes())?;
    }
    if json.is_some() || svg.is_none() {
        let body =
            serde_json::to_string_pretty(&LayoutExport::new(&layout, &params)).expect("layout serializes") + "\n";
        write_out(json.as_deref(), body.as_bytes())?;
    }
    Ok(())
}

pub fn stats(cfg: &ConfigFile, args: StatsArgs) -> Result<(), CliError> {
    let lattice = read_lattice(pick!(cfg, "stats", args.lattice, "lattice"))?;
    let body = serde_json::to_string_pretty(&lattice.stats()).expect("stats serialize") + "\n";
    write_out(None, body.as_bytes())
}

fn default_cache_dir() -> PathBuf {
    if let Some(d) = env(CACHE_DIR_ENV) {
        return d.into();
    }
    if let Some(d) = env("XDG_CACHE_HOME") {
        return Path::new(&d).join("tokenlattice");
    }
    match env("HOME") {
        Some(h) => Path::new(&h).join(".cache").join("tokenlattice"),
        None => PathBuf::from(".tokenlattice-cache"),
    }
}

fn provider_config(cfg: &ConfigFile, section: &str, base_url: &Option<String>) -> Result<OpenAiConfig, CliError> {
    let mut config = OpenAiConfig::from_env();
    if let Some(url) = pick!(cfg, section, base_url, "base_url") {
        config.base_url = url;
    }
    Ok(config)
}

pub fn sample(cfg: &ConfigFile, args: SampleArgs) -> Result<(), CliError> {
    let prompt: String = pick!(cfg, "sample", args.prompt, "prompt").ok_or_else(|| usage("--prompt is required"))?;
    let n: usize = pick!(cfg, "sample", args.n, "n", 20);
    let temperature: f64 = pick!(cfg, "sample", args.temperature, "temperature", 0.7);
    let model: String = match pick!(cfg, "sample", args.model, "model") {
        Some(m) => m,
        None => env(MODEL_ENV).ok_or_else(|| usage(format!("--model or {MODEL_ENV} is required")))?,
    };
    let prompt_id: String = pick!(cfg, "sample", args.prompt_id, "prompt_id", "prompt".to_string());
    let retries: u32 = pick!(cfg, "sample", args.retries, "retries", RetryPolicy::default().attempts);
    let seed: Option<u64> = pick!(cfg, "sample", args.seed, "seed");
    let out: Option<PathBuf> = pick!(cfg, "sample", args.out, "out");

    let provider = OpenAiChatProvider::new(provider_config(cfg, "sample", &args.base_url)?);
    let mut sampler = Sampler::new(provider).with_retry(RetryPolicy {
        attempts: retries.max(1),
        ..RetryPolicy::default()
    });
    if !args.no_cache {
        let dir: PathBuf = pick!(cfg, "sample", args.cache_dir, "cache_dir").unwrap_or_else(default_cache_dir);
        sampler = sampler.with_cache(DiskCache::new(dir));
    }
    let mut request = sampler.request(prompt, model, temperature, n);
    request.client_seed = seed;
    let gens = sampler.sample(&request, &prompt_id)?;
    log::info!(
        "{} completions, {} provider call(s)",
        gens.len(),
        sampler.provider_calls()
    );
    let mut body = String::new();
    for g in &gens {
        body.push_str(&serde_json::to_string(g).expect("generation serializes"));
        body.push('\n');
    }
    write_out(out.as_deref(), body.as_bytes())
}

pub fn serve(cfg: &ConfigFile, args: ServeArgs) -> Result<(), CliError> {
    let host: String = pick!(cfg, "serve", args.host, "host", "127.0.0.1".to_string());
    let port: u16 = pick!(cfg, "serve", args.port, "port", 8080);
    let cache_dir: PathBuf = pick!(cfg, "serve", args.cache_dir, "cache_dir").unwrap_or_else(default_cache_dir);
    let model: String = match pick!(cfg, "serve", args.model, "model") {
        Some(m) => m,
        None => env(MODEL_ENV).unwrap_or_else(|| "gpt-4o-mini".to_string()),
    };
    let cors: Option<String> = pick!(cfg, "serve", args.cors_origin, "cors_origin");
    let provider: Arc<dyn CompletionProvider> =
        Arc::new(OpenAiChatProvider::new(provider_config(cfg, "serve", &args.base_url)?));
    let sampler = Arc::new(Sampler::new(provider).with_cache(DiskCache::new(&cache_dir)));
    let engine = Arc::new(LatticeEngine::new(embedder(cfg, "serve", &args.embedder)?));
    let state = Arc::new(AppState::new(engine, sampler, model));
    let app = router(state, cors.as_deref()).map_err(|e| usage(e.message))?;

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::External(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .map_err(|e| CliError::External(format!("bind {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::External(e.to_string()))?;
        log::info!("listening on http://{addr}, cache {}", cache_dir.display());
        eprintln!("listening on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::External(e.to_string()))
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Build(a) => build(&cfg, a),
        Command::Render(a) => render(&cfg, a),
        Command::Stats(a) => stats(&cfg, a),
        Command::Sample(a) => sample(&cfg, a),
        Command::Serve(a) => serve(&cfg, a),
    }
}

/// Parses `std::env::args`, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("RUST_LOG")
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tokenlattice: {e}");
            e.code()
        }
    }
}
