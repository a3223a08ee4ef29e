//! `repolens` command line: the four features plus chat, against a running
//! server or an in-process pipeline.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use repolens_core::dispatch::{ApiError, ApiErrorCode, ChatRequest, Dispatcher, FeatureRequest, ServiceConfig};
use repolens_core::prompt::TaskKind;
use repolens_core::repo::{parse_repo_url, LineRange, RepoService, SelectionSpan};
use repolens_core::response::FeatureResponse;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_API: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Md,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "repolens", version, about = "Explain, refactor and assess code in GitHub repositories")]
pub struct Cli {
    /// Base URL of a running repolens server.
    #[arg(long, global = true, env = "REPOLENS_SERVER", conflicts_with = "embedded")]
    pub server: Option<String>,
    /// Run the pipeline in-process (the default without --server).
    #[arg(long, global = true)]
    pub embedded: bool,
    /// Answer from the built-in mock model; no inference provider is contacted.
    #[arg(long, global = true, conflicts_with = "server")]
    pub mock_inference: bool,
    /// JSON mock script (rules, fallback, delay); implies --mock-inference.
    #[arg(long, global = true, value_name = "FILE", conflicts_with = "server")]
    pub mock_script: Option<PathBuf>,
    /// Read repository data from recorded API fixtures instead of the network.
    #[arg(long, global = true, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "md")]
    pub format: Format,
    /// Environment variable holding the inference API key.
    #[arg(long, global = true, value_name = "VAR")]
    pub token_env: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Target {
    /// Repository or blob URL.
    pub repo_url: String,
    /// File path in the repository; optional when the URL names a file.
    pub path: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain a whole file, or a line range of it.
    Explain {
        #[command(flatten)]
        target: Target,
        /// Line range to explain, e.g. 9-13 or 7; defaults to the URL's #L fragment
        #[arg(long, value_name = "A-B", value_parser = parse_lines)]
        lines: Option<LineRange>,
    },
    /// Refactor a file; the code goes to stdout or --output.
    Refactor {
        #[command(flatten)]
        target: Target,
        /// Write the refactored code here instead of stdout
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Report quality metrics and vulnerability findings.
    Quality {
        #[command(flatten)]
        target: Target,
    },
    /// Explain a file, then answer follow-up questions read from stdin.
    Chat {
        #[command(flatten)]
        target: Target,
    },
    /// Run the HTTP server.
    Serve {
        #[arg(long, value_name = "ADDR")]
        listen: Option<String>,
    },
}

pub fn parse_lines(s: &str) -> Result<LineRange, String> {
    let num = |t: &str| t.trim().trim_start_matches(['L', 'l']).parse::<u32>().map_err(|_| format!("{t:?} is not a line number"));
    let (a, b) = match s.split_once('-') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => (num(s)?, num(s)?),
    };
    if a == 0 || a > b {
        return Err(format!("line range {s} must satisfy 1 <= A <= B"));
    }
    Ok(LineRange { start_line: a, end_line: b })
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Api(ApiError),
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Api(_) => EXIT_API,
            CliError::Transport(_) => EXIT_TRANSPORT,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Api(e) => write!(f, "error: {}: {}", e.code, e.message),
            CliError::Transport(m) => write!(f, "error: transport: {m}"),
        }
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        CliError::Api(e)
    }
}

fn io_error(what: &str, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{what}: {e}"))
}

#[allow(clippy::large_enum_variant)]
enum Backend {
    Embedded(Arc<Dispatcher>),
    Remote { client: reqwest::Client, base: String, repos: RepoService },
}

impl Backend {
    fn new(cli: &Cli) -> Result<(Self, ServiceConfig), CliError> {
        let mut config = ServiceConfig::from_env().map_err(|e| CliError::Usage(e.to_string()))?;
        if cli.fixtures.is_some() {
            config.fixtures_dir = cli.fixtures.clone();
        }
        if cli.mock_script.is_some() {
            config.mock_script = cli.mock_script.clone();
        }
        config.mock_inference |= cli.mock_inference || cli.mock_script.is_some();
        if let Some(var) = &cli.token_env {
            let key = std::env::var(var).map_err(|_| CliError::Usage(format!("environment variable {var} is not set")))?;
            config.model.api_key = Some(key);
        }
        let backend = match &cli.server {
            Some(base) => {
                let client = reqwest::Client::builder()
                    .timeout(config.model.request_timeout * (config.model.max_retries + 2))
                    .build()
                    .map_err(|e| CliError::Transport(e.to_string()))?;
                let transport = config.transport().map_err(|e| CliError::Usage(e.to_string()))?;
                let repos = RepoService::new(transport, config.repo.clone());
                Backend::Remote { client, base: base.trim_end_matches('/').to_string(), repos }
            }
            None => Backend::Embedded(Arc::new(config.build().map_err(|e| CliError::Usage(e.to_string()))?)),
        };
        Ok((backend, config))
    }

    fn repos(&self) -> &RepoService {
        match self {
            Backend::Embedded(d) => d.repos(),
            Backend::Remote { repos, .. } => repos,
        }
    }

    async fn post<T: serde::Serialize>(client: &reqwest::Client, url: String, body: &T) -> Result<FeatureResponse, CliError> {
        let transport = |e: reqwest::Error| CliError::Transport(e.without_url().to_string());
        let response = client.post(url).json(body).send().await.map_err(transport)?;
        let ok = response.status().is_success();
        let bytes = response.bytes().await.map_err(transport)?;
        if ok {
            serde_json::from_slice(&bytes).map_err(|e| CliError::Transport(format!("unexpected server reply: {e}")))
        } else {
            let e: ApiError = serde_json::from_slice(&bytes).map_err(|e| CliError::Transport(format!("unexpected server error reply: {e}")))?;
            Err(CliError::Api(e))
        }
    }

    async fn feature(&self, req: FeatureRequest) -> Result<FeatureResponse, CliError> {
        match self {
            Backend::Embedded(d) => Ok(d.handle_feature(req).await?),
            Backend::Remote { client, base, .. } => {
                let route = match req.task {
                    TaskKind::ExplainFile => "explain/file",
                    TaskKind::ExplainSelection => "explain/selection",
                    TaskKind::Refactor => "refactor",
                    TaskKind::QualityAttributes => "quality",
                    TaskKind::ChatTurn => "chat",
                };
                Self::post(client, format!("{base}/v1/{route}"), &req).await
            }
        }
    }

    async fn chat(&self, req: ChatRequest) -> Result<FeatureResponse, CliError> {
        match self {
            Backend::Embedded(d) => Ok(d.handle_chat(req).await?),
            Backend::Remote { client, base, .. } => Self::post(client, format!("{base}/v1/chat"), &req).await,
        }
    }
}

pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

fn request(task: TaskKind, target: &Target) -> FeatureRequest {
    FeatureRequest {
        task,
        repo_url: target.repo_url.clone(),
        file_path: target.path.clone(),
        selection: None,
        session_id: None,
    }
}

fn warn(io: &mut Io<'_>, r: &FeatureResponse) -> std::io::Result<()> {
    for w in &r.warnings {
        writeln!(io.stderr, "warning: {w}")?;
    }
    Ok(())
}

fn print_response(io: &mut Io<'_>, format: Format, r: &FeatureResponse) -> Result<(), CliError> {
    let out = |e| io_error("writing output", e);
    match format {
        Format::Md => {
            writeln!(io.stdout, "{}", r.body_markdown).map_err(out)?;
            warn(io, r).map_err(out)
        }
        Format::Json => writeln!(io.stdout, "{}", serde_json::to_string_pretty(r).expect("serializable")).map_err(out),
    }
}

/// Builds the selection for `lines` from the file's own text.
async fn selection(backend: &Backend, target: &Target, lines: LineRange) -> Result<SelectionSpan, CliError> {
    let parsed = parse_repo_url(&target.repo_url).map_err(ApiError::from)?;
    let path = target
        .path
        .clone()
        .or(parsed.path)
        .ok_or_else(|| CliError::Api(ApiError::malformed("file_path is required")))?;
    let file = backend.repos().fetch_file(&parsed.repo, &path).await.map_err(ApiError::from)?;
    let text = file.line_text(lines).ok_or_else(|| {
        CliError::Api(ApiError::new(
            ApiErrorCode::SelectionOutOfRange,
            format!("lines {}-{} are outside {} ({} lines)", lines.start_line, lines.end_line, file.path, file.line_count),
        ))
    })?;
    Ok(SelectionSpan { start_line: lines.start_line, end_line: lines.end_line, text })
}

async fn execute(cli: Cli, io: &mut Io<'_>) -> Result<(), CliError> {
    let (backend, config) = Backend::new(&cli)?;
    let out = |e| io_error("writing output", e);
    match &cli.command {
        Command::Explain { target, lines } => {
            let lines = lines.or_else(|| parse_repo_url(&target.repo_url).ok().and_then(|p| p.lines));
            let req = match lines {
                Some(range) => FeatureRequest {
                    selection: Some(selection(&backend, target, range).await?),
                    ..request(TaskKind::ExplainSelection, target)
                },
                None => request(TaskKind::ExplainFile, target),
            };
            let r = backend.feature(req).await?;
            print_response(io, cli.format, &r)
        }
        Command::Refactor { target, output } => {
            let r = backend.feature(request(TaskKind::Refactor, target)).await?;
            let code = r.refactored_code.as_ref().ok_or_else(|| CliError::Transport("reply has no refactored code".into()))?;
            if let Some(path) = output {
                std::fs::write(path, &code.code).map_err(|e| io_error(&format!("writing {}", path.display()), e))?;
            }
            match cli.format {
                Format::Json => print_response(io, cli.format, &r),
                Format::Md => {
                    if output.is_none() {
                        write!(io.stdout, "{}", code.code).map_err(out)?;
                    }
                    if !code.change_notes.is_empty() {
                        writeln!(io.stderr, "## Changes").map_err(out)?;
                        for note in &code.change_notes {
                            writeln!(io.stderr, "- {note}").map_err(out)?;
                        }
                    }
                    warn(io, &r).map_err(out)
                }
            }
        }
        Command::Quality { target } => {
            let r = backend.feature(request(TaskKind::QualityAttributes, target)).await?;
            match (cli.format, &r.quality) {
                (Format::Json, Some(q)) => {
                    writeln!(io.stdout, "{}", serde_json::to_string_pretty(q).expect("serializable")).map_err(out)?;
                    warn(io, &r).map_err(out)
                }
                _ => print_response(io, Format::Md, &r),
            }
        }
        Command::Chat { target } => {
            let seed = backend.feature(request(TaskKind::ExplainFile, target)).await?;
            print_response(io, cli.format, &seed)?;
            let session_id = seed.session_id.clone().ok_or_else(|| CliError::Transport("reply has no session id".into()))?;
            let mut line = String::new();
            loop {
                line.clear();
                if io.stdin.read_line(&mut line).map_err(|e| io_error("reading stdin", e))? == 0 {
                    return Ok(());
                }
                let message = line.trim();
                if message.is_empty() {
                    continue;
                }
                let r = backend.chat(ChatRequest { session_id: session_id.clone(), message: message.to_string() }).await?;
                match cli.format {
                    Format::Md => {
                        writeln!(io.stdout, "\n> {message}\n\n{}", r.body_markdown).map_err(out)?;
                        warn(io, &r).map_err(out)?;
                    }
                    Format::Json => writeln!(io.stdout, "{}", serde_json::to_string(&r).expect("serializable")).map_err(out)?,
                }
            }
        }
        Command::Serve { listen } => {
            let Backend::Embedded(d) = backend else {
                return Err(CliError::Usage("serve runs the pipeline itself; drop --server".into()));
            };
            repolens_server::init_tracing();
            let addr = listen.clone().unwrap_or(config.listen.clone());
            repolens_server::serve(d, &config.cors_origins, &addr).await.map_err(|e| CliError::Transport(e.to_string()))
        }
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub async fn run_async<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let display_only = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let sink: &mut dyn Write = if display_only { &mut *io.stdout } else { &mut *io.stderr };
            let _ = write!(sink, "{}", e.render());
            return if display_only { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match execute(cli, io).await {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(io.stderr, "{e}");
            e.exit_code()
        }
    }
}

/// Blocking form of [`run_async`] on a fresh runtime.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: cannot start runtime: {e}");
            return EXIT_TRANSPORT;
        }
    };
    runtime.block_on(run_async(args, io))
}
