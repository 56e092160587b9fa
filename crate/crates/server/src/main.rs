use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use decomp_core::exec::KernelConfig;
use decomp_core::llm::provider::from_config;
use decomp_core::llm::{ProviderConfig, ProviderMode};
use decomp_core::service::ServiceConfig;
use decomp_server::{app, AppState};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Live,
    Scripted,
}

/// Serves the decomposition API and, optionally, the web client.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// One subdirectory per session is created here.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Live)]
    provider: Mode,
    /// Recorded responses, required with `--provider scripted`.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Command that starts a kernel sidecar speaking the line protocol.
    #[arg(long, conflicts_with = "stub_kernel")]
    kernel_cmd: Option<String>,
    /// Use the built-in stub kernel (the default without `--kernel-cmd`).
    #[arg(long)]
    stub_kernel: bool,
    /// Built web client to serve at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value = "gpt-4-turbo")]
    model: String,
    /// Base URL of an OpenAI-compatible chat completions API.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    endpoint: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    credential_env: String,
    #[arg(long, default_value_t = 2)]
    max_retries: u32,
    #[arg(long, default_value_t = 10)]
    max_subgoals: u32,
    /// Per-execution kernel timeout in milliseconds.
    #[arg(long)]
    exec_timeout_ms: Option<u64>,
}

impl Args {
    fn provider(&self) -> Result<ProviderConfig, String> {
        let mode = match self.provider {
            Mode::Live => ProviderMode::Live,
            Mode::Scripted => ProviderMode::Scripted,
        };
        if mode == ProviderMode::Scripted && self.fixtures.is_none() {
            return Err("--provider scripted needs --fixtures <dir>".into());
        }
        Ok(ProviderConfig {
            mode,
            model_name: self.model.clone(),
            endpoint: self.endpoint.clone(),
            credential_ref: self.credential_env.clone(),
            max_retries: self.max_retries,
            fixture_dir: self.fixtures.clone(),
        })
    }

    fn kernel(&self) -> KernelConfig {
        let mut k = match &self.kernel_cmd {
            Some(cmd) => KernelConfig::sidecar(cmd.clone()),
            None => KernelConfig::default(),
        };
        if let Some(ms) = self.exec_timeout_ms {
            k.timeout_ms = ms;
        }
        k
    }
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    if let Err(e) = run(args).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

async fn run(args: Args) -> Result<(), String> {
    let provider_config = args.provider()?;
    let provider = from_config(&provider_config);
    let mut config = ServiceConfig::new(&args.data_dir, provider_config, args.kernel());
    config.max_subgoals = args.max_subgoals;
    let state = AppState::new(config, provider).map_err(|e| e.to_string())?;

    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| format!("bad address: {e}"))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("{addr}: {e}"))?;
    tracing::info!("listening on http://{}", listener.local_addr().map_err(|e| e.to_string())?);
    axum::serve(listener, app(state, args.static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
