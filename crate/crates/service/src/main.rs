use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;

use presetlab_service::{app, AppState, Config};

#[derive(Parser)]
#[command(name = "presetlab-service", about = "Preset search, mixing and modification over HTTP")]
struct Args {
    /// TOML config file. Relative paths inside it resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `spectral` or `file:PATH`.
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    state_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() {
    let args = Args::parse();
    if let Err(e) = run(args).await {
        eprintln!("presetlab-service: {e}");
        std::process::exit(1);
    }
}

async fn run(args: Args) -> Result<(), String> {
    let mut config = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    config.apply_env(|k| std::env::var(k).ok())?;
    if let Some(p) = args.provider {
        config.provider = p;
    }
    if let Some(p) = args.port {
        config.port = p;
    }
    if let Some(b) = args.bank {
        config.bank = Some(b);
    }
    if let Some(d) = args.state_dir {
        config.state_dir = Some(d);
    }
    let base_dir = args.config.as_ref().and_then(|p| p.parent().map(PathBuf::from));
    let addr = format!("{}:{}", config.bind, config.port);
    let state = tokio::task::spawn_blocking(move || AppState::build(config, base_dir.as_deref()))
        .await
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| format!("bind {addr}: {e}"))?;
    let local = listener.local_addr().map_err(|e| e.to_string())?;
    // Tests and scripts read this line to find an ephemeral port.
    println!("listening on http://{local}");
    axum::serve(listener, app(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
