//! `sieve-frontend` — runs the load-balancer gateway from a JSON config file.

use anyhow::Context;
use clap::Parser;
use sieve_frontend::config::FrontendConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "sieve-frontend", about = "Cluster gateway and load balancer")]
struct Args {
    /// JSON configuration file (see `FrontendConfig`).
    #[arg(long)]
    config: PathBuf,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();

    let args = Args::parse();
    let raw = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config: FrontendConfig = serde_json::from_str(&raw).context("parsing config")?;

    let running = sieve_frontend::spawn(config).await?;
    // Parsed by the cluster launcher to learn ephemeral ports.
    println!("LISTENING {}", running.addr);

    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down");
    running.shutdown();
    Ok(())
}
