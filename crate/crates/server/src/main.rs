use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use tracing_subscriber::EnvFilter;
use workcell_core::scenario::Rates;
use workcell_server::{serve, ServerConfig};

/// Authoritative collaboration-space server.
#[derive(Parser)]
#[command(name = "vcs-server", version)]
struct Args {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<SocketAddr>,
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Scenario opened as a session at start-up.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, requires = "broadcast_hz")]
    sim_hz: Option<u32>,
    #[arg(long, requires = "sim_hz")]
    broadcast_hz: Option<u32>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<ServerConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ServerConfig::default(),
    };
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    if args.log_dir.is_some() {
        config.log_dir = args.log_dir;
    }
    if args.scenario.is_some() {
        config.scenario = args.scenario;
    }
    if let (Some(sim_hz), Some(broadcast_hz)) = (args.sim_hz, args.broadcast_hz) {
        anyhow::ensure!(
            sim_hz > 0 && broadcast_hz > 0 && broadcast_hz <= sim_hz,
            "need 0 < broadcast_hz <= sim_hz"
        );
        config.rates = Some(Rates { sim_hz, broadcast_hz });
    }
    serve(config).await
}
