use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;
use std::time::Duration;

use agentmesh_cli::time::parse_optional_duration;
use agentmesh_messenger::{ChatServer, ServerConfig, ServiceConfig};
use agentmesh_platform::PlatformConfig;
use agentmesh_sensitivity::Lexicon;
use clap::Parser;

/// Main container of an agentmesh platform hosting the chat manager.
#[derive(Debug, Parser)]
#[command(name = "agentmesh-server", version)]
struct Args {
    #[arg(long, default_value = "0.0.0.0")]
    host: String,
    #[arg(long, default_value_t = 1099)]
    port: u16,
    /// Platform name.
    #[arg(long, default_value = "agentmesh")]
    name: String,
    /// Store directory; without it everything is kept in memory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Banned words, one per line.
    #[arg(long)]
    banned: Option<PathBuf>,
    /// Good words, one per line.
    #[arg(long)]
    good: Option<PathBuf>,
    /// Key required by admin operations; without it they are refused.
    #[arg(long, env = "AGENTMESH_ADMIN_KEY", hide_env_values = true)]
    admin_key: Option<String>,
    /// How often maintenance runs, e.g. 24h, or `off`.
    #[arg(long, default_value = "24h", value_parser = parse_optional_duration)]
    maintenance_interval: ::std::option::Option<Duration>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let lexicon = match Lexicon::load(args.banned.as_deref(), args.good.as_deref()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: lexicon: {e}");
            return ExitCode::from(2);
        }
    };
    let config = ServerConfig {
        platform: PlatformConfig { host: args.host, port: args.port, name: args.name, ..PlatformConfig::default() },
        data_dir: args.data,
        lexicon,
        service: ServiceConfig { admin_key: args.admin_key, ..ServiceConfig::default() },
        maintenance_interval: args.maintenance_interval,
        ..ServerConfig::default()
    };
    let server = match ChatServer::start(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    println!("listening on {}", server.address());

    let (tx, rx) = mpsc::channel();
    if let Err(e) = ctrlc::set_handler(move || {
        let _ = tx.send(());
    }) {
        log::warn!("no signal handler: {e}");
    }
    let _ = rx.recv();
    log::info!("shutting down");
    server.shutdown();
    ExitCode::SUCCESS
}
