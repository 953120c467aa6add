use std::fs::File;
use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use agentmesh_cli::exit;
use agentmesh_cli::time::{millis, parse_duration, parse_instant};
use agentmesh_messenger::protocol::ops;
use agentmesh_messenger::{ChatClient, ClientError};
use agentmesh_sensitivity::read_alert_feed;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

/// Maintenance and reporting for an agentmesh messenger server.
#[derive(Debug, Parser)]
#[command(name = "mesh-admin", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 1099)]
    port: u16,
    #[arg(long, env = "AGENTMESH_ADMIN_KEY", hide_env_values = true)]
    admin_key: String,
    #[command(subcommand)]
    command: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Drop action-log entries older than the TTL.
    PurgeLogs {
        #[arg(long, default_value = "30days", value_parser = parse_duration)]
        ttl: Duration,
    },
    /// Move inactive or empty groups to archive bundles.
    ArchiveGroups {
        #[arg(long, default_value = "180days", value_parser = parse_duration)]
        inactivity: Duration,
    },
    /// Drop unused conversation indexes and rebuild poor ones.
    ReviewIndexes {
        #[arg(long, default_value = "7days", value_parser = parse_duration)]
        window: Duration,
    },
    /// Rebuild the phrase model behind suggestions.
    BuildPhrases,
    /// Operation counts, top phrases, activity by area and block reasons.
    UsageReport {
        /// Epoch ms, RFC 3339 or YYYY-MM-DD.
        #[arg(long, value_parser = parse_instant)]
        from: u64,
        #[arg(long, value_parser = parse_instant)]
        to: u64,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Group the users near each alert of a feed (JSON lines; `-` for stdin).
    InjectAlert { feed: PathBuf },
    /// Run every maintenance task now.
    Maintenance,
}

fn run(args: Args) -> Result<Vec<Value>, ClientError> {
    let mut client = ChatClient::connect((args.host.as_str(), args.port))?;
    let key = args.admin_key.as_str();
    let call = |client: &mut ChatClient, op: &str, a: Value| client.admin(op, key, a);
    let out = match args.command {
        Verb::PurgeLogs { ttl } => vec![call(&mut client, ops::PURGE_LOGS, json!({"ttl_ms": millis(ttl)}))?],
        Verb::ArchiveGroups { inactivity } => {
            vec![call(&mut client, ops::ARCHIVE_GROUPS, json!({"inactivity_ms": millis(inactivity)}))?]
        }
        Verb::ReviewIndexes { window } => vec![call(&mut client, ops::REVIEW_INDEXES, json!({"window_ms": millis(window)}))?],
        Verb::BuildPhrases => vec![call(&mut client, ops::BUILD_PHRASES, Value::Null)?],
        Verb::UsageReport { from, to, top } => {
            vec![call(&mut client, ops::USAGE_REPORT, json!({"from": from, "to": to, "top": top}))?]
        }
        Verb::InjectAlert { feed } => {
            let alerts = if feed.as_os_str() == "-" {
                read_alert_feed(io::stdin().lock())
            } else {
                let file = File::open(&feed).map_err(|e| ClientError::Protocol(format!("{}: {e}", feed.display())))?;
                read_alert_feed(BufReader::new(file))
            }
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
            let mut results = Vec::new();
            for alert in &alerts {
                results.push(client.inject_alert(key, alert)?);
            }
            results
        }
        Verb::Maintenance => vec![call(&mut client, ops::RUN_MAINTENANCE, Value::Null)?],
    };
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(values) => {
            for v in values {
                println!("{}", serde_json::to_string_pretty(&v).expect("json values serialize"));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_connection() { exit::CONNECTION } else { exit::PROTOCOL };
            ExitCode::from(code as u8)
        }
    }
}
