use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::time::Duration;

use agentmesh_cli::{exit, ClientConfig, CliError, Outcome, Renderer, Shell};
use chrono::FixedOffset;
use clap::Parser;

/// Terminal client for the agentmesh messenger.
#[derive(Debug, Parser)]
#[command(name = "chat", version)]
struct Args {
    /// Server host; with --port, connects on start.
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    /// User name for `login <password>`.
    #[arg(long)]
    name: Option<String>,
    /// Server directory (servers.json).
    #[arg(long)]
    servers: Option<PathBuf>,
    /// Run the commands in this file instead of reading the terminal.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Do not ask before deleting.
    #[arg(long)]
    yes: bool,
    /// Client settings file [default: ~/.config/agentmesh/client.json].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Render times at this UTC offset, e.g. +02:00, instead of local time.
    #[arg(long, value_parser = parse_offset)]
    utc_offset: Option<FixedOffset>,
    /// Width used to right-align sent messages.
    #[arg(long, default_value_t = agentmesh_cli::render::DEFAULT_WIDTH)]
    width: usize,
}

fn parse_offset(s: &str) -> Result<FixedOffset, String> {
    s.parse().map_err(|e| format!("{s}: {e}"))
}

fn report(err: &CliError) -> Option<ExitCode> {
    eprintln!("error: {err}");
    match err.exit_code() {
        exit::OK => None,
        code => Some(ExitCode::from(code as u8)),
    }
}

fn print(out: &str) {
    let mut stdout = io::stdout().lock();
    let _ = stdout.write_all(out.as_bytes());
    let _ = stdout.flush();
}

fn run_script(shell: &mut Shell, path: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(exit::PROTOCOL as u8);
        }
    };
    for line in text.lines() {
        if line.trim().is_empty() || line.trim_start().starts_with("//") {
            continue;
        }
        print(&format!("> {line}\n"));
        match shell.run(line) {
            Ok(Outcome::Output(out)) => print(&out),
            Ok(Outcome::Quit) => break,
            Err(e) => {
                if let Some(code) = report(&e) {
                    return code;
                }
            }
        }
    }
    ExitCode::SUCCESS
}

fn run_interactive(shell: &mut Shell) -> ExitCode {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in io::stdin().lock().lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let prompt = |shell: &Shell| print(&format!("{}> ", shell.user().unwrap_or("")));
    prompt(shell);
    loop {
        match rx.recv_timeout(Duration::from_millis(200)) {
            Ok(Ok(line)) => {
                match shell.run(&line) {
                    Ok(Outcome::Output(out)) => print(&out),
                    Ok(Outcome::Quit) => return ExitCode::SUCCESS,
                    Err(e) => {
                        report(&e);
                    }
                }
                print(&shell.pending_events());
                prompt(shell);
            }
            Ok(Err(e)) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit::PROTOCOL as u8);
            }
            Err(RecvTimeoutError::Timeout) => {
                let events = shell.pending_events();
                if !events.is_empty() {
                    print(&format!("\n{events}"));
                    prompt(shell);
                }
            }
            Err(RecvTimeoutError::Disconnected) => return ExitCode::SUCCESS,
        }
    }
}

fn ask(question: &str) -> bool {
    print(&format!("{question} [y/N] "));
    let mut answer = String::new();
    io::stdin().lock().read_line(&mut answer).is_ok() && matches!(answer.trim(), "y" | "Y" | "yes")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let config_path = args.config.clone().or_else(ClientConfig::default_path);
    let mut config = match config_path.as_deref().map(ClientConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            ClientConfig::default()
        }
    };
    if args.servers.is_some() {
        config.servers = args.servers.clone();
    }
    if args.name.is_some() {
        config.user_name = args.name.clone();
    }
    let renderer = Renderer { width: args.width, offset: args.utc_offset };
    let mut shell = Shell::new(config, config_path, renderer).assume_yes(args.yes);
    if args.script.is_none() {
        // stdin is shared with the reader thread; prompts read from the terminal directly
        shell = shell.with_confirm(ask);
    }

    if args.host.is_some() || args.port.is_some() {
        let last = shell.config().last_server();
        let host = args.host.clone().or(last.as_ref().map(|l| l.0.clone())).unwrap_or_else(|| "127.0.0.1".into());
        let port = args.port.or(last.map(|l| l.1)).unwrap_or(1099);
        match shell.connect(&host, port) {
            Ok(out) => print(&out),
            Err(e) => return report(&e).unwrap_or(ExitCode::from(exit::CONNECTION as u8)),
        }
    }

    match &args.script {
        Some(path) => run_script(&mut shell, path),
        None => run_interactive(&mut shell),
    }
}
