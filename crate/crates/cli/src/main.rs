use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use portal_core::config::DaemonConfig;
use portal_core::gateway::http::{self, HttpState};
use portal_core::gateway::repl::{Repl, ReplOptions};
use portal_core::gateway::Daemon;
use tracing_subscriber::EnvFilter;

/// Gives everyday objects a voice, a persona and a memory.
#[derive(Debug, Parser)]
#[command(name = "portal", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "PORTAL_CONFIG")]
    config: Option<PathBuf>,
    /// Use deterministic mock providers for every capability.
    #[arg(long, global = true)]
    mock_all: bool,
    /// Print the object's private thoughts in the REPL.
    #[arg(long, global = true)]
    show_inner: bool,
    /// Where registry, memories, sessions and images are stored.
    #[arg(long, global = true, env = "PORTAL_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Fixed clock and seeded ids, for reproducible runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP and event-stream server.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Text-mode session on the terminal.
    Repl {
        /// Run `;`-separated commands instead of reading stdin.
        #[arg(long)]
        script: Option<String>,
        /// Directory that relative image and audio paths are resolved against.
        #[arg(long)]
        base_dir: Option<PathBuf>,
    },
    /// Validate the configuration and print it with secrets redacted.
    CheckConfig,
}

fn load_config(cli: &Cli) -> Result<DaemonConfig> {
    let mut config = match &cli.config {
        Some(path) => DaemonConfig::load(path)?,
        None => DaemonConfig::from_env_defaults(),
    };
    config.apply_env();
    if cli.mock_all {
        config.mock_all();
    }
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if let Command::Serve { listen: Some(addr) } = &cli.command {
        config.listen = addr.clone();
    }
    config.validate()?;
    Ok(config)
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    let default_level = match cli.command {
        Command::Serve { .. } => "info",
        _ => "warn",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .init();

    let config = load_config(&cli)?;
    match &cli.command {
        Command::CheckConfig => {
            println!("{config:#?}");
        }
        Command::Serve { .. } => {
            let listener = http::bind(&config.listen).await?;
            let daemon = Daemon::start(config)?;
            let addr = listener.local_addr()?;
            eprintln!("portal listening on http://{addr}");
            let state = HttpState {
                handle: daemon.handle.clone(),
                auth: daemon.config.auth.clone(),
                fixtures_dir: daemon.config.fixtures_dir.clone(),
            };
            http::serve(listener, state, shutdown_signal())
                .await
                .context("http server failed")?;
        }
        Command::Repl { script, base_dir } => {
            let daemon = Daemon::start(config)?;
            let opts = ReplOptions {
                show_inner: cli.show_inner,
                base_dir: base_dir.clone(),
                prompt: script.is_none(),
            };
            let mut repl = Repl::new(daemon.handle.clone(), tokio::io::stdout(), opts);
            match script {
                Some(s) => repl.run_script(s).await?,
                None => {
                    repl.line_intro().await?;
                    repl.run(tokio::io::BufReader::new(tokio::io::stdin())).await?
                }
            }
        }
    }
    Ok(())
}
