mod args;
mod commands;
mod io;

use std::process::ExitCode;

use anyhow::{Context, Result};
use cfkit_core::backends::BackendError;
use cfkit_core::pipeline::PipelineError;
use cfkit_core::workflow::WorkflowError;
use clap::Parser;
use tracing_subscriber::EnvFilter;

use args::{Cli, Command};
use commands::Env;

/// True when the error chain bottoms out in a backend failure.
fn is_backend_failure(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<BackendError>().is_some()
            || e.downcast_ref::<WorkflowError>().is_some_and(WorkflowError::is_backend)
            || e.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_backend)
    })
}

fn init_logging(verbose: bool) {
    let default = if verbose { "debug" } else { "warn" };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

async fn listen(host: &str, port: u16, app: cfkit_service::Router) -> Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await.with_context(|| format!("binding {host}:{port}"))?;
    // the bound address goes to stdout so callers using port 0 can find it
    println!("listening on http://{}", listener.local_addr()?);
    cfkit_service::serve(listener, app, shutdown_signal()).await?;
    Ok(())
}

fn run_async(cmd: Command, env: &Env) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        match cmd {
            Command::Serve { port, host, data_dir } => {
                let state = cfkit_service::AppState::open(&data_dir, env.config.clone(), env.backends())?;
                listen(&host, port, cfkit_service::router(state)).await
            }
            Command::MockBackend { port, host } => {
                listen(&host, port, cfkit_service::mock_backend_router(env.config.task.mock_task)).await
            }
            _ => unreachable!("synchronous command"),
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.global.verbose);
    let result = Env::load(&cli.global).and_then(|env| match cli.command {
        cmd @ (Command::Serve { .. } | Command::MockBackend { .. }) => run_async(cmd, &env),
        cmd => commands::run(cmd, &env),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_backend_failure(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
