use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use biodose_core::inference::McmcConfig;
use biodose_service::{router, AppState, ServiceConfig};
use clap::Parser;

#[derive(Parser)]
#[command(
    name = "biodose-service",
    version,
    about = "HTTP service for conducting a dose-finding trial"
)]
struct Args {
    #[arg(long, env = "BIODOSE_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Directory holding the per-trial event logs.
    #[arg(long, env = "BIODOSE_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    /// Shared bearer token; when unset the API is open.
    #[arg(long, env = "BIODOSE_TOKEN")]
    token: Option<String>,
    #[arg(long, env = "BIODOSE_FIT_TIMEOUT_SECS", default_value_t = 60)]
    fit_timeout_secs: u64,
    /// Default MCMC burn-in for new trials.
    #[arg(long, env = "BIODOSE_BURN_IN")]
    burn_in: Option<usize>,
    /// Default kept draws for new trials.
    #[arg(long, env = "BIODOSE_KEPT_DRAWS")]
    kept_draws: Option<usize>,
    #[arg(long, env = "BIODOSE_CHAINS")]
    chains: Option<usize>,
    #[arg(long, env = "BIODOSE_MCMC_SEED")]
    mcmc_seed: Option<u64>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut mcmc = McmcConfig::default();
    if let Some(v) = args.burn_in {
        mcmc.burn_in = v;
    }
    if let Some(v) = args.kept_draws {
        mcmc.kept_draws = v;
    }
    if let Some(v) = args.chains {
        mcmc.n_chains = v;
    }
    if let Some(v) = args.mcmc_seed {
        mcmc.seed = v;
    }
    mcmc.validate()?;
    let cfg = ServiceConfig {
        data_dir: args.data_dir,
        default_mcmc: mcmc,
        fit_timeout: Duration::from_secs(args.fit_timeout_secs),
        token: args.token,
    };
    let data_dir = cfg.data_dir.clone();
    let state = tokio::task::spawn_blocking(move || AppState::open(cfg))
        .await?
        .with_context(|| format!("loading trials from {}", data_dir.display()))?;
    eprintln!("replayed {} trial(s) from {}", state.trial_count(), data_dir.display());

    let listener = tokio::net::TcpListener::bind(args.bind)
        .await
        .with_context(|| format!("binding {}", args.bind))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
