use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Args;
use promptlab_survey::{
    read_pool, router, serve, AppConfig, StoreConfig, SurveyError, SurveyStore,
};
use tracing::info;

use super::{read_input, write_err};
use crate::config::pick;
use crate::{CliError, Context};

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PROMPTLAB_HOST")]
    pub host: Option<String>,
    /// 0 picks a free port.
    #[arg(long, env = "PROMPTLAB_PORT")]
    pub port: Option<u16>,
    /// Pair pool, one SurveyPair JSON object per line.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Append-only vote log (created if missing).
    #[arg(long)]
    pub votes: PathBuf,
    /// Directory served under /images.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Built survey UI served at /.
    #[arg(long)]
    pub ui: Option<PathBuf>,
}

pub fn run(args: ServeArgs, ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let file = &ctx.file.serve;
    let host = pick(args.host, file.host.clone(), "127.0.0.1".to_string());
    let port = pick(args.port, file.port, 8080);
    let app_cfg = AppConfig {
        ui_dir: args.ui.or_else(|| file.ui.clone()),
        images_dir: args.images.or_else(|| file.images.clone()),
    };
    for dir in app_cfg.ui_dir.iter().chain(app_cfg.images_dir.iter()) {
        if !dir.is_dir() {
            return Err(CliError::Input(format!(
                "{} is not a directory",
                dir.display()
            )));
        }
    }
    let pool = read_pool(&read_input(&args.pairs)?).map_err(|e| CliError::Input(e.to_string()))?;
    let seed = ctx.seed.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    });
    let store =
        SurveyStore::open(pool, &StoreConfig::new(&args.votes, seed)).map_err(|e| match e {
            SurveyError::Corrupt(_) | SurveyError::Pool(_) => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        })?;
    let app = router(Arc::new(store), &app_cfg);

    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .map_err(|e| CliError::Runtime(format!("bind {host}:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        info!(%addr, "survey service listening");
        writeln!(out, "listening on http://{addr}").map_err(write_err)?;
        out.flush().map_err(write_err)?;
        serve(listener, app)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}
