use std::process::ExitCode;
use std::sync::Arc;

use repolens_core::dispatch::ServiceConfig;

#[tokio::main]
async fn main() -> ExitCode {
    repolens_server::init_tracing();
    let config = match ServiceConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let dispatcher = match config.build() {
        Ok(d) => Arc::new(d),
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    match repolens_server::serve(dispatcher, &config.cors_origins, &config.listen).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("server error: {e}");
            ExitCode::from(3)
        }
    }
}
