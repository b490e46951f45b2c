use clap::Parser;

#[derive(Parser)]
#[command(name = "conclave-server", about = "Debate engine HTTP service")]
struct Args {
    /// Address to bind, e.g. 127.0.0.1:8779
    #[arg(long, default_value = "127.0.0.1:8779")]
    addr: String,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind(&args.addr)
        .await
        .unwrap_or_else(|e| panic!("cannot bind {}: {e}", args.addr));
    tracing::info!(addr = %listener.local_addr().unwrap(), "debate service listening");
    axum::serve(listener, conclave_server::router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .expect("server loop");
}
