use clap::Parser;
use regret_sls_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(&cli) {
        eprintln!(
            "{}",
            serde_json::json!({
                "command": cli.command.name(),
                "status": e.kind(),
                "exit_code": e.exit_code(),
                "message": e.to_string(),
            })
        );
        std::process::exit(e.exit_code());
    }
}
