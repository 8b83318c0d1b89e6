use clap::Parser;
use polymatch::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let level = if cli.common.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = std::env::var("UPM2_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("UPM2_THREADS ignored: {e}");
        }
    }
    std::process::exit(run(&cli));
}
