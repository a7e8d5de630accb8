use clap::Parser;

use conclab::cli::{run, Cli};

fn main() {
    // Optional cap on data parallelism; invalid values fall back to default.
    if let Ok(value) = std::env::var("CONCLAB_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }

    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
