use clap::Parser;
use cubeformer::cli::{run, Cli};

fn main() {
    if let Ok(threads) = std::env::var("CUBEFORMER_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse(); // usage errors exit 2
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
