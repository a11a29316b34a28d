use std::process::ExitCode;

use clap::Parser;

mod cli;

use cli::{Cli, Outcome};

fn init_threads() {
    if let Ok(v) = std::env::var("ROBUSTEXP_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                // fails only if a pool exists already
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("ignoring ROBUSTEXP_THREADS={v:?}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_threads();
    match cli::run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(witness)) => {
            eprintln!("{witness}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
