use clap::Parser;
use eigenset_cli::{error_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            error_code(&e)
        }
    };
    std::process::exit(code);
}
