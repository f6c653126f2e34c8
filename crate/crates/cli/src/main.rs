use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = boostpfn_cli::args::Cli::parse();
    match boostpfn_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (class, code) = boostpfn_cli::classify(&err);
            let detail: Vec<String> = err.chain().map(|c| c.to_string()).collect();
            eprintln!("boostpfn: {class} error: {}", detail.join(": "));
            ExitCode::from(code as u8)
        }
    }
}
