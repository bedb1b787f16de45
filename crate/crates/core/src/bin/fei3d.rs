use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = fei3d::cli::Cli::parse();
    match fei3d::cli::resolve(cli.command).and_then(|cfg| fei3d::cli::execute(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
