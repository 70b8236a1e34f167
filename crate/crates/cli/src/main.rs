use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = capscore_cli::Cli::parse();
    match capscore_cli::init_threads().and_then(|()| capscore_cli::run(&cli)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
