use std::process::ExitCode;

use clap::Parser;
use fbdg_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(manifest) => {
            for o in &manifest.outputs {
                println!("{}", cli.out.join(&o.file).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fbdg: {e}");
            e.exit_code()
        }
    }
}
