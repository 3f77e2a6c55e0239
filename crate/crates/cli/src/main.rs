use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use labrisk_cli::{exit_code, http, run_experiment, Cli, Command};
use labrisk_core::service::{SessionStore, TrainingConfig};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Serve(args) => {
            let store = Arc::new(SessionStore::new(TrainingConfig {
                n_persons: args.training_persons,
                seed: args.training_seed,
            }));
            let runtime = match tokio::runtime::Runtime::new() {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: cannot start runtime: {e}");
                    return ExitCode::from(3);
                }
            };
            if let Err(e) = runtime.block_on(http::serve(&args.addr, store)) {
                eprintln!("error: {e}");
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        command => match run_experiment(command) {
            Ok(manifest) => {
                let dir = &manifest.config.out_dir;
                for out in &manifest.outputs {
                    println!("{}  {}", out.sha256, dir.join(&out.file).display());
                }
                println!("config hash {}", manifest.config_hash);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(e.kind()) as u8)
            }
        },
    }
}
