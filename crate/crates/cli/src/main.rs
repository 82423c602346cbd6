mod args;
mod commands;
mod config;
mod exit;
mod run;
mod svg;
mod sweep;

use std::ffi::OsString;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command, DataCommand};
use exit::{Exit, CONFIG_ERROR, DIVERGED};

fn init_threads() {
    let Ok(v) = std::env::var("IBPLAB_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                log::warn!("could not size thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring IBPLAB_THREADS={v}: expected a positive integer"),
    }
}

fn parse(argv: Vec<OsString>) -> Result<Cli, i32> {
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Err(CONFIG_ERROR);
        }
    };
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            CONFIG_ERROR
        } else {
            exit::OK
        }
    })
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Data {
            action: DataCommand::Prepare(a),
        } => commands::data_prepare(&a),
        Command::Train(a) => {
            let summary = run::execute(&a.flags, &a.out)?;
            println!(
                "{}: certified error {}, loss {}, t = {}",
                a.out.display(),
                summary.final_certified_error,
                summary.final_loss,
                summary.final_t
            );
            if let ibplab_core::RunStatus::Diverged { step, loss } = summary.status {
                return Err(Exit::new(
                    DIVERGED,
                    format!(
                        "training diverged at step {step} (loss {loss:e}); artifacts kept in {}",
                        a.out.display()
                    ),
                )
                .into());
            }
            Ok(())
        }
        Command::Sweep(a) => {
            let rows = sweep::execute(&a)?;
            let failed = rows.iter().filter(|r| r.status != "completed").count();
            println!(
                "{} runs written to {} ({failed} not completed)",
                rows.len(),
                a.out.display()
            );
            Ok(())
        }
        Command::Theory(a) => commands::theory(&a),
        Command::Certify(a) => commands::certify(&a),
        Command::Gram(a) => commands::gram(&a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    let cli = match parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(code) => std::process::exit(code),
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(exit::code_for(&e));
    }
}
