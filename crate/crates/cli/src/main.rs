mod args;
mod commands;
mod report;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command, ConfigFile, Layered};

/// Settings every command sees after flags and the config file are merged.
#[derive(Clone, Copy, Debug)]
pub struct Global {
    pub deterministic: bool,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let global = Global {
        deterministic: cli.deterministic || file.deterministic.unwrap_or(false),
    };
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Parse(mut a) => {
            a.fill_from(file.parse);
            a.model.fill_from(file.model);
            commands::parse(a, global)
        }
        Command::TrainHead(mut a) => {
            a.fill_from(file.train_head);
            a.model.fill_from(file.model);
            commands::train_head(a).map(|()| ExitCode::SUCCESS)
        }
        Command::EvalText(mut a) => {
            a.fill_from(file.eval_text);
            a.model.fill_from(file.model);
            commands::eval_text(a).map(|()| ExitCode::SUCCESS)
        }
        Command::EvalDetect(mut a) => {
            a.fill_from(file.eval_detect);
            commands::eval_detect(a).map(|()| ExitCode::SUCCESS)
        }
        Command::Augment(mut a) => {
            a.fill_from(file.augment);
            commands::augment(a).map(|()| ExitCode::SUCCESS)
        }
        Command::Split(mut a) => {
            a.fill_from(file.split);
            commands::split(a).map(|()| ExitCode::SUCCESS)
        }
        Command::ExportReport(mut a) => {
            a.fill_from(file.export_report);
            report::export(a).map(|()| ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
