mod args;
mod manifest;
mod ops;

use std::ffi::OsString;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use manifest::RunRecorder;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let argv = merge_config_args(std::env::args_os().collect());
    let cli = match argv {
        Ok(argv) => Cli::parse_from(argv),
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// FHDNN_THREADS caps the worker pool used by episode sweeps.
fn init_thread_pool() -> Result<()> {
    if let Ok(v) = std::env::var("FHDNN_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("FHDNN_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            anyhow::bail!("FHDNN_THREADS must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building worker pool")?;
    }
    Ok(())
}

/// Merge a `--config` file beneath the command line: for each config key,
/// inject `--key value` right after the subcommand unless the user already
/// passed that flag. Explicit flags always win.
fn merge_config_args(raw: Vec<OsString>) -> Result<Vec<OsString>> {
    let config_path = raw.iter().enumerate().find_map(|(i, a)| {
        let s = a.to_string_lossy();
        if s == "--config" {
            raw.get(i + 1).map(std::path::PathBuf::from)
        } else {
            s.strip_prefix("--config=").map(std::path::PathBuf::from)
        }
    });
    let Some(path) = config_path else {
        return Ok(raw);
    };
    let map = manifest::load_config(&path)?;
    if raw.len() < 2 {
        return Ok(raw);
    }
    let mut merged: Vec<OsString> = raw[..2].to_vec();
    for (key, value) in &map {
        let flag = format!("--{key}");
        let given = raw.iter().any(|a| {
            let s = a.to_string_lossy();
            s == flag || s.starts_with(&format!("{flag}="))
        });
        if given {
            continue;
        }
        match value.as_str() {
            "true" => merged.push(flag.into()),
            "false" => {}
            v => {
                merged.push(flag.into());
                merged.push(v.into());
            }
        }
    }
    merged.extend_from_slice(&raw[2..]);
    Ok(merged)
}

fn run(cli: Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Cluster(_) => "cluster",
        Command::Simulate(_) => "simulate",
        Command::HdcTrain(_) => "hdc-train",
        Command::HdcInfer(_) => "hdc-infer",
        Command::Episodes(_) => "episodes",
        Command::Costs(_) => "costs",
    };
    let mut rec = RunRecorder::new(name);
    match &cli.command {
        Command::Cluster(a) => ops::cluster(a, &mut rec)?,
        Command::Simulate(a) => ops::simulate_cmd(a, &mut rec)?,
        Command::HdcTrain(a) => ops::hdc_train(a, &mut rec)?,
        Command::HdcInfer(a) => ops::hdc_infer(a, &mut rec)?,
        Command::Episodes(a) => ops::episodes(a, &mut rec)?,
        Command::Costs(a) => ops::costs(a, &mut rec)?,
    }
    let manifest_path = rec.finish(cli.manifest.as_deref())?;
    log::info!("manifest written to {}", manifest_path.display());
    Ok(())
}
