mod commands;
pub mod config;
mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde_json::json;

use sixbq::{Error, Result};

use commands::Outcome;
use config::RunConfig;
use output::{config_hash, RunDir, SCHEMA_VERSION};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Spectrum,
    Simulate,
    Control,
    Stabilize,
    Verify,
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Simulate => "simulate",
            Command::Control => "control",
            Command::Stabilize => "stabilize",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }

    fn parse(name: &str) -> Result<Self> {
        <Command as ValueEnum>::from_str(name, true).map_err(|_| Error::Config(format!("unknown command {name:?}")))
    }
}

/// Sixth-order Boussinesq control and stabilization experiments.
#[derive(Debug, Parser)]
#[command(name = "sixbq", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default `runs/<command>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `KEY=VALUE` with dotted keys, e.g. `stabilize.gain=2`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

pub fn main_with(cli: Cli) -> i32 {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    let cfg = match config::load(cli.config.as_deref(), &cli.overrides, cli.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let code = if cli.command == Command::Sweep {
        sweep(&cfg, &out)
    } else {
        run_one(cli.command, &cfg, &out)
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command into `out`; returns the process exit code.
pub fn run_one(command: Command, cfg: &RunConfig, out: &Path) -> Result<i32> {
    let mut run = RunDir::create(out)?;
    let started = std::time::Instant::now();
    let outcome = match command {
        Command::Spectrum => commands::spectrum(cfg, &mut run),
        Command::Simulate => commands::simulate(cfg, &mut run),
        Command::Control => commands::control(cfg, &mut run),
        Command::Stabilize => commands::stabilize(cfg, &mut run),
        Command::Verify => commands::verify(cfg, &mut run),
        Command::Sweep => return Err(Error::Config("sweep cannot be nested".into())),
    };
    run.time("total", started.elapsed().as_secs_f64());
    let hash = config_hash(cfg)?;
    let (code, body) = match outcome {
        Ok(Outcome { results, checks }) => {
            let failures = checks.failures();
            let code = if failures.is_empty() { 0 } else { 4 };
            if !failures.is_empty() {
                eprintln!("invariant failures: {}", failures.join(", "));
            }
            (
                code,
                json!({
                    "status": if code == 0 { "ok" } else { "invariant_failure" },
                    "checks": checks.0,
                    "failures": failures,
                    "results": results,
                }),
            )
        }
        Err(e) => {
            eprintln!("error: {e}");
            (e.exit_code(), json!({ "status": "error", "results": commands::error_results(&e) }))
        }
    };
    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command.name(),
        "config_sha256": hash,
        "config": cfg,
    });
    if let (Some(r), Some(b)) = (report.as_object_mut(), body.as_object()) {
        r.extend(b.clone());
    }
    run.write_json("report.json", &report)?;
    let dir = run.finish(command.name(), cfg, code)?;
    println!("{} -> {} (exit {code})", command.name(), dir.display());
    Ok(code)
}

/// Runs `sweep.command` once per value of `sweep.key`, concurrently.
fn sweep(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let sw = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep requires a [sweep] section".into()))?;
    let command = Command::parse(&sw.command)?;
    if command == Command::Sweep {
        return Err(Error::Config("sweep cannot be nested".into()));
    }
    let base = config::to_table(&RunConfig { sweep: None, ..cfg.clone() })?;
    let jobs = sw
        .values
        .iter()
        .map(|v| {
            let mut t = base.clone();
            config::set_path(&mut t, &sw.key, v.clone())?;
            config::from_table(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let threads = sw
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    std::fs::create_dir_all(out)?;
    let mut codes = vec![0; jobs.len()];
    for (chunk_jobs, chunk_codes) in jobs.chunks(threads).zip(codes.chunks_mut(threads)).enumerate().map(|(c, (j, k))| ((c * threads, j), k)) {
        let (offset, js) = chunk_jobs;
        std::thread::scope(|s| {
            let handles: Vec<_> = js
                .iter()
                .enumerate()
                .map(|(i, job)| {
                    let dir = out.join(format!("run_{:03}", offset + i));
                    s.spawn(move || run_one(command, job, &dir).unwrap_or_else(|e| e.exit_code()))
                })
                .collect();
            for (slot, h) in chunk_codes.iter_mut().zip(handles) {
                *slot = h.join().unwrap_or(1);
            }
        });
    }
    let summary: Vec<_> = jobs
        .iter()
        .zip(&sw.values)
        .zip(&codes)
        .enumerate()
        .map(|(i, ((job, value), code))| {
            Ok(json!({
                "index": i,
                "dir": format!("run_{i:03}"),
                "value": value,
                "exit_code": code,
                "config_sha256": config_hash(job)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut run = RunDir::create(out)?;
    run.write_json(
        "sweep.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": command.name(),
            "key": sw.key,
            "runs": summary,
        }),
    )?;
    let code = codes.iter().copied().find(|c| *c != 0).unwrap_or(0);
    run.finish("sweep", cfg, code)?;
    Ok(code)
}
