use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use duallabel::experiment::{
    ablation, ablation_csv, convergence_report, gen_data, run_experiment, sweep_missing_rates,
    write_convergence, write_run, ExperimentConfig, PresetName,
};
use duallabel::{Error, Result};

#[derive(Parser)]
#[command(name = "duallabel", version, about = "Dual-label learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate the configured methods
    Run(Common),
    /// Repeat `run` over the configured missing rates, writing sweep.csv
    Sweep(Common),
    /// Compare training-mode stacks f, a, a+b, a+b+c
    Ablate(Common),
    /// Trace alternate inference per iteration
    Trace(Common),
    /// Write the configured synthetic dataset as CSV
    GenData(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; repeat for several runs (replaces the config's seeds)
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// tox21, higgs or mof (replaces the config's preset)
    #[arg(long)]
    preset: Option<PresetName>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(p)) => ExperimentConfig::from_preset(p),
            (None, None) => {
                return Err(Error::Config("pass --config or --preset".into()));
            }
        };
        if let Some(p) = self.preset {
            c.preset = p;
        }
        if !self.seeds.is_empty() {
            c.seeds = self.seeds.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    std::fs::create_dir_all(path.parent().expect("file in a directory"))
        .and_then(|_| std::fs::write(&path, text))
        .map_err(|e| Error::Io { path, source: e })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => {
            let out = run_experiment(&a.config()?)?;
            write_run(&a.out, &out)?;
        }
        Command::Sweep(a) => {
            let c = a.config()?;
            let s = sweep_missing_rates(&c, &c.sweep.rates)?;
            write(a.out.join("sweep.csv"), &s.to_csv(&c.seeds))?;
        }
        Command::Ablate(a) => {
            let c = a.config()?;
            let r = ablation(&c)?;
            r.write_json({
                std::fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
                a.out.join("results.json")
            })?;
            write(a.out.join("ablation.csv"), &ablation_csv(&r, &c.seeds))?;
        }
        Command::Trace(a) => {
            let c = a.config()?;
            let rep = convergence_report(&c)?;
            write_convergence(&a.out, &rep, c.trace.max_samples)?;
        }
        Command::GenData(a) => {
            gen_data(&a.config()?, &a.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
