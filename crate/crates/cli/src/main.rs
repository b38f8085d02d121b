//! `drem-sim`: run scenarios, parameter sweeps and the exact-window demo.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numerical abort.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drem::experiment::remark1::remark1_demo;
use drem::experiment::sweep::sweep;
use drem::experiment::{run, ScenarioConfig, SweepParam};
use drem::Error;

#[derive(Parser, Debug)]
#[command(name = "drem-sim", version, about = "DREM estimation with perturbation annihilation")]
struct Cli {
    #[command(flatten)]
    mode: ModeFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ModeFlags {
    /// Write every integration step to trace.csv.
    #[arg(long, global = true)]
    full_rate: bool,
    /// Skip the simulated perturbation channels.
    #[arg(long, global = true)]
    no_truth: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario.
    Run {
        /// TOML file, or the name of a bundled scenario (paper_sec4, case_one).
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a scenario for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: String,
        /// T (window), gamma, h or scheme.
        #[arg(long)]
        param: String,
        /// Comma separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Windowed cross-moment of a constant regressor against one tone.
    Remark1 {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(spec: &str, mode: &ModeFlags) -> Result<ScenarioConfig, Error> {
    let path = Path::new(spec);
    let mut cfg = if path.exists() {
        ScenarioConfig::from_file(path)?
    } else if spec.ends_with(".toml") {
        return Err(Error::config(format!("config file {spec} does not exist")));
    } else {
        ScenarioConfig::bundled(spec)?
    };
    if mode.full_rate {
        cfg.sim.decimation = 1;
    }
    if mode.no_truth {
        cfg.sim.truth = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exec(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config, &cli.mode)?;
            let output = run(&cfg)?;
            output.write_to(&out)?;
            print!("{}", output.summary.to_text());
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = load(&config, &cli.mode)?;
            let param = SweepParam::parse(&param)?;
            let table = sweep(&cfg, param, &values)?;
            std::fs::create_dir_all(&out)?;
            for p in &table.points {
                if let Ok(o) = &p.outcome {
                    o.write_to(&out.join(format!("value_{}", p.value)))?;
                }
            }
            let csv = table.to_csv();
            std::fs::write(out.join("sweep.csv"), &csv)?;
            print!("{csv}");
            if let Some(e) = table.first_error() {
                return Err(e.clone());
            }
        }
        Command::Remark1 { out } => {
            let report = remark1_demo()?;
            std::fs::create_dir_all(&out)?;
            let text = report.to_text();
            std::fs::write(out.join("remark1.csv"), &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match exec(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericalAbort { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
