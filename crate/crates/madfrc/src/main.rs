//! Command-line front end: single runs, axis sweeps, outage estimation,
//! and config validation.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use madfrc::bench::{
    run_cell, run_experiment, write_outputs, Axis, ExperimentSpec, ResultRecord, Scheme,
};
use madfrc::driver::RunOptions;
use madfrc::scenario::{linear_to_db, Scenario};
use madfrc::{Error, Result};

#[derive(Parser)]
#[command(name = "madfrc", about = "Robust movable-antenna DFRC transceiver design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Args)]
struct Common {
    /// TOML scenario file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of consecutive seeds starting from the scenario seed.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Output CSV path; a .json sidecar with the resolved scenario is
    /// written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solver tolerance profile: "default" or "strict".
    #[arg(long, default_value = "default")]
    tol_profile: String,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one scheme on one or more seeds and print the results.
    Run {
        #[command(flatten)]
        common: Common,
        /// Scheme to run.
        #[arg(long, default_value = "proposed")]
        scheme: String,
    },
    /// Sweep one scenario axis over schemes and paired seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Axis to vary: tx-power-dbm, region-wavelengths, qos-db,
        /// angle-error-deg, csi-level.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Comma-separated scheme names.
        #[arg(long, default_value = "proposed")]
        schemes: String,
    },
    /// Estimate QoS outage over the CSI error ball.
    Outage {
        #[command(flatten)]
        common: Common,
        /// Comma-separated CSI levels τ to evaluate.
        #[arg(long, default_value = "0.02")]
        values: String,
        /// Comma-separated scheme names.
        #[arg(long, default_value = "proposed,non-robust")]
        schemes: String,
        /// Channel draws per cell.
        #[arg(long, default_value_t = 1000)]
        draws: usize,
    },
    /// Parse and validate a scenario file.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn load_scenario(common: &Common) -> Result<Scenario> {
    match &common.config {
        None => Ok(Scenario::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Scenario::from_toml(&text)
        }
    }
}

fn options_for(common: &Common) -> Result<RunOptions> {
    let mut opts = RunOptions::default();
    match common.tol_profile.as_str() {
        "default" => {}
        "strict" => {
            opts.tol.feasibility = 1e-9;
            opts.tol.gap = 1e-9;
            opts.inner_tol = 1e-4;
            opts.outer_tol = 1e-4;
        }
        other => return Err(Error::Config(format!("unknown tol profile {other:?}"))),
    }
    Ok(opts)
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::Config(format!("cannot parse {what} entry {p:?}")))
        })
        .collect()
}

fn parse_schemes(text: &str) -> Result<Vec<Scheme>> {
    text.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(Scheme::from_str)
        .collect()
}

fn emit(records: &[ResultRecord], scenario: &Scenario, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => write_outputs(records, scenario, path),
        None => {
            madfrc::bench::write_csv(records, std::io::stdout().lock())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, scheme } => {
            let base = load_scenario(&common)?;
            let opts = options_for(&common)?;
            let scheme = Scheme::from_str(&scheme)?;
            let mut records = Vec::new();
            let mut any_failure = false;
            for i in 0..common.seeds {
                let mut s = base.clone();
                s.seed = base.seed + i as u64;
                let real = s.generate()?;
                match run_cell(scheme, &s, &real, &opts) {
                    Ok((state, trace)) => {
                        let mg = madfrc::bench::report_min_grid(scheme, &s, &state);
                        let comm = state.comm_sinrs(&s, &real)?;
                        eprintln!(
                            "seed {}: worst radar bound {:.3} dB, comm SINR [{}] dB, {} inner / {} outer, {:.1}s",
                            s.seed,
                            linear_to_db(mg),
                            comm.iter()
                                .map(|v| format!("{:.2}", linear_to_db(*v)))
                                .collect::<Vec<_>>()
                                .join(", "),
                            trace.inner_iterations(),
                            trace.outer_iterations(),
                            trace.wall_secs,
                        );
                        records.push(ResultRecord {
                            scheme: scheme.name(),
                            axis: "none",
                            axis_value: 0.0,
                            seed: s.seed,
                            min_grid_sinr_db: linear_to_db(mg),
                            comm_sinr_db: comm.iter().map(|v| linear_to_db(*v)).collect(),
                            outage: None,
                            inner_iters: trace.inner_iterations(),
                            outer_iters: trace.outer_iterations(),
                            wall_secs: trace.wall_secs,
                            status: format!("{:?}", trace.status).to_lowercase(),
                        });
                    }
                    Err(e) => {
                        any_failure = true;
                        eprintln!("seed {}: failed: {e}", s.seed);
                    }
                }
            }
            if common.out.is_some() {
                emit(&records, &base, &common.out)?;
            }
            Ok(any_failure)
        }
        Command::Sweep {
            common,
            axis,
            values,
            schemes,
        } => {
            let base = load_scenario(&common)?;
            let opts = options_for(&common)?;
            let spec = ExperimentSpec {
                axis: Axis::from_str(&axis)?,
                values: parse_list(&values, "axis value")?,
                schemes: parse_schemes(&schemes)?,
                n_seeds: common.seeds,
            };
            let (records, any_failure) = run_experiment(&base, &spec, &opts, None)?;
            emit(&records, &base, &common.out)?;
            Ok(any_failure)
        }
        Command::Outage {
            common,
            values,
            schemes,
            draws,
        } => {
            let base = load_scenario(&common)?;
            let opts = options_for(&common)?;
            let spec = ExperimentSpec {
                axis: Axis::CsiLevel,
                values: parse_list(&values, "csi level")?,
                schemes: parse_schemes(&schemes)?,
                n_seeds: common.seeds,
            };
            let (records, any_failure) = run_experiment(&base, &spec, &opts, Some(draws))?;
            emit(&records, &base, &common.out)?;
            Ok(any_failure)
        }
        Command::Validate { common } => {
            let s = load_scenario(&common)?;
            s.validate()?;
            // a generation dry run catches geometric degeneracies too
            let _ = s.generate()?;
            eprintln!(
                "ok: N={} M={} K={} L={} grid step {}°",
                s.n_antennas, s.n_ris, s.n_users, s.n_paths, s.grid_step
            );
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
