use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use impulse_game::montecarlo::SimOptions;
use impulse_game::par::Execution;
use impulse_game::reporting::{
    cmd_baseline, cmd_simulate, cmd_solve, cmd_sweep, cmd_values, cmd_verify, dump_first_path, load_config,
    solve_equilibrium, sweep_csv, values_csv, CommandError, ExitStatus, McRequest, SimulateRequest, SolveRequest,
    SweepParam, SweepSpec,
};
use impulse_game::solver::{SolverOptions, TABLE1_SOLUTION};
use impulse_game::value::Thresholds;
use impulse_game::verification::{GridSpec, Spacing, VerifyOptions};

/// Threshold equilibria of the firm/government impulse game.
///
/// Exit codes: 0 verified, 2 root found but not verified, 3 failure,
/// 4 configuration error.
#[derive(Parser)]
#[command(name = "impulse-game", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file, or `table1` for the built-in example.
    config: String,
    /// Accept configurations that fail the integrability check.
    #[arg(long)]
    allow_unchecked: bool,
    /// Write the output here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Points per checked interval.
    #[arg(long, default_value_t = 10_000)]
    grid_points: usize,
    /// Use logarithmic spacing for the verification grids.
    #[arg(long)]
    log_grid: bool,
}

impl GridArgs {
    fn verify_options(&self, exec: Execution) -> VerifyOptions {
        VerifyOptions {
            grid: GridSpec {
                n_points: self.grid_points,
                spacing: if self.log_grid { Spacing::Log } else { Spacing::Linear },
            },
            exec,
            ..VerifyOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the equilibrium thresholds and verify them.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Initial guess b11 b12 b21 b22.
        #[arg(long, num_args = 4, value_names = ["B11", "B12", "B21", "B22"])]
        init: Option<Vec<f64>>,
        /// Monte-Carlo cross-check, e.g. `n=20000,dt=1e-4,horizon=300,seed=1`.
        #[arg(long)]
        mc: Option<String>,
        /// Initial states for the Monte-Carlo check.
        #[arg(long, num_args = 1.., default_values_t = [0.2, 0.3, 0.5])]
        mc_x0: Vec<f64>,
    },
    /// Check the sufficient conditions at a given quadruple.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, num_args = 4, required = true, value_names = ["B11", "B12", "B21", "B22"])]
        b: Vec<f64>,
    },
    /// Tabulate v1, v2 and their derivatives over the joint inaction region.
    Values {
        #[command(flatten)]
        common: Common,
        /// Quadruple to evaluate; solved when absent.
        #[arg(long, num_args = 4, value_names = ["B11", "B12", "B21", "B22"])]
        b: Option<Vec<f64>>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Add the single-agent value columns.
        #[arg(long)]
        baselines: bool,
    },
    /// Comparative statics over one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// One of sigma, mu, K1, kappa1, K2, kappa2, r1, r2, a, b, alpha, beta.
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        hi: f64,
        #[arg(long, default_value_t = 13)]
        steps: usize,
        /// Start each row from the previous root (rows then run in order).
        #[arg(long)]
        warm_start: bool,
    },
    /// Simulate the controlled state and estimate both payoffs.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2_000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 300.0)]
        horizon: f64,
        #[arg(long)]
        antithetic: bool,
        /// Quadruple to simulate; the worked example's solution when absent.
        #[arg(long, num_args = 4, value_names = ["B11", "B12", "B21", "B22"])]
        b: Option<Vec<f64>>,
        /// Write the event log of the first path to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Also log every n-th diffusion step in the dump.
        #[arg(long)]
        dump_stride: Option<u64>,
    },
    /// Solve the single-agent benchmark problems.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
}

fn thresholds(b: &[f64]) -> Result<Thresholds, CommandError> {
    Thresholds::from_array([b[0], b[1], b[2], b[3]]).map_err(CommandError::Config)
}

fn parse_mc(spec: &str) -> Result<SimOptions, CommandError> {
    let bad = |msg: String| CommandError::Config(impulse_game::error::GameError::Config(msg));
    let mut opts = SimOptions::default();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value in --mc, got `{part}`")))?;
        let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("--mc {key}: {e}")));
        match key {
            "n" => opts.n_paths = num(value)? as usize,
            "dt" => opts.dt = num(value)?,
            "horizon" => opts.horizon = num(value)?,
            "seed" => opts.seed = num(value)? as u64,
            "antithetic" => opts.antithetic = value == "true" || value == "1",
            _ => return Err(bad(format!("unknown --mc key `{key}`"))),
        }
    }
    opts.validate().map_err(CommandError::Config)?;
    Ok(opts)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CommandError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<(), CommandError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    emit(out, &text)
}

fn run(cli: Cli) -> Result<ExitStatus, CommandError> {
    let load = |c: &Common| load_config(&c.config, c.allow_unchecked).map_err(CommandError::Config);
    match cli.command {
        Command::Solve {
            common,
            grid,
            init,
            mc,
            mc_x0,
        } => {
            let config = load(&common)?;
            let mc = match mc {
                Some(spec) => Some(McRequest {
                    options: parse_mc(&spec)?,
                    x0: mc_x0,
                    ..McRequest::default()
                }),
                None => None,
            };
            let req = SolveRequest {
                initial: init.as_deref().map(thresholds).transpose()?,
                solver: SolverOptions::default(),
                verify: grid.verify_options(common.exec()),
                mc,
            };
            let report = cmd_solve(&config, &req)?;
            emit_json(&common.out, &report)?;
            Ok(report.status)
        }
        Command::Verify { common, grid, b } => {
            let config = load(&common)?;
            let (report, status) = cmd_verify(&config, &thresholds(&b)?, &grid.verify_options(common.exec()))?;
            emit_json(&common.out, &report)?;
            if !report.pass {
                eprintln!("failed conditions: {}", report.failures().join(", "));
            }
            Ok(status)
        }
        Command::Values {
            common,
            b,
            points,
            baselines,
        } => {
            let config = load(&common)?;
            let th = match b {
                Some(b) => thresholds(&b)?,
                None => {
                    let initial = Thresholds::from_array(TABLE1_SOLUTION).expect("ordered constant");
                    let verify = VerifyOptions {
                        exec: common.exec(),
                        ..VerifyOptions::default()
                    };
                    solve_equilibrium(&config, &initial, &SolverOptions::default(), &verify)?
                        .outcome
                        .thresholds
                }
            };
            let rows = cmd_values(&config, &th, points, baselines)?;
            emit(&common.out, &values_csv(&rows))?;
            Ok(ExitStatus::Verified)
        }
        Command::Sweep {
            common,
            grid,
            param,
            lo,
            hi,
            steps,
            warm_start,
        } => {
            let config = load(&common)?;
            let spec = SweepSpec {
                parameter: param.parse::<SweepParam>().map_err(CommandError::Config)?,
                lo,
                hi,
                steps,
                warm_start,
            };
            let rows = cmd_sweep(&config, &spec, &SolverOptions::default(), &grid.verify_options(common.exec()))?;
            emit(&common.out, &sweep_csv(&rows))?;
            Ok(if rows.iter().all(|r| r.verified) {
                ExitStatus::Verified
            } else {
                ExitStatus::Unverified
            })
        }
        Command::Simulate {
            common,
            x0,
            seed,
            paths,
            dt,
            horizon,
            antithetic,
            b,
            dump,
            dump_stride,
        } => {
            let config = load(&common)?;
            let options = SimOptions {
                dt,
                horizon,
                n_paths: paths,
                seed,
                antithetic,
            };
            options.validate().map_err(CommandError::Config)?;
            let req = SimulateRequest {
                thresholds: b.as_deref().map(thresholds).transpose()?,
                x0,
                options,
                exec: common.exec(),
            };
            let report = cmd_simulate(&config, &req)?;
            if let Some(path) = dump {
                dump_first_path(&config, &req, dump_stride, BufWriter::new(File::create(path)?))?;
            }
            emit_json(&common.out, &report)?;
            Ok(ExitStatus::Verified)
        }
        Command::Baseline { common } => {
            let config = load(&common)?;
            emit_json(&common.out, &cmd_baseline(&config)?)?;
            Ok(ExitStatus::Verified)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match run(cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_status()
        }
    };
    ExitCode::from(status.code() as u8)
}
