//! Configuration ingestion, comparative-statics sweeps and the serializable
//! reports behind each command-line subcommand. The binary is a thin
//! argument parser over these functions.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{solve_firm_alone, solve_government_alone, SingleAgentSolution};
use crate::diffusion::{check_integrability, FlatConfig, GameConfig};
use crate::error::{GameError, Result};
use crate::montecarlo::{
    admissibility_stats, estimate_payoffs_with, payoff_estimates, simulate_path_with_events, simulate_paths,
    write_events, AdmissibilityStats, PayoffEstimate, RngStream, SimOptions,
};
use crate::par::Execution;
use crate::solver::{
    default_multistart_grid, integrability_error, multistart_solve_with, solve, SolveOutcome, SolverOptions,
    TABLE1_SOLUTION,
};
use crate::value::{CornerValues, EquilibriumValues, Player, Thresholds};
use crate::verification::{verify_with, VerificationReport, VerifyOptions};

/// Name that resolves to the built-in example when no such file exists.
pub const TABLE1_NAME: &str = "table1";

pub fn parse_config(text: &str) -> Result<GameConfig> {
    // Parse the flat form first so that missing or unknown keys are
    // reported by name with the position toml gives us.
    let flat: FlatConfig = toml::from_str(text).map_err(|e| GameError::Config(e.to_string()))?;
    GameConfig::try_from(flat)
}

pub fn config_to_toml(config: &GameConfig) -> String {
    toml::to_string(&config.flat()).expect("flat config is always representable")
}

/// Reads a configuration file, or the built-in example for `table1`.
/// Integrability is enforced unless `allow_unchecked` is set.
pub fn load_config(path: &str, allow_unchecked: bool) -> Result<GameConfig> {
    let config = if path == TABLE1_NAME && !Path::new(path).exists() {
        GameConfig::table1()
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| GameError::Config(format!("{path}: {e}")))?;
        parse_config(&text).map_err(|e| match e {
            GameError::Config(msg) => GameError::Config(format!("{path}: {msg}")),
            other => other,
        })?
    };
    let check = check_integrability(&config);
    if !check.ok && !allow_unchecked {
        return Err(integrability_error(&config, &check));
    }
    Ok(config)
}

/// Stable process exit contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Verified,
    Unverified,
    Failure,
    ConfigError,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Verified => 0,
            ExitStatus::Unverified => 2,
            ExitStatus::Failure => 3,
            ExitStatus::ConfigError => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("configuration error: {0}")]
    Config(GameError),
    #[error("{0}")]
    Failed(GameError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CommandError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CommandError::Config(_) => ExitStatus::ConfigError,
            _ => ExitStatus::Failure,
        }
    }
}

impl From<GameError> for CommandError {
    fn from(e: GameError) -> Self {
        CommandError::Failed(e)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub start: Thresholds,
    pub iterations: usize,
    pub residuals: [f64; 4],
    pub residual_norm: f64,
    /// Whether the multistart fallback was needed.
    pub multistart: bool,
    /// Distinct roots seen by the multistart, if it ran.
    pub roots_found: usize,
    pub trace_norms: Vec<f64>,
}

/// A solved and verified (or not) quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub outcome: SolveOutcome,
    pub verification: VerificationReport,
    pub summary: SolverSummary,
}

fn summarize(start: Thresholds, out: &SolveOutcome, multistart: bool, roots_found: usize) -> SolverSummary {
    SolverSummary {
        start,
        iterations: out.iterations,
        residuals: out.residuals.to_array(),
        residual_norm: out.residuals.sup_norm(),
        multistart,
        roots_found,
        trace_norms: out.trace.iter().map(|r| r.residual_norm).collect(),
    }
}

/// Newton from `initial`; if that fails or the root does not verify, every
/// root of the multistart grid is tried and the first verified one (in
/// lexicographic order) is returned. Unverified roots are returned only when
/// nothing verifies.
pub fn solve_equilibrium(
    config: &GameConfig,
    initial: &Thresholds,
    solver: &SolverOptions,
    verify: &VerifyOptions,
) -> Result<Equilibrium> {
    let direct = solve(config, initial, solver);
    let mut fallback = None;
    if let Ok(out) = &direct {
        let report = verify_with(config, &out.thresholds, verify)?;
        let summary = summarize(*initial, out, false, 0);
        if report.pass {
            return Ok(Equilibrium {
                outcome: out.clone(),
                verification: report,
                summary,
            });
        }
        fallback = Some(Equilibrium {
            outcome: out.clone(),
            verification: report,
            summary,
        });
    }

    let mut opts = solver.clone();
    if opts.multistart_grid.is_empty() {
        opts.multistart_grid = default_multistart_grid();
    }
    let roots = multistart_solve_with(config, &opts, verify.exec)?;
    let mut best_unverified: Option<Equilibrium> = None;
    for root in &roots {
        let out = solve(config, &root.thresholds, solver)?;
        let report = verify_with(config, &out.thresholds, verify)?;
        let eq = Equilibrium {
            summary: summarize(root.thresholds, &out, true, roots.len()),
            outcome: out,
            verification: report,
        };
        if eq.verification.pass {
            return Ok(eq);
        }
        let better = best_unverified
            .as_ref()
            .is_none_or(|b| eq.summary.residual_norm < b.summary.residual_norm);
        if better {
            best_unverified = Some(eq);
        }
    }
    match (fallback, best_unverified) {
        (Some(f), _) => Ok(f),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(direct
            .err()
            .expect("a successful direct solve always leaves a fallback")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McPoint {
    pub x0: f64,
    pub analytic_firm: f64,
    pub analytic_government: f64,
    pub firm: PayoffEstimate,
    pub government: PayoffEstimate,
    pub firm_within: bool,
    pub government_within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McBlock {
    pub options: SimOptions,
    /// Agreement means `|estimate − analytic| ≤ z · SE`.
    pub z: f64,
    pub points: Vec<McPoint>,
    pub agree: bool,
}

/// Monte-Carlo cross-check of the analytic values at the given states.
pub fn monte_carlo_block(
    ev: &EquilibriumValues,
    x0s: &[f64],
    options: &SimOptions,
    z: f64,
    exec: Execution,
) -> Result<McBlock> {
    let mut points = Vec::with_capacity(x0s.len());
    for &x0 in x0s {
        let (firm, government) = estimate_payoffs_with(&ev.config, &ev.thresholds, x0, options, exec)?;
        let analytic_firm = ev.value(Player::Firm, x0)?;
        let analytic_government = ev.value(Player::Government, x0)?;
        points.push(McPoint {
            x0,
            analytic_firm,
            analytic_government,
            firm_within: firm.covers(analytic_firm, z),
            government_within: government.covers(analytic_government, z),
            firm,
            government,
        });
    }
    Ok(McBlock {
        options: *options,
        z,
        agree: points.iter().all(|p| p.firm_within && p.government_within),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Full resolved configuration; enough to rerun the report.
    pub config: GameConfig,
    pub thresholds: Thresholds,
    pub corners: CornerValues,
    pub verification: VerificationReport,
    pub solver: SolverSummary,
    pub monte_carlo: Option<McBlock>,
    pub status: ExitStatus,
    pub generated_unix_seconds: u64,
}

#[derive(Debug, Clone)]
pub struct McRequest {
    pub options: SimOptions,
    pub x0: Vec<f64>,
    pub z: f64,
}

impl Default for McRequest {
    fn default() -> Self {
        Self {
            options: SimOptions::default(),
            x0: vec![0.2, 0.3, 0.5],
            z: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveRequest {
    /// Defaults to the worked example's solution.
    pub initial: Option<Thresholds>,
    pub solver: SolverOptions,
    pub verify: VerifyOptions,
    pub mc: Option<McRequest>,
}

fn default_initial() -> Thresholds {
    Thresholds::from_array(TABLE1_SOLUTION).expect("ordered constant")
}

pub fn cmd_solve(config: &GameConfig, req: &SolveRequest) -> std::result::Result<RunReport, CommandError> {
    let initial = req.initial.unwrap_or_else(default_initial);
    let eq = solve_equilibrium(config, &initial, &req.solver, &req.verify)?;
    let ev = EquilibriumValues::new(config, &eq.outcome.thresholds)?;
    let monte_carlo = match &req.mc {
        Some(mc) => Some(monte_carlo_block(&ev, &mc.x0, &mc.options, mc.z, req.verify.exec)?),
        None => None,
    };
    Ok(RunReport {
        config: *config,
        thresholds: eq.outcome.thresholds,
        corners: ev.corners,
        status: if eq.verification.pass {
            ExitStatus::Verified
        } else {
            ExitStatus::Unverified
        },
        verification: eq.verification,
        solver: eq.summary,
        monte_carlo,
        generated_unix_seconds: unix_now(),
    })
}

pub fn cmd_verify(
    config: &GameConfig,
    th: &Thresholds,
    opts: &VerifyOptions,
) -> std::result::Result<(VerificationReport, ExitStatus), CommandError> {
    let report = verify_with(config, th, opts)?;
    let status = if report.pass {
        ExitStatus::Verified
    } else {
        ExitStatus::Unverified
    };
    Ok((report, status))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub x: f64,
    pub v1: f64,
    pub v2: f64,
    pub dv1: f64,
    pub dv2: f64,
    pub v1_alone: Option<f64>,
    pub v2_alone: Option<f64>,
}

/// `v₁, v₂, v₁', v₂'` on `n` interior points of `(b11, b22)`, optionally
/// with the single-agent values alongside.
pub fn cmd_values(
    config: &GameConfig,
    th: &Thresholds,
    n: usize,
    baselines: bool,
) -> std::result::Result<Vec<ValueRow>, CommandError> {
    let ev = EquilibriumValues::new(config, th)?;
    let alone = if baselines {
        Some((solve_firm_alone(config)?, solve_government_alone(config)?))
    } else {
        None
    };
    let n = n.max(1);
    (1..=n)
        .map(|i| {
            let x = th.b11 + (th.b22 - th.b11) * i as f64 / (n + 1) as f64;
            Ok(ValueRow {
                x,
                v1: ev.value(Player::Firm, x)?,
                v2: ev.value(Player::Government, x)?,
                dv1: ev.derivative(Player::Firm, x)?,
                dv2: ev.derivative(Player::Government, x)?,
                v1_alone: alone.as_ref().map(|(f, _)| f.value(x)),
                v2_alone: alone.as_ref().map(|(_, g)| g.value(x)),
            })
        })
        .collect()
}

pub fn values_csv(rows: &[ValueRow]) -> String {
    let with_alone = rows.first().is_some_and(|r| r.v1_alone.is_some());
    let mut out = String::from("x,v1,v2,dv1,dv2");
    if with_alone {
        out.push_str(",v1_alone,v2_alone");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{},{}", r.x, r.v1, r.v2, r.dv1, r.dv2);
        if let (Some(a), Some(b)) = (r.v1_alone, r.v2_alone) {
            let _ = write!(out, ",{a},{b}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "sigma")]
    Sigma,
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "K1")]
    K1,
    #[serde(rename = "kappa1")]
    Kappa1,
    #[serde(rename = "K2")]
    K2,
    #[serde(rename = "kappa2")]
    Kappa2,
    #[serde(rename = "r1")]
    R1,
    #[serde(rename = "r2")]
    R2,
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "beta")]
    Beta,
}

impl SweepParam {
    pub const ALL: [SweepParam; 12] = [
        SweepParam::Sigma,
        SweepParam::Mu,
        SweepParam::K1,
        SweepParam::Kappa1,
        SweepParam::K2,
        SweepParam::Kappa2,
        SweepParam::R1,
        SweepParam::R2,
        SweepParam::A,
        SweepParam::B,
        SweepParam::Alpha,
        SweepParam::Beta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::Mu => "mu",
            SweepParam::K1 => "K1",
            SweepParam::Kappa1 => "kappa1",
            SweepParam::K2 => "K2",
            SweepParam::Kappa2 => "kappa2",
            SweepParam::R1 => "r1",
            SweepParam::R2 => "r2",
            SweepParam::A => "a",
            SweepParam::B => "b",
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
        }
    }

    fn slot(self, flat: &mut FlatConfig) -> &mut f64 {
        match self {
            SweepParam::Sigma => &mut flat.sigma,
            SweepParam::Mu => &mut flat.mu,
            SweepParam::K1 => &mut flat.k1,
            SweepParam::Kappa1 => &mut flat.kappa1,
            SweepParam::K2 => &mut flat.k2,
            SweepParam::Kappa2 => &mut flat.kappa2,
            SweepParam::R1 => &mut flat.r1,
            SweepParam::R2 => &mut flat.r2,
            SweepParam::A => &mut flat.a,
            SweepParam::B => &mut flat.b,
            SweepParam::Alpha => &mut flat.alpha,
            SweepParam::Beta => &mut flat.beta,
        }
    }

    pub fn apply(self, config: &GameConfig, value: f64) -> Result<GameConfig> {
        let mut flat = config.flat();
        *self.slot(&mut flat) = value;
        GameConfig::try_from(flat)
    }
}

impl FromStr for SweepParam {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GameError::Config(format!("unknown sweep parameter `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    /// Start each row from the previous row's root. Forces sequential rows.
    pub warm_start: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(GameError::Config(format!(
                "sweep needs lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.steps < 2 {
            return Err(GameError::Config(format!("sweep needs at least 2 steps, got {}", self.steps)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub thresholds: Option<Thresholds>,
    pub iterations: usize,
    pub verified: bool,
    /// `ok`, `unverified`, or the failure message.
    pub status: String,
}

impl SweepRow {
    /// `b12 − b11`, in output units.
    pub fn firm_size(&self) -> Option<f64> {
        self.thresholds.map(|t| t.firm_jump())
    }

    pub fn gov_size(&self) -> Option<f64> {
        self.thresholds.map(|t| t.government_jump())
    }
}

fn sweep_row(base: &GameConfig, spec: &SweepSpec, value: f64, initial: &Thresholds, solver: &SolverOptions, verify: &VerifyOptions) -> SweepRow {
    let failed = |status: String| SweepRow {
        param: value,
        thresholds: None,
        iterations: 0,
        verified: false,
        status,
    };
    let config = match spec.parameter.apply(base, value) {
        Ok(c) => c,
        Err(e) => return failed(format!("invalid: {e}")),
    };
    let check = check_integrability(&config);
    if !check.ok {
        return failed(format!("skipped: {}", integrability_error(&config, &check)));
    }
    match solve_equilibrium(&config, initial, solver, verify) {
        Ok(eq) => SweepRow {
            param: value,
            thresholds: Some(eq.outcome.thresholds),
            iterations: eq.outcome.iterations,
            verified: eq.verification.pass,
            status: if eq.verification.pass { "ok" } else { "unverified" }.to_string(),
        },
        Err(e) => failed(format!("failed: {e}")),
    }
}

/// One row per parameter value, in parameter order. Failures are recorded
/// in the status column and do not stop the sweep.
pub fn cmd_sweep(
    config: &GameConfig,
    spec: &SweepSpec,
    solver: &SolverOptions,
    verify: &VerifyOptions,
) -> std::result::Result<Vec<SweepRow>, CommandError> {
    spec.validate().map_err(CommandError::Config)?;
    let values = spec.values();
    let cold = default_initial();
    if spec.warm_start {
        let mut rows = Vec::with_capacity(values.len());
        let mut start = cold;
        for &v in &values {
            let row = sweep_row(config, spec, v, &start, solver, verify);
            if let Some(t) = row.thresholds.filter(|_| row.verified) {
                start = t;
            }
            rows.push(row);
        }
        Ok(rows)
    } else {
        // rows are independent; the inner grids then run sequentially
        let inner = VerifyOptions {
            exec: Execution::Sequential,
            ..*verify
        };
        Ok(verify
            .exec
            .map_slice(&values, |&v| sweep_row(config, spec, v, &cold, solver, &inner)))
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,b11,b12,b21,b22,firm_size,gov_size,verified,status\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let t = r.thresholds.map(|t| t.to_array());
        let b = |i: usize| cell(t.map(|a| a[i]));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.param,
            b(0),
            b(1),
            b(2),
            b(3),
            cell(r.firm_size()),
            cell(r.gov_size()),
            r.verified,
            r.status.replace(',', ";")
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: GameConfig,
    pub thresholds: Thresholds,
    pub x0: f64,
    pub options: SimOptions,
    pub firm: PayoffEstimate,
    pub government: PayoffEstimate,
    pub analytic_firm: f64,
    pub analytic_government: f64,
    pub admissibility: AdmissibilityStats,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct SimulateRequest {
    pub thresholds: Option<Thresholds>,
    pub x0: f64,
    pub options: SimOptions,
    pub exec: Execution,
}

pub fn cmd_simulate(config: &GameConfig, req: &SimulateRequest) -> std::result::Result<SimulationReport, CommandError> {
    let th = req.thresholds.unwrap_or_else(default_initial);
    let records = simulate_paths(config, &th, req.x0, &req.options, req.exec)?;
    let (firm, government) = payoff_estimates(config, &th, &req.options, &records);
    let ev = EquilibriumValues::new(config, &th)?;
    Ok(SimulationReport {
        config: *config,
        thresholds: th,
        x0: req.x0,
        options: req.options,
        firm,
        government,
        analytic_firm: ev.value(Player::Firm, req.x0)?,
        analytic_government: ev.value(Player::Government, req.x0)?,
        admissibility: admissibility_stats(&records)?,
        note: "admissibility figures are finite-horizon surrogates of the infinite-horizon conditions".into(),
    })
}

/// Event log of path 0 as delimited text.
pub fn dump_first_path<W: std::io::Write>(
    config: &GameConfig,
    req: &SimulateRequest,
    step_stride: Option<u64>,
    out: W,
) -> std::result::Result<(), CommandError> {
    let th = req.thresholds.unwrap_or_else(default_initial);
    let stream = RngStream::for_path(&req.options, 0);
    let (_, events) = simulate_path_with_events(config, &th, req.x0, &req.options, stream, step_stride)?;
    write_events(&events, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub config: GameConfig,
    pub firm: SingleAgentSolution,
    pub government: SingleAgentSolution,
}

pub fn cmd_baseline(config: &GameConfig) -> std::result::Result<BaselineReport, CommandError> {
    Ok(BaselineReport {
        config: *config,
        firm: solve_firm_alone(config)?,
        government: solve_government_alone(config)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::{GridSpec, Spacing};

    fn quick_verify() -> VerifyOptions {
        VerifyOptions {
            grid: GridSpec {
                n_points: 500,
                spacing: Spacing::Linear,
            },
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn shipped_config_is_the_worked_example() {
        let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/table1.toml")).unwrap();
        assert_eq!(parse_config(&text).unwrap(), GameConfig::table1());
        assert_eq!(load_config(TABLE1_NAME, false).unwrap(), GameConfig::table1());
        assert_eq!(parse_config(&config_to_toml(&GameConfig::table1())).unwrap(), GameConfig::table1());
    }

    #[test]
    fn missing_key_is_named() {
        let text = config_to_toml(&GameConfig::table1()).replace("kappa2 = 0.3\n", "");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("kappa2"), "{err}");
    }

    #[test]
    fn zero_sigma_is_rejected() {
        let text = config_to_toml(&GameConfig::table1()).replace("sigma = 0.2", "sigma = 0.0");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("sigma"), "{err}");
    }

    #[test]
    fn unknown_key_and_bad_syntax() {
        let text = config_to_toml(&GameConfig::table1()) + "gamma = 1.0\n";
        assert!(parse_config(&text).unwrap_err().to_string().contains("gamma"));
        let err = parse_config("mu = 0.02\nsigma = = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn integrability_gate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        let text = config_to_toml(&GameConfig::table1()).replace("r2 = 0.1", "r2 = 0.05");
        std::fs::write(&path, text).unwrap();
        let p = path.to_str().unwrap();
        assert!(matches!(
            load_config(p, false),
            Err(GameError::IntegrabilityViolation { .. })
        ));
        let cfg = load_config(p, true).unwrap();
        let err = cmd_solve(&cfg, &SolveRequest::default()).unwrap_err();
        assert_eq!(err.exit_status(), ExitStatus::Failure);
    }

    #[test]
    fn solve_report_round_trips() {
        let req = SolveRequest {
            verify: quick_verify(),
            ..SolveRequest::default()
        };
        let report = cmd_solve(&GameConfig::table1(), &req).unwrap();
        assert_eq!(report.status, ExitStatus::Verified);
        for (got, want) in report.thresholds.to_array().iter().zip(TABLE1_SOLUTION) {
            assert!((got - want).abs() < 1e-6);
        }
        let json = serde_json::to_string(&report).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn verify_names_failures() {
        let th = Thresholds::new(0.1, 0.4, 0.25, 0.6).unwrap();
        let (report, status) = cmd_verify(&GameConfig::table1(), &th, &quick_verify()).unwrap();
        assert_eq!(status, ExitStatus::Unverified);
        assert!(report.failures().contains(&"root"));
    }

    #[test]
    fn sweep_parameter_names() {
        for p in SweepParam::ALL {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
        assert!("gamma".parse::<SweepParam>().is_err());
        let bad = SweepSpec {
            parameter: SweepParam::Sigma,
            lo: 0.2,
            hi: 0.1,
            steps: 3,
            warm_start: false,
        };
        let err = cmd_sweep(&GameConfig::table1(), &bad, &SolverOptions::default(), &quick_verify()).unwrap_err();
        assert_eq!(err.exit_status(), ExitStatus::ConfigError);
    }

    #[test]
    fn warm_start_only_changes_iterations() {
        let cfg = GameConfig::table1();
        let spec = SweepSpec {
            parameter: SweepParam::Sigma,
            lo: 0.19,
            hi: 0.22,
            steps: 7,
            warm_start: true,
        };
        let warm = cmd_sweep(&cfg, &spec, &SolverOptions::default(), &quick_verify()).unwrap();
        let cold = cmd_sweep(
            &cfg,
            &SweepSpec {
                warm_start: false,
                ..spec
            },
            &SolverOptions::default(),
            &quick_verify(),
        )
        .unwrap();
        for (w, c) in warm.iter().zip(&cold) {
            assert!(w.verified && c.verified);
            for (p, q) in w.thresholds.unwrap().to_array().iter().zip(c.thresholds.unwrap().to_array()) {
                assert!((p - q).abs() < 1e-8);
            }
        }
        let csv = sweep_csv(&warm);
        assert!(csv.starts_with("param,b11,b12,b21,b22,firm_size,gov_size,verified,status\n0.19,"));
        assert_eq!(csv.lines().count(), 8);
    }

    #[test]
    fn sweep_records_invalid_rows() {
        let spec = SweepSpec {
            parameter: SweepParam::R2,
            lo: 0.01,
            hi: 0.1,
            steps: 2,
            warm_start: false,
        };
        let rows = cmd_sweep(&GameConfig::table1(), &spec, &SolverOptions::default(), &quick_verify()).unwrap();
        assert!(rows[0].status.starts_with("skipped"));
        assert!(rows[1].verified);
    }

    #[test]
    fn values_table_shape() {
        let th = default_initial();
        let rows = cmd_values(&GameConfig::table1(), &th, 50, true).unwrap();
        assert_eq!(rows.len(), 50);
        let csv = values_csv(&rows);
        assert!(csv.starts_with("x,v1,v2,dv1,dv2,v1_alone,v2_alone\n"));
        assert!(rows.iter().all(|r| r.x > th.b11 && r.x < th.b22));
    }

    #[test]
    fn simulate_is_deterministic() {
        let req = SimulateRequest {
            thresholds: None,
            x0: 0.3,
            options: SimOptions {
                dt: 1e-3,
                horizon: 5.0,
                n_paths: 8,
                seed: 7,
                antithetic: false,
            },
            exec: Execution::default(),
        };
        let a = cmd_simulate(&GameConfig::table1(), &req).unwrap();
        let b = cmd_simulate(&GameConfig::table1(), &req).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let mut buf = Vec::new();
        dump_first_path(&GameConfig::table1(), &req, None, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("time,type,state_pre,state_post"));
    }

    #[test]
    fn baseline_report() {
        let r = cmd_baseline(&GameConfig::table1()).unwrap();
        assert!(r.firm.trigger < r.firm.target);
        assert!(r.government.target < r.government.trigger);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<BaselineReport>(&json).unwrap(), r);
    }
}
