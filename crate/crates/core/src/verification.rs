//! Sufficient conditions for a candidate quadruple to be an equilibrium, and
//! a grid check of the quasi-variational inequalities the values satisfy.
//!
//! Inequalities on intervals are checked on dense grids and reported with
//! their worst margin, so a failing report also says where it failed.
//! Margins are oriented so that positive means "satisfied".

use serde::{Deserialize, Serialize};

use crate::diffusion::GameConfig;
use crate::error::{GameError, Result};
use crate::par::Execution;
use crate::solver::residuals_of;
use crate::value::{nondegeneracy_margin, EquilibriumValues, Player, Side, Thresholds};

/// Strict inequalities must hold with at least this margin at grid points.
pub const STRICT_MARGIN: f64 = 1e-12;
/// Floor for the slack granted to non-strict inequalities and obstacle gaps.
pub const NONSTRICT_SLACK: f64 = 1e-9;
/// Tolerance on the generator identity inside the joint inaction region.
pub const PDE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per checked interval.
    pub n_points: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(GameError::InvalidParameter {
                name: "n_points",
                value: self.n_points as f64,
                reason: "grids need at least 2 points",
            });
        }
        Ok(())
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_points: 10_000,
            spacing: Spacing::Linear,
        }
    }
}

/// `n` points in the interval from `lo` to `hi`; the flags decide whether the
/// endpoints belong to it.
pub fn interval_points(lo: f64, hi: f64, grid: &GridSpec, include_lo: bool, include_hi: bool) -> Vec<f64> {
    let n = grid.n_points.max(1);
    let (first, divisions) = match (include_lo, include_hi) {
        (true, true) => (0, n.saturating_sub(1).max(1)),
        (true, false) => (0, n),
        (false, true) => (1, n),
        (false, false) => (1, n + 1),
    };
    let map = |t: f64| match grid.spacing {
        Spacing::Linear => lo + (hi - lo) * t,
        Spacing::Log => (lo.ln() + (hi.ln() - lo.ln()) * t).exp(),
    };
    (0..n)
        .map(|i| {
            let x = map((first + i) as f64 / divisions as f64);
            // pin endpoints exactly; exp(ln(x)) need not round-trip
            if first + i == 0 {
                lo
            } else if first + i == divisions {
                hi
            } else {
                x
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub pass: bool,
    pub worst_x: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XhatCheck {
    pub pass: bool,
    /// `None` when the stationary point does not exist.
    pub xhat: Option<f64>,
    pub threshold: f64,
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCheck {
    pub pass: bool,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyCheck {
    pub pass: bool,
    pub margins: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootCheck {
    pub pass: bool,
    pub residual_norm: f64,
    pub tolerance: f64,
}

/// A hypothesis checked on samples only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCheck {
    pub pass: bool,
    /// `None` when there was nothing to sample.
    pub worst_x: Option<f64>,
    pub margin: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerQvi {
    /// `max |(L v − r v) + f|` inside `(b11, b22)`.
    pub pde_interior_max_abs: f64,
    /// Firm: `max (L v₁ − r₁v₁) + π` on `x < b11` (must be ≤ 0).
    /// Government: `min (L v₂ − r₂v₂) + C` on `x > b22` (must be ≥ 0).
    pub pde_action_worst: f64,
    /// Firm: `min v₁ − M₁v₁`; government: `min M₂v₂ − v₂`. Must be ≥ 0.
    pub obstacle_min_gap: f64,
    /// `max |max{pde, M₁v₁ − v₁}|` on `x < b22` (firm) or
    /// `max |min{pde, M₂v₂ − v₂}|` on `x > b11` (government).
    pub qvi_max_abs: f64,
    /// Deviation from the constant branch on the other player's action region.
    pub constancy_max_abs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QviReport {
    pub firm: PlayerQvi,
    pub government: PlayerQvi,
    pub x_max: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub thresholds: Thresholds,
    /// The quadruple solves the smooth-fit/optimal-target system.
    pub root: RootCheck,
    /// `v₁' ≥ κ₁/α` on `(b11, b12]`
    pub cond_derivative_firm_lo: ConditionCheck,
    /// `v₁' < κ₁/α` on `(b12, b22]`
    pub cond_derivative_firm_hi: ConditionCheck,
    /// `v₂' < κ₂` on `(b11, b21)`
    pub cond_derivative_gov_lo: ConditionCheck,
    /// `v₂' ≥ κ₂` on `[b21, b22)`
    pub cond_derivative_gov_hi: ConditionCheck,
    /// `b11 ≤ x̂₁`
    pub cond_xhat_firm: XhatCheck,
    /// `b22 ≥ x̂₂`
    pub cond_xhat_gov: XhatCheck,
    /// `π(b11) + (κ₁/α)μ(b11) − r₁v₁(b11) ≤ 0`
    pub cond_boundary_firm: BoundaryCheck,
    /// `C(βb22) + κ₂μ(b22) − r₂v₂(b22) ≥ 0`
    pub cond_boundary_gov: BoundaryCheck,
    pub assumption_theta_firm: SampledCheck,
    pub assumption_theta_gov: SampledCheck,
    pub nondegeneracy: NondegeneracyCheck,
    pub qvi: QviReport,
    pub pass: bool,
}

impl VerificationReport {
    /// Names of the failing sub-conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        let checks = [
            ("root", self.root.pass),
            ("derivative_firm_lo", self.cond_derivative_firm_lo.pass),
            ("derivative_firm_hi", self.cond_derivative_firm_hi.pass),
            ("derivative_gov_lo", self.cond_derivative_gov_lo.pass),
            ("derivative_gov_hi", self.cond_derivative_gov_hi.pass),
            ("xhat_firm", self.cond_xhat_firm.pass),
            ("xhat_gov", self.cond_xhat_gov.pass),
            ("boundary_firm", self.cond_boundary_firm.pass),
            ("boundary_gov", self.cond_boundary_gov.pass),
            ("assumption_theta_firm", self.assumption_theta_firm.pass),
            ("assumption_theta_gov", self.assumption_theta_gov.pass),
            ("nondegeneracy", self.nondegeneracy.pass),
            ("qvi", self.qvi.pass),
        ];
        checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect()
    }
}

/// `θ₁(x) = π(x) + (κ₁/α)(μ(x) − r₁x)`, `θ₂(x) = C(βx) + κ₂(μ(x) − r₂x)`.
pub fn theta(config: &GameConfig, player: Player, x: f64) -> f64 {
    config.flow(player).eval(x)
        + config.marginal_cost(player) * (config.gbm.drift(x) - config.rate(player) * x)
}

pub fn theta_derivative(config: &GameConfig, player: Player, x: f64) -> f64 {
    config.flow(player).derivative(x)
        + config.marginal_cost(player) * (config.gbm.mu - config.rate(player))
}

/// Stationary point of `θᵢ` for power flows under GBM.
pub fn xhat(config: &GameConfig, player: Player) -> Result<f64> {
    let r = config.rate(player);
    let mu = config.gbm.mu;
    if !(r > mu) {
        return Err(GameError::NoStationaryPoint { player, rate: r, mu });
    }
    let flow = config.flow(player);
    let p = flow.exponent;
    // p·s^p·x^{p−1} = m(r − μ)
    let base = config.marginal_cost(player) * (r - mu) / (p * flow.scale.powf(p));
    Ok(base.powf(1.0 / (p - 1.0)))
}

/// Firm: `v₁ − M₁v₁`; government: `M₂v₂ − v₂`. Nonnegative at an equilibrium.
pub fn obstacle_gap(ev: &EquilibriumValues, player: Player, x: f64) -> Result<f64> {
    Ok(match player {
        Player::Firm => ev.value(player, x)? - intervention_operator(ev, player, x)?,
        Player::Government => intervention_operator(ev, player, x)? - ev.value(player, x)?,
    })
}

/// Best value reachable by an immediate impulse, net of its cost.
pub fn intervention_operator(ev: &EquilibriumValues, player: Player, x: f64) -> Result<f64> {
    let th = &ev.thresholds;
    let c = &ev.config;
    match player {
        Player::Firm => {
            if x <= th.b12 {
                Ok(ev.value(player, th.b12)? - c.k1 - c.marginal_cost(player) * (th.b12 - x))
            } else {
                Ok(ev.value(player, x)? - c.k1)
            }
        }
        Player::Government => {
            if x >= th.b21 {
                Ok(ev.value(player, th.b21)? + c.k2 + c.kappa2 * (x - th.b21))
            } else {
                Ok(ev.value(player, x)? + c.k2)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub grid: GridSpec,
    /// Residual sup-norm below which the quadruple counts as a root.
    pub root_tolerance: f64,
    /// The QVI grids extend to `x_max_factor · b22`.
    pub x_max_factor: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            root_tolerance: 1e-6,
            x_max_factor: 4.0,
            exec: Execution::default(),
        }
    }
}

pub fn verify(config: &GameConfig, th: &Thresholds, grid: &GridSpec) -> Result<VerificationReport> {
    verify_with(
        config,
        th,
        &VerifyOptions {
            grid: *grid,
            ..VerifyOptions::default()
        },
    )
}

/// `worst(f(x))` over points, returned with the arg.
fn extreme<F>(exec: Execution, xs: &[f64], f: F, minimize: bool) -> (f64, f64)
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let values = exec.map_slice(xs, |&x| f(x));
    let mut best = (f64::NAN, if minimize { f64::INFINITY } else { f64::NEG_INFINITY });
    for (&x, &v) in xs.iter().zip(values.iter()) {
        // NaN counts as the worst possible value
        let worse = if minimize { !(v >= best.1) } else { !(v <= best.1) };
        if worse {
            best = (x, v);
        }
    }
    best
}

pub fn verify_with(config: &GameConfig, th: &Thresholds, opts: &VerifyOptions) -> Result<VerificationReport> {
    opts.grid.validate()?;
    let ev = EquilibriumValues::new(config, th)?;
    let exec = opts.exec;
    let grid = &opts.grid;

    let residual_norm = residuals_of(&ev).sup_norm();
    let root = RootCheck {
        pass: residual_norm <= opts.root_tolerance,
        residual_norm,
        tolerance: opts.root_tolerance,
    };
    // Equalities imposed by the root system sit at closed ends of the
    // non-strict intervals, so they may be off by the root's own residual.
    let slack = NONSTRICT_SLACK.max(residual_norm.min(opts.root_tolerance));

    let m1 = config.marginal_cost(Player::Firm);
    let m2 = config.marginal_cost(Player::Government);
    let dv = |p: Player, x: f64| {
        ev.derivative_sided(p, x, Side::Left)
            .expect("grid points are positive")
    };

    let nonstrict = |(x, m): (f64, f64)| ConditionCheck {
        pass: m >= -slack,
        worst_x: x,
        margin: m,
    };
    let strict = |(x, m): (f64, f64)| ConditionCheck {
        pass: m >= STRICT_MARGIN,
        worst_x: x,
        margin: m,
    };

    let xs = interval_points(th.b11, th.b12, grid, false, true);
    let cond_derivative_firm_lo = nonstrict(extreme(exec, &xs, |x| dv(Player::Firm, x) - m1, true));
    // left derivative at b22 is the interior one
    let xs = interval_points(th.b12, th.b22, grid, false, true);
    let cond_derivative_firm_hi = strict(extreme(exec, &xs, |x| m1 - dv(Player::Firm, x), true));
    let xs = interval_points(th.b11, th.b21, grid, false, false);
    let cond_derivative_gov_lo = strict(extreme(exec, &xs, |x| m2 - dv(Player::Government, x), true));
    let xs = interval_points(th.b21, th.b22, grid, true, false);
    let cond_derivative_gov_hi = nonstrict(extreme(exec, &xs, |x| dv(Player::Government, x) - m2, true));

    let xhat_check = |player: Player, threshold: f64| match xhat(config, player) {
        Ok(xh) => {
            let margin = match player {
                Player::Firm => xh - threshold,
                Player::Government => threshold - xh,
            };
            XhatCheck {
                pass: margin >= 0.0,
                xhat: Some(xh),
                threshold,
                margin: Some(margin),
            }
        }
        Err(_) => XhatCheck {
            pass: false,
            xhat: None,
            threshold,
            margin: None,
        },
    };
    let cond_xhat_firm = xhat_check(Player::Firm, th.b11);
    let cond_xhat_gov = xhat_check(Player::Government, th.b22);

    let firm_boundary = boundary_value(&ev, Player::Firm)?;
    let gov_boundary = boundary_value(&ev, Player::Government)?;
    let cond_boundary_firm = BoundaryCheck {
        pass: firm_boundary <= 0.0,
        value: firm_boundary,
    };
    let cond_boundary_gov = BoundaryCheck {
        pass: gov_boundary >= 0.0,
        value: gov_boundary,
    };

    let assumption_theta_firm = theta_assumption(config, Player::Firm, grid, exec);
    let assumption_theta_gov = theta_assumption(config, Player::Government, grid, exec);

    let margins = [
        nondegeneracy_margin(ev.kernel(Player::Firm), th)?,
        nondegeneracy_margin(ev.kernel(Player::Government), th)?,
    ];
    let nondegeneracy = NondegeneracyCheck {
        pass: margins
            .iter()
            .all(|m| m.abs() >= crate::value::DEFAULT_DEGENERACY_EPS),
        margins,
    };

    let qvi = qvi_check_with(&ev, opts)?;

    let pass = root.pass
        && cond_derivative_firm_lo.pass
        && cond_derivative_firm_hi.pass
        && cond_derivative_gov_lo.pass
        && cond_derivative_gov_hi.pass
        && cond_xhat_firm.pass
        && cond_xhat_gov.pass
        && cond_boundary_firm.pass
        && cond_boundary_gov.pass
        && assumption_theta_firm.pass
        && assumption_theta_gov.pass
        && nondegeneracy.pass
        && qvi.pass;

    Ok(VerificationReport {
        thresholds: *th,
        root,
        cond_derivative_firm_lo,
        cond_derivative_firm_hi,
        cond_derivative_gov_lo,
        cond_derivative_gov_hi,
        cond_xhat_firm,
        cond_xhat_gov,
        cond_boundary_firm,
        cond_boundary_gov,
        assumption_theta_firm,
        assumption_theta_gov,
        nondegeneracy,
        qvi,
        pass,
    })
}

/// Firm: `π(b11) + (κ₁/α)μ(b11) − r₁v₁(b11)`;
/// government: `C(βb22) + κ₂μ(b22) − r₂v₂(b22)`.
pub fn boundary_value(ev: &EquilibriumValues, player: Player) -> Result<f64> {
    let c = &ev.config;
    let x = match player {
        Player::Firm => ev.thresholds.b11,
        Player::Government => ev.thresholds.b22,
    };
    Ok(c.flow(player).eval(x) + c.marginal_cost(player) * c.gbm.drift(x)
        - c.rate(player) * ev.value(player, x)?)
}

/// Firm: θ₁ increasing below `x̂₁`, government: θ₂ increasing above `x̂₂`,
/// both with the stationary point a local extremum. Sampled on a log grid
/// spanning six decades.
fn theta_assumption(config: &GameConfig, player: Player, grid: &GridSpec, exec: Execution) -> SampledCheck {
    let note = "sampled, not proven".to_string();
    let Ok(xh) = xhat(config, player) else {
        return SampledCheck {
            pass: false,
            worst_x: None,
            margin: None,
            note: "no interior stationary point".to_string(),
        };
    };
    let log_grid = GridSpec {
        n_points: grid.n_points,
        spacing: Spacing::Log,
    };
    let xs = match player {
        Player::Firm => interval_points(xh * 1e-6, xh, &log_grid, true, true),
        Player::Government => interval_points(xh, xh * 1e6, &log_grid, true, true),
    };
    let theta_at = exec.map_slice(&xs, |&x| theta(config, player, x));
    let mut worst = (f64::NAN, f64::INFINITY);
    for i in 1..xs.len() {
        let inc = theta_at[i] - theta_at[i - 1];
        let rel = inc / theta_at[i].abs().max(theta_at[i - 1].abs()).max(f64::MIN_POSITIVE);
        if rel < worst.1 {
            worst = (xs[i], rel);
        }
    }
    let h = 1e-3 * xh;
    let local = match player {
        Player::Firm => {
            theta(config, player, xh) >= theta(config, player, xh - h)
                && theta(config, player, xh) >= theta(config, player, xh + h)
        }
        Player::Government => {
            theta(config, player, xh) <= theta(config, player, xh - h)
                && theta(config, player, xh) <= theta(config, player, xh + h)
        }
    };
    // The grid ends at the stationary point, where the increment may vanish.
    SampledCheck {
        pass: local && worst.1 > -1e-12,
        worst_x: Some(worst.0),
        margin: Some(worst.1),
        note,
    }
}

pub fn qvi_check(config: &GameConfig, th: &Thresholds, grid: &GridSpec) -> Result<QviReport> {
    let ev = EquilibriumValues::new(config, th)?;
    qvi_check_with(
        &ev,
        &VerifyOptions {
            grid: *grid,
            ..VerifyOptions::default()
        },
    )
}

pub fn qvi_check_with(ev: &EquilibriumValues, opts: &VerifyOptions) -> Result<QviReport> {
    opts.grid.validate()?;
    let th = ev.thresholds;
    let x_max = opts.x_max_factor * th.b22;
    let grid = &opts.grid;
    let exec = opts.exec;

    // Region grids; kinks themselves are left out of the PDE checks.
    let lower = match grid.spacing {
        Spacing::Linear => interval_points(0.0, th.b11, grid, false, true),
        Spacing::Log => interval_points(th.b11 * 1e-4, th.b11, grid, true, true),
    };
    let interior = interval_points(th.b11, th.b22, grid, false, false);
    let upper = interval_points(th.b22, x_max, grid, true, true);
    let all: Vec<f64> = lower.iter().chain(&interior).chain(&upper).copied().collect();

    let pde = |p: Player, x: f64| ev.generator_residual(p, x);
    let gap = |p: Player, x: f64| obstacle_gap(ev, p, x).expect("x > 0");

    let scale_of = |p: Player| -> f64 {
        // value scale for the relative constancy check
        all.iter()
            .map(|&x| ev.value(p, x).map(f64::abs).unwrap_or(0.0))
            .fold(1.0, f64::max)
    };

    // firm
    let f_int = extreme(exec, &interior, |x| pde(Player::Firm, x).abs(), false).1;
    let f_act: Vec<f64> = lower.iter().copied().filter(|&x| x < th.b11).collect();
    let f_act = extreme(exec, &f_act, |x| pde(Player::Firm, x), false).1;
    let f_gap = extreme(exec, &all, |x| gap(Player::Firm, x), true).1;
    let below_b22: Vec<f64> = all.iter().copied().filter(|&x| x < th.b22 && x != th.b11).collect();
    let f_qvi = extreme(
        exec,
        &below_b22,
        |x| pde(Player::Firm, x).max(-gap(Player::Firm, x)).abs(),
        false,
    )
    .1;
    let w = ev.value(Player::Firm, th.b21)?;
    let f_const = upper
        .iter()
        .map(|&x| (ev.value(Player::Firm, x).expect("x > 0") - w).abs())
        .fold(0.0, f64::max);
    let f_scale = scale_of(Player::Firm);
    let firm = PlayerQvi {
        pde_interior_max_abs: f_int,
        pde_action_worst: f_act,
        obstacle_min_gap: f_gap,
        qvi_max_abs: f_qvi,
        constancy_max_abs: f_const,
        pass: f_int <= PDE_TOL
            && f_act <= NONSTRICT_SLACK
            && f_gap >= -NONSTRICT_SLACK
            && f_qvi <= PDE_TOL
            && f_const <= 1e-12 * f_scale,
    };

    // government
    let g_int = extreme(exec, &interior, |x| pde(Player::Government, x).abs(), false).1;
    let g_act: Vec<f64> = upper.iter().copied().filter(|&x| x > th.b22).collect();
    let g_act = extreme(exec, &g_act, |x| pde(Player::Government, x), true).1;
    let g_gap = extreme(exec, &all, |x| gap(Player::Government, x), true).1;
    let above_b11: Vec<f64> = all.iter().copied().filter(|&x| x > th.b11 && x != th.b22).collect();
    let g_qvi = extreme(
        exec,
        &above_b11,
        |x| pde(Player::Government, x).min(gap(Player::Government, x)).abs(),
        false,
    )
    .1;
    let w = ev.value(Player::Government, th.b12)?;
    let g_const = lower
        .iter()
        .map(|&x| (ev.value(Player::Government, x).expect("x > 0") - w).abs())
        .fold(0.0, f64::max);
    let g_scale = scale_of(Player::Government);
    let government = PlayerQvi {
        pde_interior_max_abs: g_int,
        pde_action_worst: g_act,
        obstacle_min_gap: g_gap,
        qvi_max_abs: g_qvi,
        constancy_max_abs: g_const,
        pass: g_int <= PDE_TOL
            && g_act >= -NONSTRICT_SLACK
            && g_gap >= -NONSTRICT_SLACK
            && g_qvi <= PDE_TOL
            && g_const <= 1e-12 * g_scale,
    };

    Ok(QviReport {
        pass: firm.pass && government.pass,
        firm,
        government,
        x_max,
    })
}
