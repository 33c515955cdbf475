//! Smooth-fit and optimal-target residuals, and a damped Newton solver for
//! the threshold quadruple.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::diffusion::{check_integrability, GameConfig};
use crate::error::{GameError, Result};
use crate::par::Execution;
use crate::value::{EquilibriumValues, Player, Side, Thresholds};

/// Equilibrium quadruple of the worked example (Table 1 parameters), to ten
/// digits.
pub const TABLE1_SOLUTION: [f64; 4] = [0.1558984470, 0.3825673799, 0.2359455020, 0.5746537199];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector {
    /// `v₁'(b11+) − κ₁/α`
    pub smooth_firm: f64,
    /// `v₂'(b22−) − κ₂`
    pub smooth_gov: f64,
    /// `v₁'(b12) − κ₁/α`
    pub target_firm: f64,
    /// `v₂'(b21) − κ₂`
    pub target_gov: f64,
}

impl ResidualVector {
    pub fn to_array(&self) -> [f64; 4] {
        [self.smooth_firm, self.target_firm, self.target_gov, self.smooth_gov]
    }

    pub fn sup_norm(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|r| r.is_finite())
    }
}

pub fn residuals(config: &GameConfig, th: &Thresholds) -> Result<ResidualVector> {
    let ev = EquilibriumValues::new(config, th)?;
    Ok(residuals_of(&ev))
}

pub fn residuals_of(ev: &EquilibriumValues) -> ResidualVector {
    let th = &ev.thresholds;
    let firm_slope = ev.config.marginal_cost(Player::Firm);
    let gov_slope = ev.config.marginal_cost(Player::Government);
    let d = |p, x, side| ev.derivative_sided(p, x, side).expect("x > 0 by admissibility");
    ResidualVector {
        smooth_firm: d(Player::Firm, th.b11, Side::Right) - firm_slope,
        smooth_gov: d(Player::Government, th.b22, Side::Left) - gov_slope,
        target_firm: d(Player::Firm, th.b12, Side::Right) - firm_slope,
        target_gov: d(Player::Government, th.b21, Side::Right) - gov_slope,
    }
}

fn residual_vector(config: &GameConfig, b: [f64; 4]) -> Result<Vector4<f64>> {
    let th = Thresholds::from_array(b)?;
    let r = residuals(config, &th)?;
    if !r.is_finite() {
        return Err(GameError::NonFiniteResidual(b));
    }
    Ok(Vector4::from(r.to_array()))
}

/// Central finite-difference Jacobian of the residuals (ordered
/// smooth-firm, target-firm, target-gov, smooth-gov) with respect to
/// `(b11, b12, b21, b22)`. `step` is relative to each coordinate.
pub fn jacobian(config: &GameConfig, th: &Thresholds, step: f64) -> Result<Matrix4<f64>> {
    let b = th.to_array();
    let mut jac = Matrix4::zeros();
    for j in 0..4 {
        let mut h = step * b[j].abs().max(f64::MIN_POSITIVE);
        let mut column = None;
        for _ in 0..40 {
            let mut up = b;
            let mut dn = b;
            up[j] += h;
            dn[j] -= h;
            match (residual_vector(config, up), residual_vector(config, dn)) {
                (Ok(fu), Ok(fd)) => {
                    column = Some((fu - fd) / (up[j] - dn[j]));
                    break;
                }
                (Err(GameError::InvalidThresholds(_)), _) | (_, Err(GameError::InvalidThresholds(_))) => {
                    h *= 0.5;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        let column = column.ok_or_else(|| {
            GameError::InvalidThresholds(format!(
                "no admissible finite-difference neighbourhood around {b:?} in coordinate {j}"
            ))
        })?;
        jac.set_column(j, &column);
    }
    Ok(jac)
}

/// 1-norm condition number, `None` if singular.
pub fn condition_number(m: &Matrix4<f64>) -> Option<f64> {
    let inv = m.try_inverse()?;
    let norm1 = |a: &Matrix4<f64>| {
        (0..4)
            .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    Some(norm1(m) * norm1(&inv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop once the residual sup-norm is at most this.
    pub tol: f64,
    /// Initial fraction of the Newton step, in (0, 1].
    pub damping: f64,
    pub jacobian_step: f64,
    pub multistart_grid: Vec<Thresholds>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            damping: 1.0,
            jacobian_step: 1e-7,
            multistart_grid: Vec::new(),
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(GameError::InvalidParameter {
                name: "tol",
                value: self.tol,
                reason: "must be positive",
            });
        }
        if self.max_iter == 0 {
            return Err(GameError::InvalidParameter {
                name: "max_iter",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(GameError::InvalidParameter {
                name: "damping",
                value: self.damping,
                reason: "must lie in (0, 1]",
            });
        }
        if !(self.jacobian_step > 0.0) {
            return Err(GameError::InvalidParameter {
                name: "jacobian_step",
                value: self.jacobian_step,
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// Tensor grid of starting points, dropping the inadmissible combinations.
pub fn threshold_grid(ranges: [(f64, f64); 4], points_per_axis: usize) -> Vec<Thresholds> {
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if points_per_axis <= 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..points_per_axis)
            .map(|i| lo + (hi - lo) * i as f64 / (points_per_axis - 1) as f64)
            .collect()
    };
    let axes: Vec<Vec<f64>> = ranges.iter().map(|r| axis(*r)).collect();
    let mut grid = Vec::new();
    for &b11 in &axes[0] {
        for &b12 in &axes[1] {
            for &b21 in &axes[2] {
                for &b22 in &axes[3] {
                    if let Ok(t) = Thresholds::new(b11, b12, b21, b22) {
                        grid.push(t);
                    }
                }
            }
        }
    }
    grid
}

/// The 3⁴ starting grid around the worked example.
pub fn default_multistart_grid() -> Vec<Thresholds> {
    threshold_grid([(0.05, 0.3), (0.3, 0.5), (0.15, 0.35), (0.4, 0.8)], 3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub thresholds: [f64; 4],
    pub residual_norm: f64,
    /// Fraction of the Newton step that was accepted.
    pub step_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub thresholds: Thresholds,
    pub residuals: ResidualVector,
    /// Newton steps taken.
    pub iterations: usize,
    pub trace: Vec<IterateRecord>,
}

/// Restores the ordering constraints after a raw Newton step: a violated
/// coordinate is moved to the midpoint of the neighbours it must separate.
fn project(candidate: [f64; 4], previous: &Thresholds) -> [f64; 4] {
    let [mut b11, mut b12, mut b21, mut b22] = candidate;
    if !(b11 > 0.0) || !b11.is_finite() {
        b11 = 0.5 * previous.b11;
    }
    if !(b22 > b11) || !b22.is_finite() {
        b22 = b11 + (previous.b22 - previous.b11);
    }
    if !(b11 < b12 && b12 < b22) || !b12.is_finite() {
        b12 = 0.5 * (b11 + b22);
    }
    if !(b11 < b21 && b21 < b22) || !b21.is_finite() {
        b21 = 0.5 * (b11 + b22);
    }
    [b11, b12, b21, b22]
}

const MAX_BACKTRACKS: usize = 40;

/// Damped Newton with backtracking on the residual sup-norm.
pub fn solve(config: &GameConfig, initial: &Thresholds, opts: &SolverOptions) -> Result<SolveOutcome> {
    opts.validate()?;
    let integrability = check_integrability(config);
    if !integrability.ok {
        return Err(integrability_error(config, &integrability));
    }

    let mut x = Thresholds::from_array(initial.to_array())?;
    let mut f = residual_vector(config, x.to_array())?;
    let mut norm = f.amax();
    let mut trace = vec![IterateRecord {
        iteration: 0,
        thresholds: x.to_array(),
        residual_norm: norm,
        step_fraction: 0.0,
    }];
    let mut best = (x, norm);

    for iter in 1..=opts.max_iter {
        if norm <= opts.tol {
            break;
        }
        let jac = jacobian(config, &x, opts.jacobian_step)?;
        let step = jac
            .lu()
            .solve(&(-f))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(GameError::SingularJacobian(x.to_array()))?;

        let mut lambda = opts.damping;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let raw: [f64; 4] = std::array::from_fn(|i| x.to_array()[i] + lambda * step[i]);
            let cand = project(raw, &x);
            match residual_vector(config, cand) {
                Ok(fc) if fc.amax() < norm => {
                    accepted = Some((Thresholds::from_array(cand)?, fc));
                    break;
                }
                Ok(_)
                | Err(GameError::DegenerateThresholds { .. })
                | Err(GameError::NonFiniteResidual(_))
                | Err(GameError::InvalidThresholds(_)) => lambda *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((xn, fn_)) = accepted else {
            return Err(GameError::Stalled {
                at: x.to_array(),
                norm,
            });
        };
        x = xn;
        f = fn_;
        norm = f.amax();
        if norm < best.1 {
            best = (x, norm);
        }
        trace.push(IterateRecord {
            iteration: iter,
            thresholds: x.to_array(),
            residual_norm: norm,
            step_fraction: lambda,
        });
    }

    if norm <= opts.tol {
        Ok(SolveOutcome {
            thresholds: x,
            residuals: residuals(config, &x)?,
            iterations: trace.len() - 1,
            trace,
        })
    } else {
        Err(GameError::MaxIterExceeded {
            iterations: opts.max_iter,
            best: best.0.to_array(),
            best_norm: best.1,
        })
    }
}

pub(crate) fn integrability_error(
    config: &GameConfig,
    check: &crate::diffusion::IntegrabilityCheck,
) -> GameError {
    if check.firm_margin <= 0.0 {
        GameError::IntegrabilityViolation {
            what: "firm profit flow",
            rate: config.r1,
            bound: config.r1 - check.firm_margin,
        }
    } else {
        GameError::IntegrabilityViolation {
            what: "government cost flow",
            rate: config.r2,
            bound: config.r2 - check.government_margin,
        }
    }
}

/// A distinct root with the number of starts that converged to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootBasin {
    pub thresholds: Thresholds,
    pub residual_norm: f64,
    pub starts: usize,
}

/// Roots closer than this in every coordinate are merged.
pub const ROOT_MERGE_TOL: f64 = 1e-5;

pub fn multistart_solve(config: &GameConfig, opts: &SolverOptions) -> Result<Vec<RootBasin>> {
    multistart_solve_with(config, opts, Execution::default())
}

pub fn multistart_solve_with(
    config: &GameConfig,
    opts: &SolverOptions,
    exec: Execution,
) -> Result<Vec<RootBasin>> {
    opts.validate()?;
    let integrability = check_integrability(config);
    if !integrability.ok {
        return Err(integrability_error(config, &integrability));
    }
    let outcomes = exec.map_slice(&opts.multistart_grid, |start| solve(config, start, opts).ok());

    let mut roots: Vec<RootBasin> = Vec::new();
    for out in outcomes.into_iter().flatten() {
        let b = out.thresholds.to_array();
        let norm = out.residuals.sup_norm();
        match roots.iter_mut().find(|r| {
            r.thresholds
                .to_array()
                .iter()
                .zip(b.iter())
                .all(|(p, q)| (p - q).abs() <= ROOT_MERGE_TOL)
        }) {
            Some(r) => {
                r.starts += 1;
                if norm < r.residual_norm {
                    r.thresholds = out.thresholds;
                    r.residual_norm = norm;
                }
            }
            None => roots.push(RootBasin {
                thresholds: out.thresholds,
                residual_norm: norm,
                starts: 1,
            }),
        }
    }
    roots.sort_by(|p, q| {
        p.thresholds
            .to_array()
            .partial_cmp(&q.thresholds.to_array())
            .expect("roots are finite")
    });
    Ok(roots)
}
