//! Non-strategic benchmarks: each player solving its own impulse problem as
//! if the other never acted.
//!
//! Firm alone: inaction above a trigger `l`, with the state pushed up to a
//! target `u > l`, so `v = G₁ + c·φ₁` on `(l, ∞)`. Government alone: inaction
//! below a trigger `u`, with the state pushed down to `l < u`, so
//! `v = G₂ + c·ψ₂` on `(0, u)`. In both cases `c` comes from value matching
//! and `(l, u)` from the two marginal conditions.

use serde::{Deserialize, Serialize};

use crate::diffusion::{GameConfig, GbmKernel, PlayerKernel};
use crate::error::{GameError, Result};
use crate::value::Player;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleAgentSolution {
    pub player: Player,
    /// Level at which the player intervenes.
    pub trigger: f64,
    /// Level the state is moved to.
    pub target: f64,
    /// Weight of the fundamental solution in the inaction region.
    pub coefficient: f64,
    pub residuals: [f64; 2],
    pub iterations: usize,
    pub config: GameConfig,
}

impl SingleAgentSolution {
    fn kernel(&self) -> GbmKernel {
        self.config
            .kernel(self.player)
            .expect("kernel was valid when the solution was built")
    }

    /// Lower and upper ends of the band: `(trigger, target)` for the firm,
    /// `(target, trigger)` for the government.
    pub fn band(&self) -> (f64, f64) {
        match self.player {
            Player::Firm => (self.trigger, self.target),
            Player::Government => (self.target, self.trigger),
        }
    }

    pub fn in_inaction_region(&self, x: f64) -> bool {
        match self.player {
            Player::Firm => x > self.trigger,
            Player::Government => x < self.trigger,
        }
    }

    fn inaction_value(&self, k: &GbmKernel, x: f64) -> f64 {
        let basis = match self.player {
            Player::Firm => k.phi(x),
            Player::Government => k.psi(x),
        };
        k.resolvent(x) + self.coefficient * basis
    }

    pub fn value(&self, x: f64) -> f64 {
        let k = self.kernel();
        if self.in_inaction_region(x) {
            return self.inaction_value(&k, x);
        }
        let at_target = self.inaction_value(&k, self.target);
        match self.player {
            Player::Firm => {
                at_target
                    - self.config.k1
                    - self.config.marginal_cost(Player::Firm) * (self.target - x)
            }
            Player::Government => {
                at_target + self.config.k2 + self.config.kappa2 * (x - self.target)
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let k = self.kernel();
        if !self.in_inaction_region(x) {
            return self.config.marginal_cost(self.player);
        }
        let basis = match self.player {
            Player::Firm => k.phi_prime(x),
            Player::Government => k.psi_prime(x),
        };
        k.resolvent_prime(x) + self.coefficient * basis
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting `(lo, hi)` pairs; the first one that converges wins.
    pub starts: Vec<(f64, f64)>,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        let mut starts = Vec::new();
        for i in 0..13 {
            let lo = 1e-3 * 10f64.powf(i as f64 / 3.0);
            for ratio in [1.5, 2.5, 5.0, 10.0] {
                starts.push((lo, lo * ratio));
            }
        }
        Self {
            tol: 1e-12,
            max_iter: 100,
            starts,
        }
    }
}

/// Coefficient from value matching and the two marginal residuals at the
/// band `(lo, hi)`.
fn system(config: &GameConfig, k: &GbmKernel, player: Player, lo: f64, hi: f64) -> (f64, [f64; 2]) {
    let m = config.marginal_cost(player);
    match player {
        Player::Firm => {
            let c = (k.resolvent(hi) - k.resolvent(lo) - config.k1 - m * (hi - lo)) / (k.phi(lo) - k.phi(hi));
            let d = |x: f64| k.resolvent_prime(x) + c * k.phi_prime(x) - m;
            (c, [d(lo), d(hi)])
        }
        Player::Government => {
            let c = (k.resolvent(lo) - k.resolvent(hi) + config.k2 + m * (hi - lo)) / (k.psi(hi) - k.psi(lo));
            let d = |x: f64| k.resolvent_prime(x) + c * k.psi_prime(x) - m;
            (c, [d(hi), d(lo)])
        }
    }
}

fn sup(r: &[f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

/// Damped Newton in log coordinates, which keeps both levels positive.
fn newton(
    config: &GameConfig,
    k: &GbmKernel,
    player: Player,
    start: (f64, f64),
    opts: &BaselineOptions,
) -> Option<(f64, f64, usize)> {
    let eval = |y: [f64; 2]| -> Option<[f64; 2]> {
        let (lo, hi) = (y[0].exp(), y[1].exp());
        if !(lo < hi) {
            return None;
        }
        let r = system(config, k, player, lo, hi).1;
        (r[0].is_finite() && r[1].is_finite()).then_some(r)
    };
    // residuals scaled by the marginal cost so the tolerance is relative
    let scale = config.marginal_cost(player).abs().max(1.0);
    let mut y = [start.0.ln(), start.1.ln()];
    let mut r = eval(y)?;
    for it in 0..opts.max_iter {
        let norm = sup(&r);
        if norm <= opts.tol * scale {
            return Some((y[0].exp(), y[1].exp(), it));
        }
        let h = 1e-7;
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let (mut yp, mut ym) = (y, y);
            yp[j] += h;
            ym[j] -= h;
            let (rp, rm) = (eval(yp)?, eval(ym)?);
            for i in 0..2 {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let step = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut lambda = 1.0;
        loop {
            let trial = [y[0] + lambda * step[0], y[1] + lambda * step[1]];
            if let Some(rt) = eval(trial) {
                if sup(&rt) < norm {
                    y = trial;
                    r = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                // cannot improve further: accept only if already converged
                return (norm <= opts.tol * scale * 1e2).then(|| (y[0].exp(), y[1].exp(), it));
            }
        }
    }
    (sup(&r) <= opts.tol * scale).then(|| (y[0].exp(), y[1].exp(), opts.max_iter))
}

fn solve_alone(config: &GameConfig, player: Player, opts: &BaselineOptions) -> Result<SingleAgentSolution> {
    let k = config.kernel(player)?;
    let mut best = [f64::INFINITY; 2];
    for &start in &opts.starts {
        let Some((lo, hi, iterations)) = newton(config, &k, player, start, opts) else {
            let r = system(config, &k, player, start.0, start.1).1;
            if sup(&r) < sup(&best) {
                best = r;
            }
            continue;
        };
        let (coefficient, residuals) = system(config, &k, player, lo, hi);
        let (trigger, target) = match player {
            Player::Firm => (lo, hi),
            Player::Government => (hi, lo),
        };
        return Ok(SingleAgentSolution {
            player,
            trigger,
            target,
            coefficient,
            residuals,
            iterations,
            config: *config,
        });
    }
    Err(GameError::NoBaselineRoot {
        player,
        best_residuals: best,
    })
}

pub fn solve_firm_alone(config: &GameConfig) -> Result<SingleAgentSolution> {
    solve_alone(config, Player::Firm, &BaselineOptions::default())
}

pub fn solve_government_alone(config: &GameConfig) -> Result<SingleAgentSolution> {
    solve_alone(config, Player::Government, &BaselineOptions::default())
}

pub fn solve_alone_with(config: &GameConfig, player: Player, opts: &BaselineOptions) -> Result<SingleAgentSolution> {
    solve_alone(config, player, opts)
}
