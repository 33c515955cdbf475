//! Candidate equilibrium values for a given threshold quadruple.
//!
//! Both players' payoffs under the four-threshold policies are continuous and
//! piecewise: affine or constant in the two action regions, and inside the
//! joint inaction region `(b11, b22)` a combination of the resolvent `G` and
//! the discounted hitting weights `A`, `B` of the two triggers. The two
//! "corner" constants per player, the values at the two impulse targets, are
//! fixed points of that representation and come out of a 2×2 linear solve.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diffusion::{GameConfig, GbmKernel, PlayerKernel};
use crate::error::{GameError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    /// Pushes the state up; maximizes profit.
    Firm,
    /// Pushes the state down; minimizes cost.
    Government,
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::Firm => f.write_str("firm"),
            Player::Government => f.write_str("government"),
        }
    }
}

/// Which one-sided limit to take at a kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// `b11` firm trigger, `b12` firm target, `b21` government target, `b22`
/// government trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub b11: f64,
    pub b12: f64,
    pub b21: f64,
    pub b22: f64,
}

impl Thresholds {
    pub fn new(b11: f64, b12: f64, b21: f64, b22: f64) -> Result<Self> {
        let t = Self { b11, b12, b21, b22 };
        t.validate()?;
        Ok(t)
    }

    pub fn from_array(b: [f64; 4]) -> Result<Self> {
        Self::new(b[0], b[1], b[2], b[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.b11, self.b12, self.b21, self.b22]
    }

    pub fn is_admissible(&self) -> bool {
        self.validate().is_ok()
    }

    fn validate(&self) -> Result<()> {
        let Self { b11, b12, b21, b22 } = *self;
        if !self.to_array().iter().all(|b| b.is_finite()) {
            return Err(GameError::InvalidThresholds(format!(
                "non-finite entry in {:?}",
                self.to_array()
            )));
        }
        if !(0.0 < b11 && b11 < b12 && b12 < b22) {
            return Err(GameError::InvalidThresholds(format!(
                "need 0 < b11 < b12 < b22, got ({b11}, {b12}, {b22})"
            )));
        }
        if !(b11 < b21 && b21 < b22) {
            return Err(GameError::InvalidThresholds(format!(
                "need b11 < b21 < b22, got ({b11}, {b21}, {b22})"
            )));
        }
        Ok(())
    }

    /// Firm impulse in state units, `b12 − b11`.
    pub fn firm_jump(&self) -> f64 {
        self.b12 - self.b11
    }

    /// Government impulse in state units, `b22 − b21`.
    pub fn government_jump(&self) -> f64 {
        self.b22 - self.b21
    }
}

/// `a`: `E_x[e^{−rτ₁} 1{τ₁<τ₂}]` (lower trigger first), `b`: the same for the
/// upper trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionWeights {
    pub a: f64,
    pub b: f64,
}

pub fn transition_weights<K: PlayerKernel + ?Sized>(
    kernel: &K,
    th: &Thresholds,
    x: f64,
) -> Result<TransitionWeights> {
    if !(th.b11 <= x && x <= th.b22) {
        return Err(GameError::Domain {
            x,
            lo: th.b11,
            hi: th.b22,
        });
    }
    let f_lo = kernel.ratio(th.b11);
    let f_hi = kernel.ratio(th.b22);
    let f_x = kernel.ratio(x);
    let denom = f_hi - f_lo;
    let psi_x = kernel.psi(x);
    Ok(TransitionWeights {
        a: psi_x / kernel.psi(th.b11) * ((f_hi - f_x) / denom),
        b: psi_x / kernel.psi(th.b22) * ((f_x - f_lo) / denom),
    })
}

/// Exact `(A'(x), B'(x))`. Uses `ψ·(F(c) − F) = F(c)ψ − φ` so only first
/// derivatives of the fundamental solutions enter.
pub fn transition_weight_derivatives<K: PlayerKernel + ?Sized>(
    kernel: &K,
    th: &Thresholds,
    x: f64,
) -> TransitionWeights {
    let f_lo = kernel.ratio(th.b11);
    let f_hi = kernel.ratio(th.b22);
    let denom = f_hi - f_lo;
    let dpsi = kernel.psi_prime(x);
    let dphi = kernel.phi_prime(x);
    TransitionWeights {
        a: (f_hi * dpsi - dphi) / (kernel.psi(th.b11) * denom),
        b: (dphi - f_lo * dpsi) / (kernel.psi(th.b22) * denom),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerValues {
    pub w1_b12: f64,
    pub w1_b21: f64,
    pub w2_b12: f64,
    pub w2_b21: f64,
}

pub const DEFAULT_DEGENERACY_EPS: f64 = 1e-10;

/// The determinant `(1−A(b12))(1−B(b21)) − B(b12)A(b21)` of the corner system.
pub fn nondegeneracy_margin<K: PlayerKernel + ?Sized>(kernel: &K, th: &Thresholds) -> Result<f64> {
    let at12 = transition_weights(kernel, th, th.b12)?;
    let at21 = transition_weights(kernel, th, th.b21)?;
    Ok((1.0 - at12.a) * (1.0 - at21.b) - at12.b * at21.a)
}

/// Solves one player's corner system; returns `(w(b12), w(b21))`.
pub fn solve_player_corners<K: PlayerKernel + ?Sized>(
    kernel: &K,
    config: &GameConfig,
    th: &Thresholds,
    player: Player,
    eps: f64,
) -> Result<(f64, f64)> {
    let at12 = transition_weights(kernel, th, th.b12)?;
    let at21 = transition_weights(kernel, th, th.b21)?;
    let det = (1.0 - at12.a) * (1.0 - at21.b) - at12.b * at21.a;
    if !(det.abs() >= eps) || !((1.0 - at21.b).abs() >= eps) {
        return Err(GameError::DegenerateThresholds {
            player,
            determinant: det,
        });
    }
    let g = |x: f64| kernel.resolvent(x);
    // w(x) = cA·A(x) + cB·B(x) + G(x) with cA, cB affine in the unknowns.
    let (rhs12, rhs21) = match player {
        Player::Firm => {
            let c = -config.k1 - config.marginal_cost(Player::Firm) * th.firm_jump() - g(th.b11);
            (
                c * at12.a - g(th.b22) * at12.b + g(th.b12),
                c * at21.a - g(th.b22) * at21.b + g(th.b21),
            )
        }
        Player::Government => {
            let c = config.k2 + config.kappa2 * th.government_jump() - g(th.b22);
            (
                c * at12.b - g(th.b11) * at12.a + g(th.b12),
                c * at21.b - g(th.b11) * at21.a + g(th.b21),
            )
        }
    };
    let w12 = (rhs12 * (1.0 - at21.b) + at12.b * rhs21) / det;
    let w21 = ((1.0 - at12.a) * rhs21 + at21.a * rhs12) / det;
    Ok((w12, w21))
}

pub fn corner_values(config: &GameConfig, th: &Thresholds) -> Result<CornerValues> {
    corner_values_with_eps(config, th, DEFAULT_DEGENERACY_EPS)
}

pub fn corner_values_with_eps(config: &GameConfig, th: &Thresholds, eps: f64) -> Result<CornerValues> {
    th.validate()?;
    let (w1_b12, w1_b21) =
        solve_player_corners(&config.kernel(Player::Firm)?, config, th, Player::Firm, eps)?;
    let (w2_b12, w2_b21) = solve_player_corners(
        &config.kernel(Player::Government)?,
        config,
        th,
        Player::Government,
        eps,
    )?;
    Ok(CornerValues {
        w1_b12,
        w1_b21,
        w2_b12,
        w2_b21,
    })
}

/// The nested closed forms for the corner constants, transcribed term by
/// term. Kept only as an independent cross-check of the linear solve.
pub fn corner_values_closed_form(config: &GameConfig, th: &Thresholds) -> Result<CornerValues> {
    let Thresholds { b11, b12, b21, b22 } = *th;

    let k1 = config.kernel(Player::Firm)?;
    let (a12, b12w) = {
        let t = transition_weights(&k1, th, b12)?;
        (t.a, t.b)
    };
    let (a21, b21w) = {
        let t = transition_weights(&k1, th, b21)?;
        (t.a, t.b)
    };
    let g = |x: f64| k1.resolvent(x);
    let jump_cost = config.k1 + config.kappa1 / config.alpha * (b12 - b11);
    let w1_b12 = (g(b21) * b12w / (1.0 - b21w) + g(b12)
        - (jump_cost + g(b11)) * (a21 * b12w / (1.0 - b21w) + a12)
        - g(b22) * (b21w * b12w / (1.0 - b21w) + b12w))
        / (1.0 - a12 - b12w * a21 / (1.0 - b21w));
    let w1_b21 = ((w1_b12 - jump_cost - g(b11)) * a21 - g(b22) * b21w + g(b21)) / (1.0 - b21w);

    let k2 = config.kernel(Player::Government)?;
    let (a12, b12w) = {
        let t = transition_weights(&k2, th, b12)?;
        (t.a, t.b)
    };
    let (a21, b21w) = {
        let t = transition_weights(&k2, th, b21)?;
        (t.a, t.b)
    };
    let g = |x: f64| k2.resolvent(x);
    let jump_cost = config.k2 + config.kappa2 * (b22 - b21);
    let w2_b12 = (g(b12) * (1.0 - b21w) / b12w + g(b21) + jump_cost
        - g(b22)
        - g(b11) * (a12 * (1.0 - b21w) / b12w + a21))
        / ((1.0 - a12) * (1.0 - b21w) / b12w - a21);
    let w2_b21 =
        ((jump_cost - g(b22)) * b21w + (w2_b12 - g(b11)) * a21 + g(b21)) / (1.0 - b21w);

    Ok(CornerValues {
        w1_b12,
        w1_b21,
        w2_b12,
        w2_b21,
    })
}

/// Region of the state space a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `x ≤ b11`, the firm acts.
    Lower,
    /// `b11 < x < b22`.
    Interior,
    /// `x ≥ b22`, the government acts.
    Upper,
}

/// Coefficients of `A` and `B` in the interior representation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct InteriorCoefficients {
    lower: f64,
    upper: f64,
}

/// `v₁`, `v₂` for a fixed quadruple, ready for evaluation.
#[derive(Debug, Clone)]
pub struct EquilibriumValues {
    pub config: GameConfig,
    pub thresholds: Thresholds,
    pub corners: CornerValues,
    firm_kernel: GbmKernel,
    gov_kernel: GbmKernel,
    firm_coef: InteriorCoefficients,
    gov_coef: InteriorCoefficients,
}

impl EquilibriumValues {
    pub fn new(config: &GameConfig, th: &Thresholds) -> Result<Self> {
        let corners = corner_values(config, th)?;
        Self::with_corners(config, th, corners)
    }

    pub fn with_corners(config: &GameConfig, th: &Thresholds, corners: CornerValues) -> Result<Self> {
        th.validate()?;
        let firm_kernel = config.kernel(Player::Firm)?;
        let gov_kernel = config.kernel(Player::Government)?;
        let firm_coef = InteriorCoefficients {
            lower: corners.w1_b12
                - config.k1
                - config.marginal_cost(Player::Firm) * th.firm_jump()
                - firm_kernel.resolvent(th.b11),
            upper: corners.w1_b21 - firm_kernel.resolvent(th.b22),
        };
        let gov_coef = InteriorCoefficients {
            lower: corners.w2_b12 - gov_kernel.resolvent(th.b11),
            upper: corners.w2_b21 + config.k2 + config.kappa2 * th.government_jump()
                - gov_kernel.resolvent(th.b22),
        };
        Ok(Self {
            config: *config,
            thresholds: *th,
            corners,
            firm_kernel,
            gov_kernel,
            firm_coef,
            gov_coef,
        })
    }

    pub fn kernel(&self, player: Player) -> &GbmKernel {
        match player {
            Player::Firm => &self.firm_kernel,
            Player::Government => &self.gov_kernel,
        }
    }

    fn coef(&self, player: Player) -> InteriorCoefficients {
        match player {
            Player::Firm => self.firm_coef,
            Player::Government => self.gov_coef,
        }
    }

    pub fn branch(&self, x: f64) -> Branch {
        if x <= self.thresholds.b11 {
            Branch::Lower
        } else if x >= self.thresholds.b22 {
            Branch::Upper
        } else {
            Branch::Interior
        }
    }

    /// Evaluates one branch's formula at `x`, even outside that branch's region.
    pub fn branch_value(&self, player: Player, branch: Branch, x: f64) -> f64 {
        let th = &self.thresholds;
        let c = &self.config;
        match (player, branch) {
            (Player::Firm, Branch::Lower) => {
                self.corners.w1_b12 - c.k1 - c.marginal_cost(Player::Firm) * (th.b12 - x)
            }
            (Player::Firm, Branch::Upper) => self.corners.w1_b21,
            (Player::Government, Branch::Lower) => self.corners.w2_b12,
            (Player::Government, Branch::Upper) => {
                self.corners.w2_b21 + c.k2 + c.kappa2 * (x - th.b21)
            }
            (p, Branch::Interior) => {
                let k = self.kernel(p);
                let coef = self.coef(p);
                // Weight formulas extend analytically past [b11, b22].
                let f_lo = k.ratio(th.b11);
                let f_hi = k.ratio(th.b22);
                let f_x = k.ratio(x);
                let psi_x = k.psi(x);
                let a = psi_x / k.psi(th.b11) * ((f_hi - f_x) / (f_hi - f_lo));
                let b = psi_x / k.psi(th.b22) * ((f_x - f_lo) / (f_hi - f_lo));
                coef.lower * a + coef.upper * b + k.resolvent(x)
            }
        }
    }

    pub fn branch_derivative(&self, player: Player, branch: Branch, x: f64) -> f64 {
        match (player, branch) {
            (Player::Firm, Branch::Lower) => self.config.marginal_cost(Player::Firm),
            (Player::Firm, Branch::Upper) => 0.0,
            (Player::Government, Branch::Lower) => 0.0,
            (Player::Government, Branch::Upper) => self.config.kappa2,
            (p, Branch::Interior) => {
                let k = self.kernel(p);
                let coef = self.coef(p);
                let d = transition_weight_derivatives(k, &self.thresholds, x);
                coef.lower * d.a + coef.upper * d.b + k.resolvent_prime(x)
            }
        }
    }

    pub fn value(&self, player: Player, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(GameError::Domain {
                x,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(self.branch_value(player, self.branch(x), x))
    }

    /// `v'(x)` off the kinks `b11`, `b22`; errors at a kink.
    pub fn derivative(&self, player: Player, x: f64) -> Result<f64> {
        if x == self.thresholds.b11 || x == self.thresholds.b22 {
            return Err(GameError::KinkDerivative { x });
        }
        self.derivative_sided(player, x, Side::Right)
    }

    /// `v'(x±)`; `side` only matters at `b11` and `b22`.
    pub fn derivative_sided(&self, player: Player, x: f64, side: Side) -> Result<f64> {
        if !(x > 0.0) {
            return Err(GameError::Domain {
                x,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let th = &self.thresholds;
        let branch = if x == th.b11 {
            match side {
                Side::Left => Branch::Lower,
                Side::Right => Branch::Interior,
            }
        } else if x == th.b22 {
            match side {
                Side::Left => Branch::Interior,
                Side::Right => Branch::Upper,
            }
        } else {
            self.branch(x)
        };
        Ok(self.branch_derivative(player, branch, x))
    }

    /// Central difference of the analytic first derivative, taken on the
    /// branch containing `x` so kinks never fall inside the stencil.
    pub fn second_derivative(&self, player: Player, x: f64, h: f64) -> f64 {
        let branch = self.branch(x);
        (self.branch_derivative(player, branch, x + h) - self.branch_derivative(player, branch, x - h))
            / (2.0 * h)
    }

    /// `(L v − r v)(x) + f(x)` with the second derivative from
    /// [`Self::second_derivative`].
    pub fn generator_residual(&self, player: Player, x: f64) -> f64 {
        let k = self.kernel(player);
        let h = 1e-5 * x;
        let branch = self.branch(x);
        let v = self.branch_value(player, branch, x);
        let dv = self.branch_derivative(player, branch, x);
        let d2v = self.second_derivative(player, x, h);
        0.5 * k.volatility(x).powi(2) * d2v + k.drift(x) * dv - k.rate() * v + k.flow(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{GbmParams, PowerFlow};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const PAPER: [f64; 4] = [0.1558984470, 0.3825673799, 0.2359455020, 0.5746537199];

    fn paper() -> Thresholds {
        Thresholds::from_array(PAPER).unwrap()
    }

    #[test]
    fn threshold_ordering() {
        assert!(Thresholds::new(0.1, 0.3, 0.2, 0.5).is_ok());
        // b12 and b21 may come in either order
        assert!(Thresholds::new(0.1, 0.2, 0.3, 0.5).is_ok());
        assert!(Thresholds::new(0.1, 0.3, 0.3, 0.5).is_ok());
        assert!(Thresholds::new(0.0, 0.3, 0.2, 0.5).is_err());
        assert!(Thresholds::new(0.1, 0.6, 0.2, 0.5).is_err());
        assert!(Thresholds::new(0.1, 0.3, 0.05, 0.5).is_err());
        assert!(Thresholds::new(0.1, 0.3, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn weights_at_endpoints() {
        let k = GameConfig::table1().kernel(Player::Firm).unwrap();
        let th = paper();
        let lo = transition_weights(&k, &th, th.b11).unwrap();
        assert_eq!((lo.a, lo.b), (1.0, 0.0));
        let hi = transition_weights(&k, &th, th.b22).unwrap();
        assert_eq!((hi.a, hi.b), (0.0, 1.0));
        assert!(transition_weights(&k, &th, 0.1).is_err());
        assert!(transition_weights(&k, &th, 0.6).is_err());
    }

    #[test]
    fn weight_derivatives_match_finite_differences() {
        let k = GameConfig::table1().kernel(Player::Government).unwrap();
        let th = paper();
        for x in [0.2, 0.3, 0.45, 0.55] {
            let h = 1e-6;
            let up = transition_weights(&k, &th, x + h).unwrap();
            let dn = transition_weights(&k, &th, x - h).unwrap();
            let d = transition_weight_derivatives(&k, &th, x);
            assert_relative_eq!(d.a, (up.a - dn.a) / (2.0 * h), max_relative = 1e-6);
            assert_relative_eq!(d.b, (up.b - dn.b) / (2.0 * h), max_relative = 1e-6);
        }
    }

    #[test]
    fn corners_reproduce_themselves() {
        let cfg = GameConfig::table1();
        let th = paper();
        let ev = EquilibriumValues::new(&cfg, &th).unwrap();
        let c = ev.corners;
        assert_relative_eq!(ev.value(Player::Firm, th.b12).unwrap(), c.w1_b12, max_relative = 1e-13);
        assert_relative_eq!(ev.value(Player::Firm, th.b21).unwrap(), c.w1_b21, max_relative = 1e-13);
        assert_relative_eq!(
            ev.value(Player::Government, th.b12).unwrap(),
            c.w2_b12,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            ev.value(Player::Government, th.b21).unwrap(),
            c.w2_b21,
            max_relative = 1e-13
        );
    }

    #[test]
    fn linear_solve_agrees_with_closed_forms() {
        let cfg = GameConfig::table1();
        for th in [paper(), Thresholds::new(0.1, 0.4, 0.25, 0.6).unwrap()] {
            let solved = corner_values(&cfg, &th).unwrap();
            let printed = corner_values_closed_form(&cfg, &th).unwrap();
            assert_relative_eq!(solved.w1_b12, printed.w1_b12, max_relative = 1e-11);
            assert_relative_eq!(solved.w1_b21, printed.w1_b21, max_relative = 1e-11);
            assert_relative_eq!(solved.w2_b12, printed.w2_b12, max_relative = 1e-11);
            assert_relative_eq!(solved.w2_b21, printed.w2_b21, max_relative = 1e-11);
        }
    }

    #[test]
    fn coincident_targets_are_well_posed() {
        // b12 == b21: the 2×2 system has equal rows only if also degenerate;
        // compare with a brute-force Gaussian elimination of the same system.
        let cfg = GameConfig::table1();
        let th = Thresholds::new(0.15, 0.3, 0.3, 0.6).unwrap();
        let c = corner_values(&cfg, &th).unwrap();
        assert_relative_eq!(c.w1_b12, c.w1_b21, max_relative = 1e-12);
        assert_relative_eq!(c.w2_b12, c.w2_b21, max_relative = 1e-12);

        let k = cfg.kernel(Player::Firm).unwrap();
        let t = transition_weights(&k, &th, 0.3).unwrap();
        let g = |x: f64| k.resolvent(x);
        // single unknown w: w = (w − K1 − κ1/α (b12−b11) − G(b11)) A + (w − G(b22)) B + G(b12)
        let jump = cfg.k1 + cfg.kappa1 / cfg.alpha * (th.b12 - th.b11);
        let w = (g(0.3) - (jump + g(th.b11)) * t.a - g(th.b22) * t.b) / (1.0 - t.a - t.b);
        assert_relative_eq!(c.w1_b12, w, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_system_names_player() {
        let cfg = GameConfig::table1();
        let th = paper();
        let err = corner_values_with_eps(&cfg, &th, 10.0).unwrap_err();
        assert!(matches!(
            err,
            GameError::DegenerateThresholds {
                player: Player::Firm,
                ..
            }
        ));
    }

    #[test]
    fn outer_branches() {
        let cfg = GameConfig::table1();
        let th = paper();
        let ev = EquilibriumValues::new(&cfg, &th).unwrap();
        for x in [0.6, 1.0, 3.0] {
            assert_eq!(ev.value(Player::Firm, x).unwrap(), ev.corners.w1_b21);
            assert_eq!(ev.derivative(Player::Government, x).unwrap(), cfg.kappa2);
        }
        for x in [0.01, 0.1, 0.15] {
            assert_eq!(ev.value(Player::Government, x).unwrap(), ev.corners.w2_b12);
            assert_eq!(ev.derivative(Player::Firm, x).unwrap(), cfg.kappa1 / cfg.alpha);
        }
        assert!(ev.value(Player::Firm, 0.0).is_err());
        assert!(ev.value(Player::Firm, -1.0).is_err());
    }

    #[test]
    fn kinks_need_a_side() {
        let cfg = GameConfig::table1();
        let th = paper();
        let ev = EquilibriumValues::new(&cfg, &th).unwrap();
        assert!(matches!(
            ev.derivative(Player::Firm, th.b11),
            Err(GameError::KinkDerivative { .. })
        ));
        let left = ev.derivative_sided(Player::Firm, th.b11, Side::Left).unwrap();
        let right = ev.derivative_sided(Player::Firm, th.b11, Side::Right).unwrap();
        assert_eq!(left, 0.8);
        // smooth fit holds at the reference solution up to its printed digits
        assert!((right - left).abs() < 1e-6);
        let right = ev.derivative_sided(Player::Government, th.b22, Side::Right).unwrap();
        assert_eq!(right, 0.3);
    }

    #[test]
    fn interior_derivative_matches_finite_difference() {
        let cfg = GameConfig::table1();
        let ev = EquilibriumValues::new(&cfg, &paper()).unwrap();
        for player in [Player::Firm, Player::Government] {
            for x in [0.17, 0.25, 0.33, 0.41, 0.5, 0.57] {
                let h = 1e-6;
                let fd = (ev.value(player, x + h).unwrap() - ev.value(player, x - h).unwrap())
                    / (2.0 * h);
                let d = ev.derivative(player, x).unwrap();
                assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{player} {x}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn normalization_is_immaterial() {
        // Rescale ψ and φ by arbitrary constants: values must not move.
        struct Scaled(GbmKernel);
        impl PlayerKernel for Scaled {
            fn rate(&self) -> f64 {
                self.0.rate()
            }
            fn drift(&self, x: f64) -> f64 {
                self.0.drift(x)
            }
            fn volatility(&self, x: f64) -> f64 {
                self.0.volatility(x)
            }
            fn flow(&self, x: f64) -> f64 {
                self.0.flow(x)
            }
            fn psi(&self, x: f64) -> f64 {
                3.0 * self.0.psi(x)
            }
            fn psi_prime(&self, x: f64) -> f64 {
                3.0 * self.0.psi_prime(x)
            }
            fn phi(&self, x: f64) -> f64 {
                0.02 * self.0.phi(x)
            }
            fn phi_prime(&self, x: f64) -> f64 {
                0.02 * self.0.phi_prime(x)
            }
            fn resolvent(&self, x: f64) -> f64 {
                self.0.resolvent(x)
            }
            fn resolvent_prime(&self, x: f64) -> f64 {
                self.0.resolvent_prime(x)
            }
        }
        let cfg = GameConfig::table1();
        let th = paper();
        for player in [Player::Firm, Player::Government] {
            let base = cfg.kernel(player).unwrap();
            let scaled = Scaled(base);
            let w = solve_player_corners(&base, &cfg, &th, player, 1e-10).unwrap();
            let ws = solve_player_corners(&scaled, &cfg, &th, player, 1e-10).unwrap();
            assert_relative_eq!(w.0, ws.0, max_relative = 1e-12);
            assert_relative_eq!(w.1, ws.1, max_relative = 1e-12);
            for x in [0.2, 0.4] {
                let t = transition_weights(&base, &th, x).unwrap();
                let ts = transition_weights(&scaled, &th, x).unwrap();
                assert_relative_eq!(t.a, ts.a, max_relative = 1e-12);
                assert_relative_eq!(t.b, ts.b, max_relative = 1e-12);
            }
        }
    }

    fn arb_config() -> impl Strategy<Value = GameConfig> {
        (
            -0.02f64..0.03,
            0.1f64..0.4,
            0.3f64..0.7,
            1.5f64..2.5,
            0.5f64..2.0,
            0.2f64..1.5,
        )
            .prop_map(|(mu, sigma, a, b, k1, kappa2)| {
                let mut flat = GameConfig::table1().flat();
                flat.mu = mu;
                flat.sigma = sigma;
                flat.a = a;
                flat.b = b;
                flat.k1 = k1;
                flat.kappa2 = kappa2;
                // keep the running flows integrable
                flat.r1 = 0.15;
                flat.r2 = 0.15 + mu * b + 0.5 * sigma * sigma * b * (b - 1.0);
                GameConfig::try_from(flat).unwrap()
            })
    }

    fn arb_thresholds() -> impl Strategy<Value = Thresholds> {
        (0.05f64..1.0, 0.05f64..0.95, 0.05f64..0.95, 1.2f64..4.0).prop_map(|(b11, u12, u21, span)| {
            let b22 = b11 * span;
            Thresholds::new(b11, b11 + u12 * (b22 - b11), b11 + u21 * (b22 - b11), b22).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn values_are_continuous(cfg in arb_config(), th in arb_thresholds()) {
            let ev = match EquilibriumValues::new(&cfg, &th) {
                Ok(ev) => ev,
                Err(GameError::DegenerateThresholds { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            for player in [Player::Firm, Player::Government] {
                for (x, left, right) in [
                    (th.b11, Branch::Lower, Branch::Interior),
                    (th.b22, Branch::Interior, Branch::Upper),
                ] {
                    let l = ev.branch_value(player, left, x);
                    let r = ev.branch_value(player, right, x);
                    prop_assert!((l - r).abs() <= 1e-9 * l.abs().max(r.abs()).max(1.0),
                        "{player} at {x}: {l} vs {r}");
                }
            }
        }

        #[test]
        fn weights_are_probability_like(th in arb_thresholds(), sigma in 0.1f64..0.5, mu in -0.05f64..0.05) {
            let k = GbmKernel::new(GbmParams::new(mu, sigma).unwrap(), 0.1, PowerFlow::new(0.5, 1.0)).unwrap();
            let mut prev = transition_weights(&k, &th, th.b11).unwrap();
            for i in 1..=50 {
                let x = if i == 50 { th.b22 } else { th.b11 + (th.b22 - th.b11) * i as f64 / 50.0 };
                let w = transition_weights(&k, &th, x).unwrap();
                prop_assert!(w.a >= 0.0 && w.b >= 0.0 && w.a <= 1.0 && w.b <= 1.0);
                prop_assert!(w.a + w.b <= 1.0 + 1e-12);
                prop_assert!(w.a <= prev.a + 1e-15 && w.b >= prev.b - 1e-15);
                prev = w;
            }
        }

        #[test]
        fn closed_forms_agree(cfg in arb_config(), th in arb_thresholds()) {
            let Ok(solved) = corner_values(&cfg, &th) else { return Ok(()) };
            let printed = corner_values_closed_form(&cfg, &th).unwrap();
            for (s, p) in [
                (solved.w1_b12, printed.w1_b12),
                (solved.w1_b21, printed.w1_b21),
                (solved.w2_b12, printed.w2_b12),
                (solved.w2_b21, printed.w2_b21),
            ] {
                prop_assert!((s - p).abs() <= 1e-7 * s.abs().max(1.0), "{s} vs {p}");
            }
        }

        #[test]
        fn interior_solves_the_ode(cfg in arb_config(), th in arb_thresholds(), u in 0.05f64..0.95) {
            let Ok(ev) = EquilibriumValues::new(&cfg, &th) else { return Ok(()) };
            let x = th.b11 + u * (th.b22 - th.b11);
            for player in [Player::Firm, Player::Government] {
                let res = ev.generator_residual(player, x);
                let k = ev.kernel(player);
                let scale = k.flow(x).abs().max(k.rate() * ev.value(player, x).unwrap().abs()).max(1e-3);
                prop_assert!(res.abs() <= 1e-5 * scale, "{player} x={x} res={res}");
            }
        }
    }
}
