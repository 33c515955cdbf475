//! Uncontrolled dynamics: geometric Brownian motion, its fundamental
//! solutions, and closed-form resolvents of power-type running flows.

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::value::Player;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
}

impl GbmParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(GameError::InvalidParameter {
                name: "mu",
                value: mu,
                reason: "must be finite",
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "sigma",
                value: sigma,
                reason: "must be positive",
            });
        }
        Ok(Self { mu, sigma })
    }

    pub fn drift(&self, x: f64) -> f64 {
        self.mu * x
    }

    pub fn volatility(&self, x: f64) -> f64 {
        self.sigma * x
    }

    /// `r - mu p - sigma^2/2 p (p - 1)`: the discount net of the growth rate of
    /// `E[X_t^p]`. Positive iff `E ∫ e^{-rt} X_t^p dt` is finite.
    pub fn power_discount(&self, r: f64, p: f64) -> f64 {
        r - self.mu * p - 0.5 * self.sigma * self.sigma * p * (p - 1.0)
    }
}

/// Running flow `x ↦ (scale·x)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlow {
    pub exponent: f64,
    pub scale: f64,
}

impl PowerFlow {
    pub fn new(exponent: f64, scale: f64) -> Self {
        Self { exponent, scale }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let y = self.scale * x;
        // The simulation calls this once per Euler step.
        if self.exponent == 0.5 {
            y.sqrt()
        } else if self.exponent == 2.0 {
            y * y
        } else if self.exponent == 1.0 {
            y
        } else {
            y.powf(self.exponent)
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.exponent * self.scale * (self.scale * x).powf(self.exponent - 1.0)
    }
}

/// Increasing and decreasing solutions `ψ(x) = x^m₊`, `φ(x) = x^m₋` of
/// `(σ²x²/2) u'' + μx u' = r u`, normalized so that `ψ(1) = φ(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalPair {
    pub rate: f64,
    pub m_plus: f64,
    pub m_minus: f64,
}

impl FundamentalPair {
    pub fn psi(&self, x: f64) -> f64 {
        x.powf(self.m_plus)
    }

    pub fn psi_prime(&self, x: f64) -> f64 {
        self.m_plus * x.powf(self.m_plus - 1.0)
    }

    pub fn phi(&self, x: f64) -> f64 {
        x.powf(self.m_minus)
    }

    pub fn phi_prime(&self, x: f64) -> f64 {
        self.m_minus * x.powf(self.m_minus - 1.0)
    }

    /// `F = φ/ψ`, strictly decreasing.
    pub fn ratio(&self, x: f64) -> f64 {
        x.powf(self.m_minus - self.m_plus)
    }

    pub fn ratio_prime(&self, x: f64) -> f64 {
        let d = self.m_minus - self.m_plus;
        d * x.powf(d - 1.0)
    }
}

pub fn fundamental_solutions(gbm: &GbmParams, r: f64) -> Result<FundamentalPair> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(GameError::InvalidParameter {
            name: "r",
            value: r,
            reason: "discount rate must be positive",
        });
    }
    if !(gbm.sigma > 0.0) {
        return Err(GameError::InvalidParameter {
            name: "sigma",
            value: gbm.sigma,
            reason: "must be positive",
        });
    }
    // (σ²/2) m² + (μ − σ²/2) m − r = 0
    let half_var = 0.5 * gbm.sigma * gbm.sigma;
    let b = gbm.mu - half_var;
    let disc = (b * b + 4.0 * half_var * r).sqrt();
    // Cancellation-free pair: the larger-magnitude root first, the other from Vieta.
    let (m_plus, m_minus) = if b >= 0.0 {
        let m_minus = (-b - disc) / (2.0 * half_var);
        (-r / (half_var * m_minus), m_minus)
    } else {
        let m_plus = (-b + disc) / (2.0 * half_var);
        (m_plus, -r / (half_var * m_plus))
    };
    Ok(FundamentalPair {
        rate: r,
        m_plus,
        m_minus,
    })
}

/// `G(x) = E_x ∫ e^{-rt} f(X_t) dt = coefficient · x^exponent` for a power flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolvent {
    pub coefficient: f64,
    pub exponent: f64,
}

impl Resolvent {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficient * x.powf(self.exponent)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coefficient * self.exponent * x.powf(self.exponent - 1.0)
    }
}

pub fn resolvent(gbm: &GbmParams, r: f64, flow: &PowerFlow) -> Result<Resolvent> {
    let p = flow.exponent;
    let denom = gbm.power_discount(r, p);
    if !(denom > 0.0) {
        return Err(GameError::IntegrabilityViolation {
            what: "running flow",
            rate: r,
            bound: r - denom,
        });
    }
    Ok(Resolvent {
        coefficient: flow.scale.powf(p) / denom,
        exponent: p,
    })
}

/// Full problem instance. Serializes to the flat key set of the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "FlatConfig", try_from = "FlatConfig")]
pub struct GameConfig {
    pub gbm: GbmParams,
    /// Firm's operating profit `π(x) = x^a`.
    pub profit: PowerFlow,
    /// Social cost of emissions `C(βx) = (βx)^b`.
    pub cost: PowerFlow,
    pub r1: f64,
    pub r2: f64,
    pub alpha: f64,
    pub k1: f64,
    pub kappa1: f64,
    pub k2: f64,
    pub kappa2: f64,
}

/// On-disk form with exactly the parameter names of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatConfig {
    pub mu: f64,
    pub sigma: f64,
    pub r1: f64,
    pub r2: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    pub kappa1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub kappa2: f64,
    pub a: f64,
    pub b: f64,
}

impl From<GameConfig> for FlatConfig {
    fn from(c: GameConfig) -> Self {
        FlatConfig {
            mu: c.gbm.mu,
            sigma: c.gbm.sigma,
            r1: c.r1,
            r2: c.r2,
            alpha: c.alpha,
            beta: c.cost.scale,
            k1: c.k1,
            kappa1: c.kappa1,
            k2: c.k2,
            kappa2: c.kappa2,
            a: c.profit.exponent,
            b: c.cost.exponent,
        }
    }
}

impl TryFrom<FlatConfig> for GameConfig {
    type Error = GameError;

    fn try_from(f: FlatConfig) -> Result<Self> {
        let positive = |name: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(GameError::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive",
                })
            }
        };
        let gbm = GbmParams::new(f.mu, f.sigma)?;
        positive("r1", f.r1)?;
        positive("r2", f.r2)?;
        positive("alpha", f.alpha)?;
        positive("beta", f.beta)?;
        positive("K1", f.k1)?;
        positive("kappa1", f.kappa1)?;
        positive("K2", f.k2)?;
        positive("kappa2", f.kappa2)?;
        if !(f.a > 0.0 && f.a < 1.0) {
            return Err(GameError::InvalidParameter {
                name: "a",
                value: f.a,
                reason: "profit exponent must lie in (0, 1)",
            });
        }
        if !(f.b > 1.0 && f.b.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "b",
                value: f.b,
                reason: "cost exponent must exceed 1",
            });
        }
        Ok(GameConfig {
            gbm,
            profit: PowerFlow::new(f.a, 1.0),
            cost: PowerFlow::new(f.b, f.beta),
            r1: f.r1,
            r2: f.r2,
            alpha: f.alpha,
            k1: f.k1,
            kappa1: f.kappa1,
            k2: f.k2,
            kappa2: f.kappa2,
        })
    }
}

impl GameConfig {
    /// The parameter set of the worked numerical example.
    pub fn table1() -> Self {
        GameConfig::try_from(FlatConfig {
            mu: 0.02,
            sigma: 0.20,
            r1: 0.10,
            r2: 0.10,
            alpha: 1.0,
            beta: 1.0,
            k1: 0.5,
            kappa1: 0.8,
            k2: 0.6,
            kappa2: 0.3,
            a: 0.5,
            b: 2.0,
        })
        .expect("table 1 parameters are valid")
    }

    pub fn flat(&self) -> FlatConfig {
        FlatConfig::from(*self)
    }

    pub fn beta(&self) -> f64 {
        self.cost.scale
    }

    pub fn rate(&self, player: Player) -> f64 {
        match player {
            Player::Firm => self.r1,
            Player::Government => self.r2,
        }
    }

    pub fn flow(&self, player: Player) -> &PowerFlow {
        match player {
            Player::Firm => &self.profit,
            Player::Government => &self.cost,
        }
    }

    /// Marginal cost of moving the state by one unit: `κ₁/α` or `κ₂`.
    pub fn marginal_cost(&self, player: Player) -> f64 {
        match player {
            Player::Firm => self.kappa1 / self.alpha,
            Player::Government => self.kappa2,
        }
    }

    pub fn fixed_cost(&self, player: Player) -> f64 {
        match player {
            Player::Firm => self.k1,
            Player::Government => self.k2,
        }
    }

    pub fn kernel(&self, player: Player) -> Result<GbmKernel> {
        GbmKernel::new(self.gbm, self.rate(player), *self.flow(player))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityCheck {
    pub ok: bool,
    /// `r1 − max(0, μa − σ²a(1−a)/2)`
    pub firm_margin: f64,
    /// `r2 − max(0, μb + σ²b(b−1)/2)`
    pub government_margin: f64,
}

pub fn check_integrability(config: &GameConfig) -> IntegrabilityCheck {
    let GbmParams { mu, sigma } = config.gbm;
    let half_var = 0.5 * sigma * sigma;
    let a = config.profit.exponent;
    let b = config.cost.exponent;
    let firm_bound = (mu * a - half_var * a * (1.0 - a)).max(0.0);
    let gov_bound = (mu * b + half_var * b * (b - 1.0)).max(0.0);
    let firm_margin = config.r1 - firm_bound;
    let government_margin = config.r2 - gov_bound;
    IntegrabilityCheck {
        ok: firm_margin > 0.0 && government_margin > 0.0,
        firm_margin,
        government_margin,
    }
}

/// Everything the value construction needs from one player's discounted
/// problem: coefficients of the diffusion, the fundamental solutions at the
/// player's discount rate, and the resolvent of the player's running flow.
/// Implement this to plug in a diffusion other than GBM.
pub trait PlayerKernel: Sync {
    fn rate(&self) -> f64;
    fn drift(&self, x: f64) -> f64;
    fn volatility(&self, x: f64) -> f64;
    fn flow(&self, x: f64) -> f64;
    fn psi(&self, x: f64) -> f64;
    fn psi_prime(&self, x: f64) -> f64;
    fn phi(&self, x: f64) -> f64;
    fn phi_prime(&self, x: f64) -> f64;
    fn resolvent(&self, x: f64) -> f64;
    fn resolvent_prime(&self, x: f64) -> f64;

    fn ratio(&self, x: f64) -> f64 {
        self.phi(x) / self.psi(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmKernel {
    pub gbm: GbmParams,
    pub pair: FundamentalPair,
    pub flow: PowerFlow,
    pub resolvent: Resolvent,
}

impl GbmKernel {
    pub fn new(gbm: GbmParams, r: f64, flow: PowerFlow) -> Result<Self> {
        Ok(Self {
            gbm,
            pair: fundamental_solutions(&gbm, r)?,
            flow,
            resolvent: resolvent(&gbm, r, &flow)?,
        })
    }
}

impl PlayerKernel for GbmKernel {
    fn rate(&self) -> f64 {
        self.pair.rate
    }
    fn drift(&self, x: f64) -> f64 {
        self.gbm.drift(x)
    }
    fn volatility(&self, x: f64) -> f64 {
        self.gbm.volatility(x)
    }
    fn flow(&self, x: f64) -> f64 {
        self.flow.eval(x)
    }
    fn psi(&self, x: f64) -> f64 {
        self.pair.psi(x)
    }
    fn psi_prime(&self, x: f64) -> f64 {
        self.pair.psi_prime(x)
    }
    fn phi(&self, x: f64) -> f64 {
        self.pair.phi(x)
    }
    fn phi_prime(&self, x: f64) -> f64 {
        self.pair.phi_prime(x)
    }
    fn resolvent(&self, x: f64) -> f64 {
        self.resolvent.eval(x)
    }
    fn resolvent_prime(&self, x: f64) -> f64 {
        self.resolvent.derivative(x)
    }
    fn ratio(&self, x: f64) -> f64 {
        self.pair.ratio(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn generator_residual(gbm: &GbmParams, r: f64, m: f64, x: f64) -> f64 {
        // L x^m − r x^m, written out term by term.
        let u = x.powf(m);
        let du = m * x.powf(m - 1.0);
        let d2u = m * (m - 1.0) * x.powf(m - 2.0);
        0.5 * gbm.sigma * gbm.sigma * x * x * d2u + gbm.mu * x * du - r * u
    }

    #[test]
    fn exponents_for_zero_log_drift() {
        let gbm = GbmParams::new(0.02, 0.2).unwrap();
        let pair = fundamental_solutions(&gbm, 0.1).unwrap();
        assert_relative_eq!(pair.m_plus, 5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(pair.m_minus, -(5f64.sqrt()), max_relative = 1e-14);
        for x in [0.5, 1.0, 2.0] {
            assert!(generator_residual(&gbm, 0.1, pair.m_plus, x).abs() < 1e-13);
            assert!(generator_residual(&gbm, 0.1, pair.m_minus, x).abs() < 1e-13);
        }
    }

    #[test]
    fn exponents_match_quadratic_formula() {
        let gbm = GbmParams::new(0.0, 2f64.sqrt()).unwrap();
        let pair = fundamental_solutions(&gbm, 1.0).unwrap();
        assert_relative_eq!(pair.m_plus, (1.0 + 5f64.sqrt()) / 2.0, max_relative = 1e-14);
        assert_relative_eq!(pair.m_minus, (1.0 - 5f64.sqrt()) / 2.0, max_relative = 1e-14);
        for x in [0.5, 1.0, 2.0] {
            assert!(generator_residual(&gbm, 1.0, pair.m_plus, x).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_rate_and_sigma() {
        let gbm = GbmParams::new(0.02, 0.2).unwrap();
        assert!(fundamental_solutions(&gbm, 0.0).is_err());
        assert!(fundamental_solutions(&gbm, -1.0).is_err());
        assert!(GbmParams::new(0.02, 0.0).is_err());
        let bad = GbmParams { mu: 0.0, sigma: -1.0 };
        assert!(fundamental_solutions(&bad, 0.1).is_err());
    }

    #[test]
    fn wronskian_negative_and_monotone() {
        let gbm = GbmParams::new(-0.03, 0.35).unwrap();
        let pair = fundamental_solutions(&gbm, 0.07).unwrap();
        assert!(pair.m_plus > 0.0 && pair.m_minus < 0.0);
        for i in 1..200 {
            let x = 0.05 * i as f64;
            let w = pair.psi(x) * pair.phi_prime(x) - pair.psi_prime(x) * pair.phi(x);
            assert!(w < 0.0);
            assert!(pair.ratio_prime(x) < 0.0);
        }
        assert_eq!(pair.psi(1.0), 1.0);
        assert_eq!(pair.phi(1.0), 1.0);
    }

    #[test]
    fn table1_resolvents() {
        let c = GameConfig::table1();
        let g1 = resolvent(&c.gbm, c.r1, &c.profit).unwrap();
        let g2 = resolvent(&c.gbm, c.r2, &c.cost).unwrap();
        assert_relative_eq!(g1.coefficient, 1000.0 / 95.0, max_relative = 1e-14);
        assert_relative_eq!(g2.coefficient, 50.0, max_relative = 1e-13);
    }

    #[test]
    fn constant_flow_resolvent() {
        let gbm = GbmParams::new(0.05, 0.3).unwrap();
        let g = resolvent(&gbm, 0.2, &PowerFlow::new(0.0, 1.0)).unwrap();
        for x in [0.1, 1.0, 7.0] {
            assert_relative_eq!(g.eval(x), 5.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn resolvent_rejects_infinite_flow() {
        let gbm = GbmParams::new(0.2, 0.2).unwrap();
        let err = resolvent(&gbm, 0.1, &PowerFlow::new(2.0, 1.0)).unwrap_err();
        assert!(matches!(err, GameError::IntegrabilityViolation { .. }));
    }

    #[test]
    fn resolvent_solves_inhomogeneous_ode() {
        let c = GameConfig::table1();
        for player in [Player::Firm, Player::Government] {
            let k = c.kernel(player).unwrap();
            for x in [0.2, 0.7, 1.9] {
                let h = 1e-4 * x;
                let g = k.resolvent(x);
                let g1 = (k.resolvent(x + h) - k.resolvent(x - h)) / (2.0 * h);
                let g2 = (k.resolvent(x + h) - 2.0 * g + k.resolvent(x - h)) / (h * h);
                let res = 0.5 * k.volatility(x).powi(2) * g2 + k.drift(x) * g1 - k.rate() * g
                    + k.flow(x);
                assert!(res.abs() < 1e-6 * k.flow(x).abs().max(g.abs()));
                assert_relative_eq!(g1, k.resolvent_prime(x), max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn integrability_margins() {
        let ok = check_integrability(&GameConfig::table1());
        assert!(ok.ok);
        assert_relative_eq!(ok.firm_margin, 0.095, max_relative = 1e-12);
        assert_relative_eq!(ok.government_margin, 0.02, max_relative = 1e-12);

        let mut flat = GameConfig::table1().flat();
        flat.mu = 0.2;
        flat.r2 = 0.1;
        let bad = check_integrability(&GameConfig::try_from(flat).unwrap());
        assert!(!bad.ok);
        assert!(bad.government_margin < 0.0);

        flat.mu = -0.05;
        flat.sigma = 0.05;
        flat.r1 = 0.01;
        flat.r2 = 0.01;
        assert!(check_integrability(&GameConfig::try_from(flat).unwrap()).ok);
    }

    #[test]
    fn flat_config_validation() {
        let mut flat = GameConfig::table1().flat();
        flat.sigma = 0.0;
        assert!(matches!(
            GameConfig::try_from(flat),
            Err(GameError::InvalidParameter { name: "sigma", .. })
        ));
        let mut flat = GameConfig::table1().flat();
        flat.a = 1.2;
        assert!(GameConfig::try_from(flat).is_err());
        let mut flat = GameConfig::table1().flat();
        flat.k2 = -1.0;
        assert!(matches!(
            GameConfig::try_from(flat),
            Err(GameError::InvalidParameter { name: "K2", .. })
        ));
    }
}
