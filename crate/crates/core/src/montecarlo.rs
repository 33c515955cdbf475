//! Path simulation of the controlled state under the threshold policies.
//!
//! The diffusion is advanced with exact GBM increments, so the step size
//! only controls how finely the triggers are monitored. Every path owns a
//! random stream selected by its index, which makes results independent of
//! execution order and of the number of worker threads.
//!
//! Streams are Xoshiro256++ generators whose seeds are the SplitMix64 mix of
//! `(seed, path index)`; with a 2^256 period, overlapping streams are not a
//! practical concern and the generator is markedly cheaper than a
//! cryptographic one in the inner loop.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffusion::GameConfig;
use crate::error::{GameError, Result};
use crate::par::Execution;
use crate::value::{Player, Thresholds};

type PathRng = Xoshiro256PlusPlus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Pair path `2k` with path `2k+1` driven by the negated normals.
    pub antithetic: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            horizon: 300.0,
            n_paths: 20_000,
            seed: 0,
            antithetic: false,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "dt",
                value: self.dt,
                reason: "must be positive",
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(GameError::InvalidParameter {
                name: "horizon",
                value: self.horizon,
                reason: "must be positive",
            });
        }
        if self.n_paths == 0 {
            return Err(GameError::InvalidParameter {
                name: "n_paths",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(GameError::InvalidParameter {
                name: "n_paths",
                value: self.n_paths as f64,
                reason: "must be even for antithetic sampling",
            });
        }
        Ok(())
    }

    fn n_steps(&self) -> u64 {
        (self.horizon / self.dt).round().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathRecord {
    pub jump_times_firm: Vec<f64>,
    /// Capacity impulses `ξ = (b12 − X_pre)/α`.
    pub jump_sizes_firm: Vec<f64>,
    pub jump_times_gov: Vec<f64>,
    /// Emission reductions `η = X_pre − b21`.
    pub jump_sizes_gov: Vec<f64>,
    /// `∫ e^{−r₁t} π(X_t) dt` over the horizon.
    pub discounted_profit: f64,
    /// `∫ e^{−r₂t} C(βX_t) dt` over the horizon.
    pub discounted_cost: f64,
    /// `Σ e^{−r₁τ_k}(K₁ + κ₁ξ_k)`
    pub discounted_intervention_firm: f64,
    /// `Σ e^{−r₂ρ_k}(K₂ + κ₂η_k)`
    pub discounted_intervention_gov: f64,
    /// Extremes of the pre-intervention state over `(0, horizon]`.
    pub min_state: f64,
    pub max_state: f64,
    pub truncated: bool,
    pub steps: u64,
}

impl PathRecord {
    pub fn payoff(&self, player: Player) -> f64 {
        match player {
            Player::Firm => self.discounted_profit - self.discounted_intervention_firm,
            Player::Government => self.discounted_cost + self.discounted_intervention_gov,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Step,
    FirmImpulse,
    GovImpulse,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Step => "step",
            EventKind::FirmImpulse => "firm_impulse",
            EventKind::GovImpulse => "gov_impulse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub time: f64,
    pub kind: EventKind,
    pub state_pre: f64,
    pub state_post: f64,
}

/// Writes events as `time,type,state_pre,state_post` rows with a header.
pub fn write_events<W: Write>(events: &[PathEvent], mut out: W) -> std::io::Result<()> {
    writeln!(out, "time,type,state_pre,state_post")?;
    for e in events {
        writeln!(out, "{},{},{},{}", e.time, e.kind.as_str(), e.state_pre, e.state_post)?;
    }
    Ok(())
}

/// Identifies the random stream of one path: `(seed, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
    /// Drive the path with `−Z` instead of `Z`.
    pub negate: bool,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self {
            seed,
            index,
            negate: false,
        }
    }

    fn rng(&self) -> PathRng {
        PathRng::seed_from_u64(splitmix64(self.seed ^ splitmix64(self.index)))
    }

    /// Stream of path `i` under the given options.
    pub fn for_path(opts: &SimOptions, i: usize) -> Self {
        if opts.antithetic {
            Self {
                seed: opts.seed,
                index: (i / 2) as u64,
                negate: i % 2 == 1,
            }
        } else {
            Self::new(opts.seed, i as u64)
        }
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-step constants of the exact GBM update.
#[derive(Clone, Copy)]
struct Stepper {
    drift: f64,
    /// `±σ√dt`; the sign implements antithetic paths.
    vol: f64,
}

impl Stepper {
    fn new(config: &GameConfig, dt: f64, negate: bool) -> Self {
        let GameConfig { gbm, .. } = config;
        Self {
            drift: (gbm.mu - 0.5 * gbm.sigma * gbm.sigma) * dt,
            vol: if negate { -1.0 } else { 1.0 } * gbm.sigma * dt.sqrt(),
        }
    }

    #[inline(always)]
    fn advance(&self, x: f64, rng: &mut PathRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        x * (self.drift + self.vol * z).exp()
    }
}

fn check_start(x0: f64, th: &Thresholds) -> Result<()> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(GameError::Simulation(format!("initial state must be positive, got {x0}")));
    }
    if !th.is_admissible() {
        return Err(GameError::InvalidThresholds(format!("{th:?}")));
    }
    Ok(())
}

fn unstable(lo: f64, hi: f64, last: f64) -> GameError {
    GameError::Simulation(format!(
        "unstable state: min {lo}, max {hi}, final {last}"
    ))
}

pub fn simulate_path(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    opts: &SimOptions,
    stream: RngStream,
) -> Result<PathRecord> {
    run_path(config, th, x0, opts, stream, |_| {})
}

/// Like [`simulate_path`] but also returns the event log. Diffusion steps
/// are logged every `step_stride` steps (`None` logs impulses only).
pub fn simulate_path_with_events(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    opts: &SimOptions,
    stream: RngStream,
    step_stride: Option<u64>,
) -> Result<(PathRecord, Vec<PathEvent>)> {
    let mut events = Vec::new();
    let record = run_path(config, th, x0, opts, stream, |e| match (e.kind, step_stride) {
        (EventKind::Step, None) => {}
        (EventKind::Step, Some(s)) => {
            let k = (e.time / opts.dt).round() as u64;
            if s > 0 && k % s == 0 {
                events.push(e)
            }
        }
        _ => events.push(e),
    })?;
    Ok((record, events))
}

fn run_path<F: FnMut(PathEvent)>(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    opts: &SimOptions,
    stream: RngStream,
    observe: F,
) -> Result<PathRecord> {
    check_start(x0, th)?;
    opts.validate()?;
    let (profit, cost) = (config.profit, config.cost);
    // Monomorphized fast path for the square-root profit / quadratic cost
    // family; the generic flow evaluation costs a few ns per step.
    if profit.exponent == 0.5 && cost.exponent == 2.0 {
        let (sp, sc) = (profit.scale, cost.scale);
        run_loop(config, th, x0, opts, stream, observe, move |x: f64| (sp * x).sqrt(), move |x: f64| {
            let y = sc * x;
            y * y
        })
    } else {
        run_loop(config, th, x0, opts, stream, observe, move |x| profit.eval(x), move |x| cost.eval(x))
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn run_loop<F, P, C>(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    opts: &SimOptions,
    stream: RngStream,
    mut observe: F,
    profit: P,
    cost: C,
) -> Result<PathRecord>
where
    F: FnMut(PathEvent),
    P: Fn(f64) -> f64,
    C: Fn(f64) -> f64,
{
    let mut rng = stream.rng();
    let stepper = Stepper::new(config, opts.dt, stream.negate);
    let dt = opts.dt;
    let n_steps = opts.n_steps();
    let (k1, m1) = (config.k1, config.marginal_cost(Player::Firm));
    let (k2, m2) = (config.k2, config.kappa2);
    let alpha = config.alpha;
    let decay1 = (-config.r1 * dt).exp();
    let decay2 = (-config.r2 * dt).exp();

    let mut rec = PathRecord {
        truncated: true,
        steps: n_steps,
        ..PathRecord::default()
    };
    // Hot-loop state lives in locals so it stays in registers.
    let (mut d1, mut d2) = (1.0f64, 1.0f64);
    let (mut profit_sum, mut cost_sum) = (0.0f64, 0.0f64);
    let (mut firm_costs, mut gov_costs) = (0.0f64, 0.0f64);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut x = x0;
    for k in 0..n_steps {
        // the government acts first when both could
        if x >= th.b22 {
            let t = k as f64 * dt;
            let eta = x - th.b21;
            rec.jump_times_gov.push(t);
            rec.jump_sizes_gov.push(eta);
            gov_costs += d2 * (k2 + m2 * eta);
            observe(PathEvent {
                time: t,
                kind: EventKind::GovImpulse,
                state_pre: x,
                state_post: th.b21,
            });
            x = th.b21;
        } else if x <= th.b11 {
            let t = k as f64 * dt;
            let xi = (th.b12 - x) / alpha;
            rec.jump_times_firm.push(t);
            rec.jump_sizes_firm.push(xi);
            firm_costs += d1 * (k1 + m1 * (th.b12 - x));
            observe(PathEvent {
                time: t,
                kind: EventKind::FirmImpulse,
                state_pre: x,
                state_post: th.b12,
            });
            x = th.b12;
        }
        profit_sum += d1 * profit(x);
        cost_sum += d2 * cost(x);
        let next = stepper.advance(x, &mut rng);
        observe(PathEvent {
            time: (k + 1) as f64 * dt,
            kind: EventKind::Step,
            state_pre: x,
            state_post: next,
        });
        if next < lo {
            lo = next;
        }
        if next > hi {
            hi = next;
        }
        x = next;
        d1 *= decay1;
        d2 *= decay2;
    }
    // Checked once: a zero, infinite or NaN state leaves a trace in the
    // extremes or in the final state (NaN never triggers an impulse).
    if !(lo > 0.0 && hi.is_finite() && x.is_finite()) {
        return Err(unstable(lo, hi, x));
    }
    rec.discounted_profit = profit_sum * dt;
    rec.discounted_cost = cost_sum * dt;
    rec.discounted_intervention_firm = firm_costs;
    rec.discounted_intervention_gov = gov_costs;
    rec.min_state = lo;
    rec.max_state = hi;
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    /// Bound on the running payoff discarded beyond the horizon.
    pub truncation_bound: f64,
}

impl PayoffEstimate {
    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Mean and standard error; antithetic pairs are averaged first.
fn summarize(samples: &[f64], antithetic: bool) -> (f64, f64) {
    let pooled: Vec<f64> = if antithetic {
        samples.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    } else {
        samples.to_vec()
    };
    let n = pooled.len() as f64;
    let mean = pooled.iter().sum::<f64>() / n;
    if pooled.len() < 2 {
        return (mean, 0.0);
    }
    let var = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn truncation_bound(config: &GameConfig, th: &Thresholds, player: Player, horizon: f64) -> f64 {
    let flow = config.flow(player);
    let sup = flow.eval(th.b11).abs().max(flow.eval(th.b22).abs());
    let r = config.rate(player);
    (-r * horizon).exp() * sup / r
}

pub fn estimate_payoffs(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    opts: &SimOptions,
) -> Result<(PayoffEstimate, PayoffEstimate)> {
    estimate_payoffs_with(config, th, x0, opts, Execution::default())
}

pub fn estimate_payoffs_with(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    opts: &SimOptions,
    exec: Execution,
) -> Result<(PayoffEstimate, PayoffEstimate)> {
    opts.validate()?;
    check_start(x0, th)?;
    let payoffs = exec.map_range(opts.n_paths, |i| {
        simulate_path(config, th, x0, opts, RngStream::for_path(opts, i))
            .map(|r| (r.payoff(Player::Firm), r.payoff(Player::Government)))
    });
    let payoffs = payoffs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(estimates_from(config, th, opts, &payoffs))
}

/// Firm and government estimates from already simulated records.
pub fn payoff_estimates(
    config: &GameConfig,
    th: &Thresholds,
    opts: &SimOptions,
    records: &[PathRecord],
) -> (PayoffEstimate, PayoffEstimate) {
    let payoffs: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.payoff(Player::Firm), r.payoff(Player::Government)))
        .collect();
    estimates_from(config, th, opts, &payoffs)
}

fn estimates_from(
    config: &GameConfig,
    th: &Thresholds,
    opts: &SimOptions,
    payoffs: &[(f64, f64)],
) -> (PayoffEstimate, PayoffEstimate) {
    let estimate = |player: Player, column: Vec<f64>| {
        let (mean, std_error) = summarize(&column, opts.antithetic);
        PayoffEstimate {
            mean,
            std_error,
            n: payoffs.len(),
            truncation_bound: truncation_bound(config, th, player, opts.horizon),
        }
    };
    (
        estimate(Player::Firm, payoffs.iter().map(|p| p.0).collect()),
        estimate(Player::Government, payoffs.iter().map(|p| p.1).collect()),
    )
}

/// Discounted first-exit indicators of the uncontrolled state from `(b11, b22)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    /// `E[e^{−rτ₁} 1{τ₁ < τ₂}]`, exit through `b11`.
    pub a: PayoffEstimate,
    /// `E[e^{−rτ₂} 1{τ₂ < τ₁}]`, exit through `b22`.
    pub b: PayoffEstimate,
    /// Paths still inside at the horizon.
    pub unexited: usize,
}

fn first_exit(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    rate: f64,
    opts: &SimOptions,
    stream: RngStream,
) -> Result<(f64, f64, bool)> {
    let mut rng = stream.rng();
    let stepper = Stepper::new(config, opts.dt, stream.negate);
    let decay = (-rate * opts.dt).exp();
    let mut d = 1.0;
    let mut x = x0;
    for k in 0..opts.n_steps() {
        if x <= th.b11 {
            return Ok((d, 0.0, true));
        }
        if x >= th.b22 {
            return Ok((0.0, d, true));
        }
        x = stepper.advance(x, &mut rng);
        if !(x > 0.0 && x.is_finite()) {
            return Err(GameError::Simulation(format!("state became {x} at step {}", k + 1)));
        }
        d *= decay;
    }
    Ok((0.0, 0.0, false))
}

pub fn estimate_transition_weights(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    rate: f64,
    opts: &SimOptions,
) -> Result<HittingEstimate> {
    estimate_transition_weights_with(config, th, x0, rate, opts, Execution::default())
}

pub fn estimate_transition_weights_with(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    rate: f64,
    opts: &SimOptions,
    exec: Execution,
) -> Result<HittingEstimate> {
    opts.validate()?;
    check_start(x0, th)?;
    if !(x0 > th.b11 && x0 < th.b22) {
        return Err(GameError::Domain {
            x: x0,
            lo: th.b11,
            hi: th.b22,
        });
    }
    if !(rate > 0.0) {
        return Err(GameError::InvalidParameter {
            name: "rate",
            value: rate,
            reason: "must be positive",
        });
    }
    let exits = exec.map_range(opts.n_paths, |i| {
        first_exit(config, th, x0, rate, opts, RngStream::for_path(opts, i))
    });
    let exits = exits.into_iter().collect::<Result<Vec<_>>>()?;
    let unexited = exits.iter().filter(|e| !e.2).count();
    // an unexited path contributes at most e^{−r·horizon} to either transform
    let bound = (-rate * opts.horizon).exp();
    let estimate = |column: Vec<f64>| {
        let (mean, std_error) = summarize(&column, opts.antithetic);
        PayoffEstimate {
            mean,
            std_error,
            n: opts.n_paths,
            truncation_bound: bound,
        }
    };
    Ok(HittingEstimate {
        a: estimate(exits.iter().map(|e| e.0).collect()),
        b: estimate(exits.iter().map(|e| e.1).collect()),
        unexited,
    })
}

/// Empirical admissibility witnesses over a batch of paths. Finite-horizon
/// surrogates only: infinite-horizon sums are not observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityStats {
    pub n_paths: usize,
    pub max_interventions_firm: usize,
    pub max_interventions_gov: usize,
    pub mean_interventions_firm: f64,
    pub mean_interventions_gov: f64,
    pub min_state: f64,
    pub max_state: f64,
    pub mean_discounted_intervention_firm: f64,
    pub mean_discounted_intervention_gov: f64,
    pub max_discounted_intervention_firm: f64,
    pub max_discounted_intervention_gov: f64,
    /// Every path has strictly increasing jump times for both players.
    pub jump_times_increasing: bool,
    /// Smallest jump of either player; positive for admissible impulses.
    pub min_jump_size: f64,
}

pub fn admissibility_stats(records: &[PathRecord]) -> Result<AdmissibilityStats> {
    if records.is_empty() {
        return Err(GameError::Simulation("no path records".into()));
    }
    let n = records.len() as f64;
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
    let min_of = |f: &dyn Fn(&PathRecord) -> f64| records.iter().map(f).fold(f64::INFINITY, f64::min);
    let max_of = |f: &dyn Fn(&PathRecord) -> f64| records.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let mean_of = |f: &dyn Fn(&PathRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(AdmissibilityStats {
        n_paths: records.len(),
        max_interventions_firm: records.iter().map(|r| r.jump_times_firm.len()).max().unwrap_or(0),
        max_interventions_gov: records.iter().map(|r| r.jump_times_gov.len()).max().unwrap_or(0),
        mean_interventions_firm: mean_of(&|r| r.jump_times_firm.len() as f64),
        mean_interventions_gov: mean_of(&|r| r.jump_times_gov.len() as f64),
        min_state: min_of(&|r| r.min_state),
        max_state: max_of(&|r| r.max_state),
        mean_discounted_intervention_firm: mean_of(&|r| r.discounted_intervention_firm),
        mean_discounted_intervention_gov: mean_of(&|r| r.discounted_intervention_gov),
        max_discounted_intervention_firm: max_of(&|r| r.discounted_intervention_firm),
        max_discounted_intervention_gov: max_of(&|r| r.discounted_intervention_gov),
        jump_times_increasing: records
            .iter()
            .all(|r| increasing(&r.jump_times_firm) && increasing(&r.jump_times_gov)),
        min_jump_size: records
            .iter()
            .flat_map(|r| r.jump_sizes_firm.iter().chain(&r.jump_sizes_gov))
            .copied()
            .fold(f64::INFINITY, f64::min),
    })
}

/// Simulates `opts.n_paths` full records.
pub fn simulate_paths(
    config: &GameConfig,
    th: &Thresholds,
    x0: f64,
    opts: &SimOptions,
    exec: Execution,
) -> Result<Vec<PathRecord>> {
    opts.validate()?;
    exec.map_range(opts.n_paths, |i| {
        simulate_path(config, th, x0, opts, RngStream::for_path(opts, i))
    })
    .into_iter()
    .collect()
}
