//! Monte Carlo simulation of the full model: drift draw, price, extra
//! signal, filter and wealth.
//!
//! Each path owns a ChaCha8 stream selected by its index, and per-path
//! results are reduced in path order with compensated summation, so reports
//! are bit-identical for any number of workers.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::clock::{correlation_from_clock, InformativeClock};
use crate::closed_form::{coefficients, Policy, StrategyQuery};
use crate::error::{Error, Result};
use crate::filtering::{init_posterior, update, ObservationIncrement};
use crate::model::{classify, MarketParams, UtilitySpec};
use crate::numerics::compensated_sum;

/// Default cap on `n_paths * n_steps`.
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;
/// Wealth floor for power and log utility, relative to `x0`.
pub const WEALTH_FLOOR_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    OptimalClosedForm,
    /// Constant fraction `k` of wealth in the risky asset.
    ConstantFraction {
        k: f64,
    },
    Zero,
    /// The optimal position multiplied by `factor`.
    ScaledOptimal {
        factor: f64,
    },
}

impl FromStr for Strategy {
    type Err = Error;

    /// `optimal`, `zero`, `constant:k=<f>` or `scaled:factor=<f>`.
    fn from_str(s: &str) -> Result<Self> {
        let num = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Config(format!("bad number '{v}' in strategy '{s}'")))
        };
        match s.trim() {
            "optimal" => Ok(Strategy::OptimalClosedForm),
            "zero" => Ok(Strategy::Zero),
            other => {
                if let Some(v) = other.strip_prefix("constant:k=") {
                    Ok(Strategy::ConstantFraction { k: num(v)? })
                } else if let Some(v) = other.strip_prefix("scaled:factor=") {
                    Ok(Strategy::ScaledOptimal { factor: num(v)? })
                } else {
                    Err(Error::Config(format!(
                        "unknown strategy '{s}'; expected optimal, zero, constant:k=<f> or scaled:factor=<f>"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::OptimalClosedForm => write!(f, "optimal"),
            Strategy::Zero => write!(f, "zero"),
            Strategy::ConstantFraction { k } => write!(f, "constant:k={k}"),
            Strategy::ScaledOptimal { factor } => write!(f, "scaled:factor={factor}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub master_seed: u64,
    pub strategy: Strategy,
    /// Worker threads; 0 lets the pool choose.
    pub workers: usize,
    pub budget: u64,
}

impl SimConfig {
    pub fn new(n_paths: usize, n_steps: usize, master_seed: u64, strategy: Strategy) -> Self {
        SimConfig { n_paths, n_steps, master_seed, strategy, workers: 0, budget: DEFAULT_BUDGET }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        SimConfig { workers, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
        }
        if self.n_steps < 2 {
            return Err(Error::InvalidParameter("n_steps must be >= 2".into()));
        }
        let work = (self.n_paths as u64).saturating_mul(self.n_steps as u64);
        if work > self.budget {
            return Err(Error::Budget(format!(
                "{} paths x {} steps = {work} increments exceeds the budget {}",
                self.n_paths, self.n_steps, self.budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WealthSummary {
    pub mean: f64,
    pub variance: f64,
    pub min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimReport {
    pub mean_utility: f64,
    pub std_error: f64,
    /// Average of `(mu - Z_T)^2`.
    pub mean_sq_drift_error: f64,
    pub terminal_wealth: WealthSummary,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Paths whose wealth hit the floor under power or log utility.
    pub floored_paths: usize,
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    utility: f64,
    wealth: f64,
    sq_drift_error: f64,
    floored: bool,
}

/// How the position is computed at step `i`: `coef[i] * (z - r)` as an
/// amount or a fraction, or a constant fraction.
#[derive(Debug, Clone)]
enum StepPolicy {
    Amount(Vec<f64>),
    Fraction(Vec<f64>),
    ConstantFraction(f64),
}

struct Plan {
    dt: f64,
    sqrt_dt: f64,
    /// `rho` at the left end of each step.
    rho: Vec<f64>,
    /// `exp(-r t)` at the left end of each step.
    discount: Vec<f64>,
    policy: StepPolicy,
}

fn plan(params: &MarketParams, utility: &UtilitySpec, clock: &InformativeClock, sim: &SimConfig) -> Result<Plan> {
    sim.validate()?;
    if clock.is_insider() {
        return Err(Error::InadmissibleClock("cannot simulate the insider clock".into()));
    }
    let n = sim.n_steps;
    let dt = params.horizon / n as f64;
    let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let profile = correlation_from_clock(clock);
    let rho = times.iter().map(|&t| profile.rho(t)).collect();

    let scaled = |factor: f64| -> Result<StepPolicy> {
        let co = coefficients(params, utility, clock)?;
        let mut amount = Vec::with_capacity(n);
        let mut fraction = Vec::with_capacity(n);
        for &t in &times {
            // the policy is linear in z - r; read off the slope at z - r = 1
            match co.policy(t, params.r + 1.0)? {
                Policy::Amount(a) => amount.push(factor * a),
                Policy::Fraction(f) => fraction.push(factor * f),
            }
        }
        Ok(if amount.is_empty() { StepPolicy::Fraction(fraction) } else { StepPolicy::Amount(amount) })
    };
    let policy = match sim.strategy {
        Strategy::OptimalClosedForm => scaled(1.0)?,
        Strategy::ScaledOptimal { factor } => scaled(factor)?,
        Strategy::ConstantFraction { k } => StepPolicy::ConstantFraction(k),
        Strategy::Zero => StepPolicy::Amount(vec![0.0; n]),
    };
    let discount = times.iter().map(|&t| (-params.r * t).exp()).collect();
    Ok(Plan { dt, sqrt_dt: dt.sqrt(), rho, discount, policy })
}

/// Shared per-path state evolution. `record` sees `(step, mu, dW, dm, z_before)`.
fn run_path<R: FnMut(usize, f64, f64, f64, f64)>(
    params: &MarketParams,
    utility: &UtilitySpec,
    plan: &Plan,
    seed: u64,
    index: u64,
    mut record: R,
) -> Result<PathOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let (r, sigma) = (params.r, params.sigma);
    let half_var = 0.5 * sigma * sigma;
    let prior_sd = params.sigma0_sq.sqrt();
    let e: f64 = StandardNormal.sample(&mut rng);
    let mu = params.mu0 + prior_sd * e;

    let mut post = init_posterior(params);
    // discounted wealth for amount strategies, log wealth for fractions
    let mut discounted = params.x0;
    let mut log_wealth = params.x0.ln();
    let n = plan.rho.len();
    for i in 0..n {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let eta: f64 = StandardNormal.sample(&mut rng);
        let rho = plan.rho[i];
        let dw = plan.sqrt_dt * xi;
        let dm = rho * dw + (1.0 - rho * rho).sqrt() * plan.sqrt_dt * eta;
        let dy = (mu - half_var) * plan.dt + sigma * dw;
        record(i, mu, dw, dm, post.z);

        let excess = post.z - r;
        match &plan.policy {
            StepPolicy::Amount(coef) => {
                let pi = coef[i] * excess;
                discounted += plan.discount[i] * pi * ((mu - r) * plan.dt + sigma * dw);
            }
            StepPolicy::Fraction(coef) => {
                let f = coef[i] * excess;
                log_wealth += (r + f * (mu - r) - 0.5 * f * f * sigma * sigma) * plan.dt + f * sigma * dw;
            }
            StepPolicy::ConstantFraction(k) => {
                log_wealth += (r + k * (mu - r) - 0.5 * k * k * sigma * sigma) * plan.dt + k * sigma * dw;
            }
        }
        post = update(&post, &ObservationIncrement { dy, dm, dt: plan.dt }, params, rho)?;
    }
    let mut wealth = match plan.policy {
        StepPolicy::Amount(_) => discounted * (r * params.horizon).exp(),
        _ => log_wealth.exp(),
    };
    let mut floored = false;
    if utility.requires_positive_wealth() && wealth <= 0.0 {
        wealth = WEALTH_FLOOR_REL * params.x0;
        floored = true;
    }
    let err = mu - post.z;
    Ok(PathOutcome { utility: utility.utility(wealth), wealth, sq_drift_error: err * err, floored })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// Simulates `sim.n_paths` independent paths and averages `U(X_T)`.
///
/// Constant-fraction and zero strategies are allowed in ill-posed power
/// markets, where they witness the divergence of expected utility.
pub fn simulate(
    params: &MarketParams,
    utility: &UtilitySpec,
    clock: &InformativeClock,
    sim: &SimConfig,
) -> Result<SimReport> {
    let needs_closed_form = matches!(sim.strategy, Strategy::OptimalClosedForm | Strategy::ScaledOptimal { .. });
    if needs_closed_form {
        classify(params, utility).into_result()?;
    }
    params.check_endowment(utility)?;
    let plan = plan(params, utility, clock, sim)?;
    let outcomes: Vec<PathOutcome> = pool(sim.workers)?.install(|| {
        (0..sim.n_paths as u64)
            .into_par_iter()
            .map(|i| run_path(params, utility, &plan, sim.master_seed, i, |_, _, _, _, _| {}))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(summarize(&outcomes, sim))
}

fn summarize(outcomes: &[PathOutcome], sim: &SimConfig) -> SimReport {
    let n = outcomes.len() as f64;
    let mean_of = |f: &dyn Fn(&PathOutcome) -> f64| compensated_sum(outcomes.iter().map(f)) / n;
    let mean_u = mean_of(&|o| o.utility);
    let var_u = if outcomes.len() > 1 {
        compensated_sum(outcomes.iter().map(|o| (o.utility - mean_u).powi(2))) / (n - 1.0)
    } else {
        0.0
    };
    let mean_w = mean_of(&|o| o.wealth);
    let var_w = if outcomes.len() > 1 {
        compensated_sum(outcomes.iter().map(|o| (o.wealth - mean_w).powi(2))) / (n - 1.0)
    } else {
        0.0
    };
    SimReport {
        mean_utility: mean_u,
        std_error: (var_u / n).sqrt(),
        mean_sq_drift_error: mean_of(&|o| o.sq_drift_error),
        terminal_wealth: WealthSummary {
            mean: mean_w,
            variance: var_w,
            min: outcomes.iter().map(|o| o.wealth).fold(f64::INFINITY, f64::min),
        },
        n_paths: sim.n_paths,
        n_steps: sim.n_steps,
        seed: sim.master_seed,
        floored_paths: outcomes.iter().filter(|o| o.floored).count(),
    }
}

/// One row per `ScaledOptimal { factor }`, all with the same random numbers.
pub fn compare_strategies(
    params: &MarketParams,
    utility: &UtilitySpec,
    clock: &InformativeClock,
    factors: &[f64],
    sim: &SimConfig,
) -> Result<Vec<(f64, SimReport)>> {
    factors
        .iter()
        .map(|&factor| {
            let cfg = SimConfig { strategy: Strategy::ScaledOptimal { factor }, ..*sim };
            simulate(params, utility, clock, &cfg).map(|r| (factor, r))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub closed_form: (f64, f64),
    pub monte_carlo: (f64, f64),
    /// `sqrt(se_1^2 + se_2^2)`.
    pub combined_se: f64,
    /// The MC difference has the closed-form sign, or is within 3 combined SE of it.
    pub consistent: bool,
}

/// Optimal-strategy expected utility under two clocks, closed form and MC.
pub fn monotonicity_experiment(
    params: &MarketParams,
    utility: &UtilitySpec,
    clocks: (&InformativeClock, &InformativeClock),
    sim: &SimConfig,
) -> Result<MonotonicityReport> {
    let cfg = SimConfig { strategy: Strategy::OptimalClosedForm, ..*sim };
    let q = StrategyQuery { t: 0.0, x: params.x0, z: params.mu0 };
    let v1 = coefficients(params, utility, clocks.0)?.value(&q)?;
    let v2 = coefficients(params, utility, clocks.1)?.value(&q)?;
    let m1 = simulate(params, utility, clocks.0, &cfg)?;
    let m2 = simulate(params, utility, clocks.1, &cfg)?;
    let combined = m1.std_error.hypot(m2.std_error);
    let cf_diff = v1 - v2;
    let mc_diff = m1.mean_utility - m2.mean_utility;
    let consistent = (mc_diff - cf_diff).abs() <= 3.0 * combined || mc_diff.signum() == cf_diff.signum();
    Ok(MonotonicityReport {
        closed_form: (v1, v2),
        monte_carlo: (m1.mean_utility, m2.mean_utility),
        combined_se: combined,
        consistent,
    })
}

/// One simulated path on the step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub m: Vec<f64>,
    pub z: Vec<f64>,
    pub tau: Vec<f64>,
    /// Conditional variance `sigma^2 / tau`.
    pub var: Vec<f64>,
    pub true_mu: f64,
    /// Correlation used on each step (left endpoint).
    pub rho: Vec<f64>,
}

/// Path `index` of the stream family `seed`, with a zero position (wealth
/// does not feed back into the observations).
pub fn simulate_path(
    params: &MarketParams,
    clock: &InformativeClock,
    n_steps: usize,
    seed: u64,
    index: u64,
) -> Result<PathRecord> {
    let sim = SimConfig::new(1, n_steps, seed, Strategy::Zero);
    let plan = plan(params, &UtilitySpec::Log, clock, &sim)?;
    let n = n_steps;
    let sigma = params.sigma;
    let half_var = 0.5 * sigma * sigma;
    let mut rec = PathRecord {
        t: Vec::with_capacity(n + 1),
        y: vec![0.0],
        m: vec![0.0],
        z: Vec::with_capacity(n + 1),
        tau: vec![params.t0()],
        var: Vec::with_capacity(n + 1),
        true_mu: f64::NAN,
        rho: plan.rho.clone(),
    };
    let mut mu_seen = f64::NAN;
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(n);
    run_path(params, &UtilitySpec::Log, &plan, seed, index, |_, mu, dw, dm, _| {
        mu_seen = mu;
        steps.push(((mu - half_var) * plan.dt + sigma * dw, dm));
    })?;
    rec.true_mu = mu_seen;
    let mut post = init_posterior(params);
    rec.z.push(post.z);
    for (i, &(dy, dm)) in steps.iter().enumerate() {
        post = update(&post, &ObservationIncrement { dy, dm, dt: plan.dt }, params, plan.rho[i])?;
        rec.y.push(rec.y[i] + dy);
        rec.m.push(rec.m[i] + dm);
        rec.z.push(post.z);
        rec.tau.push(post.tau);
    }
    rec.t = (0..=n).map(|i| if i == n { params.horizon } else { i as f64 * plan.dt }).collect();
    rec.var = rec.tau.iter().map(|tau| sigma * sigma / tau).collect();
    Ok(rec)
}
