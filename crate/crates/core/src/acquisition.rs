//! Optimal information acquisition under quadratic cost
//! `lambda (tau' - 1)^2`.
//!
//! Stationary clocks satisfy `tau'' = -F(t, tau)` with
//!
//! ```text
//! CARA:      F = 1 / (4 beta lambda (tau + T - t)^2)
//! CRRA, log: F = y / (4 gamma lambda (tau - theta (T - t))^2)
//! ```
//!
//! `tau(0) = t0` and, since the right end is free and the value integrand
//! vanishes at `t = T`, `tau'(T) = 1`. The problem is solved by shooting on
//! `s = tau'(0)`. For power utility the dual variable `y` is found by an
//! outer search on the dual objective. Only stationarity is established,
//! not global optimality.

use serde::Serialize;

use crate::clock::{ClockForm, InformativeClock};
use crate::error::{Error, Result};
use crate::info_econ::{natural_value_integral, value_integral, value_of_information};
use crate::model::{classify, CostSpec, MarketParams, UtilitySpec};
use crate::numerics::{
    find_root, maximize_1d, solve_ivp, OdeSpec, RootBracket, Trajectory, DUAL_LOG_TOL, ODE_STEPS, SHOOT_TOL,
};

/// Describes what [`solve`] returns: a point satisfying the first-order
/// conditions, checked locally.
pub const SOLUTION_KIND: &str = "stationary solution";

/// Tolerance on `max |tau'' + F| / (1 + |F|)`.
pub const EL_TOL: f64 = 1e-6;
/// Minimum grid size accepted by [`verify_necessary_condition`].
pub const MIN_CHECK_POINTS: usize = 256;
const MAX_DOUBLINGS: usize = 64;
const DUAL_SPAN: f64 = 1e6;
/// RK4 steps for solutions; finer than the numerics default so that plain
/// second differences resolve the residual below `EL_TOL`.
pub const SOLVE_STEPS: usize = 2 * ODE_STEPS;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Forcing {
    /// Numerator of `F`.
    strength: f64,
    /// Coefficient of `T - t` in the denominator.
    kappa: f64,
    horizon: f64,
}

impl Forcing {
    fn new(params: &MarketParams, utility: &UtilitySpec, lambda: f64, y: f64) -> Self {
        let (strength, kappa) = match *utility {
            UtilitySpec::Cara { beta } => (1.0 / (4.0 * beta * lambda), 1.0),
            UtilitySpec::Crra { gamma } => (y / (4.0 * gamma * lambda), -(1.0 - gamma) / gamma),
            UtilitySpec::Log => (y / (4.0 * lambda), 0.0),
        };
        Forcing { strength, kappa, horizon: params.horizon }
    }

    fn denom(&self, t: f64, tau: f64) -> f64 {
        tau + self.kappa * (self.horizon - t)
    }

    /// `F(t, tau)`, NaN once the denominator is no longer positive.
    fn eval(&self, t: f64, tau: f64) -> f64 {
        let d = self.denom(t, tau);
        if d > 0.0 {
            self.strength / (d * d)
        } else {
            f64::NAN
        }
    }
}

/// Residuals of the Euler-Lagrange equation on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `max |tau'' + F|` over interior nodes.
    pub max_residual: f64,
    /// `max |tau'' + F| / (1 + |F|)`.
    pub max_scaled_residual: f64,
    pub passed: bool,
}

/// Local optimality probe: Net at smooth perturbations of the solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateauxCheck {
    pub perturbations: usize,
    /// Largest `Net(perturbed) - Net(solution)`; positive means a perturbation did better.
    pub worst_gain: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub ode_residual_max: f64,
    pub transversality_gap: f64,
    pub el_gateaux_check: GateauxCheck,
    /// `|y* C2 / x0 / exp(X(tau*)) - 1|` for power utility.
    pub dual_consistency: Option<f64>,
    /// Dual objective at `(tau*, y*)`; equals `net` at an exact optimum.
    pub dual_net: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AcquisitionSolution {
    /// Grid clock on `SOLVE_STEPS + 1` nodes.
    pub clock: InformativeClock,
    /// `tau'(0)`.
    pub shoot_param: f64,
    pub y_star: Option<f64>,
    pub value: f64,
    pub cost: f64,
    pub net: f64,
    pub diagnostics: Diagnostics,
}

fn quadratic_lambda(cost: &CostSpec) -> Result<f64> {
    cost.quadratic_lambda()
        .ok_or_else(|| Error::InvalidParameter("the Euler-Lagrange solver supports the quadratic cost only".into()))
}

fn integrate_el(params: &MarketParams, forcing: &Forcing, s: f64) -> Result<Trajectory<2>> {
    let f = *forcing;
    solve_ivp(
        |t, y: &[f64; 2]| [y[1], -f.eval(t, y[0])],
        [params.t0(), s],
        (0.0, params.horizon),
        &OdeSpec { steps: SOLVE_STEPS },
    )
}

/// `tau'(T) - 1` for initial slope `s`; a trajectory that collapses counts as
/// undershooting.
fn shoot_target(params: &MarketParams, forcing: &Forcing, s: f64) -> f64 {
    match integrate_el(params, forcing, s) {
        Ok(traj) => traj.last()[1] - 1.0,
        Err(_) => -1.0,
    }
}

/// Inner problem: the stationary clock for a fixed forcing.
fn shoot(params: &MarketParams, forcing: &Forcing) -> Result<(f64, InformativeClock)> {
    let f_lo = shoot_target(params, forcing, 1.0);
    let s = if f_lo >= 0.0 {
        1.0
    } else {
        let mut hi = 2.0;
        let mut doublings = 0;
        while shoot_target(params, forcing, hi) <= 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::NoBracket(format!("tau'(T) stays below 1 for tau'(0) up to {hi:e}")));
            }
        }
        find_root(|s| shoot_target(params, forcing, s), RootBracket::new(1.0, hi)?, SHOOT_TOL)?
    };
    let traj = integrate_el(params, forcing, s)?;
    let slopes: Vec<f64> = traj.states.iter().map(|st| st[1]).collect();
    if let Some(bad) = slopes.iter().position(|&d| d < 1.0 - 1e-9) {
        return Err(Error::InadmissibleClock(format!(
            "stationary clock has tau' = {} < 1 at t = {}",
            slopes[bad], traj.times[bad]
        )));
    }
    if let Some(&d_min) = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, st)| forcing.denom(t, st[0]))
        .collect::<Vec<_>>()
        .iter()
        .min_by(|a, b| a.total_cmp(b))
    {
        if d_min < 1e-9 * params.t0() {
            return Err(Error::NearSingular(format!("tau - theta (T - t) reaches {d_min:e} along the solution")));
        }
    }
    let clock = InformativeClock::from_derivative_samples(params.t0(), traj.times, slopes)?;
    Ok((s, clock))
}

fn grid_slopes(clock: &InformativeClock) -> Option<(&[f64], &[f64], &[f64])> {
    match clock.form() {
        ClockForm::Grid(g) => Some((g.times(), g.tau(), g.tau_prime())),
        _ => None,
    }
}

/// Residual of `tau'' + F(t, tau)` on the interior nodes of a grid clock,
/// with `tau''` from second differences. Non-grid clocks are tabulated first.
pub fn verify_necessary_condition(
    clock: &InformativeClock,
    params: &MarketParams,
    utility: &UtilitySpec,
    lambda: f64,
    y: Option<f64>,
) -> Result<ResidualReport> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be finite and > 0, got {lambda}")));
    }
    let y = match (utility, y) {
        (UtilitySpec::Cara { .. }, _) => 1.0,
        (_, Some(y)) if y > 0.0 => y,
        _ => return Err(Error::InvalidParameter("power utility needs a dual variable y > 0".into())),
    };
    let tabulated;
    let clock = if grid_slopes(clock).is_some() {
        clock
    } else {
        tabulated = clock.to_grid(ODE_STEPS)?;
        &tabulated
    };
    let (times, tau, _) = grid_slopes(clock).expect("tabulated above");
    if times.len() < MIN_CHECK_POINTS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_CHECK_POINTS} grid points, got {}",
            times.len()
        )));
    }
    let forcing = Forcing::new(params, utility, lambda, y);
    let mut max_residual: f64 = 0.0;
    let mut max_scaled: f64 = 0.0;
    for i in 1..times.len() - 1 {
        let (h0, h1) = (times[i] - times[i - 1], times[i + 1] - times[i]);
        let second = 2.0 * ((tau[i + 1] - tau[i]) / h1 - (tau[i] - tau[i - 1]) / h0) / (h0 + h1);
        let f = forcing.eval(times[i], tau[i]);
        let res = (second + f).abs();
        if res.is_nan() {
            return Ok(ResidualReport { max_residual: f64::NAN, max_scaled_residual: f64::NAN, passed: false });
        }
        max_residual = max_residual.max(res);
        max_scaled = max_scaled.max(res / (1.0 + f.abs()));
    }
    Ok(ResidualReport { max_residual, max_scaled_residual: max_scaled, passed: max_scaled <= EL_TOL })
}

/// `Net = Value - Cost` of a clock.
fn primal_net(
    params: &MarketParams,
    utility: &UtilitySpec,
    cost: &CostSpec,
    clock: &InformativeClock,
) -> Result<(f64, f64)> {
    let value = value_of_information(params, utility, clock)?;
    let c = crate::info_econ::cost_of_information(cost, clock)?;
    Ok((value, c))
}

/// Net at `tau* + eps b_j` for `b_j(t) = sin^2(j pi t / (2T))`, which vanish
/// at 0 with zero slope at `T`. Slopes are floored at 1.
fn gateaux_check(
    params: &MarketParams,
    utility: &UtilitySpec,
    cost: &CostSpec,
    clock: &InformativeClock,
    net: f64,
) -> Result<GateauxCheck> {
    let (times, _, slopes) = grid_slopes(clock).expect("solutions are grid clocks");
    let horizon = params.horizon;
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for j in 1..=3 {
        let w = j as f64 * std::f64::consts::PI / horizon;
        for eps in [1e-3, -1e-3] {
            let perturbed: Vec<f64> =
                times.iter().zip(slopes).map(|(&t, &d)| (d + eps * 0.5 * w * (w * t).sin()).max(1.0)).collect();
            let c = InformativeClock::from_derivative_samples(params.t0(), times.to_vec(), perturbed)?;
            let (v, k) = primal_net(params, utility, cost, &c)?;
            worst = worst.max(v - k - net);
            count += 1;
        }
    }
    Ok(GateauxCheck { perturbations: count, worst_gain: worst, passed: worst <= 1e-9 * (1.0 + net.abs()) })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    params: &MarketParams,
    utility: &UtilitySpec,
    cost: &CostSpec,
    lambda: f64,
    s: f64,
    clock: InformativeClock,
    y_star: Option<f64>,
    dual: Option<(f64, f64)>,
) -> Result<AcquisitionSolution> {
    let (value, c) = primal_net(params, utility, cost, &clock)?;
    let net = value - c;
    let report = verify_necessary_condition(&clock, params, utility, lambda, y_star)?;
    let end_slope = *grid_slopes(&clock).expect("grid").2.last().unwrap();
    let gateaux = gateaux_check(params, utility, cost, &clock, net)?;
    Ok(AcquisitionSolution {
        clock,
        shoot_param: s,
        y_star,
        value,
        cost: c,
        net,
        diagnostics: Diagnostics {
            ode_residual_max: report.max_scaled_residual,
            transversality_gap: (end_slope - 1.0).abs(),
            el_gateaux_check: gateaux,
            dual_consistency: dual.map(|d| d.0),
            dual_net: dual.map(|d| d.1),
        },
    })
}

/// CARA: shooting on the Euler-Lagrange equation.
pub fn solve_cara(params: &MarketParams, beta: f64, lambda: f64) -> Result<AcquisitionSolution> {
    solve(params, &UtilitySpec::cara(beta)?, &CostSpec::quadratic(lambda)?)
}

/// CRRA (`gamma != 1`): shooting inside an outer search on the dual variable.
pub fn solve_crra(params: &MarketParams, gamma: f64, lambda: f64) -> Result<AcquisitionSolution> {
    solve(params, &UtilitySpec::crra(gamma)?, &CostSpec::quadratic(lambda)?)
}

/// Stationary optimal clock for any supported utility.
pub fn solve(params: &MarketParams, utility: &UtilitySpec, cost: &CostSpec) -> Result<AcquisitionSolution> {
    classify(params, utility).into_result()?;
    params.check_endowment(utility)?;
    let lambda = quadratic_lambda(cost)?;
    match utility {
        UtilitySpec::Cara { .. } => {
            let (s, clock) = shoot(params, &Forcing::new(params, utility, lambda, 1.0))?;
            finish(params, utility, cost, lambda, s, clock, None, None)
        }
        UtilitySpec::Crra { .. } | UtilitySpec::Log => solve_dual(params, utility, cost, lambda),
    }
}

struct DualPoint {
    s: f64,
    clock: InformativeClock,
    exponent: f64,
    objective: f64,
}

fn solve_dual(
    params: &MarketParams,
    utility: &UtilitySpec,
    cost: &CostSpec,
    lambda: f64,
) -> Result<AcquisitionSolution> {
    let x0 = params.x0;
    let ln_c2 = natural_value_integral(params, utility)?;
    // ln(x0 / C2): the dual optimum for the natural clock
    let ln_center = x0.ln() - ln_c2;

    let eval = |ln_y: f64| -> Result<DualPoint> {
        let y = ln_y.exp();
        let (s, clock) = shoot(params, &Forcing::new(params, utility, lambda, y))?;
        let exponent = value_integral(params, utility, &clock)?;
        let k = crate::info_econ::cost_of_information(cost, &clock)?;
        // y - y ln(C2 y / x0) - x0 + y X - Cost
        let objective = y - y * (ln_y - ln_center) - x0 + y * exponent - k;
        Ok(DualPoint { s, clock, exponent, objective })
    };
    let objective = |ln_y: f64| eval(ln_y).map(|p| p.objective).unwrap_or(f64::NEG_INFINITY);

    let span = DUAL_SPAN.ln();
    let best = maximize_1d(objective, ln_center - span, ln_center + span, DUAL_LOG_TOL);
    if !best.unimodal {
        log::warn!("dual objective is not unimodal on the search interval; keeping the best sample");
    }

    // polish on the first-order condition X(tau_y) = ln(C2 y / x0)
    let foc = |ln_y: f64| eval(ln_y).map(|p| p.exponent - (ln_y - ln_center)).unwrap_or(f64::NAN);
    let mut step = 4.0 * DUAL_LOG_TOL;
    let ln_y = loop {
        let (lo, hi) = (best.argmax - step, best.argmax + step);
        let (f_lo, f_hi) = (foc(lo), foc(hi));
        if f_lo.is_nan() || f_hi.is_nan() {
            break best.argmax;
        }
        if f_lo >= 0.0 && f_hi <= 0.0 {
            break find_root(foc, RootBracket::new(lo, hi)?, 1e-13)?;
        }
        step *= 2.0;
        if step > 2.0 * span {
            log::warn!("first-order condition has no sign change near the dual optimum");
            break best.argmax;
        }
    };
    let point = eval(ln_y)?;
    let y_star = ln_y.exp();
    let consistency = ((ln_y - ln_center) - point.exponent).exp_m1().abs();
    finish(params, utility, cost, lambda, point.s, point.clock, Some(y_star), Some((consistency, point.objective)))
}
