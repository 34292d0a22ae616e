//! Value functions and optimal strategies for CARA, CRRA and log utility
//! under a given informative clock.
//!
//! All three families share one structure. With `D(t) = tau + kappa (T - t)`
//! where `kappa` is 1 (CARA), `-(1-gamma)/gamma` (CRRA) or 0 (log),
//!
//! ```text
//! a(t)  = A tau (T - t) / D
//! c'(t) = -(A sigma^2 / 2) tau' (T - t) / (tau D),   c(T) = 0
//! ```
//!
//! with `A = 1/(beta sigma^2)`, `theta/(gamma sigma^2)` and `1/sigma^2`.

use serde::Serialize;

use crate::clock::InformativeClock;
use crate::error::{Error, Result};
use crate::model::{classify, MarketParams, UtilitySpec};
use crate::numerics::{QuadratureSpec, COEFF_GRID};

/// Relative floor on `min D` below which CRRA with `gamma < 1` is rejected.
pub const NEAR_SINGULAR_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Kernel {
    /// Coefficient of `T - t` in the denominator.
    kappa: f64,
    /// Scale of `a`.
    a_scale: f64,
    sigma_sq: f64,
}

impl Kernel {
    fn new(params: &MarketParams, utility: &UtilitySpec) -> Self {
        let sigma_sq = params.sigma * params.sigma;
        let (kappa, a_scale) = match *utility {
            UtilitySpec::Cara { beta } => (1.0, 1.0 / (beta * sigma_sq)),
            UtilitySpec::Crra { gamma } => {
                let theta = (1.0 - gamma) / gamma;
                (-theta, theta / (gamma * sigma_sq))
            }
            UtilitySpec::Log => (0.0, 1.0 / sigma_sq),
        };
        Kernel { kappa, a_scale, sigma_sq }
    }

    fn denom(&self, tau: f64, rem: f64) -> f64 {
        tau + self.kappa * rem
    }

    fn a(&self, tau: f64, rem: f64) -> f64 {
        self.a_scale * tau * rem / self.denom(tau, rem)
    }

    /// `-c'(t)`.
    fn c_rate(&self, tau: f64, tau_prime: f64, rem: f64) -> f64 {
        0.5 * self.a_scale * self.sigma_sq * tau_prime * rem / (tau * self.denom(tau, rem))
    }
}

pub(crate) fn check_clock(params: &MarketParams, clock: &InformativeClock) -> Result<()> {
    if clock.is_insider() {
        return Err(Error::InadmissibleClock(
            "the insider clock has no finite value function; use info_econ::insider_bound".into(),
        ));
    }
    let tol = 1e-12;
    if (clock.t0() - params.t0()).abs() > tol * params.t0() {
        return Err(Error::InvalidParameter(format!(
            "clock t0 = {} does not match market t0 = {}",
            clock.t0(),
            params.t0()
        )));
    }
    if (clock.horizon() - params.horizon).abs() > tol * params.horizon {
        return Err(Error::InvalidParameter(format!(
            "clock horizon {} does not match market horizon {}",
            clock.horizon(),
            params.horizon
        )));
    }
    if !clock.tau_end().is_finite() {
        return Err(Error::InadmissibleClock("tau(T) is infinite".into()));
    }
    Ok(())
}

fn check_near_singular(
    params: &MarketParams,
    utility: &UtilitySpec,
    clock: &InformativeClock,
    times: &[f64],
) -> Result<()> {
    if let UtilitySpec::Crra { gamma } = *utility {
        if gamma < 1.0 {
            let k = Kernel::new(params, utility);
            let min_d =
                times.iter().map(|&t| k.denom(clock.value_at(t), params.horizon - t)).fold(f64::INFINITY, f64::min);
            if min_d < NEAR_SINGULAR_REL * clock.t0() {
                return Err(Error::NearSingular(format!(
                    "min over [0, T] of tau - (1-gamma)/gamma (T - t) is {min_d:e}"
                )));
            }
        }
    }
    Ok(())
}

/// `c(t)` over `[from, T]` by quadrature of its defining integrand.
pub fn c_integral(
    params: &MarketParams,
    utility: &UtilitySpec,
    clock: &InformativeClock,
    from: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let k = Kernel::new(params, utility);
    let horizon = params.horizon;
    clock.integrate(from, horizon, spec, |t, tau, dtau| k.c_rate(tau, dtau, horizon - t))
}

/// `c(0)` for CARA computed in the clock variable `u = tau(s)`:
/// `(1/(2 beta)) int_{t0}^{tau(T)} [1/u - 1/(u + T - tau^{-1}(u))] du`.
pub fn cara_c0_clock_domain(
    params: &MarketParams,
    beta: f64,
    clock: &InformativeClock,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_clock(params, clock)?;
    let horizon = params.horizon;
    let f = |u: f64| {
        let s = clock.eval_inverse(u).unwrap_or(f64::NAN);
        1.0 / u - 1.0 / (u + horizon - s)
    };
    let q = crate::numerics::integrate(f, clock.t0(), clock.tau_end(), spec)?;
    Ok(q.value / (2.0 * beta))
}

/// Position in the state space at which a value or strategy is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyQuery {
    pub t: f64,
    pub x: f64,
    pub z: f64,
}

/// How an optimal strategy is expressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Amount held in the risky asset, independent of wealth.
    Amount(f64),
    /// Fraction of current wealth held in the risky asset.
    Fraction(f64),
}

impl Policy {
    pub fn amount(&self, wealth: f64) -> f64 {
        match *self {
            Policy::Amount(a) => a,
            Policy::Fraction(f) => f * wealth,
        }
    }
}

/// Tabulated `a` and `c` on a uniform grid, plus exact evaluation between nodes.
#[derive(Debug, Clone)]
pub struct ValueCoefficients {
    params: MarketParams,
    utility: UtilitySpec,
    clock: InformativeClock,
    kernel: Kernel,
    spec: QuadratureSpec,
    times: Vec<f64>,
    a: Vec<f64>,
    c: Vec<f64>,
}

/// Coefficients on the default grid.
pub fn coefficients(
    params: &MarketParams,
    utility: &UtilitySpec,
    clock: &InformativeClock,
) -> Result<ValueCoefficients> {
    coefficients_with(params, utility, clock, COEFF_GRID, &QuadratureSpec::default())
}

/// Coefficients on `cells + 1` nodes (at least `COEFF_GRID` cells).
pub fn coefficients_with(
    params: &MarketParams,
    utility: &UtilitySpec,
    clock: &InformativeClock,
    cells: usize,
    spec: &QuadratureSpec,
) -> Result<ValueCoefficients> {
    classify(params, utility).into_result()?;
    check_clock(params, clock)?;
    let cells = cells.max(COEFF_GRID);
    let horizon = params.horizon;
    let h = horizon / cells as f64;
    let times: Vec<f64> = (0..=cells).map(|i| if i == cells { horizon } else { i as f64 * h }).collect();
    check_near_singular(params, utility, clock, &times)?;

    let kernel = Kernel::new(params, utility);
    let a: Vec<f64> = times.iter().map(|&t| kernel.a(clock.value_at(t), horizon - t)).collect();
    let mut c = vec![0.0; times.len()];
    for i in (0..cells).rev() {
        let piece =
            clock.integrate(times[i], times[i + 1], spec, |t, tau, dtau| kernel.c_rate(tau, dtau, horizon - t))?;
        c[i] = c[i + 1] + piece;
    }
    if a.iter().chain(&c).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("value coefficients are not finite".into()));
    }
    Ok(ValueCoefficients { params: *params, utility: *utility, clock: clock.clone(), kernel, spec: *spec, times, a, c })
}

impl ValueCoefficients {
    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn utility(&self) -> &UtilitySpec {
        &self.utility
    }

    pub fn clock(&self) -> &InformativeClock {
        &self.clock
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.params.horizon).contains(&t) {
            return Err(Error::OutOfDomain { value: t, lo: 0.0, hi: self.params.horizon });
        }
        Ok(())
    }

    pub fn a_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.kernel.a(self.clock.value_at(t), self.params.horizon - t))
    }

    /// `c(t)`: the tabulated value at the next node plus quadrature of the gap.
    pub fn c_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let cells = self.times.len() - 1;
        let h = self.params.horizon / cells as f64;
        let mut i = ((t / h).ceil() as usize).min(cells);
        while i > 0 && self.times[i - 1] >= t {
            i -= 1;
        }
        while self.times[i] < t {
            i += 1;
        }
        if self.times[i] == t {
            return Ok(self.c[i]);
        }
        let horizon = self.params.horizon;
        let k = self.kernel;
        let gap =
            self.clock.integrate(t, self.times[i], &self.spec, |s, tau, dtau| k.c_rate(tau, dtau, horizon - s))?;
        Ok(self.c[i] + gap)
    }

    /// `psi(t, z) = a(t) (z - r)^2 / 2 + c(t)`.
    pub fn psi(&self, t: f64, z: f64) -> Result<f64> {
        let dz = z - self.params.r;
        Ok(0.5 * self.a_at(t)? * dz * dz + self.c_at(t)?)
    }

    /// `V(t, x, z)`.
    pub fn value(&self, q: &StrategyQuery) -> Result<f64> {
        let psi = self.psi(q.t, q.z)?;
        compose_value(&self.params, &self.utility, q, psi)
    }

    /// `tau / D`, the factor by which learning shrinks the myopic position.
    pub fn multiplier(&self, t: f64) -> f64 {
        let tau = self.clock.value_at(t);
        tau / self.kernel.denom(tau, self.params.horizon - t)
    }

    /// Optimal policy at `(t, z)`; CARA gives an amount, CRRA and log a fraction.
    pub fn policy(&self, t: f64, z: f64) -> Result<Policy> {
        self.check_time(t)?;
        let p = &self.params;
        let excess = (z - p.r) / (p.sigma * p.sigma);
        let m = self.multiplier(t);
        Ok(match self.utility {
            UtilitySpec::Cara { beta } => Policy::Amount((-p.r * (p.horizon - t)).exp() * m * excess / beta),
            UtilitySpec::Crra { gamma } => Policy::Fraction(m * excess / gamma),
            UtilitySpec::Log => Policy::Fraction(excess),
        })
    }

    /// Optimal amount in the risky asset.
    pub fn optimal_strategy(&self, q: &StrategyQuery) -> Result<f64> {
        if self.utility.requires_positive_wealth() && q.x <= 0.0 {
            return Err(Error::Domain(format!("wealth must be > 0 for {} utility, got {}", self.utility.name(), q.x)));
        }
        Ok(self.policy(q.t, q.z)?.amount(q.x))
    }
}

fn compose_value(params: &MarketParams, utility: &UtilitySpec, q: &StrategyQuery, psi: f64) -> Result<f64> {
    let grown = (params.r * (params.horizon - q.t)).exp() * q.x;
    match *utility {
        UtilitySpec::Cara { .. } => Ok(utility.utility(grown + psi)),
        UtilitySpec::Crra { gamma } => {
            if grown <= 0.0 {
                return Err(Error::Domain(format!("CRRA value needs wealth > 0, got {}", q.x)));
            }
            Ok(utility.utility(grown) * (gamma * psi).exp())
        }
        UtilitySpec::Log => {
            if grown <= 0.0 {
                return Err(Error::Domain(format!("log value needs wealth > 0, got {}", q.x)));
            }
            Ok(grown.ln() + psi)
        }
    }
}

/// Value and optimal amount with no learning effect (`tau = infinity`, `c = 0`).
pub fn classical_limit(params: &MarketParams, utility: &UtilitySpec, q: &StrategyQuery) -> Result<(f64, f64)> {
    classify(params, utility).into_result()?;
    if !(0.0..=params.horizon).contains(&q.t) {
        return Err(Error::OutOfDomain { value: q.t, lo: 0.0, hi: params.horizon });
    }
    let rem = params.horizon - q.t;
    let sigma_sq = params.sigma * params.sigma;
    let dz = q.z - params.r;
    let (a, amount) = match *utility {
        UtilitySpec::Cara { beta } => (rem / (beta * sigma_sq), (-params.r * rem).exp() * dz / (beta * sigma_sq)),
        UtilitySpec::Crra { gamma } => {
            let theta = (1.0 - gamma) / gamma;
            (theta * rem / (gamma * sigma_sq), dz * q.x / (gamma * sigma_sq))
        }
        UtilitySpec::Log => (rem / sigma_sq, dz * q.x / sigma_sq),
    };
    if utility.requires_positive_wealth() && q.x <= 0.0 {
        return Err(Error::Domain(format!("wealth must be > 0, got {}", q.x)));
    }
    let value = compose_value(params, utility, q, 0.5 * a * dz * dz)?;
    Ok((value, amount))
}

/// Linear and quadratic coefficients (in the fraction `k`) of the exponent of
/// `E[U(X_T^k)] / U(e^{rT} x0)` for a constant-fraction strategy under CRRA.
pub fn divergence_exponent(params: &MarketParams, gamma: f64) -> (f64, f64) {
    let one_minus = 1.0 - gamma;
    let horizon = params.horizon;
    let sigma_sq = params.sigma * params.sigma;
    let linear = one_minus * (params.mu0 - params.r) * horizon;
    let quadratic = 0.5 * one_minus * one_minus * sigma_sq * horizon * (horizon / params.t0() - gamma / one_minus);
    (linear, quadratic)
}

/// Expected-utility ratios `E[U(X_T^k)] / U(e^{rT} x0)` of constant-fraction
/// strategies in an ill-posed CRRA market. They grow without bound in `k`.
pub fn illposed_divergence_witness(params: &MarketParams, utility: &UtilitySpec, ks: &[f64]) -> Result<Vec<f64>> {
    let UtilitySpec::Crra { gamma } = *utility else {
        return Err(Error::InvalidParameter("divergence witness applies to CRRA utility only".into()));
    };
    if classify(params, utility).is_well_posed() {
        return Err(Error::InvalidParameter(format!(
            "CRRA gamma = {gamma} with t0/T = {} is well-posed; no divergence to witness",
            params.t0() / params.horizon
        )));
    }
    let (lin, quad) = divergence_exponent(params, gamma);
    Ok(ks.iter().map(|&k| (lin * k + quad * k * k).exp()).collect())
}
