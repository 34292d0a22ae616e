//! The informative clock `tau(t) = t0 + int_0^t q(s)^2 ds` with
//! `q^2 = 1 / (1 - rho^2)`, and its two-way relationship with the correlation
//! profile of the extra information.
//!
//! `tau(t)` is the posterior precision of the drift in units of
//! `1 / sigma^2`: the conditional variance at time `t` is `sigma^2 / tau(t)`.
//! Every admissible clock starts at `t0` and runs at least as fast as real
//! time (`tau' >= 1`).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{self, QuadratureSpec, RHO_EPS};

/// Number of uniform cells used when a clock is tabulated from a sampled profile.
pub const CLOCK_GRID: usize = 4096;

const DOMAIN_SLACK: f64 = 1e-12;
// Derivative samples this close below 1 are treated as 1 (solver round-off).
const SLOPE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct InformativeClock {
    t0: f64,
    horizon: f64,
    form: ClockForm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClockForm {
    /// `tau(t) = t0 + t`: prices only.
    Natural,
    /// `tau(t) = t0 + k t`, `k >= 1`: constant correlation.
    Linear { k: f64 },
    /// Piecewise-linear `tau'`, integrated exactly.
    Grid(GridClock),
    /// Perfectly informative signal from `0+` on; `tau = infinity` after time 0.
    Insider,
}

/// Samples of `tau'` on an increasing grid starting at 0. Between nodes
/// `tau'` is linear, so `tau` is piecewise quadratic and the node values are
/// the exact (trapezoid) integrals of the interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct GridClock {
    times: Vec<f64>,
    tau_prime: Vec<f64>,
    tau: Vec<f64>,
}

impl GridClock {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn tau_prime(&self) -> &[f64] {
        &self.tau_prime
    }

    /// `tau` at the grid nodes.
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    fn cell_of_time(&self, t: f64) -> usize {
        let n = self.times.len();
        self.times.partition_point(|&x| x <= t).clamp(1, n - 1) - 1
    }

    fn eval(&self, t: f64) -> f64 {
        let i = self.cell_of_time(t);
        let h = self.times[i + 1] - self.times[i];
        let s = t - self.times[i];
        let slope = (self.tau_prime[i + 1] - self.tau_prime[i]) / h;
        self.tau[i] + self.tau_prime[i] * s + 0.5 * slope * s * s
    }

    fn derivative(&self, t: f64) -> f64 {
        let i = self.cell_of_time(t);
        let h = self.times[i + 1] - self.times[i];
        let w = (t - self.times[i]) / h;
        self.tau_prime[i] * (1.0 - w) + self.tau_prime[i + 1] * w
    }

    fn inverse(&self, u: f64) -> f64 {
        let n = self.tau.len();
        let i = self.tau.partition_point(|&x| x <= u).clamp(1, n - 1) - 1;
        let h = self.times[i + 1] - self.times[i];
        let slope = (self.tau_prime[i + 1] - self.tau_prime[i]) / h;
        let d = self.tau_prime[i];
        let du = u - self.tau[i];
        // root of slope/2 s^2 + d s - du = 0 in the cancellation-free form
        let disc = (d * d + 2.0 * slope * du).max(0.0);
        let s = 2.0 * du / (d + disc.sqrt());
        self.times[i] + s
    }
}

impl InformativeClock {
    pub fn natural(t0: f64, horizon: f64) -> Result<Self> {
        check_base(t0, horizon)?;
        Ok(InformativeClock { t0, horizon, form: ClockForm::Natural })
    }

    pub fn linear(t0: f64, k: f64, horizon: f64) -> Result<Self> {
        check_base(t0, horizon)?;
        if !(k.is_finite() && k >= 1.0) {
            return Err(Error::InadmissibleClock(format!("linear clock needs finite k >= 1, got {k}")));
        }
        Ok(InformativeClock { t0, horizon, form: ClockForm::Linear { k } })
    }

    /// The fully informed limit. Only `info_econ` evaluates it (analytically).
    pub fn insider(t0: f64, horizon: f64) -> Result<Self> {
        check_base(t0, horizon)?;
        Ok(InformativeClock { t0, horizon, form: ClockForm::Insider })
    }

    /// Builds a grid clock from `tau'` samples. `times` must start at 0 and
    /// increase; the last time is the horizon.
    pub fn from_derivative_samples(t0: f64, times: Vec<f64>, mut tau_prime: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != tau_prime.len() {
            return Err(Error::InadmissibleClock(
                "grid clock needs at least two (t, tau') samples of equal length".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InadmissibleClock(format!("grid clock must start at t = 0, got {}", times[0])));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InadmissibleClock("grid clock times must be finite and increasing".into()));
        }
        let horizon = *times.last().unwrap();
        check_base(t0, horizon)?;
        for (t, d) in times.iter().zip(tau_prime.iter_mut()) {
            if !d.is_finite() || *d < 1.0 - SLOPE_SLACK {
                return Err(Error::InadmissibleClock(format!("tau'({t}) = {d} violates tau' >= 1")));
            }
            *d = d.max(1.0);
        }
        let mut tau = Vec::with_capacity(times.len());
        tau.push(t0);
        for i in 1..times.len() {
            let h = times[i] - times[i - 1];
            tau.push(tau[i - 1] + 0.5 * h * (tau_prime[i - 1] + tau_prime[i]));
        }
        Ok(InformativeClock { t0, horizon, form: ClockForm::Grid(GridClock { times, tau_prime, tau }) })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn form(&self) -> &ClockForm {
        &self.form
    }

    pub fn is_insider(&self) -> bool {
        matches!(self.form, ClockForm::Insider)
    }

    /// Same clock shape with a different starting value.
    pub fn with_t0(&self, t0: f64) -> Result<Self> {
        check_base(t0, self.horizon)?;
        Ok(match &self.form {
            ClockForm::Grid(g) => InformativeClock::from_derivative_samples(t0, g.times.clone(), g.tau_prime.clone())?,
            form => InformativeClock { t0, horizon: self.horizon, form: form.clone() },
        })
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let slack = DOMAIN_SLACK * self.horizon.max(1.0);
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::OutOfDomain { value: t, lo: 0.0, hi: self.horizon });
        }
        Ok(t.clamp(0.0, self.horizon))
    }

    /// `tau(t)` for `t` in `[0, T]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        Ok(self.value_at(t))
    }

    /// `tau'(t)` for `t` in `[0, T]`.
    pub fn eval_derivative(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        Ok(self.derivative_at(t))
    }

    /// `tau^{-1}(u)` for `u` in `[t0, tau(T)]`.
    pub fn eval_inverse(&self, u: f64) -> Result<f64> {
        let hi = self.tau_end();
        let slack = DOMAIN_SLACK * hi.max(1.0);
        if !(u >= self.t0 - slack && u <= hi + slack) {
            return Err(Error::OutOfDomain { value: u, lo: self.t0, hi });
        }
        let u = u.clamp(self.t0, hi);
        Ok(match &self.form {
            ClockForm::Natural => u - self.t0,
            ClockForm::Linear { k } => (u - self.t0) / k,
            ClockForm::Grid(g) => g.inverse(u).clamp(0.0, self.horizon),
            ClockForm::Insider => 0.0,
        })
    }

    /// `tau(T)`; infinite for the insider clock.
    pub fn tau_end(&self) -> f64 {
        self.value_at(self.horizon)
    }

    // Unchecked evaluation for callers that already hold t in [0, T].
    pub(crate) fn value_at(&self, t: f64) -> f64 {
        match &self.form {
            ClockForm::Natural => self.t0 + t,
            ClockForm::Linear { k } => self.t0 + k * t,
            ClockForm::Grid(g) => g.eval(t),
            ClockForm::Insider => {
                if t > 0.0 {
                    f64::INFINITY
                } else {
                    self.t0
                }
            }
        }
    }

    pub(crate) fn derivative_at(&self, t: f64) -> f64 {
        match &self.form {
            ClockForm::Natural => 1.0,
            ClockForm::Linear { k } => *k,
            ClockForm::Grid(g) => g.derivative(t),
            ClockForm::Insider => f64::INFINITY,
        }
    }

    /// `[a, (grid nodes strictly inside (a, b))..., b]`: the pieces on which
    /// functions of `tau` are smooth.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = vec![a];
        if let ClockForm::Grid(g) = &self.form {
            out.extend(g.times.iter().copied().filter(|&t| t > a && t < b));
        }
        out.push(b);
        out
    }

    /// Integrates `f(t, tau(t), tau'(t))` over `[a, b]`, splitting at grid nodes.
    pub fn integrate<F>(&self, a: f64, b: f64, spec: &QuadratureSpec, f: F) -> Result<f64>
    where
        F: Fn(f64, f64, f64) -> f64,
    {
        if self.is_insider() {
            return Err(Error::InadmissibleClock(
                "insider clock is infinite after time 0; use the analytic insider limits".into(),
            ));
        }
        numerics::integrate_piecewise(|t| f(t, self.value_at(t), self.derivative_at(t)), &self.breakpoints(a, b), spec)
    }

    /// Tabulates `tau'` on `cells + 1` uniform nodes.
    pub fn to_grid(&self, cells: usize) -> Result<InformativeClock> {
        if self.is_insider() {
            return Err(Error::InadmissibleClock("insider clock cannot be tabulated".into()));
        }
        let cells = cells.max(1);
        let h = self.horizon / cells as f64;
        let times: Vec<f64> = (0..=cells).map(|i| if i == cells { self.horizon } else { i as f64 * h }).collect();
        let slopes = times.iter().map(|&t| self.derivative_at(t)).collect();
        InformativeClock::from_derivative_samples(self.t0, times, slopes)
    }
}

fn check_base(t0: f64, horizon: f64) -> Result<()> {
    if !(t0.is_finite() && t0 > 0.0) {
        return Err(Error::InadmissibleClock(format!("t0 must be finite and > 0, got {t0}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InadmissibleClock(format!("horizon must be finite and > 0, got {horizon}")));
    }
    Ok(())
}

/// Result of [`check_admissible`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Admissibility {
    Finite { tau_end: f64 },
    Infinite,
}

/// Whether the total information over the horizon is finite.
pub fn check_admissible(clock: &InformativeClock) -> Admissibility {
    let tau_end = clock.tau_end();
    if tau_end.is_finite() {
        Admissibility::Finite { tau_end }
    } else {
        Admissibility::Infinite
    }
}

/// Correlation between the extra signal and the price noise as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationProfile {
    Constant(f64),
    /// Linear interpolation between samples; flat beyond the ends.
    Grid {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    /// `rho = sqrt(1 - 1 / tau')` of a clock.
    InducedByClock(InformativeClock),
}

fn admissible_rho(rho: f64) -> Result<f64> {
    let r = rho.abs();
    // the sign of the correlation carries no information; only |rho| matters
    if !r.is_finite() || r > 1.0 - RHO_EPS {
        return Err(Error::InadmissibleProfile(format!("|rho| = {r} exceeds the admissible cap 1 - {RHO_EPS}")));
    }
    Ok(r)
}

impl CorrelationProfile {
    pub fn constant(rho: f64) -> Result<Self> {
        Ok(CorrelationProfile::Constant(admissible_rho(rho)?))
    }

    pub fn grid(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InadmissibleProfile("profile needs equal-length, non-empty samples".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InadmissibleProfile("profile times must be finite and increasing".into()));
        }
        let values = values.into_iter().map(admissible_rho).collect::<Result<Vec<_>>>()?;
        Ok(CorrelationProfile::Grid { times, values })
    }

    pub fn rho(&self, t: f64) -> f64 {
        match self {
            CorrelationProfile::Constant(r) => *r,
            CorrelationProfile::Grid { times, values } => {
                let n = times.len();
                if n == 1 || t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let i = times.partition_point(|&x| x <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] * (1.0 - w) + values[i + 1] * w
            }
            CorrelationProfile::InducedByClock(clock) => {
                let t = t.clamp(0.0, clock.horizon());
                (1.0 - 1.0 / clock.derivative_at(t)).max(0.0).sqrt()
            }
        }
    }

    /// Largest correlation over the samples (or the induced clock's grid).
    pub fn max_rho(&self) -> f64 {
        match self {
            CorrelationProfile::Constant(r) => *r,
            CorrelationProfile::Grid { values, .. } => values.iter().copied().fold(0.0, f64::max),
            CorrelationProfile::InducedByClock(clock) => match clock.form() {
                ClockForm::Grid(g) => g.tau_prime.iter().map(|&d| (1.0 - 1.0 / d).sqrt()).fold(0.0, f64::max),
                _ => self.rho(0.0),
            },
        }
    }
}

/// `q^2 = 1 / (1 - rho^2)`.
pub fn information_rate(rho: f64) -> f64 {
    1.0 / (1.0 - rho * rho)
}

/// Integrates the information rate of a correlation profile into a clock.
/// Sampled profiles are tabulated on [`CLOCK_GRID`] uniform cells.
pub fn clock_from_correlation(profile: &CorrelationProfile, t0: f64, horizon: f64) -> Result<InformativeClock> {
    match profile {
        CorrelationProfile::Constant(r) => {
            let r = admissible_rho(*r)?;
            if r == 0.0 {
                InformativeClock::natural(t0, horizon)
            } else {
                InformativeClock::linear(t0, information_rate(r), horizon)
            }
        }
        CorrelationProfile::Grid { values, .. } => {
            for v in values {
                admissible_rho(*v)?;
            }
            let h = horizon / CLOCK_GRID as f64;
            let times: Vec<f64> =
                (0..=CLOCK_GRID).map(|i| if i == CLOCK_GRID { horizon } else { i as f64 * h }).collect();
            let rates = times.iter().map(|&t| information_rate(profile.rho(t))).collect();
            InformativeClock::from_derivative_samples(t0, times, rates)
        }
        CorrelationProfile::InducedByClock(clock) => {
            if clock.is_insider() {
                return Err(Error::InadmissibleProfile("insider clock has rho = 1".into()));
            }
            if clock.horizon() != horizon {
                return Err(Error::InadmissibleProfile(format!(
                    "profile horizon {} differs from requested horizon {horizon}",
                    clock.horizon()
                )));
            }
            clock.with_t0(t0)
        }
    }
}

/// Inverts `tau' = 1 / (1 - rho^2)`.
pub fn correlation_from_clock(clock: &InformativeClock) -> CorrelationProfile {
    match clock.form() {
        ClockForm::Natural => CorrelationProfile::Constant(0.0),
        ClockForm::Linear { k } => CorrelationProfile::Constant((1.0 - 1.0 / k).sqrt()),
        ClockForm::Grid(_) | ClockForm::Insider => CorrelationProfile::InducedByClock(clock.clone()),
    }
}

/// Command-line clock description: `natural`, `linear:k=<float>`, `grid:<path.csv>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ClockSpec {
    Natural,
    Linear { k: f64 },
    Grid(PathBuf),
}

impl FromStr for ClockSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "natural" {
            return Ok(ClockSpec::Natural);
        }
        if let Some(rest) = s.strip_prefix("linear:") {
            let value = rest
                .strip_prefix("k=")
                .ok_or_else(|| Error::Config(format!("expected linear:k=<float>, got '{s}'")))?;
            let k: f64 = value.parse().map_err(|_| Error::Config(format!("invalid slope in clock spec '{s}'")))?;
            return Ok(ClockSpec::Linear { k });
        }
        if let Some(path) = s.strip_prefix("grid:") {
            if path.is_empty() {
                return Err(Error::Config("grid clock spec needs a CSV path".into()));
            }
            return Ok(ClockSpec::Grid(PathBuf::from(path)));
        }
        Err(Error::Config(format!("unknown clock spec '{s}' (expected natural, linear:k=<float> or grid:<path.csv>)")))
    }
}

impl fmt::Display for ClockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockSpec::Natural => write!(f, "natural"),
            ClockSpec::Linear { k } => write!(f, "linear:k={k}"),
            ClockSpec::Grid(p) => write!(f, "grid:{}", p.display()),
        }
    }
}

impl ClockSpec {
    /// Materializes the clock; grid specs read `t,tau_prime` from CSV.
    pub fn build(&self, t0: f64, horizon: f64) -> Result<InformativeClock> {
        match self {
            ClockSpec::Natural => InformativeClock::natural(t0, horizon),
            ClockSpec::Linear { k } => InformativeClock::linear(t0, *k, horizon),
            ClockSpec::Grid(path) => {
                let (times, slopes) = crate::io::read_clock_grid(path)?;
                let end = *times.last().unwrap_or(&0.0);
                if (end - horizon).abs() > 1e-9 * horizon.max(1.0) {
                    return Err(Error::Config(format!(
                        "grid clock ends at t = {end}, expected the horizon T = {horizon}"
                    )));
                }
                let mut times = times;
                *times.last_mut().unwrap() = horizon;
                InformativeClock::from_derivative_samples(t0, times, slopes)
            }
        }
    }
}
