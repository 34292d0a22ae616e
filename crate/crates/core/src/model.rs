//! Market, preference and cost descriptions shared by every other module.
//!
//! All types are plain values: validated once at construction and immutable
//! afterwards, so they can be shared freely between worker threads.

use serde::Serialize;

use crate::error::{Error, Result};

/// Constants of the one-risky-asset market with a Gaussian prior on the drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarketParams {
    /// Risk-free rate per unit time.
    pub r: f64,
    /// Volatility per square-root time.
    pub sigma: f64,
    /// Prior mean of the unknown drift.
    pub mu0: f64,
    /// Prior variance of the unknown drift.
    pub sigma0_sq: f64,
    /// Investment horizon.
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Initial wealth.
    pub x0: f64,
}

impl MarketParams {
    pub fn new(r: f64, sigma: f64, mu0: f64, sigma0_sq: f64, horizon: f64, x0: f64) -> Result<Self> {
        let p = MarketParams { r, sigma, mu0, sigma0_sq, horizon, x0 };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from the prior "information time" `t0 = sigma^2 / sigma0^2`
    /// instead of the prior variance.
    pub fn with_t0(r: f64, sigma: f64, mu0: f64, t0: f64, horizon: f64, x0: f64) -> Result<Self> {
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(Error::InvalidParameter(format!("t0 must be finite and > 0, got {t0}")));
        }
        Self::new(r, sigma, mu0, sigma * sigma / t0, horizon, x0)
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.r, self.sigma, self.mu0, self.sigma0_sq, self.horizon, self.x0];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("market parameters must be finite".into()));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.sigma0_sq <= 0.0 {
            return Err(Error::InvalidParameter(format!("sigma0_sq must be > 0, got {}", self.sigma0_sq)));
        }
        if self.horizon <= 0.0 {
            return Err(Error::InvalidParameter(format!("T must be > 0, got {}", self.horizon)));
        }
        let t0 = self.t0();
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(Error::InvalidParameter(format!("derived t0 = {t0} is not finite and positive")));
        }
        Ok(())
    }

    /// Prior information expressed in units of time: `sigma^2 / sigma0^2`.
    pub fn t0(&self) -> f64 {
        self.sigma * self.sigma / self.sigma0_sq
    }

    /// Checks that the endowment lies in the domain of the utility.
    pub fn check_endowment(&self, utility: &UtilitySpec) -> Result<()> {
        if utility.requires_positive_wealth() && self.x0 <= 0.0 {
            return Err(Error::Domain(format!(
                "initial wealth must be > 0 for {} utility, got {}",
                utility.name(),
                self.x0
            )));
        }
        Ok(())
    }
}

/// Free-function form of [`MarketParams::t0`].
pub fn derive_t0(params: &MarketParams) -> f64 {
    params.t0()
}

/// Investor preferences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UtilitySpec {
    /// `U(x) = -exp(-beta x) / beta`.
    Cara { beta: f64 },
    /// `U(x) = x^(1-gamma) / (1-gamma)`, `gamma != 1`.
    Crra { gamma: f64 },
    /// `U(x) = ln x`.
    Log,
}

impl UtilitySpec {
    pub fn cara(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be finite and > 0, got {beta}")));
        }
        Ok(UtilitySpec::Cara { beta })
    }

    pub fn crra(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be finite and > 0, got {gamma}")));
        }
        if gamma == 1.0 {
            return Err(Error::InvalidParameter("gamma = 1 is the logarithmic utility; use the log variant".into()));
        }
        Ok(UtilitySpec::Crra { gamma })
    }

    pub fn name(&self) -> &'static str {
        match self {
            UtilitySpec::Cara { .. } => "CARA",
            UtilitySpec::Crra { .. } => "CRRA",
            UtilitySpec::Log => "log",
        }
    }

    pub fn requires_positive_wealth(&self) -> bool {
        !matches!(self, UtilitySpec::Cara { .. })
    }

    /// Relative risk aversion for the power family; 1 for log. `None` for CARA.
    pub fn relative_risk_aversion(&self) -> Option<f64> {
        match *self {
            UtilitySpec::Cara { .. } => None,
            UtilitySpec::Crra { gamma } => Some(gamma),
            UtilitySpec::Log => Some(1.0),
        }
    }

    /// The utility of terminal wealth. Returns NaN outside the domain.
    pub fn utility(&self, x: f64) -> f64 {
        match *self {
            UtilitySpec::Cara { beta } => -(-beta * x).exp() / beta,
            UtilitySpec::Crra { gamma } => {
                if x <= 0.0 {
                    f64::NAN
                } else {
                    x.powf(1.0 - gamma) / (1.0 - gamma)
                }
            }
            UtilitySpec::Log => {
                if x <= 0.0 {
                    f64::NAN
                } else {
                    x.ln()
                }
            }
        }
    }
}

/// Outcome of [`classify`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum WellPosedness {
    WellPosed,
    IllPosed { reason: String },
}

impl WellPosedness {
    pub fn is_well_posed(&self) -> bool {
        matches!(self, WellPosedness::WellPosed)
    }

    /// Converts an ill-posed classification into [`Error::IllPosed`].
    pub fn into_result(self) -> Result<()> {
        match self {
            WellPosedness::WellPosed => Ok(()),
            WellPosedness::IllPosed { reason } => Err(Error::IllPosed(reason)),
        }
    }
}

/// Power utility with little risk aversion and a diffuse prior has infinite
/// expected utility: ill-posed exactly when `t0 / T <= (1 - gamma) / gamma`.
/// The comparison is exact; the boundary itself is ill-posed.
pub fn classify(params: &MarketParams, utility: &UtilitySpec) -> WellPosedness {
    match *utility {
        UtilitySpec::Crra { gamma } => {
            let ratio = params.t0() / params.horizon;
            let threshold = (1.0 - gamma) / gamma;
            if ratio <= threshold {
                WellPosedness::IllPosed {
                    reason: format!(
                        "CRRA gamma = {gamma}: t0/T = {ratio} <= (1-gamma)/gamma = {threshold}, \
                         expected utility is unbounded"
                    ),
                }
            } else {
                WellPosedness::WellPosed
            }
        }
        UtilitySpec::Cara { .. } | UtilitySpec::Log => WellPosedness::WellPosed,
    }
}

/// Penalty for acquiring information at rate `tau'` (>= 1).
#[derive(Debug, Clone, PartialEq)]
pub enum CostSpec {
    /// `lambda (x - 1)^2`.
    Quadratic { lambda: f64 },
    /// Piecewise-linear convex function through tabulated points.
    Tabulated(TabulatedCost),
}

impl CostSpec {
    pub fn quadratic(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be finite and > 0, got {lambda}")));
        }
        Ok(CostSpec::Quadratic { lambda })
    }

    pub fn cost(&self, x: f64) -> f64 {
        match self {
            CostSpec::Quadratic { lambda } => lambda * (x - 1.0) * (x - 1.0),
            CostSpec::Tabulated(table) => table.eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            CostSpec::Quadratic { lambda } => 2.0 * lambda * (x - 1.0),
            CostSpec::Tabulated(table) => table.slope(x),
        }
    }

    /// The quadratic weight, if this is the quadratic template.
    pub fn quadratic_lambda(&self) -> Option<f64> {
        match self {
            CostSpec::Quadratic { lambda } => Some(*lambda),
            CostSpec::Tabulated(_) => None,
        }
    }
}

/// A convex, nondecreasing, piecewise-linear cost with `cost(1) = 0`.
/// Beyond the last point the final slope is continued.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCost {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedCost {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated cost needs at least two (x, cost) points of equal length".into(),
            ));
        }
        if xs[0] != 1.0 || values[0] != 0.0 {
            return Err(Error::InvalidParameter("tabulated cost must start at cost(1) = 0".into()));
        }
        if xs.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabulated cost must be finite".into()));
        }
        let mut prev_slope = 0.0;
        for i in 1..xs.len() {
            let dx = xs[i] - xs[i - 1];
            if dx <= 0.0 {
                return Err(Error::InvalidParameter("tabulated cost abscissae must increase".into()));
            }
            let slope = (values[i] - values[i - 1]) / dx;
            if slope < prev_slope {
                return Err(Error::InvalidParameter(format!(
                    "tabulated cost is not convex and nondecreasing near x = {}",
                    xs[i - 1]
                )));
            }
            prev_slope = slope;
        }
        Ok(TabulatedCost { xs, values })
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&xi| xi <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    fn slope_of(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.xs[i + 1] - self.xs[i])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        self.values[i] + self.slope_of(i) * (x - self.xs[i])
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.slope_of(self.segment(x))
    }
}
