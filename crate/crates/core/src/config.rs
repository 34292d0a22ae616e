//! JSON run configuration.
//!
//! ```json
//! {
//!   "market":  { "r": 0.02, "sigma": 0.2, "mu0": 0.08, "t0": 4, "T": 2, "x0": 1000 },
//!   "utility": { "kind": "cara", "beta": 0.001 },
//!   "cost":    { "kind": "quadratic", "lambda": 1 }
//! }
//! ```
//!
//! Every key is optional and defaults to the values above. The prior is
//! given either as `t0` or as `sigma0_sq`, not both. Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostSpec, MarketParams, TabulatedCost, UtilitySpec};

pub const DEFAULT_R: f64 = 0.02;
pub const DEFAULT_SIGMA: f64 = 0.2;
pub const DEFAULT_MU0: f64 = 0.08;
pub const DEFAULT_T0: f64 = 4.0;
pub const DEFAULT_HORIZON: f64 = 2.0;
pub const DEFAULT_X0: f64 = 1000.0;
pub const DEFAULT_BETA: f64 = 0.001;
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    market: Option<RawMarket>,
    utility: Option<RawUtility>,
    cost: Option<RawCost>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    r: Option<f64>,
    sigma: Option<f64>,
    mu0: Option<f64>,
    sigma0_sq: Option<f64>,
    t0: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    x0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawUtility {
    Cara { beta: f64 },
    Crra { gamma: f64 },
    Log,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawCost {
    Quadratic { lambda: f64 },
    Tabulated { x: Vec<f64>, cost: Vec<f64> },
}

/// Market, preferences and cost for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: MarketParams,
    pub utility: UtilitySpec,
    pub cost: CostSpec,
}

/// Serializable echo of a [`RunConfig`] for sidecar files.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub market: MarketParams,
    pub t0: f64,
    pub utility: UtilitySpec,
    pub lambda: Option<f64>,
}

fn keyed(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Config(format!("{key}: {e}"))
}

impl RunConfig {
    /// The reference parameters: CARA, `beta = 0.001`, quadratic cost with `lambda = 1`.
    pub fn defaults() -> Self {
        RunConfig::from_raw(RawConfig::default()).expect("defaults are valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        RunConfig::from_raw(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_json_str(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let m = raw.market.unwrap_or_default();
        let r = m.r.unwrap_or(DEFAULT_R);
        let sigma = m.sigma.unwrap_or(DEFAULT_SIGMA);
        let mu0 = m.mu0.unwrap_or(DEFAULT_MU0);
        let horizon = m.horizon.unwrap_or(DEFAULT_HORIZON);
        let x0 = m.x0.unwrap_or(DEFAULT_X0);
        let params = match (m.t0, m.sigma0_sq) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("market.sigma0_sq: give either t0 or sigma0_sq, not both".into()))
            }
            (t0, None) => {
                MarketParams::with_t0(r, sigma, mu0, t0.unwrap_or(DEFAULT_T0), horizon, x0).map_err(keyed("market"))?
            }
            (None, Some(v)) => MarketParams::new(r, sigma, mu0, v, horizon, x0).map_err(keyed("market"))?,
        };
        let utility = match raw.utility {
            None => UtilitySpec::cara(DEFAULT_BETA)?,
            Some(RawUtility::Cara { beta }) => UtilitySpec::cara(beta).map_err(keyed("utility.beta"))?,
            Some(RawUtility::Crra { gamma }) => UtilitySpec::crra(gamma).map_err(keyed("utility.gamma"))?,
            Some(RawUtility::Log) => UtilitySpec::Log,
        };
        let cost = match raw.cost {
            None => CostSpec::quadratic(DEFAULT_LAMBDA)?,
            Some(RawCost::Quadratic { lambda }) => CostSpec::quadratic(lambda).map_err(keyed("cost.lambda"))?,
            Some(RawCost::Tabulated { x, cost }) => {
                CostSpec::Tabulated(TabulatedCost::new(x, cost).map_err(keyed("cost"))?)
            }
        };
        params.check_endowment(&utility).map_err(keyed("market.x0"))?;
        Ok(RunConfig { params, utility, cost })
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            market: self.params,
            t0: self.params.t0(),
            utility: self.utility,
            lambda: self.cost.quadratic_lambda(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_text(json: &str) -> String {
        RunConfig::from_json_str(json).unwrap_err().to_string()
    }

    #[test]
    fn defaults_are_the_reference_parameters() {
        let c = RunConfig::defaults();
        assert!((c.params.t0() - 4.0).abs() < 1e-12);
        assert_eq!(c.params.horizon, 2.0);
        assert_eq!(c.utility, UtilitySpec::Cara { beta: 0.001 });
        assert_eq!(c.cost.quadratic_lambda(), Some(1.0));
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), c);
    }

    #[test]
    fn parses_full_config() {
        let c = RunConfig::from_json_str(
            r#"{"market": {"r": 0.01, "sigma": 0.3, "mu0": 0.05, "sigma0_sq": 0.03, "T": 1.5, "x0": 10},
                "utility": {"kind": "crra", "gamma": 3},
                "cost": {"kind": "tabulated", "x": [1, 2, 3], "cost": [0, 1, 3]}}"#,
        )
        .unwrap();
        assert!((c.params.t0() - 3.0).abs() < 1e-12);
        assert_eq!(c.utility, UtilitySpec::Crra { gamma: 3.0 });
        assert!(c.cost.quadratic_lambda().is_none());
        let log = RunConfig::from_json_str(r#"{"utility": {"kind": "log"}}"#).unwrap();
        assert_eq!(log.utility, UtilitySpec::Log);
    }

    #[test]
    fn errors_name_the_key() {
        assert!(err_text(r#"{"market": {"sigmma": 0.2}}"#).contains("sigmma"));
        assert!(err_text(r#"{"utility": {"kind": "cara", "beta": -1}}"#).contains("utility.beta"));
        assert!(err_text(r#"{"cost": {"kind": "quadratic", "lambda": 0}}"#).contains("cost.lambda"));
        assert!(err_text(r#"{"market": {"t0": 4, "sigma0_sq": 0.01}}"#).contains("sigma0_sq"));
        assert!(err_text(r#"{"utility": {"kind": "crra", "gamma": 1}}"#).contains("utility.gamma"));
        assert!(err_text(r#"{"utility": {"kind": "log"}, "market": {"x0": -5}}"#).contains("market.x0"));
        assert!(err_text(r#"{"extra": 1}"#).contains("extra"));
        assert!(matches!(RunConfig::from_json_str("not json"), Err(Error::Config(_))));
    }
}
