//! What extra information is worth, what it costs, and the best case of
//! knowing the drift outright.
//!
//! Value is a certainty equivalent against the natural clock: the extra
//! endowment that makes the price-only investor as well off as the informed
//! one. For CARA it is a difference of `c(0)`; for CRRA and log it is a
//! multiple of `x0`.

use serde::Serialize;

use crate::clock::InformativeClock;
use crate::closed_form::check_clock;
use crate::error::{Error, Result};
use crate::model::{classify, CostSpec, MarketParams, UtilitySpec};
use crate::numerics::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoValuation {
    pub value: f64,
    pub cost: f64,
    pub net: f64,
    pub bound: f64,
    pub utility: UtilitySpec,
}

/// Integrand of the clock-dependent part of the value, as a function of
/// `(t, tau, tau')`: `c(0)` for CARA and `gamma c(0) / (1 - gamma)` for
/// CRRA (`c(0)` for log).
pub fn value_integrand(params: &MarketParams, utility: &UtilitySpec) -> impl Fn(f64, f64, f64) -> f64 + Copy {
    let horizon = params.horizon;
    let (scale, kappa) = match *utility {
        UtilitySpec::Cara { beta } => (0.5 / beta, 1.0),
        UtilitySpec::Crra { gamma } => (0.5 / gamma, -(1.0 - gamma) / gamma),
        UtilitySpec::Log => (0.5, 0.0),
    };
    move |t, tau, dtau| {
        let rem = horizon - t;
        scale * dtau * rem / (tau * (tau + kappa * rem))
    }
}

/// `int_0^T value_integrand dt` for `clock`.
pub fn value_integral(params: &MarketParams, utility: &UtilitySpec, clock: &InformativeClock) -> Result<f64> {
    classify(params, utility).into_result()?;
    check_clock(params, clock)?;
    let f = value_integrand(params, utility);
    clock.integrate(0.0, params.horizon, &QuadratureSpec::default(), f)
}

/// `value_integral` for the natural clock: `C1` for CARA, `ln C2` otherwise.
pub fn natural_value_integral(params: &MarketParams, utility: &UtilitySpec) -> Result<f64> {
    value_integral(params, utility, &InformativeClock::natural(params.t0(), params.horizon)?)
}

fn from_integrals(params: &MarketParams, utility: &UtilitySpec, informed: f64, natural: f64) -> f64 {
    match utility {
        UtilitySpec::Cara { .. } => informed - natural,
        UtilitySpec::Crra { .. } | UtilitySpec::Log => params.x0 * (informed - natural).exp_m1(),
    }
}

/// Certainty-equivalent value of the information carried by `clock`.
/// Exactly 0 for the natural clock.
pub fn value_of_information(params: &MarketParams, utility: &UtilitySpec, clock: &InformativeClock) -> Result<f64> {
    if clock.is_insider() {
        return insider_bound(params, utility);
    }
    params.check_endowment(utility)?;
    let informed = value_integral(params, utility, clock)?;
    let natural = natural_value_integral(params, utility)?;
    Ok(from_integrals(params, utility, informed, natural))
}

/// `value_integral` for the insider limit, in closed form.
pub fn insider_value_integral(params: &MarketParams, utility: &UtilitySpec) -> Result<f64> {
    classify(params, utility).into_result()?;
    let (t0, horizon) = (params.t0(), params.horizon);
    Ok(match *utility {
        UtilitySpec::Cara { beta } => (horizon / t0).ln_1p() / (2.0 * beta),
        UtilitySpec::Crra { gamma } => {
            let theta = (1.0 - gamma) / gamma;
            // ln(t0 / (t0 - theta T)) / (2 gamma theta)
            -(-theta * horizon / t0).ln_1p() / (2.0 * gamma * theta)
        }
        UtilitySpec::Log => 0.5 * horizon / t0,
    })
}

/// Largest value any admissible clock can deliver: the investor who learns
/// the drift immediately after time 0.
pub fn insider_bound(params: &MarketParams, utility: &UtilitySpec) -> Result<f64> {
    params.check_endowment(utility)?;
    let informed = insider_value_integral(params, utility)?;
    let natural = natural_value_integral(params, utility)?;
    Ok(from_integrals(params, utility, informed, natural).max(0.0))
}

/// `int_0^T cost(tau'(t)) dt`.
pub fn cost_of_information(cost: &CostSpec, clock: &InformativeClock) -> Result<f64> {
    if clock.is_insider() {
        return Err(Error::InadmissibleClock("the insider clock has unbounded acquisition cost".into()));
    }
    clock.integrate(0.0, clock.horizon(), &QuadratureSpec::default(), |_, _, dtau| cost.cost(dtau))
}

pub fn net_value(
    params: &MarketParams,
    utility: &UtilitySpec,
    cost: &CostSpec,
    clock: &InformativeClock,
) -> Result<InfoValuation> {
    let value = value_of_information(params, utility, clock)?;
    let cost = cost_of_information(cost, clock)?;
    let bound = insider_bound(params, utility)?;
    Ok(InfoValuation { value, cost, net: value - cost, bound, utility: *utility })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MarketParams {
        MarketParams::with_t0(0.02, 0.2, 0.08, 4.0, 2.0, 1000.0).unwrap()
    }

    fn linear(k: f64) -> InformativeClock {
        InformativeClock::linear(4.0, k, 2.0).unwrap()
    }

    /// `int_0^T ds / (t0 + T + (k-1) s)`.
    fn lin_int(t0: f64, t: f64, k: f64) -> f64 {
        if k == 1.0 {
            t / (t0 + t)
        } else {
            ((t0 + k * t) / (t0 + t)).ln() / (k - 1.0)
        }
    }

    #[test]
    fn natural_clock_is_worth_nothing() {
        let p = params();
        for u in [
            UtilitySpec::cara(0.001).unwrap(),
            UtilitySpec::crra(2.0).unwrap(),
            UtilitySpec::crra(0.7).unwrap(),
            UtilitySpec::Log,
        ] {
            let clock = InformativeClock::natural(4.0, 2.0).unwrap();
            assert_eq!(value_of_information(&p, &u, &clock).unwrap(), 0.0);
            let v = net_value(&p, &u, &CostSpec::quadratic(1.0).unwrap(), &clock).unwrap();
            assert_eq!((v.value, v.cost, v.net), (0.0, 0.0, 0.0));
            assert!(v.bound > 0.0);
        }
    }

    #[test]
    fn cara_linear_clock_matches_elementary_oracle() {
        let p = params();
        let beta = 0.001;
        let u = UtilitySpec::cara(beta).unwrap();
        let (t0, t) = (4.0, 2.0);
        for k in [2.0, 5.0, 37.5] {
            let expect = (lin_int(t0, t, 1.0) - lin_int(t0, t, k)) / (2.0 * beta);
            let got = value_of_information(&p, &u, &linear(k)).unwrap();
            assert!(((got - expect) / expect).abs() < 1e-8, "k = {k}: {got} vs {expect}");
        }
    }

    #[test]
    fn crra_and_log_linear_clock_oracles() {
        let p = params();
        let (t0, t) = (4.0f64, 2.0f64);
        for gamma in [2.0, 0.7] {
            let theta = (1.0 - gamma) / gamma;
            // int ds / (t0 - theta T + (k + theta) s)
            let int = |k: f64| ((t0 + k * t) / (t0 - theta * t)).ln() / (k + theta);
            let x = |k: f64| (((t0 / (t0 - theta * t)).ln()) - theta * int(k)) / (2.0 * gamma * theta);
            let expect = 1000.0 * (x(3.0) - x(1.0)).exp_m1();
            let got = value_of_information(&p, &UtilitySpec::crra(gamma).unwrap(), &linear(3.0)).unwrap();
            assert!(((got - expect) / expect).abs() < 1e-8, "gamma {gamma}: {got} vs {expect}");
        }
        let x = |k: f64| 0.5 * (t / t0 - (((t0 + k * t) / t0).ln() / k));
        let expect = 1000.0 * (x(3.0) - x(1.0)).exp_m1();
        let got = value_of_information(&p, &UtilitySpec::Log, &linear(3.0)).unwrap();
        assert!(((got - expect) / expect).abs() < 1e-8);
    }

    #[test]
    fn crra_value_is_proportional_to_endowment() {
        let u = UtilitySpec::crra(2.0).unwrap();
        let small = value_of_information(&params(), &u, &linear(2.0)).unwrap();
        let p2 = MarketParams::with_t0(0.02, 0.2, 0.08, 4.0, 2.0, 2000.0).unwrap();
        let big = value_of_information(&p2, &u, &linear(2.0)).unwrap();
        assert!((small / 1000.0 - big / 2000.0).abs() < 1e-15);
    }

    #[test]
    fn insider_bounds() {
        let p = params();
        let u = UtilitySpec::cara(0.001).unwrap();
        let c_ins = insider_value_integral(&p, &u).unwrap();
        assert!((c_ins - 500.0 * 1.5f64.ln()).abs() < 1e-12);
        let bound = insider_bound(&p, &u).unwrap();
        assert!((bound - 500.0 * 2.0 / 6.0).abs() < 1e-8);
        let v = value_of_information(&p, &u, &linear(1e4)).unwrap();
        assert!((bound - v) / bound < 0.01 && v < bound);
        assert_eq!(value_of_information(&p, &u, &InformativeClock::insider(4.0, 2.0).unwrap()).unwrap(), bound);

        let tiny = MarketParams::with_t0(0.02, 0.2, 0.08, 4.0, 1e-9, 1000.0).unwrap();
        let b = insider_bound(&tiny, &u).unwrap();
        assert!((0.0..1e-6).contains(&b));

        let ill = MarketParams::with_t0(0.02, 0.2, 0.08, 1.0, 2.0, 1.0).unwrap();
        assert!(matches!(insider_bound(&ill, &UtilitySpec::crra(0.2).unwrap()), Err(Error::IllPosed(_))));
    }

    #[test]
    fn cost_examples() {
        let q = CostSpec::quadratic(1.0).unwrap();
        assert_eq!(cost_of_information(&q, &InformativeClock::natural(4.0, 2.0).unwrap()).unwrap(), 0.0);
        assert!((cost_of_information(&q, &linear(2.0)).unwrap() - 2.0).abs() < 1e-12);
        let times: Vec<f64> = (0..=200).map(|i| i as f64 / 100.0).collect();
        let slopes = times.iter().map(|t| 1.0 + t).collect();
        let clock = InformativeClock::from_derivative_samples(4.0, times, slopes).unwrap();
        assert!((cost_of_information(&q, &clock).unwrap() - 8.0 / 3.0).abs() < 1e-10);
        assert!(cost_of_information(&q, &InformativeClock::insider(4.0, 2.0).unwrap()).is_err());

        let p = params();
        let v = net_value(&p, &UtilitySpec::cara(0.001).unwrap(), &CostSpec::quadratic(1e9).unwrap(), &linear(1.5))
            .unwrap();
        assert!(v.net < 0.0);
    }

    #[test]
    fn value_sweep_is_increasing_concave_and_bounded() {
        let p = params();
        for u in [UtilitySpec::cara(0.001).unwrap(), UtilitySpec::crra(2.0).unwrap(), UtilitySpec::Log] {
            let bound = insider_bound(&p, &u).unwrap();
            let vals: Vec<f64> = (1..=10).map(|k| value_of_information(&p, &u, &linear(k as f64)).unwrap()).collect();
            for w in vals.windows(2) {
                assert!(w[1] > w[0]);
            }
            for w in vals.windows(3) {
                assert!(w[2] - w[1] < w[1] - w[0]);
            }
            assert!(vals.iter().all(|&v| (0.0..=bound).contains(&v)));
        }
    }

    #[test]
    fn market_conditions_do_not_matter() {
        for u in [UtilitySpec::cara(0.001).unwrap(), UtilitySpec::crra(2.0).unwrap()] {
            let reference = value_of_information(&params(), &u, &linear(3.0)).unwrap();
            for r in [0.0, 0.02, 0.1] {
                for mu0 in [0.0, 0.08] {
                    let p = MarketParams::with_t0(r, 0.2, mu0, 4.0, 2.0, 1000.0).unwrap();
                    assert_eq!(value_of_information(&p, &u, &linear(3.0)).unwrap().to_bits(), reference.to_bits());
                }
            }
        }
        let base = value_of_information(&params(), &UtilitySpec::cara(0.001).unwrap(), &linear(3.0)).unwrap();
        let p = MarketParams::with_t0(0.02, 0.2, 0.08, 4.0, 2.0, 5.0).unwrap();
        assert_eq!(value_of_information(&p, &UtilitySpec::cara(0.001).unwrap(), &linear(3.0)).unwrap(), base);
    }

    #[test]
    fn cara_value_scales_inversely_with_beta() {
        let p = params();
        let products: Vec<f64> = [0.0005, 0.001, 0.002]
            .iter()
            .map(|&b| b * value_of_information(&p, &UtilitySpec::cara(b).unwrap(), &linear(4.0)).unwrap())
            .collect();
        for x in &products {
            assert!((x / products[0] - 1.0).abs() < 1e-12);
        }
    }
}
