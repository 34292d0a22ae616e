//! Conditional-Gaussian filter for the unknown drift given the log-price
//! `Y` and the extra signal `m`.
//!
//! Given observations up to `t`, `mu` is Gaussian with mean `z` and variance
//! `sigma^2 / tau(t)`. Each step applies the exact conjugate update for the
//! discretized observation `dY - sigma rho dm`, whose noise variance is
//! `sigma^2 (1 - rho^2) dt`; `dm` itself is independent of `mu`.

use crate::clock::CorrelationProfile;
use crate::error::{Error, Result};
use crate::model::MarketParams;
use crate::numerics::RHO_EPS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorState {
    pub t: f64,
    /// Posterior mean of the drift.
    pub z: f64,
    /// Posterior precision in units of `1 / sigma^2` (the clock value).
    pub tau: f64,
}

impl PosteriorState {
    pub fn variance(&self, params: &MarketParams) -> f64 {
        params.sigma * params.sigma / self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationIncrement {
    /// Log-price increment.
    pub dy: f64,
    /// Extra-signal increment.
    pub dm: f64,
    pub dt: f64,
}

impl ObservationIncrement {
    pub fn new(dy: f64, dm: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be finite and > 0, got {dt}")));
        }
        Ok(ObservationIncrement { dy, dm, dt })
    }
}

/// Prior state: `z = mu0`, `tau = t0`.
pub fn init_posterior(params: &MarketParams) -> PosteriorState {
    PosteriorState { t: 0.0, z: params.mu0, tau: params.t0() }
}

fn check_rho(rho: f64) -> Result<f64> {
    let r = rho.abs();
    if !r.is_finite() || r > 1.0 - RHO_EPS {
        return Err(Error::InadmissibleProfile(format!("rho = {rho} outside [0, 1 - {RHO_EPS}]")));
    }
    Ok(r)
}

/// One conjugate step. `rho_t` is the correlation at the left end of the step.
pub fn update(
    state: &PosteriorState,
    obs: &ObservationIncrement,
    params: &MarketParams,
    rho_t: f64,
) -> Result<PosteriorState> {
    let rho = check_rho(rho_t)?;
    let half_var = 0.5 * params.sigma * params.sigma;
    let rate = 1.0 / (1.0 - rho * rho);
    // with rho = 0 the signal term is dropped entirely, so dm cannot leak in
    let signal = if rho == 0.0 { obs.dy } else { obs.dy - params.sigma * rho * obs.dm };
    let tau = state.tau + rate * obs.dt;
    let z = half_var + ((state.z - half_var) * state.tau + rate * signal) / tau;
    if !(z.is_finite() && tau.is_finite()) {
        return Err(Error::NonFinite(format!("filter update produced z = {z}, tau = {tau}")));
    }
    Ok(PosteriorState { t: state.t + obs.dt, z, tau })
}

/// Innovation increment `(q / sigma) (dY - sigma rho dm - (z - sigma^2/2) dt)`,
/// distributed `N(0, dt)` under the model.
pub fn innovation(
    state: &PosteriorState,
    obs: &ObservationIncrement,
    params: &MarketParams,
    rho_t: f64,
) -> Result<f64> {
    let rho = check_rho(rho_t)?;
    let q = (1.0 / (1.0 - rho * rho)).sqrt();
    let half_var = 0.5 * params.sigma * params.sigma;
    let signal = if rho == 0.0 { obs.dy } else { obs.dy - params.sigma * rho * obs.dm };
    Ok(q / params.sigma * (signal - (state.z - half_var) * obs.dt))
}

/// Posterior mean from the whole-path integral form
/// `sigma^2/2 + (y0 + sum q^2 (dY - sigma rho dm)) / (t0 + sum q^2 dt)`,
/// with `rho` sampled at the left end of each step.
pub fn posterior_mean_from_path(
    params: &MarketParams,
    increments: &[ObservationIncrement],
    rhos: &[f64],
) -> Result<(f64, f64)> {
    if increments.len() != rhos.len() {
        return Err(Error::InvalidParameter("one correlation per increment is required".into()));
    }
    let t0 = params.t0();
    let half_var = 0.5 * params.sigma * params.sigma;
    let mut numer = (params.mu0 - half_var) * t0;
    let mut tau = t0;
    for (obs, &rho) in increments.iter().zip(rhos) {
        let rho = check_rho(rho)?;
        let rate = 1.0 / (1.0 - rho * rho);
        let signal = if rho == 0.0 { obs.dy } else { obs.dy - params.sigma * rho * obs.dm };
        numer += rate * signal;
        tau += rate * obs.dt;
    }
    Ok((half_var + numer / tau, tau))
}

/// Rolling realized correlation of the increments of `y` and `m` over the
/// trailing `window` steps, clamped to `[0, 1 - RHO_EPS]`. Grid points before
/// the first full window reuse the first full-window estimate.
pub fn estimate_correlation(times: &[f64], y: &[f64], m: &[f64], window: usize) -> Result<CorrelationProfile> {
    if window < 8 {
        return Err(Error::InvalidParameter(format!("window must be >= 8, got {window}")));
    }
    if times.len() != y.len() || y.len() != m.len() {
        return Err(Error::InvalidParameter("t, Y and m must have equal length".into()));
    }
    let n_inc = times.len().saturating_sub(1);
    if n_inc < window {
        return Err(Error::InvalidParameter(format!("path has {n_inc} increments, fewer than the window {window}")));
    }
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let dm: Vec<f64> = m.windows(2).map(|w| w[1] - w[0]).collect();

    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut estimates = Vec::with_capacity(n_inc - window + 1);
    for j in 0..n_inc {
        sxy += dy[j] * dm[j];
        sxx += dy[j] * dy[j];
        syy += dm[j] * dm[j];
        if j >= window {
            let k = j - window;
            sxy -= dy[k] * dm[k];
            sxx -= dy[k] * dy[k];
            syy -= dm[k] * dm[k];
        }
        if j + 1 >= window {
            // recompute exactly every window to stop drift from the running sums
            if (j + 1) % window == 0 {
                let lo = j + 1 - window;
                sxy = (lo..=j).map(|i| dy[i] * dm[i]).sum();
                sxx = (lo..=j).map(|i| dy[i] * dy[i]).sum();
                syy = (lo..=j).map(|i| dm[i] * dm[i]).sum();
            }
            if sxx <= 0.0 || syy <= 0.0 {
                return Err(Error::DegenerateWindow { index: j + 1 });
            }
            let rho = (sxy / (sxx * syy).sqrt()).abs().min(1.0 - RHO_EPS);
            estimates.push(rho);
        }
    }
    // estimates[e] belongs to grid point e + window
    let values: Vec<f64> = (0..times.len()).map(|i| estimates[i.saturating_sub(window)]).collect();
    CorrelationProfile::grid(times.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn params() -> MarketParams {
        MarketParams::with_t0(0.02, 0.2, 0.08, 4.0, 2.0, 1000.0).unwrap()
    }

    /// Posterior mean of mu by brute force on a dense grid: prior density
    /// times the bivariate Gaussian likelihood of (dY, dm).
    fn dense_grid_posterior(
        p: &MarketParams,
        state: &PosteriorState,
        obs: &ObservationIncrement,
        rho: f64,
    ) -> (f64, f64) {
        let sd = (p.sigma * p.sigma / state.tau).sqrt();
        let n = 400_001;
        let (lo, hi) = (state.z - 12.0 * sd, state.z + 12.0 * sd);
        let h = (hi - lo) / (n - 1) as f64;
        let (vy, vm, cov) = (p.sigma * p.sigma * obs.dt, obs.dt, p.sigma * rho * obs.dt);
        let det = vy * vm - cov * cov;
        let mut w_sum = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut log_weights = Vec::with_capacity(n);
        for i in 0..n {
            let mu = lo + i as f64 * h;
            let prior = -0.5 * ((mu - state.z) / sd).powi(2);
            let ey = obs.dy - (mu - 0.5 * p.sigma * p.sigma) * obs.dt;
            let em = obs.dm;
            let quad = (vm * ey * ey - 2.0 * cov * ey * em + vy * em * em) / det;
            log_weights.push((mu, prior - 0.5 * quad));
        }
        let max = log_weights.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        for (mu, lw) in log_weights {
            let w = (lw - max).exp();
            w_sum += w;
            m1 += w * mu;
            m2 += w * mu * mu;
        }
        let mean = m1 / w_sum;
        (mean, m2 / w_sum - mean * mean)
    }

    #[test]
    fn prior_state() {
        let p = params();
        let s = init_posterior(&p);
        assert_eq!(s.z, 0.08);
        assert_eq!(s.tau, 4.0);
        assert!((s.variance(&p) - p.sigma0_sq).abs() < 1e-15);
        let p2 = MarketParams::with_t0(0.03, 0.2, 0.03, 4.0, 2.0, 1.0).unwrap();
        assert_eq!(init_posterior(&p2).z, p2.r);
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let p = params();
        let s = init_posterior(&p);
        let dt = 0.01;
        let obs = ObservationIncrement::new((s.z - 0.5 * p.sigma * p.sigma) * dt, 0.0, dt).unwrap();
        let next = update(&s, &obs, &p, 0.0).unwrap();
        assert!((next.z - s.z).abs() < 1e-15);
        assert!((next.tau - (s.tau + dt)).abs() < 1e-15);
        assert_eq!(innovation(&s, &obs, &p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn single_step_matches_dense_grid_bayes() {
        let p = params();
        let s = init_posterior(&p);
        let dt = 0.05;
        let obs = ObservationIncrement::new(0.031, 0.0, dt).unwrap();
        let next = update(&s, &obs, &p, 0.0).unwrap();
        let y0 = (p.mu0 - 0.5 * p.sigma * p.sigma) * p.t0();
        let closed = 0.5 * p.sigma * p.sigma + (y0 + obs.dy) / (p.t0() + dt);
        assert!((next.z - closed).abs() < 1e-14);
        let (mean, var) = dense_grid_posterior(&p, &s, &obs, 0.0);
        assert!((next.z - mean).abs() < 1e-6, "{} vs {mean}", next.z);
        assert!((next.variance(&p) / var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn correlated_step_matches_dense_grid_bayes() {
        let p = params();
        let s = init_posterior(&p);
        let dt = 0.05;
        let rho = 0.9;
        let dm = 0.12;
        // choose dY so that the signal equals the uncorrelated case's dY
        let obs0 = ObservationIncrement::new(0.031, 0.0, dt).unwrap();
        let obs = ObservationIncrement::new(0.031 + p.sigma * rho * dm, dm, dt).unwrap();
        let a = update(&s, &obs0, &p, 0.0).unwrap();
        let b = update(&s, &obs, &p, rho).unwrap();
        let rate = 1.0 / (1.0 - rho * rho);
        assert!((b.tau - (s.tau + dt / 0.19)).abs() < 1e-12);
        assert!((rate - 1.0 / 0.19).abs() < 1e-12);
        let (mean, var) = dense_grid_posterior(&p, &s, &obs, rho);
        assert!((b.z - mean).abs() < 1e-6, "{} vs {mean}", b.z);
        assert!((b.variance(&p) / var - 1.0).abs() < 1e-4);
        // the more informative update moves further toward the signal
        assert!((b.z - s.z).abs() > (a.z - s.z).abs());
    }

    #[test]
    fn update_rejects_bad_inputs() {
        let p = params();
        let s = init_posterior(&p);
        let obs = ObservationIncrement::new(f64::NAN, 0.0, 0.01).unwrap();
        assert!(matches!(update(&s, &obs, &p, 0.0), Err(Error::NonFinite(_))));
        assert!(ObservationIncrement::new(0.0, 0.0, 0.0).is_err());
        let obs = ObservationIncrement::new(0.0, 0.0, 0.01).unwrap();
        assert!(update(&s, &obs, &p, 1.0).is_err());
    }

    #[test]
    fn innovation_is_standard_brownian() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dt: f64 = 0.01;
        let rho: f64 = 0.6;
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let s = init_posterior(&p);
        for _ in 0..n {
            // draw mu from the current posterior, then the observation
            let e: f64 = StandardNormal.sample(&mut rng);
            let mu = s.z + s.variance(&p).sqrt() * e;
            let xi: f64 = StandardNormal.sample(&mut rng);
            let eta: f64 = StandardNormal.sample(&mut rng);
            let dw = dt.sqrt() * xi;
            let dm = rho * dt.sqrt() * xi + (1.0 - rho * rho).sqrt() * dt.sqrt() * eta;
            let dy = (mu - 0.5 * p.sigma * p.sigma) * dt + p.sigma * dw;
            let obs = ObservationIncrement::new(dy, dm, dt).unwrap();
            let w = innovation(&s, &obs, &p, rho).unwrap();
            sum += w / dt.sqrt();
            sum_sq += w * w;
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
        let var = sum_sq / n as f64;
        // the drift uncertainty adds (q/sigma)^2 var(mu) dt^2, negligible at this dt
        assert!((var / dt - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn dm_is_ignored_without_correlation() {
        let p = params();
        let s = init_posterior(&p);
        let a = update(&s, &ObservationIncrement::new(0.02, 0.0, 0.01).unwrap(), &p, 0.0).unwrap();
        let b = update(&s, &ObservationIncrement::new(0.02, 123.456, 0.01).unwrap(), &p, 0.0).unwrap();
        assert_eq!(a.z.to_bits(), b.z.to_bits());
        assert_eq!(a.tau.to_bits(), b.tau.to_bits());
    }

    #[test]
    fn path_formula_matches_step_updates() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = init_posterior(&p);
        let mut incs = Vec::new();
        let mut rhos = Vec::new();
        for i in 0..500 {
            let dy: f64 = 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            let dm: f64 = 0.05 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            let rho = 0.3 + 0.5 * (i as f64 / 500.0);
            let obs = ObservationIncrement::new(dy, dm, 0.004).unwrap();
            s = update(&s, &obs, &p, rho).unwrap();
            incs.push(obs);
            rhos.push(rho);
        }
        let (z, tau) = posterior_mean_from_path(&p, &incs, &rhos).unwrap();
        assert!((z - s.z).abs() < 1e-10);
        assert!((tau - s.tau).abs() < 1e-10);
    }

    #[test]
    fn correlation_estimate_edge_cases() {
        let n = 200;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * 0.01).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = vec![0.0];
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            w.push(w.last().unwrap() + 0.1 * e);
        }
        let y: Vec<f64> = w.iter().map(|x| 0.2 * x).collect();
        let prof = estimate_correlation(&times, &y, &w, 32).unwrap();
        assert!((prof.rho(1.0) - (1.0 - RHO_EPS)).abs() < 1e-12);

        let flat = vec![0.0; n + 1];
        assert!(matches!(estimate_correlation(&times, &y, &flat, 32), Err(Error::DegenerateWindow { .. })));
        assert!(estimate_correlation(&times, &y, &w, 4).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn two_steps_equal_one_combined_step(
                dy1 in -0.1f64..0.1, dy2 in -0.1f64..0.1,
                dm1 in -0.1f64..0.1, dm2 in -0.1f64..0.1,
                dt1 in 1e-4f64..0.5, dt2 in 1e-4f64..0.5,
                rho in 0.0f64..0.95,
            ) {
                let p = params();
                let s = init_posterior(&p);
                let a = update(&s, &ObservationIncrement::new(dy1, dm1, dt1).unwrap(), &p, rho).unwrap();
                let a = update(&a, &ObservationIncrement::new(dy2, dm2, dt2).unwrap(), &p, rho).unwrap();
                let b = update(&s, &ObservationIncrement::new(dy1 + dy2, dm1 + dm2, dt1 + dt2).unwrap(), &p, rho).unwrap();
                prop_assert!((a.z - b.z).abs() <= 1e-12 * (1.0 + b.z.abs()));
                prop_assert!((a.tau - b.tau).abs() <= 1e-12 * b.tau);
                prop_assert!(b.tau > s.tau);
            }
        }
    }
}
