//! Deterministic numerical kernels: composite Simpson quadrature with panel
//! doubling, fixed-step classical Runge-Kutta, bisection and golden-section
//! search. Every default tolerance used elsewhere in the crate lives here.

use crate::error::{Error, Result};

/// Relative-change tolerance for quadrature refinement.
pub const QUAD_REL_TOL: f64 = 1e-10;
/// Cap on the number of Simpson panels.
pub const QUAD_MAX_PANELS: usize = 1 << 20;
/// Default number of fixed RK4 steps over a horizon.
pub const ODE_STEPS: usize = 4096;
/// Minimum accepted step count.
pub const ODE_MIN_STEPS: usize = 16;
/// Bisection tolerance on the shooting slope.
pub const SHOOT_TOL: f64 = 1e-10;
/// Correlations are capped at `1 - RHO_EPS`.
pub const RHO_EPS: f64 = 1e-6;
/// Golden-section tolerance on `ln y` for the dual search.
pub const DUAL_LOG_TOL: f64 = 1e-4;
/// Default uniform grid size for coefficient tables.
pub const COEFF_GRID: usize = 1024;

const BISECTION_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Starting panel count; must be even and >= 2.
    pub panels: usize,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { panels: 2, rel_tol: QUAD_REL_TOL, max_panels: QUAD_MAX_PANELS }
    }
}

/// Result of [`integrate`]. `converged` is false when the panel cap was hit
/// before the relative change fell below tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub panels: usize,
    pub rel_change: f64,
    pub converged: bool,
}

/// Composite Simpson on `[a, b]`, doubling the panel count until two
/// successive estimates agree to `spec.rel_tol` (relative to the integral of
/// `|f|`, which keeps near-cancelling integrands from looping to the cap).
pub fn integrate<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Quadrature>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidParameter(format!("bad integration interval [{a}, {b}]")));
    }
    if spec.panels < 2 || !spec.panels.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("Simpson panel count must be even and >= 2, got {}", spec.panels)));
    }
    if a == b {
        return Ok(Quadrature { value: 0.0, panels: 0, rel_change: 0.0, converged: true });
    }

    let eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite(format!("integrand returned {y} at x = {x}")))
        }
    };

    // Running sums: endpoints, odd-index nodes, even interior nodes (value and |value|).
    let mut n = spec.panels;
    let fa = eval(a)?;
    let fb = eval(b)?;
    let ends = fa + fb;
    let ends_abs = fa.abs() + fb.abs();
    let mut odd = 0.0;
    let mut odd_abs = 0.0;
    let mut even = 0.0;
    let mut even_abs = 0.0;
    let h0 = (b - a) / n as f64;
    for i in 1..n {
        let y = eval(a + i as f64 * h0)?;
        if i % 2 == 1 {
            odd += y;
            odd_abs += y.abs();
        } else {
            even += y;
            even_abs += y.abs();
        }
    }
    let simpson = |n: usize, odd: f64, even: f64, ends: f64| (b - a) / n as f64 / 3.0 * (ends + 4.0 * odd + 2.0 * even);
    let mut estimate = simpson(n, odd, even, ends);

    loop {
        let next_n = n * 2;
        if next_n > spec.max_panels {
            log::warn!(
                "quadrature on [{a}, {b}] hit the panel cap {} before reaching rel_tol {}",
                spec.max_panels,
                spec.rel_tol
            );
            return Ok(Quadrature { value: estimate, panels: n, rel_change: f64::NAN, converged: false });
        }
        // Old interior nodes all become even nodes; new midpoints are the odd nodes.
        even += odd;
        even_abs += odd_abs;
        odd = 0.0;
        odd_abs = 0.0;
        let h = (b - a) / next_n as f64;
        for i in (1..next_n).step_by(2) {
            let y = eval(a + i as f64 * h)?;
            odd += y;
            odd_abs += y.abs();
        }
        n = next_n;
        let refined = simpson(n, odd, even, ends);
        let scale = simpson(n, odd_abs, even_abs, ends_abs);
        let change = (refined - estimate).abs();
        let previous = estimate;
        estimate = refined;
        if change <= spec.rel_tol * scale {
            let rel_change = if scale > 0.0 { change / scale } else { 0.0 };
            // one Richardson step removes the leading h^4 error term
            let value = refined + (refined - previous) / 15.0;
            return Ok(Quadrature { value, panels: n, rel_change, converged: true });
        }
    }
}

/// Integrates over consecutive segments delimited by `breakpoints`
/// (sorted, at least two entries), applying [`integrate`] on each one.
/// Use this when `f` is only piecewise smooth.
pub fn integrate_piecewise<F>(f: F, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if breakpoints.len() < 2 {
        return Err(Error::InvalidParameter("need at least two breakpoints".into()));
    }
    let mut total = 0.0;
    for w in breakpoints.windows(2) {
        total += integrate(&f, w[0], w[1], spec)?.value;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSpec {
    pub steps: usize,
}

impl Default for OdeSpec {
    fn default() -> Self {
        OdeSpec { steps: ODE_STEPS }
    }
}

/// States of an IVP on a uniform grid, including both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> &[f64; N] {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Classical fourth-order Runge-Kutta with a fixed step.
pub fn solve_ivp<const N: usize, F>(rhs: F, y0: [f64; N], t_span: (f64, f64), spec: &OdeSpec) -> Result<Trajectory<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let (a, b) = t_span;
    if spec.steps < ODE_MIN_STEPS {
        return Err(Error::InvalidParameter(format!("ODE step count must be >= {ODE_MIN_STEPS}, got {}", spec.steps)));
    }
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidParameter(format!("bad ODE interval [{a}, {b}]")));
    }
    let n = spec.steps;
    let h = (b - a) / n as f64;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut y = y0;
    times.push(a);
    states.push(y);

    let axpy = |y: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *y;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += s * ki;
        }
        out
    };

    for i in 0..n {
        let t = a + i as f64 * h;
        let k1 = rhs(t, &y);
        let k2 = rhs(t + 0.5 * h, &axpy(&y, &k1, 0.5 * h));
        let k3 = rhs(t + 0.5 * h, &axpy(&y, &k2, 0.5 * h));
        let k4 = rhs(t + h, &axpy(&y, &k3, h));
        for j in 0..N {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("ODE state blew up near t = {}", t + h)));
        }
        // the last node is pinned to b exactly
        times.push(if i + 1 == n { b } else { a + (i + 1) as f64 * h });
        states.push(y);
    }
    Ok(Trajectory { times, states })
}

/// A bracketing interval for [`find_root`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
}

impl RootBracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidParameter(format!("bad bracket [{lo}, {hi}]")));
        }
        Ok(RootBracket { lo, hi })
    }
}

/// Bisection. Stops when the bracket is narrower than `tol` or `f` hits zero exactly.
pub fn find_root<F>(f: F, bracket: RootBracket, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let RootBracket { mut lo, mut hi } = bracket;
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.is_nan() {
            return Err(Error::NonFinite(format!("root target is NaN at {mid}")));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

const UNIMODAL_SCAN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub argmax: f64,
    pub max: f64,
    /// False when a coarse scan of the interval found a value above the
    /// search result, i.e. the function is not unimodal there.
    pub unimodal: bool,
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
pub fn maximize_1d<F>(f: F, lo: f64, hi: f64, tol: f64) -> Maximum
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    if b - a <= tol {
        let x = 0.5 * (a + b);
        return Maximum { argmax: x, max: f(x), unimodal: true };
    }
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    let mut track = |x: f64, y: f64| {
        if y > best.1 {
            best = (x, y);
        }
    };

    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    track(c, fc);
    track(d, fd);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
            track(c, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
            track(d, fd);
        }
    }
    let (x, y) = if fc >= fd { (c, fc) } else { (d, fd) };
    let mut result = Maximum { argmax: x, max: y, unimodal: true };
    if best.1 > y {
        result = Maximum { argmax: best.0, max: best.1, unimodal: false };
    }
    // a coarse scan catches peaks the search never sampled
    let slack = 1e-12 * (1.0 + result.max.abs());
    for i in 0..=UNIMODAL_SCAN {
        let xs = lo.min(hi) + (hi - lo).abs() * i as f64 / UNIMODAL_SCAN as f64;
        let ys = f(xs);
        if ys > result.max + slack {
            result = Maximum { argmax: xs, max: ys, unimodal: false };
        }
    }
    result
}

/// Neumaier-compensated sum; the result depends only on the input order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
