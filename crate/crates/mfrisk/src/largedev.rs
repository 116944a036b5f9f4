//! Rate functions and optimal transition paths of the mean process.
//!
//! The probability that the population mean crosses from the normal basin
//! to the failed one over [0, T] decays like exp(-N inf I), and for mean
//! paths a(t) the reduced functional is
//!
//! ```text
//! I[a] = (1/2 sigma^2) int_0^T ( da/dt + h f(a) )^2 dt,
//! f(a) = a^3 + (3 sigma^2/(2 theta) - 1) a,
//! ```
//!
//! minimized over paths pinned at a(0) = -xi_b, a(T) = +xi_b. Four routes
//! to the exponent live here: the h = 0 closed form 2 xi0^2 / (sigma^2 T),
//! its small-h correction, direct minimization of the discretized
//! functional (damped Newton on the tridiagonal Euler-Lagrange system),
//! and a shooting solve of the extremal ODE a'' = h^2 f(a) f'(a). A fifth
//! evaluator averages the squared driving force under the local Gaussian
//! law instead of freezing y at the mean.
//!
//! At h = 0 the fixed-point equation for xi_b degenerates, so paths are
//! pinned at the expansion value xi0 there; for h > 0 the endpoints come
//! from the numeric equilibrium solve.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{small_h_equilibrium, solve_bistable};
use crate::linalg::solve_tridiagonal;
use crate::model::ModelParams;
use crate::quad::brent_root;
use crate::{Error, Result};

/// A mean path a(t) on a uniform grid over [0, T].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl MeanPath {
    /// The linear path from -xi_end to +xi_end over [0, t_total] with
    /// `grid_size` intervals.
    pub fn linear(t_total: f64, grid_size: usize, xi_end: f64) -> MeanPath {
        let m = grid_size.max(1);
        let dt = t_total / m as f64;
        let times: Vec<f64> = (0..=m).map(|i| i as f64 * dt).collect();
        let values: Vec<f64> = (0..=m)
            .map(|i| -xi_end + 2.0 * xi_end * i as f64 / m as f64)
            .collect();
        MeanPath { times, values }
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty path")
    }
}

/// How a rate value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMethod {
    H0ClosedForm,
    SmallHClosedForm,
    ReducedMinimization,
    GaussianPath,
}

/// A rate-function value, its provenance, and the minimizing path when one
/// was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    pub method: RateMethod,
    pub path: Option<MeanPath>,
}

impl RateEstimate {
    /// log P ~ -N * rate for a population of N agents.
    pub fn implied_log_probability(&self, n_agents: usize) -> f64 {
        -(n_agents as f64) * self.value
    }
}

/// Closed-form exponent at h = 0: 2 xi0^2 / (sigma^2 T).
pub fn rate_h0(xi0: f64, sigma: f64, t: f64) -> f64 {
    2.0 * xi0 * xi0 / (sigma * sigma * t)
}

/// Small-h exponent (2 xi0 / (sigma^2 T)) (xi0 + 2 h xi1), accurate to
/// O(h^2) in the bistable regime.
pub fn rate_small_h(params: &ModelParams, t: f64) -> Result<f64> {
    params.validate()?;
    if !(t > 0.0) {
        return Err(Error::InvalidParams(vec![format!(
            "horizon must be positive (got {t})"
        )]));
    }
    let (xi0, xi1) = small_h_equilibrium(params)?;
    Ok(2.0 * xi0 / (params.sigma * params.sigma * t) * (xi0 + 2.0 * params.h * xi1))
}

/// Reduced drift f(a) = a^3 + (3 sigma^2/(2 theta) - 1) a and its first
/// two derivatives.
fn drift_coeff(params: &ModelParams) -> f64 {
    3.0 * params.equilibrium_variance() - 1.0
}

/// Path endpoint for the variational problem: the numeric fixed point for
/// h > 0, the expansion value xi0 at h = 0 where the solve degenerates.
fn variational_endpoint(params: &ModelParams) -> Result<f64> {
    if params.h == 0.0 {
        Ok(small_h_equilibrium(params)?.0)
    } else {
        let sol = solve_bistable(params)?;
        if !sol.bistable {
            return Err(Error::NoBistableEquilibria(
                "the variational problem needs two stable equilibria".to_string(),
            ));
        }
        Ok(sol.xi_b)
    }
}

/// Discretized reduced functional: per interval, forward-difference slope
/// and trapezoid average of the squared integrand at both ends.
pub fn reduced_rate_functional(path: &MeanPath, params: &ModelParams) -> Result<f64> {
    params.validate()?;
    validate_path(path)?;
    let b = drift_coeff(params);
    let f = |a: f64| a * a * a + b * a;
    let h = params.h;
    let inv_4s2 = 1.0 / (4.0 * params.sigma * params.sigma);
    let mut total = 0.0;
    for i in 0..path.values.len() - 1 {
        let dt = path.times[i + 1] - path.times[i];
        let d = (path.values[i + 1] - path.values[i]) / dt;
        let gl = d + h * f(path.values[i]);
        let gr = d + h * f(path.values[i + 1]);
        total += dt * inv_4s2 * (gl * gl + gr * gr);
    }
    Ok(total)
}

/// Gradient of the discretized reduced functional with respect to the
/// interior path values (endpoints held fixed). Entry j corresponds to
/// values[j + 1]. Exposed as the Euler-Lagrange residual diagnostic.
pub fn reduced_functional_gradient(path: &MeanPath, params: &ModelParams) -> Result<Vec<f64>> {
    params.validate()?;
    validate_path(path)?;
    let b = drift_coeff(params);
    let f = |a: f64| a * a * a + b * a;
    let fp = |a: f64| 3.0 * a * a + b;
    let h = params.h;
    let n = path.values.len();
    let dt = path.times[1] - path.times[0];
    let inv_dt = 1.0 / dt;
    let c2 = dt / (2.0 * params.sigma * params.sigma);
    let a = &path.values;
    let mut grad = Vec::with_capacity(n.saturating_sub(2));
    for j in 1..n - 1 {
        let d_prev = (a[j] - a[j - 1]) * inv_dt;
        let d_next = (a[j + 1] - a[j]) * inv_dt;
        let gl_prev = d_prev + h * f(a[j - 1]);
        let gr_prev = d_prev + h * f(a[j]);
        let gl_next = d_next + h * f(a[j]);
        let gr_next = d_next + h * f(a[j + 1]);
        grad.push(
            c2 * (gl_prev * inv_dt
                + gr_prev * (inv_dt + h * fp(a[j]))
                + gl_next * (-inv_dt + h * fp(a[j]))
                + gr_next * (-inv_dt)),
        );
    }
    Ok(grad)
}

fn validate_path(path: &MeanPath) -> Result<()> {
    let n = path.values.len();
    if n < 2 || path.times.len() != n {
        return Err(Error::InvalidParams(vec![format!(
            "path needs matching times and values with at least 2 samples \
             (got {} times, {} values)",
            path.times.len(),
            n
        )]));
    }
    if path.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams(vec![
            "path times must be strictly increasing".to_string(),
        ]));
    }
    Ok(())
}

/// Minimizes the discretized reduced functional over interior path values
/// with endpoints pinned at -+ the bistable equilibrium, by Newton steps
/// on the tridiagonal Euler-Lagrange system with step halving.
pub fn minimize_reduced(params: &ModelParams, t: f64, grid_size: usize) -> Result<RateEstimate> {
    params.validate()?;
    if !(t > 0.0) || grid_size < 4 {
        return Err(Error::InvalidParams(vec![format!(
            "need positive horizon and at least 4 intervals (got T = {t}, grid = {grid_size})"
        )]));
    }
    let xi_end = variational_endpoint(params)?;
    let m = grid_size;
    let dt = t / m as f64;
    let b = drift_coeff(params);
    let f = |a: f64| a * a * a + b * a;
    let fp = |a: f64| 3.0 * a * a + b;
    let fpp = |a: f64| 6.0 * a;
    let h = params.h;
    let sigma2 = params.sigma * params.sigma;
    let c = dt / (4.0 * sigma2);
    let inv_dt = 1.0 / dt;

    let mut path = MeanPath::linear(t, m, xi_end);

    let functional = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..m {
            let d = (a[i + 1] - a[i]) * inv_dt;
            let gl = d + h * f(a[i]);
            let gr = d + h * f(a[i + 1]);
            s += c * (gl * gl + gr * gr);
        }
        s
    };

    let mut s_cur = functional(&path.values);
    let mut residual = f64::INFINITY;
    for iter in 0..200 {
        let grad = reduced_functional_gradient(&path, params)?;
        residual = grad.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()));
        if residual < 1e-10 {
            return Ok(RateEstimate {
                value: s_cur,
                method: RateMethod::ReducedMinimization,
                path: Some(path),
            });
        }

        // Tridiagonal Hessian over the interior points.
        let a = &path.values;
        let k = m - 1;
        let mut diag = vec![0.0; k];
        let mut lower = vec![0.0; k];
        let mut upper = vec![0.0; k];
        for j in 1..m {
            let d_prev = (a[j] - a[j - 1]) * inv_dt;
            let d_next = (a[j + 1] - a[j]) * inv_dt;
            let gr_prev = d_prev + h * f(a[j]);
            let gl_next = d_next + h * f(a[j]);
            let t1 = inv_dt + h * fp(a[j]);
            let t2 = -inv_dt + h * fp(a[j]);
            diag[j - 1] = 2.0
                * c
                * (inv_dt * inv_dt
                    + t1 * t1
                    + gr_prev * h * fpp(a[j])
                    + t2 * t2
                    + gl_next * h * fpp(a[j])
                    + inv_dt * inv_dt);
            if j < m - 1 {
                let off = 2.0
                    * c
                    * (inv_dt * (-inv_dt + h * fp(a[j])) - inv_dt * (inv_dt + h * fp(a[j + 1])));
                upper[j - 1] = off;
                lower[j] = off;
            }
        }
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let delta = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual,
            });
        }

        // Step halving on functional increase.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = path.values.clone();
            for (j, d) in delta.iter().enumerate() {
                trial[j + 1] += scale * d;
            }
            let s_trial = functional(&trial);
            if s_trial <= s_cur + 1e-14 * s_cur.abs().max(1.0) {
                path.values = trial;
                s_cur = s_trial;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: 200,
        residual,
    })
}

/// Solves the extremal two-point problem a'' = h^2 f(a) f'(a) with
/// a(0) = -xi_b, a(T) = +xi_b by shooting on the initial slope. The
/// returned path has 8000 uniform intervals.
pub fn optimal_path_bvp(params: &ModelParams, t: f64) -> Result<MeanPath> {
    params.validate()?;
    if !(t > 0.0) {
        return Err(Error::InvalidParams(vec![format!(
            "horizon must be positive (got {t})"
        )]));
    }
    let xi_end = variational_endpoint(params)?;
    let b = drift_coeff(params);
    let h2 = params.h * params.h;
    let accel = move |a: f64| h2 * (a * a * a + b * a) * (3.0 * a * a + b);

    const OUT_INTERVALS: usize = 8000;
    const SUBSTEPS: usize = 2;
    let dt = t / (OUT_INTERVALS * SUBSTEPS) as f64;

    // One RK4 pass; optionally records the trajectory.
    let integrate = |slope0: f64, record: Option<&mut Vec<f64>>| -> f64 {
        let mut a = -xi_end;
        let mut w = slope0;
        let mut rec = record;
        if let Some(r) = rec.as_deref_mut() {
            r.push(a);
        }
        for step in 0..OUT_INTERVALS * SUBSTEPS {
            let (k1a, k1w) = (w, accel(a));
            let (k2a, k2w) = (w + 0.5 * dt * k1w, accel(a + 0.5 * dt * k1a));
            let (k3a, k3w) = (w + 0.5 * dt * k2w, accel(a + 0.5 * dt * k2a));
            let (k4a, k4w) = (w + dt * k3w, accel(a + dt * k3a));
            a += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            w += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
            if let Some(r) = rec.as_deref_mut() {
                if (step + 1) % SUBSTEPS == 0 {
                    r.push(a);
                }
            }
        }
        a - xi_end
    };

    // Bracket the endpoint miss in the initial slope. The miss increases
    // with the slope; the linear-path slope is a natural upper scale.
    let mut lo = 0.0;
    let miss_at_zero = integrate(lo, None);
    if miss_at_zero > 0.0 {
        return Err(Error::BracketNotFound(format!(
            "endpoint miss already positive at zero initial slope ({miss_at_zero:.3e})"
        )));
    }
    let mut hi = 2.0 * xi_end / t;
    let mut found = false;
    for _ in 0..60 {
        if integrate(hi, None) >= 0.0 {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return Err(Error::BracketNotFound(
            "no initial slope reaches the far equilibrium".to_string(),
        ));
    }
    let slope = brent_root(|p| integrate(p, None), lo, hi, 1e-15)?;
    let mut values = Vec::with_capacity(OUT_INTERVALS + 1);
    let miss = integrate(slope, Some(&mut values));
    if miss.abs() > 1e-9 {
        return Err(Error::NonConvergence {
            iterations: 0,
            residual: miss.abs(),
        });
    }
    // Pin the endpoint exactly; the shooting miss is below 1e-9.
    *values.last_mut().expect("recorded path") = xi_end;
    let times: Vec<f64> = (0..=OUT_INTERVALS)
        .map(|i| i as f64 * (t / OUT_INTERVALS as f64))
        .collect();
    Ok(MeanPath { times, values })
}

/// Mean and second moment of the driving force y^3 - y under a Gaussian
/// law with the given mean and variance.
pub fn gaussian_force_moments(a: f64, v: f64) -> (f64, f64) {
    let a2 = a * a;
    let e1 = a2 * a + 3.0 * v * a - a;
    let e_y6 = a2 * a2 * a2 + 15.0 * a2 * a2 * v + 45.0 * a2 * v * v + 15.0 * v * v * v;
    let e_y4 = a2 * a2 + 6.0 * a2 * v + 3.0 * v * v;
    let e_y2 = a2 + v;
    (e1, e_y6 - 2.0 * e_y4 + e_y2)
}

/// Rate of a mean path with the driving force averaged under the local
/// Gaussian population law (mean a(t), variance sigma^2 / 2 theta) rather
/// than frozen at the mean:
/// (1/2 sigma^2) int E[(da/dt + h (y^3 - y))^2] dt.
pub fn gaussian_path_rate(path: &MeanPath, params: &ModelParams) -> Result<f64> {
    params.validate()?;
    validate_path(path)?;
    if params.theta <= 0.0 {
        return Err(Error::InvalidParams(vec![
            "theta must be positive for the Gaussian population law".to_string(),
        ]));
    }
    let v = params.equilibrium_variance();
    let h = params.h;
    let inv_4s2 = 1.0 / (4.0 * params.sigma * params.sigma);
    let q = |a: f64, d: f64| {
        let (e1, e2) = gaussian_force_moments(a, v);
        d * d + 2.0 * h * d * e1 + h * h * e2
    };
    let mut total = 0.0;
    for i in 0..path.values.len() - 1 {
        let dt = path.times[i + 1] - path.times[i];
        let d = (path.values[i + 1] - path.values[i]) / dt;
        total += dt * inv_4s2 * (q(path.values[i], d) + q(path.values[i + 1], d));
    }
    Ok(total)
}

/// Transition probability exp(-N rate) with its log for exponents far
/// beyond floating-point range. Returns (probability, log-probability).
pub fn transition_probability_ld(rate: &RateEstimate, n_agents: usize) -> (f64, f64) {
    let log_p = rate.implied_log_probability(n_agents);
    (log_p.exp(), log_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_distr::StandardNormal;

    fn params(h: f64, theta: f64, sigma: f64) -> ModelParams {
        ModelParams {
            h,
            theta,
            sigma,
            n_agents: 100,
            horizon: 10.0,
            dt: 0.02,
        }
    }

    #[test]
    fn rate_h0_closed_form() {
        assert!((rate_h0(0.5, 1.0, 10.0) - 0.05).abs() < 1e-15);
        assert!((rate_h0(0.5, 1.0, 20.0) - 0.025).abs() < 1e-15, "T doubled, rate halved");
        assert_eq!(rate_h0(0.0, 1.0, 10.0), 0.0);
    }

    #[test]
    fn rate_small_h_example_and_monotonicity() {
        let r = rate_small_h(&params(0.1, 2.0, 1.0), 10.0).unwrap();
        assert!((r - 0.0575).abs() < 1e-14, "got {r}");

        let r0 = rate_small_h(&params(0.0, 2.0, 1.0), 10.0).unwrap();
        assert!((r0 - rate_h0(0.5, 1.0, 10.0)).abs() < 1e-15, "h = 0 reduction");

        let mut prev = r0;
        for k in 1..=10 {
            let h = 0.01 * k as f64;
            let r = rate_small_h(&params(h, 2.0, 1.0), 10.0).unwrap();
            assert!(r > prev, "rate increases with h (xi1 > 0): h = {h}");
            prev = r;
        }

        assert!(rate_small_h(&params(0.1, 1.0, 1.0), 10.0).is_err(), "non-bistable");
    }

    #[test]
    fn functional_is_zero_on_the_resting_equilibrium() {
        let p = params(0.1, 2.0, 1.0);
        let xi0 = 0.5;
        let path = MeanPath {
            times: (0..=100).map(|i| 0.1 * i as f64).collect(),
            values: vec![xi0; 101],
        };
        let s = reduced_rate_functional(&path, &p).unwrap();
        assert_eq!(s, 0.0, "drift vanishes at the reduced equilibrium");
    }

    #[test]
    fn functional_linear_path_at_h0() {
        let p = params(0.0, 2.0, 1.0);
        let path = MeanPath::linear(10.0, 2000, 0.5);
        let s = reduced_rate_functional(&path, &p).unwrap();
        assert!(
            (s - 0.05).abs() < 1e-12,
            "linear path at h = 0 gives the closed form, got {s:.15}"
        );
    }

    #[test]
    fn functional_nonnegative_on_random_paths() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = params(0.1, 2.0, 1.0);
        for _ in 0..50 {
            let m = 64;
            let values: Vec<f64> = (0..=m)
                .map(|_| 2.0 * rng.random::<f64>() - 1.0)
                .collect();
            let path = MeanPath {
                times: (0..=m).map(|i| 0.1 * i as f64).collect(),
                values,
            };
            assert!(reduced_rate_functional(&path, &p).unwrap() >= 0.0);
        }
    }

    #[test]
    fn minimizer_at_h0_is_the_linear_path() {
        let p = params(0.0, 2.0, 1.0);
        let est = minimize_reduced(&p, 10.0, 2000).unwrap();
        assert!((est.value - 0.05).abs() < 1e-12, "value {:.15}", est.value);
        let path = est.path.unwrap();
        let linear = MeanPath::linear(10.0, 2000, 0.5);
        let sup = path
            .values
            .iter()
            .zip(&linear.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup < 1e-8, "interior deviation {sup:.3e}");
    }

    #[test]
    fn minimizer_frozen_values_and_expansion_residual() {
        // Cross-implementation values from an independent Python prototype
        // (grid 2000, T = 10, theta = 2, sigma = 1).
        let cases = [
            (0.02, 0.0514771428),
            (0.04, 0.0529121536),
            (0.08, 0.0556730964),
        ];
        let mut ratios = Vec::new();
        for (h, want) in cases {
            let p = params(h, 2.0, 1.0);
            let est = minimize_reduced(&p, 10.0, 2000).unwrap();
            assert!(
                (est.value - want).abs() < 1e-8,
                "h = {h}: S = {:.10}, frozen {want:.10}",
                est.value
            );
            let small_h = rate_small_h(&p, 10.0).unwrap();
            ratios.push((est.value - small_h).abs() / (h * h));
        }
        println!("expansion residual / h^2: {ratios:?}");
        let max = ratios.iter().cloned().fold(0.0_f64, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            max / min < 3.0,
            "O(h^2) residual scaling, ratios {ratios:?}"
        );
    }

    #[test]
    fn minimizer_gradient_is_flat() {
        let p = params(0.05, 2.0, 1.0);
        let est = minimize_reduced(&p, 10.0, 2000).unwrap();
        let grad = reduced_functional_gradient(est.path.as_ref().unwrap(), &p).unwrap();
        let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        println!("gradient inf-norm at the minimizer: {gmax:.3e}");
        assert!(gmax < 1e-10, "Euler-Lagrange stationarity, got {gmax:.3e}");
    }

    #[test]
    fn minimizer_path_deviation_scales_as_h_squared() {
        let mut ratios = Vec::new();
        for &h in &[0.02, 0.04, 0.08] {
            let p = params(h, 2.0, 1.0);
            let est = minimize_reduced(&p, 10.0, 500).unwrap();
            let path = est.path.unwrap();
            let xi_end = *path.values.last().unwrap();
            let linear = MeanPath::linear(10.0, 500, xi_end);
            let sup = path
                .values
                .iter()
                .zip(&linear.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            ratios.push(sup / (h * h));
        }
        println!("path deviation / h^2: {ratios:?}");
        let max = ratios.iter().cloned().fold(0.0_f64, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "deviation is O(h^2): {ratios:?}");
    }

    #[test]
    fn bvp_matches_minimizer_path() {
        let p = params(0.05, 2.0, 1.0);
        let bvp = optimal_path_bvp(&p, 10.0).unwrap();
        let est = minimize_reduced(&p, 10.0, 8000).unwrap();
        let newton = est.path.unwrap();
        assert_eq!(bvp.values.len(), newton.values.len(), "matching grids");
        let sup = bvp
            .values
            .iter()
            .zip(&newton.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        println!("BVP vs Newton sup distance: {sup:.3e}");
        assert!(sup < 1e-5, "two routes, one extremal: sup = {sup:.3e}");
    }

    #[test]
    fn bvp_is_odd_about_the_midpoint() {
        let p = params(0.1, 2.0, 1.0);
        let path = optimal_path_bvp(&p, 10.0).unwrap();
        let n = path.values.len();
        let worst = (0..n)
            .map(|i| (path.values[i] + path.values[n - 1 - i]).abs())
            .fold(0.0_f64, f64::max);
        println!("odd-symmetry defect: {worst:.3e}");
        assert!(worst < 1e-8, "a(T/2 + s) = -a(T/2 - s), defect {worst:.3e}");
    }

    #[test]
    fn bvp_at_h0_is_linear() {
        let p = params(0.0, 2.0, 1.0);
        let path = optimal_path_bvp(&p, 10.0).unwrap();
        let m = path.values.len() - 1;
        let linear = MeanPath::linear(10.0, m, 0.5);
        let sup = path
            .values
            .iter()
            .zip(&linear.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup < 1e-12, "zero acceleration keeps the path linear");
    }

    #[test]
    fn gaussian_moments_match_monte_carlo() {
        let (e1, e2) = gaussian_force_moments(0.3, 0.05);
        assert!((e1 - (-0.228)).abs() < 1e-12, "closed first moment");
        assert!((e2 - 0.073604).abs() < 1e-12, "closed second moment");

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let sd = 0.05_f64.sqrt();
        let (mut s1, mut s2) = (0.0, 0.0);
        let n = 1_000_000;
        for _ in 0..n {
            let g: f64 = rng.sample(StandardNormal);
            let y: f64 = 0.3 + sd * g;
            let p = y * y * y - y;
            s1 += p;
            s2 += p * p;
        }
        let (m1, m2) = (s1 / n as f64, s2 / n as f64);
        println!("MC moments: {m1:.6} vs {e1:.6}, {m2:.6} vs {e2:.6}");
        assert!((m1 - e1).abs() / e1.abs() < 1e-2, "first moment oracle");
        assert!((m2 - e2).abs() / e2 < 1e-2, "second moment oracle");
    }

    #[test]
    fn gaussian_rate_linear_path_h0_is_closed_form() {
        let p = params(0.0, 2.0, 1.0);
        let path = MeanPath::linear(10.0, 2000, 0.5);
        let r = gaussian_path_rate(&path, &p).unwrap();
        assert!((r - 0.05).abs() < 1e-12, "got {r:.15}");
    }

    #[test]
    fn gaussian_vs_reduced_gap_is_h_squared_variance() {
        // On any fixed path the two functionals differ by exactly
        // h^2 * trapezoid(Var_a[y^3 - y]) / (2 sigma^2).
        let mut ratios = Vec::new();
        for &h in &[0.02, 0.04, 0.08] {
            let p = params(h, 2.0, 1.0);
            let est = minimize_reduced(&p, 10.0, 500).unwrap();
            let path = est.path.unwrap();
            let gauss = gaussian_path_rate(&path, &p).unwrap();
            assert!(gauss >= est.value, "Gaussian averaging adds variance");
            ratios.push((gauss - est.value) / (h * h));
        }
        println!("(gaussian - reduced) / h^2: {ratios:?}");
        let max = ratios.iter().cloned().fold(0.0_f64, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 2.0, "gap is O(h^2) exactly: {ratios:?}");
    }

    #[test]
    fn probability_from_rate() {
        let est = RateEstimate {
            value: 0.05,
            method: RateMethod::H0ClosedForm,
            path: None,
        };
        let (prob, log_p) = transition_probability_ld(&est, 20);
        assert!((prob - (-1.0_f64).exp()).abs() < 1e-15, "e^-1 at N = 20");
        assert!((log_p + 1.0).abs() < 1e-15);

        let (p_huge, log_huge) = transition_probability_ld(&est, 100_000);
        assert_eq!(p_huge, 0.0, "underflows to zero");
        assert!((log_huge + 5000.0).abs() < 1e-9, "log form survives");

        let zero = RateEstimate {
            value: 0.0,
            method: RateMethod::H0ClosedForm,
            path: None,
        };
        assert_eq!(transition_probability_ld(&zero, 50).0, 1.0);
    }

    #[test]
    fn cooperation_lowers_the_exponent() {
        // sigma^2 / 2 theta fixed at 1/4: xi0 = 1/2 regardless; raising
        // sigma^2 then lowers the exponent and raises the probability.
        let mut prev = f64::INFINITY;
        for &(theta, sigma2) in &[(2.0, 1.0_f64), (4.0, 2.0), (8.0, 4.0)] {
            let p = params(0.0, theta, sigma2.sqrt());
            let (xi0, _) = crate::equilibrium::small_h_equilibrium(&p).unwrap();
            assert!((xi0 - 0.5).abs() < 1e-15);
            let rate = rate_h0(xi0, p.sigma, 10.0);
            assert!(rate < prev, "more noise with s fixed lowers the exponent");
            prev = rate;
        }
    }

    #[test]
    fn continuity_toward_the_h0_closed_form() {
        // |S_min - 2 xi_b^2 / (sigma^2 T)| shrinks with h, xi_b taken at
        // each h from the numeric equilibrium.
        let mut prev_gap = f64::INFINITY;
        for &h in &[0.08, 0.04, 0.02, 0.01] {
            let p = params(h, 2.0, 1.0);
            let s = minimize_reduced(&p, 10.0, 1000).unwrap().value;
            let xi_b = crate::equilibrium::solve_bistable(&p).unwrap().xi_b;
            let gap = (s - rate_h0(xi_b, 1.0, 10.0)).abs();
            println!("h = {h}: gap to closed form {gap:.3e}");
            assert!(gap < prev_gap, "gap shrinks as h drops: {gap:.3e} at h = {h}");
            prev_gap = gap;
        }
    }

    #[test]
    fn consistency_chain_at_h0() {
        let p = params(0.0, 2.0, 1.0);
        let closed = rate_h0(0.5, 1.0, 10.0);
        let linear = MeanPath::linear(10.0, 2000, 0.5);
        let reduced = reduced_rate_functional(&linear, &p).unwrap();
        let gauss = gaussian_path_rate(&linear, &p).unwrap();
        let minimized = minimize_reduced(&p, 10.0, 2000).unwrap().value;
        println!("chain: {closed:.12} {reduced:.12} {gauss:.12} {minimized:.12}");
        for (name, v) in [("reduced", reduced), ("gaussian", gauss), ("minimized", minimized)] {
            assert!(
                (v - closed).abs() < 1e-8,
                "{name} = {v:.12} vs closed {closed:.12}"
            );
        }
    }
}
