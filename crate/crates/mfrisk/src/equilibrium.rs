//! Collective equilibria of the mean-field limit.
//!
//! A stationary mean xi must reproduce itself through the equilibrium
//! density it induces:
//!
//! ```text
//! u^e_xi(y) ~ exp{ -(y - xi)^2 / (sigma^2/theta) - (2h/sigma^2) V(y) },
//! m(xi) = int y u^e_xi(y) dy,    xi = m(xi).
//! ```
//!
//! xi = 0 always solves this. A bistable pair +-xi_b exists exactly when
//! dm/dxi(0) > 1, equivalently sigma below a critical level; at small h the
//! critical level is sqrt(2 theta / 3) + O(h) and xi_b = xi0 + h xi1 + O(h^2).
//! The heterogeneous population mixes K group densities with rates Theta_l.
//!
//! All integrals run through Gauss-Hermite quadrature with node doubling;
//! the slope dm/dxi is evaluated through the covariance identity
//! dm/dxi = (2 theta / sigma^2) Var_xi(y), which also powers the Newton
//! refinement of the fixed point.

use serde::{Deserialize, Serialize};

use crate::fokker_planck::DensityGrid;
use crate::model::{potential_v, GroupSpec, HetModelParams, ModelParams};
use crate::quad::{gauss_hermite, integrate_adaptive, GH_SIZES};
use crate::{Error, Result};

/// How an equilibrium value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumMethod {
    FixedPoint,
    SmallHExpansion,
}

/// Result of an equilibrium solve.
///
/// `xi_b` is the positive root of xi = m(xi) (0 when not bistable),
/// `xi0`/`xi1` the small-h expansion coefficients where defined, `sigma_c`
/// the leading-order critical noise, `residual` the final |xi_b - m(xi_b)|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub xi_b: f64,
    pub xi0: Option<f64>,
    pub xi1: Option<f64>,
    pub sigma_c: f64,
    pub bistable: bool,
    pub method: EquilibriumMethod,
    pub residual: f64,
}

// ==================== quadrature core ====================

/// Mean and variance of the tilted Gaussian with base variance v and payload
/// exp(-(2h/sigma^2) V(y)), by n-point Gauss-Hermite.
///
/// Moments are accumulated about xi with mirrored node pairs folded
/// together, so that at h = 0 the pair terms cancel exactly and
/// m(xi) = xi holds as a floating-point identity, not an approximation.
fn tilted_moments_n(xi: f64, v: f64, two_h_over_sigma2: f64, n: usize) -> (f64, f64) {
    let (nodes, weights) = gauss_hermite(n);
    let scale = (2.0 * v).sqrt();
    let mut z = 0.0;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let (da, db) = (scale * nodes[i], scale * nodes[j]);
        let pa = weights[i] * (-two_h_over_sigma2 * potential_v(xi + da)).exp();
        let pb = weights[j] * (-two_h_over_sigma2 * potential_v(xi + db)).exp();
        z += pa + pb;
        m1 += pa * da + pb * db;
        m2 += pa * da * da + pb * db * db;
    }
    let mc = m1 / z;
    (xi + mc, m2 / z - mc * mc)
}

/// Doubles the rule size until the mean stabilizes below 1e-9.
fn tilted_moments(xi: f64, v: f64, two_h_over_sigma2: f64) -> Result<(f64, f64)> {
    let mut prev: Option<(f64, f64)> = None;
    for &n in &GH_SIZES {
        let cur = tilted_moments_n(xi, v, two_h_over_sigma2, n);
        if let Some(p) = prev {
            if (cur.0 - p.0).abs() < 1e-9 && (cur.1 - p.1).abs() < 1e-9 {
                return Ok(cur);
            }
        }
        prev = Some(cur);
    }
    Err(Error::QuadratureNonConvergence(format!(
        "consistency integrand at xi = {xi} still moving at {} nodes",
        GH_SIZES[GH_SIZES.len() - 1]
    )))
}

fn hom_v(params: &ModelParams) -> f64 {
    params.sigma * params.sigma / (2.0 * params.theta)
}

/// m(xi) and m'(xi) for the homogeneous model.
fn map_and_slope(xi: f64, params: &ModelParams) -> Result<(f64, f64)> {
    let v = hom_v(params);
    let c = 2.0 * params.h / (params.sigma * params.sigma);
    let (mean, var) = tilted_moments(xi, v, c)?;
    // dm/dxi = (2 theta / sigma^2) Var = Var / v.
    Ok((mean, var / v))
}

/// m(xi) and m'(xi) for the heterogeneous model.
fn map_and_slope_div(xi: f64, het: &HetModelParams) -> Result<(f64, f64)> {
    let sigma2 = het.sigma * het.sigma;
    let c = 2.0 * het.h / sigma2;
    let mut m = 0.0;
    let mut slope = 0.0;
    for (theta, rho) in het.groups.thetas.iter().zip(&het.groups.fractions) {
        let v = sigma2 / (2.0 * theta);
        let (mean, var) = tilted_moments(xi, v, c)?;
        m += rho * mean;
        slope += rho * (2.0 * theta / sigma2) * var;
    }
    Ok((m, slope))
}

// ==================== public operations ====================

/// Equilibrium density u^e_xi on a cell-centered grid, normalized to unit
/// mass. Fails if more than 1e-8 of the mass lies outside [y_min, y_max].
pub fn equilibrium_density(
    xi: f64,
    params: &ModelParams,
    y_min: f64,
    y_max: f64,
    n_cells: usize,
) -> Result<DensityGrid> {
    params.validate()?;
    if params.theta <= 0.0 {
        return Err(Error::InvalidParams(vec![
            "theta must be positive for the equilibrium density".to_string(),
        ]));
    }
    if n_cells < 8 || y_max <= y_min {
        return Err(Error::InvalidParams(vec![format!(
            "bad density grid: [{y_min}, {y_max}] with {n_cells} cells"
        )]));
    }
    let v = hom_v(params);
    let c = 2.0 * params.h / (params.sigma * params.sigma);
    let phi = |y: f64| (-(y - xi) * (y - xi) / (2.0 * v) - c * potential_v(y)).exp();

    let dy = (y_max - y_min) / n_cells as f64;
    let values: Vec<f64> = (0..n_cells)
        .map(|i| phi(y_min + (i as f64 + 0.5) * dy))
        .collect();
    let grid_mass: f64 = values.iter().sum::<f64>() * dy;
    if !(grid_mass > 0.0) || !grid_mass.is_finite() {
        return Err(Error::GridTooNarrow(format!(
            "no mass captured on [{y_min}, {y_max}] for xi = {xi}"
        )));
    }

    // Escaped mass by direct quadrature over windows that extend past
    // everything representable; the density is Gaussian-dominated, so
    // fifteen base widths suffice.
    let reach = 15.0 * (2.0 * v).sqrt() + 1.0;
    let tail_lo = integrate_adaptive(&phi, (xi - reach).min(y_min - 1.0), y_min, 1e-4)?;
    let tail_hi = integrate_adaptive(&phi, y_max, (xi + reach).max(y_max + 1.0), 1e-4)?;
    let outside = (tail_lo + tail_hi) / (grid_mass + tail_lo + tail_hi);
    if outside > 1e-8 {
        return Err(Error::GridTooNarrow(format!(
            "tail mass {outside:.3e} outside [{y_min}, {y_max}] for xi = {xi}"
        )));
    }

    let values = values.iter().map(|u| u / grid_mass).collect();
    DensityGrid::new(y_min, y_max, values)
}

/// Consistency map m(xi): the mean of the equilibrium density induced by a
/// population mean held at xi.
pub fn consistency_map(xi: f64, params: &ModelParams) -> Result<f64> {
    params.validate()?;
    Ok(map_and_slope(xi, params)?.0)
}

/// Heterogeneous consistency map sum_l rho_l int y u^e_{l,xi} dy.
pub fn consistency_map_div(xi: f64, het: &HetModelParams) -> Result<f64> {
    het.validate()?;
    Ok(map_and_slope_div(xi, het)?.0)
}

/// Slope dm/dxi at xi = 0 via the covariance identity
/// (2 theta / sigma^2) Var_0(y). Bistability holds iff this exceeds 1.
pub fn consistency_slope_at_zero(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    Ok(map_and_slope(0.0, params)?.1)
}

/// Heterogeneous slope at zero, the mixture of per-group identities.
pub fn consistency_slope_at_zero_div(het: &HetModelParams) -> Result<f64> {
    het.validate()?;
    Ok(map_and_slope_div(0.0, het)?.1)
}

/// Leading-order critical noise sqrt(2 theta / 3).
///
/// The O(h) correction has no closed form and is not fabricated; `_h` stays
/// in the signature to mark the expansion point.
pub fn critical_sigma_small_h(theta: f64, _h: f64) -> f64 {
    (2.0 * theta / 3.0).sqrt()
}

/// Small-h expansion coefficients (xi0, xi1) of the bistable equilibrium:
/// xi_b = xi0 + h xi1 + O(h^2), with s = sigma^2 / (2 theta),
/// xi0 = sqrt(1 - 3s), xi1 = xi0 (6/sigma^2) s^2 (1 - 2s) / (1 - 3s).
pub fn small_h_equilibrium(params: &ModelParams) -> Result<(f64, f64)> {
    small_h_pair(params.theta, params.sigma)
}

fn small_h_pair(theta: f64, sigma: f64) -> Result<(f64, f64)> {
    let s = sigma * sigma / (2.0 * theta);
    if 3.0 * s >= 1.0 {
        return Err(Error::NoBistableEquilibria(format!(
            "3 sigma^2 / (2 theta) = {} >= 1",
            3.0 * s
        )));
    }
    let xi0 = (1.0 - 3.0 * s).sqrt();
    let xi1 = xi0 * (6.0 / (sigma * sigma)) * s * s * (1.0 - 2.0 * s) / (1.0 - 3.0 * s);
    Ok((xi0, xi1))
}

/// Critical noise of the K-group model:
/// sqrt( sum(rho_l / Theta_l) / sum(3 rho_l / (2 Theta_l^2)) ).
pub fn critical_sigma_div(groups: &GroupSpec, _h: f64) -> f64 {
    let num: f64 = groups
        .thetas
        .iter()
        .zip(&groups.fractions)
        .map(|(t, r)| r / t)
        .sum();
    let den: f64 = groups
        .thetas
        .iter()
        .zip(&groups.fractions)
        .map(|(t, r)| 1.5 * r / (t * t))
        .sum();
    (num / den).sqrt()
}

/// Leading-order heterogeneous equilibrium
/// xi_b_div = sqrt( sum (rho_l/Theta_l)(1 - 3 sigma^2 / (2 Theta_l)) / sum rho_l/Theta_l ).
pub fn small_h_equilibrium_div(groups: &GroupSpec, sigma: f64) -> Result<f64> {
    let sigma_c = critical_sigma_div(groups, 0.0);
    if sigma >= sigma_c {
        return Err(Error::NoBistableEquilibria(format!(
            "sigma = {sigma} at or above critical {sigma_c}"
        )));
    }
    let den: f64 = groups
        .thetas
        .iter()
        .zip(&groups.fractions)
        .map(|(t, r)| r / t)
        .sum();
    let num: f64 = groups
        .thetas
        .iter()
        .zip(&groups.fractions)
        .map(|(t, r)| (r / t) * (1.0 - 1.5 * sigma * sigma / t))
        .sum();
    Ok((num / den).sqrt())
}

/// Solves xi = m(xi) for the positive bistable equilibrium.
///
/// Bisection brackets the root on (0, 1.5], then Newton steps with the
/// covariance-identity slope polish it to |xi - m(xi)| below 1e-10.
pub fn solve_bistable(params: &ModelParams) -> Result<EquilibriumSolution> {
    params.validate()?;
    if params.h == 0.0 {
        return Err(Error::DegenerateAtHZero);
    }
    let expansion = small_h_pair(params.theta, params.sigma).ok();
    let sigma_c = critical_sigma_small_h(params.theta, params.h);
    solve_fixed_point(
        |xi| map_and_slope(xi, params),
        expansion.map(|e| e.0),
        expansion.map(|e| e.1),
        sigma_c,
    )
}

/// Heterogeneous counterpart of [`solve_bistable`].
pub fn solve_bistable_div(het: &HetModelParams) -> Result<EquilibriumSolution> {
    het.validate()?;
    if het.h == 0.0 {
        return Err(Error::DegenerateAtHZero);
    }
    let xi0 = small_h_equilibrium_div(&het.groups, het.sigma).ok();
    let sigma_c = critical_sigma_div(&het.groups, het.h);
    solve_fixed_point(|xi| map_and_slope_div(xi, het), xi0, None, sigma_c)
}

fn solve_fixed_point<F>(
    map: F,
    xi0: Option<f64>,
    xi1: Option<f64>,
    sigma_c: f64,
) -> Result<EquilibriumSolution>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let slope0 = map(0.0)?.1;
    if slope0 <= 1.0 {
        return Ok(EquilibriumSolution {
            xi_b: 0.0,
            xi0,
            xi1,
            sigma_c,
            bistable: false,
            method: EquilibriumMethod::FixedPoint,
            residual: 0.0,
        });
    }

    // Slope above 1 makes m(xi) - xi positive just right of 0; scan up to
    // 1.5 for the sign change back through zero.
    let g = |xi: f64| -> Result<f64> { Ok(map(xi)?.0 - xi) };
    const SCAN: usize = 60;
    let mut lo = 1e-6;
    let mut hi = lo;
    let mut found = false;
    for k in 1..=SCAN {
        let xi = 1.5 * k as f64 / SCAN as f64;
        if g(xi)? < 0.0 {
            hi = xi;
            found = true;
            break;
        }
        lo = xi;
    }
    if !found {
        return Err(Error::BracketNotFound(
            "no sign change of m(xi) - xi on (0, 1.5] despite slope at 0 exceeding 1".to_string(),
        ));
    }

    // Bisection to a narrow bracket.
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Newton polish on g(xi) = m(xi) - xi with g' = m' - 1.
    let mut xi = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for _ in 0..60 {
        let (m, mp) = map(xi)?;
        residual = (m - xi).abs();
        if residual < 1e-13 {
            break;
        }
        let step = (m - xi) / (mp - 1.0);
        let next = xi - step;
        xi = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if g(xi)? > 0.0 {
            lo = xi;
        } else {
            hi = xi;
        }
    }
    if residual > 1e-10 {
        return Err(Error::NonConvergence {
            iterations: 60,
            residual,
        });
    }
    Ok(EquilibriumSolution {
        xi_b: xi,
        xi0,
        xi1,
        sigma_c,
        bistable: true,
        method: EquilibriumMethod::FixedPoint,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64, theta: f64, sigma: f64) -> ModelParams {
        ModelParams {
            h,
            theta,
            sigma,
            n_agents: 100,
            horizon: 100.0,
            dt: 0.02,
        }
    }

    #[test]
    fn consistency_map_matches_brute_force_trapezoid() {
        // Independent oracle: 1e6-point trapezoid of the same integrand.
        let p = params(0.1, 10.0, 1.0);
        let xi = 0.8;
        let v = p.sigma * p.sigma / (2.0 * p.theta);
        let c = 2.0 * p.h / (p.sigma * p.sigma);
        let n = 1_000_000usize;
        let (a, b) = (xi - 12.0 * v.sqrt(), xi + 12.0 * v.sqrt());
        let dy = (b - a) / n as f64;
        let (mut z, mut m1) = (0.0, 0.0);
        for i in 0..=n {
            let y = a + i as f64 * dy;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let u = (-(y - xi) * (y - xi) / (2.0 * v) - c * potential_v(y)).exp();
            z += w * u;
            m1 += w * u * y;
        }
        let oracle = m1 / z;
        let m = consistency_map(xi, &p).unwrap();
        println!("m(0.8) = {m:.16}, trapezoid oracle = {oracle:.16}");
        assert!((m - oracle).abs() < 1e-8, "quadrature vs oracle");
        assert!(
            (m - 0.8016758990490334).abs() < 1e-11,
            "frozen cross-implementation value, got {m:.16}"
        );
    }

    #[test]
    fn consistency_map_identity_at_h_zero() {
        let p = params(0.0, 10.0, 1.0);
        for &xi in &[0.0, 0.3, -0.7, 1.2] {
            let m = consistency_map(xi, &p).unwrap();
            assert_eq!(m, xi, "m(xi) = xi exactly at h = 0");
        }
    }

    #[test]
    fn consistency_map_is_odd() {
        let p = params(0.1, 10.0, 1.0);
        for &xi in &[0.1, 0.45, 0.9, 1.3] {
            let plus = consistency_map(xi, &p).unwrap();
            let minus = consistency_map(-xi, &p).unwrap();
            assert!(
                (plus + minus).abs() < 1e-12,
                "m odd at xi = {xi}: {plus} vs {minus}"
            );
        }
    }

    #[test]
    fn slope_at_zero_gaussian_case_is_one() {
        let p = params(0.0, 10.0, 1.0);
        let s = consistency_slope_at_zero(&p).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "Gaussian slope is exactly 1: {s}");
    }

    #[test]
    fn slope_matches_central_difference() {
        let p = params(0.1, 10.0, 1.0);
        let s = consistency_slope_at_zero(&p).unwrap();
        assert!(s > 1.0, "bistable regime has slope > 1: {s}");
        let eps = 1e-4;
        let fd = (consistency_map(eps, &p).unwrap() - consistency_map(-eps, &p).unwrap())
            / (2.0 * eps);
        assert!((s - fd).abs() < 1e-6, "slope {s} vs finite difference {fd}");
    }

    #[test]
    fn solve_bistable_frozen_values() {
        // Cross-implementation values from an independent Python prototype.
        let cases = [
            (0.02, 0.922246067908),
            (0.04, 0.922535248932),
            (0.08, 0.923106443453),
            (0.10, 0.9233885322850883),
        ];
        for (h, want) in cases {
            let sol = solve_bistable(&params(h, 10.0, 1.0)).unwrap();
            assert!(sol.bistable);
            assert!(
                (sol.xi_b - want).abs() < 1e-9,
                "h = {h}: xi_b = {:.12}, want {want:.12}",
                sol.xi_b
            );
            assert!(sol.residual < 1e-10, "residual contract");
            assert!(sol.xi_b > 0.0 && sol.xi_b < 1.0);
        }
    }

    #[test]
    fn solve_bistable_flat_regime() {
        // 3 sigma^2 / (2 theta) = 1.5 > 1: only the zero equilibrium.
        let sol = solve_bistable(&params(0.1, 1.0, 1.0)).unwrap();
        assert!(!sol.bistable);
        assert_eq!(sol.xi_b, 0.0);
    }

    #[test]
    fn solve_bistable_rejects_h_zero() {
        let err = solve_bistable(&params(0.0, 10.0, 1.0)).unwrap_err();
        assert!(err.to_string().contains("degenerate at h=0; use expansion"));
    }

    #[test]
    fn negative_root_is_mirror() {
        let p = params(0.1, 10.0, 1.0);
        let sol = solve_bistable(&p).unwrap();
        let m = consistency_map(-sol.xi_b, &p).unwrap();
        assert!(
            (m - (-sol.xi_b)).abs() < 1e-10,
            "-xi_b is a fixed point too"
        );
    }

    #[test]
    fn critical_sigma_closed_forms() {
        assert!((critical_sigma_small_h(1.5, 0.0) - 1.0).abs() < 1e-15);
        assert!((critical_sigma_small_h(6.0, 0.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn small_h_expansion_values() {
        let (xi0, xi1) = small_h_equilibrium(&params(0.05, 2.0, 1.0)).unwrap();
        assert!((xi0 - 0.5).abs() < 1e-15);
        assert!((xi1 - 0.375).abs() < 1e-15);

        // Vanishing noise: xi0 -> 1, xi1 -> 0.
        let (xi0, xi1) = small_h_equilibrium(&params(0.05, 1.0, 1e-4)).unwrap();
        assert!((xi0 - 1.0).abs() < 1e-7);
        assert!(xi1 > 1e-8 && xi1 < 2e-8, "xi1 = {xi1:.3e}");

        // Exact boundary raises.
        assert!(small_h_equilibrium(&params(0.05, 1.5, 1.0)).is_err());
    }

    #[test]
    fn xi1_positive_in_regime() {
        // 2 theta > 3 sigma^2 makes xi1 positive.
        for &(theta, sigma) in &[(2.0, 1.0), (10.0, 1.0), (1.0, 0.5)] {
            let (_, xi1) = small_h_equilibrium(&params(0.05, theta, sigma)).unwrap();
            assert!(xi1 > 0.0, "xi1 > 0 at theta={theta}, sigma={sigma}");
        }
    }

    #[test]
    fn diversity_critical_sigma() {
        let g = GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        let sc = critical_sigma_div(&g, 0.0);
        assert!((sc - 0.8_f64.sqrt()).abs() < 1e-14, "sc = {sc}");

        let single = GroupSpec::new(vec![2.0], vec![1.0]).unwrap();
        assert!(
            (critical_sigma_div(&single, 0.0) - critical_sigma_small_h(2.0, 0.0)).abs() < 1e-15,
            "K = 1 reduces to the homogeneous formula"
        );
    }

    #[test]
    fn diversity_equilibrium_value() {
        let g = GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        let xi = small_h_equilibrium_div(&g, 0.5).unwrap();
        assert!((xi - 0.6875_f64.sqrt()).abs() < 1e-14, "xi = {xi}");
        assert!(small_h_equilibrium_div(&g, 0.9).is_err());
    }

    #[test]
    fn solve_bistable_div_reduces_to_homogeneous() {
        let het = HetModelParams {
            h: 0.1,
            sigma: 1.0,
            n_agents: 100,
            horizon: 100.0,
            dt: 0.02,
            groups: GroupSpec::new(vec![10.0], vec![1.0]).unwrap(),
        };
        let div = solve_bistable_div(&het).unwrap();
        let hom = solve_bistable(&params(0.1, 10.0, 1.0)).unwrap();
        assert!(
            (div.xi_b - hom.xi_b).abs() < 1e-10,
            "K = 1: {} vs {}",
            div.xi_b,
            hom.xi_b
        );
    }

    #[test]
    fn solve_bistable_div_near_expansion() {
        let groups = GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        let het = HetModelParams {
            h: 0.05,
            sigma: 0.5,
            n_agents: 100,
            horizon: 100.0,
            dt: 0.02,
            groups: groups.clone(),
        };
        let sol = solve_bistable_div(&het).unwrap();
        let xi0 = small_h_equilibrium_div(&groups, 0.5).unwrap();
        assert!(sol.bistable);
        assert!(
            (sol.xi_b - xi0).abs() < 0.05,
            "numeric root {} near expansion {xi0} at small h",
            sol.xi_b
        );
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn density_gaussian_at_h_zero() {
        let p = params(0.0, 10.0, 1.0);
        let g = equilibrium_density(0.4, &p, -3.0, 3.0, 1200).unwrap();
        let (mean, var) = g.moments();
        assert!((mean - 0.4).abs() < 1e-9, "Gaussian mean, got {mean}");
        assert!((var - 0.05).abs() < 1e-7, "Gaussian variance, got {var}");
        let mass = g.mass();
        assert!((mass - 1.0).abs() < 1e-12, "normalized, mass = {mass}");
    }

    #[test]
    fn density_even_at_xi_zero() {
        let p = params(0.1, 10.0, 1.0);
        let g = equilibrium_density(0.0, &p, -3.0, 3.0, 600).unwrap();
        let n = g.values.len();
        for i in 0..n / 2 {
            let a = g.values[i];
            let b = g.values[n - 1 - i];
            assert!(
                (a - b).abs() <= 1e-14 * a.abs().max(1.0),
                "even symmetry at cell {i}"
            );
        }
    }

    #[test]
    fn density_mean_equals_consistency_map() {
        let p = params(0.1, 10.0, 1.0);
        let g = equilibrium_density(0.5, &p, -3.0, 3.0, 4000).unwrap();
        let (mean, _) = g.moments();
        let m = consistency_map(0.5, &p).unwrap();
        assert!(
            (mean - m).abs() < 1e-8,
            "grid mean {mean} vs quadrature {m}"
        );
    }

    #[test]
    fn density_rejects_narrow_grid() {
        let p = params(0.1, 10.0, 1.0);
        let err = equilibrium_density(0.9, &p, -1.0, 1.0, 200).unwrap_err();
        assert!(matches!(err, Error::GridTooNarrow(_)), "got {err}");
    }
}
