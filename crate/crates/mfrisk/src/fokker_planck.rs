//! Nonlocal Fokker-Planck evolution of the population law.
//!
//! The mean-field limit transports a density u(t, y) under
//!
//! ```text
//! du/dt = d/dy [ (h U(y) - theta (xbar(t) - y)) u ] + (sigma^2/2) d^2u/dy^2,
//! xbar(t) = int y u(t, y) dy,
//! ```
//!
//! a conservation law whose drift depends on the solution through its own
//! mean. The solver is a cell-centered finite-volume scheme with
//! Scharfetter-Gummel interface fluxes: the flux between two cells is the
//! exact solution of the local constant-coefficient advection-diffusion
//! two-point problem, so discrete steady states reproduce the nodal ratios
//! of the continuous equilibrium density exactly. Boundaries carry zero
//! flux, which conserves mass to rounding; explicit substeps obey a CFL
//! bound recomputed as xbar moves.
//!
//! The K-group variant evolves one density per group, coupled only through
//! the shared mixture mean sum_l rho_l int y u_l dy.

use serde::{Deserialize, Serialize};

use crate::model::{force_u, potential_v, GroupSpec, ModelParams};
use crate::{Error, Result};

/// Default evolution domain [-4, 4] with 800 cells.
pub const DEFAULT_Y_MIN: f64 = -4.0;
pub const DEFAULT_Y_MAX: f64 = 4.0;
pub const DEFAULT_N_CELLS: usize = 800;

/// Tolerated deviation of total mass from one.
const MASS_TOL: f64 = 1e-8;
/// Mass in the two boundary cells beyond which the run aborts.
const LEAK_TOL: f64 = 1e-8;
/// Values below this are an instability, not rounding noise.
const NEGATIVITY_FLOOR: f64 = -1e-12;
/// Per-substep budget for clipping rounding-level negatives.
const CLIP_BUDGET: f64 = 1e-10;
/// Smallest admissible stability-limited substep.
const SUBSTEP_FLOOR: f64 = 1e-9;

/// A probability density sampled at cell centers of a uniform grid.
///
/// Invariants: `values.len() == n_cells`, and `sum(values) * dy == 1`
/// within 1e-8. Cell i is centered at `y_min + (i + 1/2) dy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub y_min: f64,
    pub y_max: f64,
    pub n_cells: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityGrid {
    /// Wraps raw cell values after checking the grid invariants.
    pub fn new(y_min: f64, y_max: f64, values: Vec<f64>) -> Result<Self> {
        let n_cells = values.len();
        let mut problems = Vec::new();
        if n_cells < 8 {
            problems.push(format!("need at least 8 cells (got {n_cells})"));
        }
        if !(y_max > y_min) {
            problems.push(format!("empty domain [{y_min}, {y_max}]"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < NEGATIVITY_FLOOR) {
            problems.push("density values must be finite and nonnegative".to_string());
        }
        let grid = Self {
            y_min,
            y_max,
            n_cells,
            values,
            time: 0.0,
        };
        if problems.is_empty() {
            let mass = grid.mass();
            if (mass - 1.0).abs() > MASS_TOL {
                problems.push(format!("mass {mass} is not 1 within {MASS_TOL:.0e}"));
            }
        }
        if problems.is_empty() {
            Ok(grid)
        } else {
            Err(Error::InvalidParams(problems))
        }
    }

    /// Normalized Gaussian initial condition with the given mean and
    /// variance, truncated to the grid.
    pub fn gaussian(y_min: f64, y_max: f64, n_cells: usize, mean: f64, var: f64) -> Result<Self> {
        if var <= 0.0 || !var.is_finite() {
            return Err(Error::InvalidParams(vec![format!(
                "gaussian variance must be positive (got {var})"
            )]));
        }
        let dy = (y_max - y_min) / n_cells as f64;
        let mut values: Vec<f64> = (0..n_cells)
            .map(|i| {
                let y = y_min + (i as f64 + 0.5) * dy;
                (-(y - mean) * (y - mean) / (2.0 * var)).exp()
            })
            .collect();
        let mass: f64 = values.iter().sum::<f64>() * dy;
        if mass <= 0.0 || !mass.is_finite() {
            return Err(Error::GridTooNarrow(format!(
                "gaussian at mean {mean} carries no mass on [{y_min}, {y_max}]"
            )));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(y_min, y_max, values)
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.n_cells as f64
    }

    /// Cell-center coordinates.
    pub fn centers(&self) -> Vec<f64> {
        let dy = self.dy();
        (0..self.n_cells)
            .map(|i| self.y_min + (i as f64 + 0.5) * dy)
            .collect()
    }

    /// Total mass sum(values) * dy.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dy()
    }

    /// Midpoint-rule mean and variance of the density.
    pub fn moments(&self) -> (f64, f64) {
        let dy = self.dy();
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (i, u) in self.values.iter().enumerate() {
            let y = self.y_min + (i as f64 + 0.5) * dy;
            m0 += u;
            m1 += u * y;
            m2 += u * y * y;
        }
        let mean = m1 / m0;
        (mean, m2 / m0 - mean * mean)
    }
}

/// Bernoulli function x / (e^x - 1) of the Scharfetter-Gummel flux,
/// with a series branch near zero where the quotient cancels.
fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 - 0.5 * x + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// Evolves a single density for `t_end` time units under `params`.
pub fn evolve_fp(initial: &DensityGrid, params: &ModelParams, t_end: f64) -> Result<DensityGrid> {
    params.validate()?;
    // theta = 0 is legitimate here (pure gradient diffusion), so the core
    // is driven directly rather than through a GroupSpec.
    let mut state = vec![initial.clone()];
    evolve_core(
        &mut state,
        &[params.theta],
        &[1.0],
        params.h,
        params.sigma,
        t_end,
    )?;
    Ok(state.pop().expect("one density in, one density out"))
}

/// Evolves K coupled group densities sharing the mixture mean.
/// All grids must agree in domain and resolution.
pub fn evolve_fp_system(
    initials: &[DensityGrid],
    groups: &GroupSpec,
    sigma: f64,
    h: f64,
    t_end: f64,
) -> Result<Vec<DensityGrid>> {
    groups.validate()?;
    let mut problems = Vec::new();
    if initials.len() != groups.k() {
        problems.push(format!(
            "{} initial densities for {} groups",
            initials.len(),
            groups.k()
        ));
    }
    if sigma <= 0.0 || !sigma.is_finite() {
        problems.push(format!("sigma must be positive (got {sigma})"));
    }
    if h < 0.0 || !h.is_finite() {
        problems.push(format!("h must be nonnegative (got {h})"));
    }
    if let Some(first) = initials.first() {
        for g in &initials[1..] {
            if g.y_min != first.y_min || g.y_max != first.y_max || g.n_cells != first.n_cells {
                problems.push("group densities must share one grid".to_string());
                break;
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::InvalidParams(problems));
    }
    let mut state = initials.to_vec();
    evolve_core(
        &mut state,
        &groups.thetas,
        &groups.fractions,
        h,
        sigma,
        t_end,
    )?;
    Ok(state)
}

/// Shared explicit finite-volume driver. `state` holds one density per
/// group; the drift of group l is -h U(y) + theta_l (xbar - y) with the
/// mixture mean xbar recomputed every substep.
fn evolve_core(
    state: &mut [DensityGrid],
    thetas: &[f64],
    rhos: &[f64],
    h: f64,
    sigma: f64,
    t_end: f64,
) -> Result<()> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParams(vec![format!(
            "t_end must be finite and nonnegative (got {t_end})"
        )]));
    }
    let first = &state[0];
    let n = first.n_cells;
    let dy = first.dy();
    let centers = first.centers();
    let d = 0.5 * sigma * sigma;
    let inv_dy = 1.0 / dy;
    let dcoef = d * inv_dy;

    for g in state.iter() {
        let mass = g.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::MassNotConserved {
                drift: mass - 1.0,
                time: g.time,
            });
        }
    }

    // Interface part of int A dy that does not move with xbar:
    // -h (V(y_{i+1}) - V(y_i)) - theta (y_{i+1}^2 - y_i^2) / 2 per group.
    let mut static_int: Vec<Vec<f64>> = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        static_int.push(
            (0..n - 1)
                .map(|i| {
                    let (a, b) = (centers[i], centers[i + 1]);
                    -h * (potential_v(b) - potential_v(a)) - theta * 0.5 * (b * b - a * a)
                })
                .collect(),
        );
    }

    let mut flux = vec![0.0; n + 1];
    let mut t = 0.0;
    let mut substep: usize = 0;
    while t < t_end {
        // Mixture mean from the current densities.
        let mut xbar = 0.0;
        for (g, &rho) in state.iter().zip(rhos) {
            let m1: f64 = g
                .values
                .iter()
                .zip(&centers)
                .map(|(u, y)| u * y)
                .sum::<f64>();
            xbar += rho * m1 * dy;
        }

        // CFL bound over all groups at the current mean.
        let mut amax: f64 = 0.0;
        for &theta in thetas {
            for &y in &centers {
                let a = (-h * force_u(y) + theta * (xbar - y)).abs();
                if a > amax {
                    amax = a;
                }
            }
        }
        let mut dt_stab = dy * dy / (2.0 * d);
        if amax > 0.0 {
            dt_stab = dt_stab.min(dy / amax);
        }
        dt_stab *= 0.8;
        if dt_stab < SUBSTEP_FLOOR {
            return Err(Error::CflSubstepTooSmall { dt: dt_stab });
        }
        let dt = dt_stab.min(t_end - t);

        for (gi, g) in state.iter_mut().enumerate() {
            let txd = thetas[gi] * xbar * dy;
            let sint = &static_int[gi];
            let u = &mut g.values;
            flux[0] = 0.0;
            flux[n] = 0.0;
            for i in 0..n - 1 {
                let pe = (sint[i] + txd) / d;
                flux[i + 1] = dcoef * (bernoulli(-pe) * u[i] - bernoulli(pe) * u[i + 1]);
            }
            let mut clipped = 0.0;
            let mut minval: f64 = 0.0;
            for i in 0..n {
                let next = u[i] + dt * inv_dy * (flux[i] - flux[i + 1]);
                if next < minval {
                    minval = next;
                }
                if next < 0.0 {
                    clipped -= next;
                    u[i] = 0.0;
                } else {
                    u[i] = next;
                }
            }
            if !minval.is_finite() {
                return Err(Error::NonFiniteState { step: substep });
            }
            if minval < NEGATIVITY_FLOOR || clipped * dy > CLIP_BUDGET {
                return Err(Error::NegativeDensity {
                    min: minval,
                    time: g.time + t,
                });
            }
            let leak = (u[0] + u[n - 1]) * dy;
            if leak > LEAK_TOL {
                return Err(Error::BoundaryLeakage {
                    leak,
                    tol: LEAK_TOL,
                });
            }
            let mass: f64 = u.iter().sum::<f64>() * dy;
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(Error::MassNotConserved {
                    drift: mass - 1.0,
                    time: g.time + t,
                });
            }
        }
        t += dt;
        substep += 1;
    }
    for g in state.iter_mut() {
        g.time += t_end;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{equilibrium_density, solve_bistable};

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
    fn pure_diffusion_spreads_gaussian() {
        // h = 0, theta = 0: heat equation, var(t) = var(0) + sigma^2 t.
        let init = DensityGrid::gaussian(-6.0, 6.0, 600, 0.0, 0.04).unwrap();
        let out = evolve_fp(&init, &params(0.0, 0.0, 1.0), 0.5).unwrap();
        let (mean, var) = out.moments();
        println!("heat kernel: mean = {mean:.6}, var = {var:.6}");
        assert!(mean.abs() < 1e-9, "mean stays put, got {mean}");
        assert!((var - 0.54).abs() < 2e-3, "variance grows by sigma^2 t, got {var}");
        assert!((out.mass() - 1.0).abs() < 1e-9);
        assert!((out.time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ou_relaxation_to_stationary_variance() {
        // h = 0: the mean is conserved and the variance relaxes to
        // sigma^2 / (2 theta).
        let init = DensityGrid::gaussian(-4.0, 4.0, 800, 0.3, 0.04).unwrap();
        let out = evolve_fp(&init, &params(0.0, 2.0, 1.0), 3.0).unwrap();
        let (mean, var) = out.moments();
        println!("OU: mean = {mean:.8}, var = {var:.8}");
        assert!((mean - 0.3).abs() < 1e-4, "mean conserved at h = 0, got {mean}");
        assert!((var - 0.25).abs() < 1e-3, "stationary variance, got {var}");
    }

    #[test]
    fn equilibrium_density_is_stationary() {
        let p = params(0.1, 10.0, 1.0);
        let sol = solve_bistable(&p).unwrap();
        let init = equilibrium_density(sol.xi_b, &p, -3.0, 3.0, 480).unwrap();
        let out = evolve_fp(&init, &p, 1.0).unwrap();
        let umax = init.values.iter().cloned().fold(0.0_f64, f64::max);
        let sup: f64 = init
            .values
            .iter()
            .zip(&out.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let (m0, _) = init.moments();
        let (m1, _) = out.moments();
        println!("stationarity: sup drift {sup:.3e} of max {umax:.3}, mean {m0:.8} -> {m1:.8}");
        assert!(
            sup < 5e-3 * umax,
            "equilibrium should not move, sup drift {sup:.3e}"
        );
        assert!((m1 - m0).abs() < 5e-4, "mean pinned at xi_b");
    }

    #[test]
    fn symmetric_initial_stays_symmetric() {
        let n = 400;
        let ga = DensityGrid::gaussian(-4.0, 4.0, n, -0.9, 0.05).unwrap();
        let gb = DensityGrid::gaussian(-4.0, 4.0, n, 0.9, 0.05).unwrap();
        let mixed: Vec<f64> = ga
            .values
            .iter()
            .zip(&gb.values)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let init = DensityGrid::new(-4.0, 4.0, mixed).unwrap();
        let out = evolve_fp(&init, &params(0.1, 10.0, 1.0), 0.5).unwrap();
        let worst = (0..n / 2)
            .map(|i| (out.values[i] - out.values[n - 1 - i]).abs())
            .fold(0.0_f64, f64::max);
        println!("mirror asymmetry after evolution: {worst:.3e}");
        assert!(worst < 1e-9, "even data under even dynamics stays even");
    }

    #[test]
    fn two_group_means_follow_the_linear_ode() {
        // h = 0: group means obey dm_l/dt = theta_l (xbar - m_l) exactly in
        // the continuum. RK4 on that 2-dim ODE is the oracle.
        let groups = GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        let ga = DensityGrid::gaussian(-4.0, 4.0, 800, -0.5, 0.05).unwrap();
        let gb = DensityGrid::gaussian(-4.0, 4.0, 800, 0.5, 0.05).unwrap();
        let out = evolve_fp_system(&[ga, gb], &groups, 1.0, 0.0, 1.0).unwrap();

        let mut m = [-0.5, 0.5];
        let rhs = |m: [f64; 2]| {
            let xbar = 0.5 * (m[0] + m[1]);
            [1.0 * (xbar - m[0]), 3.0 * (xbar - m[1])]
        };
        let steps = 10_000;
        let dt = 1.0 / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(m);
            let k2 = rhs([m[0] + 0.5 * dt * k1[0], m[1] + 0.5 * dt * k1[1]]);
            let k3 = rhs([m[0] + 0.5 * dt * k2[0], m[1] + 0.5 * dt * k2[1]]);
            let k4 = rhs([m[0] + dt * k3[0], m[1] + dt * k3[1]]);
            m[0] += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            m[1] += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        }

        for (l, g) in out.iter().enumerate() {
            let (mean, _) = g.moments();
            println!("group {l}: density mean {mean:.6}, ODE oracle {:.6}", m[l]);
            assert!(
                (mean - m[l]).abs() < 1e-3,
                "group {l} mean {mean} vs oracle {}",
                m[l]
            );
            assert!((g.mass() - 1.0).abs() < 1e-9, "per-group mass conserved");
        }
    }

    #[test]
    fn single_group_system_matches_homogeneous_path() {
        let p = params(0.1, 10.0, 1.0);
        let init = DensityGrid::gaussian(-4.0, 4.0, 400, -0.8, 0.05).unwrap();
        let groups = GroupSpec::new(vec![10.0], vec![1.0]).unwrap();
        let a = evolve_fp(&init, &p, 0.3).unwrap();
        let b = evolve_fp_system(&[init], &groups, 1.0, 0.1, 0.3).unwrap();
        assert_eq!(a.values, b[0].values, "same code path, identical output");
    }

    #[test]
    fn cfl_floor_triggers() {
        let init = DensityGrid::gaussian(-4.0, 4.0, 800, 0.0, 0.05).unwrap();
        let err = evolve_fp(&init, &params(0.0, 1.0, 400.0), 0.1).unwrap_err();
        assert!(matches!(err, Error::CflSubstepTooSmall { .. }), "got {err}");
    }

    #[test]
    fn boundary_leakage_detected() {
        // Diffusion from a packet parked next to the wall reaches it fast.
        let init = DensityGrid::gaussian(-4.0, 4.0, 800, 3.8, 0.01).unwrap();
        let err = evolve_fp(&init, &params(0.0, 0.0, 1.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::BoundaryLeakage { .. }), "got {err}");
    }

    #[test]
    fn grid_invariants_enforced() {
        assert!(DensityGrid::new(-4.0, 4.0, vec![0.0; 4]).is_err(), "too few cells");
        assert!(DensityGrid::new(4.0, -4.0, vec![0.125; 8]).is_err(), "empty domain");
        let unnormalized = vec![1.0; 8];
        assert!(
            DensityGrid::new(-4.0, 4.0, unnormalized).is_err(),
            "mass invariant"
        );
        let ok = DensityGrid::new(-4.0, 4.0, vec![0.125; 8]).unwrap();
        assert!((ok.mass() - 1.0).abs() < 1e-12);
        assert_eq!(ok.n_cells, 8);
    }
}
