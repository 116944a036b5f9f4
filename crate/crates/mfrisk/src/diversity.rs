//! Rate diversity and systemic risk at h = 0.
//!
//! With K groups relaxing at rates Theta_l toward the population mean, the
//! vector of partial averages is an Ornstein-Uhlenbeck system
//!
//! ```text
//! dXbar = M Xbar dt + (sigma/sqrt(N)) R^{-1/2} dW,
//! M_ij = -theta_i (delta_ij - rho_j),    R = diag(rho),
//! ```
//!
//! and the mixture mean at time T is Gaussian with variance
//! sigma_T^2 = (sigma^2/N) int_0^T rho' e^{Ms} R^{-1} (e^{Ms})' rho ds.
//! The transition probability p_T ~ exp(-2 xi_b^2 / sigma_T^2) then
//! compares populations through two channels: diversity moves the
//! equilibria closer together (xi_b falls) and fattens the mean's noise
//! (sigma_T^2 grows), both raising systemic risk. The small-delta
//! expansions around theta_k = theta_bar (1 + delta alpha_k) quantify the
//! two effects through the delta^2 coefficients.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{small_h_equilibrium_div, solve_bistable_div};
use crate::linalg::{matrix_exponential, Mat};
use crate::model::{GroupSpec, HetModelParams};
use crate::quad::integrate_adaptive;
use crate::{Error, Result};

/// The OU system matrices of the partial-average dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityMatrices {
    /// Group fractions, the left null direction's weights.
    pub rho: Vec<f64>,
    /// Drift matrix, rows summing to zero.
    pub m: Vec<Vec<f64>>,
    /// Noise normalization diag(rho).
    pub r: Vec<Vec<f64>>,
}

/// A small-diversity parameterization theta_k = theta_bar (1 + delta
/// alpha_k) with fraction-weighted alphas summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityPerturbation {
    pub theta_bar: f64,
    pub alphas: Vec<f64>,
    pub fractions: Vec<f64>,
    pub delta: f64,
}

impl DiversityPerturbation {
    pub fn new(
        theta_bar: f64,
        alphas: Vec<f64>,
        fractions: Vec<f64>,
        delta: f64,
    ) -> Result<Self> {
        let p = DiversityPerturbation {
            theta_bar,
            alphas,
            fractions,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.theta_bar > 0.0) || !self.theta_bar.is_finite() {
            errs.push(format!("theta_bar must be positive (got {})", self.theta_bar));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            errs.push(format!("delta must be nonnegative (got {})", self.delta));
        }
        if self.alphas.len() != self.fractions.len() || self.alphas.is_empty() {
            errs.push(format!(
                "need matching nonempty alphas and fractions (got {} and {})",
                self.alphas.len(),
                self.fractions.len()
            ));
        } else {
            let frac_sum: f64 = self.fractions.iter().sum();
            if self.fractions.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
                errs.push("fractions must be positive and finite".to_string());
            } else if (frac_sum - 1.0).abs() > 1e-12 {
                errs.push(format!("fractions must sum to 1 (got {frac_sum})"));
            }
            let weighted: f64 = self
                .alphas
                .iter()
                .zip(&self.fractions)
                .map(|(a, r)| a * r)
                .sum();
            if weighted.abs() >= 1e-12 {
                errs.push(format!(
                    "fraction-weighted alphas must sum to zero (got {weighted:.3e})"
                ));
            }
            for (k, a) in self.alphas.iter().enumerate() {
                let theta = self.theta_bar * (1.0 + self.delta * a);
                if !(theta > 0.0) {
                    errs.push(format!(
                        "group {k} rate theta_bar (1 + delta alpha) = {theta} is not positive"
                    ));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Second moment of the perturbation, sum rho_k alpha_k^2.
    pub fn m2(&self) -> f64 {
        self.alphas
            .iter()
            .zip(&self.fractions)
            .map(|(a, r)| r * a * a)
            .sum()
    }

    /// Realizes the perturbed rates as a group specification. Fails at
    /// delta = 0 where all rates coincide.
    pub fn to_groups(&self) -> Result<GroupSpec> {
        let thetas: Vec<f64> = self
            .alphas
            .iter()
            .map(|a| self.theta_bar * (1.0 + self.delta * a))
            .collect();
        GroupSpec::new(thetas, self.fractions.clone())
    }
}

/// Expansion values truncated at delta^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityExpansion {
    pub xi_b_squared: f64,
    pub sigma_t_squared: f64,
    pub log_p: f64,
}

/// Builds the drift and noise matrices of the partial-average OU system.
/// The diagonal of M is set to the negative off-diagonal row sum, so rows
/// cancel exactly in that summation order.
pub fn build_matrices(groups: &GroupSpec) -> Result<DiversityMatrices> {
    groups.validate()?;
    let k = groups.k();
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        let mut off_sum = 0.0;
        for j in 0..k {
            if i != j {
                let v = groups.thetas[i] * groups.fractions[j];
                m[i][j] = v;
                off_sum += v;
            }
        }
        m[i][i] = -off_sum;
    }
    // Null-space check in the construction's own summation order; a
    // violation is a construction bug, not a caller error.
    for (i, row) in m.iter().enumerate() {
        let mut off = 0.0;
        for (j, v) in row.iter().enumerate() {
            if i != j {
                off += v;
            }
        }
        assert!(
            off + row[i] == 0.0,
            "drift row {i} does not annihilate the uniform vector"
        );
    }
    let mut r = vec![vec![0.0; k]; k];
    for (l, rho) in groups.fractions.iter().enumerate() {
        r[l][l] = *rho;
    }
    Ok(DiversityMatrices {
        rho: groups.fractions.clone(),
        m,
        r,
    })
}

/// Variance of the mixture mean at time T under the partial-average OU
/// system, by adaptive quadrature of the matrix-exponential integrand.
pub fn sigma_t_squared(groups: &GroupSpec, sigma: f64, n_agents: usize, t: f64) -> Result<f64> {
    let mats = build_matrices(groups)?;
    let mut errs = Vec::new();
    if !(sigma > 0.0) || !sigma.is_finite() {
        errs.push(format!("sigma must be positive (got {sigma})"));
    }
    if n_agents == 0 {
        errs.push("n_agents must be at least 1".to_string());
    }
    if !(t > 0.0) || !t.is_finite() {
        errs.push(format!("horizon must be positive (got {t})"));
    }
    if !errs.is_empty() {
        return Err(Error::InvalidParams(errs));
    }
    let k = groups.k();
    let mut m = Mat::zeros(k);
    for i in 0..k {
        for j in 0..k {
            m.set(i, j, mats.m[i][j]);
        }
    }
    let rho = &mats.rho;
    let integrand = |s: f64| {
        let e = matrix_exponential(&m.scaled(s));
        // w = (e^{Ms})' rho, then w' R^{-1} w.
        (0..k)
            .map(|i| {
                let w: f64 = (0..k).map(|j| rho[j] * e.get(j, i)).sum();
                w * w / rho[i]
            })
            .sum::<f64>()
    };
    let integral = integrate_adaptive(&integrand, 0.0, t, 1e-10)?;
    Ok(sigma * sigma / n_agents as f64 * integral)
}

/// Transition probability exp(-2 xi_b^2 / sigma_T^2) with the leading-order
/// (h -> 0) diverse equilibrium. Returns (probability, log-probability).
pub fn transition_probability_diverse(
    groups: &GroupSpec,
    sigma: f64,
    n_agents: usize,
    t: f64,
) -> Result<(f64, f64)> {
    let xi_b = small_h_equilibrium_div(groups, sigma)?;
    let var = sigma_t_squared(groups, sigma, n_agents, t)?;
    let log_p = -2.0 * xi_b * xi_b / var;
    Ok((log_p.exp(), log_p))
}

/// As [`transition_probability_diverse`] but with the equilibrium solved
/// numerically at a positive h. This goes beyond the leading-order
/// derivation behind the formula; treat it as exploratory.
pub fn transition_probability_diverse_at_h(
    groups: &GroupSpec,
    sigma: f64,
    n_agents: usize,
    t: f64,
    h: f64,
) -> Result<(f64, f64)> {
    let het = HetModelParams {
        h,
        sigma,
        n_agents,
        horizon: t,
        dt: (0.1 / groups.thetas.iter().cloned().fold(1.0_f64, f64::max)).min(0.02),
        groups: groups.clone(),
    };
    let sol = solve_bistable_div(&het)?;
    if !sol.bistable {
        return Err(Error::NoBistableEquilibria(
            "no transition barrier without bistability".to_string(),
        ));
    }
    let var = sigma_t_squared(groups, sigma, n_agents, t)?;
    let log_p = -2.0 * sol.xi_b * sol.xi_b / var;
    Ok((log_p.exp(), log_p))
}

/// Closed form of int_0^T (1 - e^{-theta_bar s})^2 ds.
pub fn relaxation_integral(theta_bar: f64, t: f64) -> f64 {
    t - 2.0 * (1.0 - (-theta_bar * t).exp()) / theta_bar
        + (1.0 - (-2.0 * theta_bar * t).exp()) / (2.0 * theta_bar)
}

/// The delta^2-truncated expansions of xi_b^2, sigma_T^2, and log p_T
/// around the homogeneous population.
pub fn diversity_expansion(
    pert: &DiversityPerturbation,
    sigma: f64,
    n_agents: usize,
    t: f64,
) -> Result<DiversityExpansion> {
    pert.validate()?;
    let mut errs = Vec::new();
    if !(sigma > 0.0) || !sigma.is_finite() {
        errs.push(format!("sigma must be positive (got {sigma})"));
    }
    if n_agents == 0 {
        errs.push("n_agents must be at least 1".to_string());
    }
    if !(t > 0.0) || !t.is_finite() {
        errs.push(format!("horizon must be positive (got {t})"));
    }
    if !errs.is_empty() {
        return Err(Error::InvalidParams(errs));
    }
    let s3 = 1.5 * sigma * sigma / pert.theta_bar;
    if s3 >= 1.0 {
        return Err(Error::NoBistableEquilibria(format!(
            "3 sigma^2 / (2 theta_bar) = {s3} >= 1"
        )));
    }
    let m2 = pert.m2();
    let d2 = pert.delta * pert.delta;
    let n = n_agents as f64;
    let ibar_over_t = relaxation_integral(pert.theta_bar, t) / t;

    let xi_b_squared = (1.0 - s3) - d2 * m2 * s3;
    let sigma_t_squared = sigma * sigma * t / n * (1.0 + d2 * m2 * ibar_over_t);
    let log_p = -(2.0 * n / (sigma * sigma * t)) * ((1.0 - s3) - d2 * m2 * (s3 + ibar_over_t));
    Ok(DiversityExpansion {
        xi_b_squared,
        sigma_t_squared,
        log_p,
    })
}
