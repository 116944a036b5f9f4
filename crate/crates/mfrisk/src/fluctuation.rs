//! Linearized fluctuation theory around the resting equilibrium.
//!
//! Around a stable equilibrium the centered agents follow the linear system
//!
//! ```text
//! dz_j = -(theta + 2h) z_j dt + theta zbar dt + sigma dw_j,
//! ```
//!
//! whose mean and single-agent variances admit closed forms. These express
//! the individual-vs-systemic contrast: a single agent's stationary
//! variance sigma^2 / (2 (theta + 2h)) shrinks as the herding rate theta
//! grows, while the systemic transition exponent worsens, so tighter
//! coupling trades individual safety for collective fragility.

use rand::prelude::*;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::solve_bistable;
use crate::model::ModelParams;
use crate::simulate::replica_rng;
use crate::{Error, Result};

/// Variance magnitudes at or below this count as inside the linearization
/// regime.
pub const REGIME_TOL: f64 = 0.25;

/// Closed-form fluctuation variances at a time t together with their
/// stationary values and regime flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub t: f64,
    /// Variance of the centered mean, sigma^2/N (1 - e^{-4ht}).
    pub var_mean: f64,
    /// Large-N single-agent variance, sigma^2/(2(theta+2h)) (1 - e^{-2(theta+2h)t}).
    pub var_agent_limit: f64,
    pub var_mean_stationary: f64,
    pub var_agent_stationary: f64,
    /// Whether the stationary mean variance is small enough to trust the
    /// linearization.
    pub mean_regime_ok: bool,
    /// Same flag for the single-agent variance.
    pub agent_regime_ok: bool,
}

/// Monte Carlo check of the closed forms on the linearized system itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationValidation {
    pub report: FluctuationReport,
    pub replicas: usize,
    pub seed: u64,
    pub var_mean_mc: f64,
    pub var_agent_mc: f64,
    /// Standard error of the mean-variance estimate.
    pub se_mean: f64,
    /// Standard error of the agent-variance estimate.
    pub se_agent: f64,
    /// Present when the parameters sit outside the linearization regime.
    pub warning: Option<String>,
}

/// One row of the individual-vs-systemic comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub h: f64,
    pub theta: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub n_agents: usize,
    /// Stationary single-agent variance sigma^2/(2(theta+2h)).
    pub individual_var: f64,
    /// Systemic exponent 2 xi_b^2 / (sigma^2 T).
    pub systemic_rate: f64,
    pub n_times_rate: f64,
    /// exp(-N * rate), the crude transition probability.
    pub p_systemic: f64,
    /// The ratio sigma^2 / (2 theta) that pins the equilibria.
    pub s_ratio: f64,
    /// Set when the previous row shares s_ratio: whether individual risk
    /// stayed within 5% while N * rate strictly fell.
    pub tradeoff_vs_prev: Option<bool>,
}

fn validate_fluctuation_params(params: &ModelParams, t: f64) -> Result<()> {
    // sigma = 0 is meaningful here (the noiseless system has zero
    // variance), so this is deliberately looser than ModelParams::validate.
    let mut errs = Vec::new();
    if !(params.theta > 0.0) || !params.theta.is_finite() {
        errs.push(format!("theta must be positive (got {})", params.theta));
    }
    if params.sigma < 0.0 || !params.sigma.is_finite() {
        errs.push(format!("sigma must be nonnegative (got {})", params.sigma));
    }
    if !(params.h > 0.0) || !params.h.is_finite() {
        errs.push(format!("h must be positive (got {})", params.h));
    }
    if params.n_agents == 0 {
        errs.push("n_agents must be at least 1".to_string());
    }
    if t < 0.0 || !t.is_finite() {
        errs.push(format!("t must be nonnegative (got {t})"));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParams(errs))
    }
}

/// Evaluates the closed-form variance curves at time t.
pub fn linearized_variances(params: &ModelParams, t: f64) -> Result<FluctuationReport> {
    validate_fluctuation_params(params, t)?;
    let s2 = params.sigma * params.sigma;
    let n = params.n_agents as f64;
    let rate_mean = 4.0 * params.h;
    let rate_agent = 2.0 * (params.theta + 2.0 * params.h);
    let var_mean_stationary = s2 / n;
    let var_agent_stationary = s2 / rate_agent;
    Ok(FluctuationReport {
        t,
        var_mean: var_mean_stationary * (1.0 - (-rate_mean * t).exp()),
        var_agent_limit: var_agent_stationary * (1.0 - (-rate_agent * t).exp()),
        var_mean_stationary,
        var_agent_stationary,
        mean_regime_ok: var_mean_stationary <= REGIME_TOL,
        agent_regime_ok: var_agent_stationary <= REGIME_TOL,
    })
}

/// Simulates the linearized system from zero and compares the sample
/// variances of zbar(T) and z_1(T) with the closed forms. A regime
/// violation attaches a warning rather than failing.
pub fn validate_fluctuations(
    params: &ModelParams,
    replicas: usize,
    seed: u64,
) -> Result<FluctuationValidation> {
    let report = linearized_variances(params, params.horizon)?;
    let mut errs = Vec::new();
    if replicas < 2 {
        errs.push(format!("need at least 2 replicas (got {replicas})"));
    }
    if !(params.dt > 0.0) || params.dt > params.horizon {
        errs.push(format!(
            "bad time discretization (dt = {}, horizon = {})",
            params.dt, params.horizon
        ));
    }
    if params.dt * params.theta.max(1.0) > 0.2 + 1e-12 {
        errs.push(format!(
            "dt too large for explicit-scheme stability (dt = {})",
            params.dt
        ));
    }
    if !errs.is_empty() {
        return Err(Error::InvalidParams(errs));
    }

    let n = params.n_agents;
    let n_steps = params.n_steps();
    let decay = params.theta + 2.0 * params.h;
    let noise = params.sigma * params.dt.sqrt();
    let finals: Vec<(f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let mut z = vec![0.0_f64; n];
            for _ in 0..n_steps {
                let zbar = z.iter().sum::<f64>() / n as f64;
                for v in z.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *v += (-decay * *v + params.theta * zbar) * params.dt + noise * g;
                }
            }
            let zbar = z.iter().sum::<f64>() / n as f64;
            (zbar, z[0])
        })
        .collect();

    let sample_var = |pick: &dyn Fn(&(f64, f64)) -> f64| {
        let m = finals.iter().map(pick).sum::<f64>() / replicas as f64;
        finals
            .iter()
            .map(|p| {
                let d = pick(p) - m;
                d * d
            })
            .sum::<f64>()
            / (replicas - 1) as f64
    };
    let var_mean_mc = sample_var(&|p: &(f64, f64)| p.0);
    let var_agent_mc = sample_var(&|p: &(f64, f64)| p.1);
    let se_factor = (2.0 / (replicas as f64 - 1.0)).sqrt();
    let warning = if report.mean_regime_ok && report.agent_regime_ok {
        None
    } else {
        Some(format!(
            "linearization regime violated: stationary variances {:.4} and {:.4} against tolerance {REGIME_TOL}",
            report.var_mean_stationary, report.var_agent_stationary
        ))
    };
    Ok(FluctuationValidation {
        report,
        replicas,
        seed,
        var_mean_mc,
        var_agent_mc,
        se_mean: var_mean_mc * se_factor,
        se_agent: var_agent_mc * se_factor,
        warning,
    })
}

/// Closed-form and Monte Carlo variance curves along a time grid. Times
/// are snapped to the simulation step grid; the `times` field holds the
/// snapped values actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationCurve {
    pub times: Vec<f64>,
    pub var_mean_cf: Vec<f64>,
    pub var_agent_cf: Vec<f64>,
    /// Monte Carlo columns; present after a validation pass.
    pub var_mean_mc: Option<Vec<f64>>,
    pub var_agent_mc: Option<Vec<f64>>,
    pub se_mean: Option<Vec<f64>>,
    pub se_agent: Option<Vec<f64>>,
    /// Zero when no Monte Carlo pass ran.
    pub replicas: usize,
    pub seed: u64,
    pub warning: Option<String>,
}

fn snap_grid(params: &ModelParams, t_grid: &[f64]) -> Result<Vec<usize>> {
    let mut errs = Vec::new();
    if t_grid.is_empty() {
        errs.push("time grid must not be empty".to_string());
    }
    for w in t_grid.windows(2) {
        if !(w[1] >= w[0]) {
            errs.push(format!("time grid must be nondecreasing ({} after {})", w[1], w[0]));
            break;
        }
    }
    for &t in t_grid {
        if !t.is_finite() || t < 0.0 || t > params.horizon + 0.5 * params.dt {
            errs.push(format!("time {t} outside [0, horizon = {}]", params.horizon));
            break;
        }
    }
    if !errs.is_empty() {
        return Err(Error::InvalidParams(errs));
    }
    Ok(t_grid
        .iter()
        .map(|t| ((t / params.dt).round() as usize).min(params.n_steps()))
        .collect())
}

/// Evaluates the closed-form curves on a time grid, snapped to the step
/// grid of `params`. No simulation runs; the Monte Carlo columns are None.
pub fn fluctuation_curve(params: &ModelParams, t_grid: &[f64]) -> Result<FluctuationCurve> {
    validate_fluctuation_params(params, 0.0)?;
    let indices = snap_grid(params, t_grid)?;
    let times: Vec<f64> = indices.iter().map(|&i| i as f64 * params.dt).collect();
    let reports: Vec<FluctuationReport> = times
        .iter()
        .map(|&t| linearized_variances(params, t))
        .collect::<Result<_>>()?;
    let warning = reports.first().and_then(|r| {
        if r.mean_regime_ok && r.agent_regime_ok {
            None
        } else {
            Some(format!(
                "linearization regime violated: stationary variances {:.4} and {:.4} against tolerance {REGIME_TOL}",
                r.var_mean_stationary, r.var_agent_stationary
            ))
        }
    });
    Ok(FluctuationCurve {
        times,
        var_mean_cf: reports.iter().map(|r| r.var_mean).collect(),
        var_agent_cf: reports.iter().map(|r| r.var_agent_limit).collect(),
        var_mean_mc: None,
        var_agent_mc: None,
        se_mean: None,
        se_agent: None,
        replicas: 0,
        seed: 0,
        warning,
    })
}

/// As [`validate_fluctuations`] but recording the sample variances at every
/// grid time, not only at the horizon. The per-replica stepping and stream
/// layout match [`validate_fluctuations`] exactly, so a grid ending at the
/// horizon sees the same final samples; the variance reduction differs only
/// in summation order, leaving the two results equal to rounding.
pub fn validate_fluctuations_grid(
    params: &ModelParams,
    t_grid: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<FluctuationCurve> {
    let mut curve = fluctuation_curve(params, t_grid)?;
    let indices = snap_grid(params, t_grid)?;
    if replicas < 2 {
        return Err(Error::InvalidParams(vec![format!(
            "need at least 2 replicas (got {replicas})"
        )]));
    }
    if params.dt * params.theta.max(1.0) > 0.2 + 1e-12 {
        return Err(Error::InvalidParams(vec![format!(
            "dt too large for explicit-scheme stability (dt = {})",
            params.dt
        )]));
    }

    let n = params.n_agents;
    let g = indices.len();
    let last = *indices.last().expect("grid is nonempty");
    let decay = params.theta + 2.0 * params.h;
    let noise = params.sigma * params.dt.sqrt();
    // Per-replica samples of (zbar, z_1) at each grid point, collected in
    // replica order and merged sequentially so the floating-point
    // summation order never depends on the thread count.
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r as u64);
            let mut z = vec![0.0_f64; n];
            let mut zbar_at = Vec::with_capacity(g);
            let mut z0_at = Vec::with_capacity(g);
            let mut cursor = 0;
            for step in 0..=last {
                if step > 0 {
                    let zbar = z.iter().sum::<f64>() / n as f64;
                    for v in z.iter_mut() {
                        let gsn: f64 = rng.sample(StandardNormal);
                        *v += (-decay * *v + params.theta * zbar) * params.dt + noise * gsn;
                    }
                }
                while cursor < g && indices[cursor] == step {
                    let zbar = z.iter().sum::<f64>() / n as f64;
                    zbar_at.push(zbar);
                    z0_at.push(z[0]);
                    cursor += 1;
                }
            }
            (zbar_at, z0_at)
        })
        .collect();

    let mut sm = vec![0.0_f64; g];
    let mut sm2 = vec![0.0_f64; g];
    let mut sa = vec![0.0_f64; g];
    let mut sa2 = vec![0.0_f64; g];
    for (zbar_at, z0_at) in &samples {
        for i in 0..g {
            sm[i] += zbar_at[i];
            sm2[i] += zbar_at[i] * zbar_at[i];
            sa[i] += z0_at[i];
            sa2[i] += z0_at[i] * z0_at[i];
        }
    }

    let rf = replicas as f64;
    let se_factor = (2.0 / (rf - 1.0)).sqrt();
    let var_of = |sum: &[f64], sq: &[f64]| -> Vec<f64> {
        sum.iter()
            .zip(sq)
            .map(|(&s, &s2)| ((s2 - s * s / rf) / (rf - 1.0)).max(0.0))
            .collect()
    };
    let var_mean_mc = var_of(&sm, &sm2);
    let var_agent_mc = var_of(&sa, &sa2);
    curve.se_mean = Some(var_mean_mc.iter().map(|v| v * se_factor).collect());
    curve.se_agent = Some(var_agent_mc.iter().map(|v| v * se_factor).collect());
    curve.var_mean_mc = Some(var_mean_mc);
    curve.var_agent_mc = Some(var_agent_mc);
    curve.replicas = replicas;
    curve.seed = seed;
    Ok(curve)
}

/// Builds the individual-vs-systemic comparison table over a parameter
/// grid. Rows sharing sigma^2 / (2 theta) with their predecessor get the
/// tradeoff flag: individual risk steady, systemic risk rising.
pub fn risk_comparison_report(params_grid: &[ModelParams]) -> Result<Vec<RiskRow>> {
    let mut rows: Vec<RiskRow> = Vec::with_capacity(params_grid.len());
    for params in params_grid {
        params.validate()?;
        let sol = solve_bistable(params)?;
        if !sol.bistable {
            return Err(Error::NoBistableEquilibria(format!(
                "grid point theta = {}, sigma = {} has a unique equilibrium",
                params.theta, params.sigma
            )));
        }
        let s2 = params.sigma * params.sigma;
        let individual_var = s2 / (2.0 * (params.theta + 2.0 * params.h));
        let systemic_rate = 2.0 * sol.xi_b * sol.xi_b / (s2 * params.horizon);
        let n_times_rate = params.n_agents as f64 * systemic_rate;
        let s_ratio = s2 / (2.0 * params.theta);
        let tradeoff_vs_prev = rows.last().and_then(|prev: &RiskRow| {
            if (prev.s_ratio - s_ratio).abs() < 1e-12 {
                let steady = (individual_var / prev.individual_var - 1.0).abs() < 0.05;
                Some(steady && n_times_rate < prev.n_times_rate)
            } else {
                None
            }
        });
        rows.push(RiskRow {
            h: params.h,
            theta: params.theta,
            sigma: params.sigma,
            horizon: params.horizon,
            n_agents: params.n_agents,
            individual_var,
            systemic_rate,
            n_times_rate,
            p_systemic: (-n_times_rate).exp(),
            s_ratio,
            tradeoff_vs_prev,
        });
    }
    Ok(rows)
}
