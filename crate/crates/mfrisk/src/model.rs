//! Parameter and state types shared by every other module.
//!
//! The homogeneous model is parameterized by (h, theta, sigma, N, T, dt);
//! the heterogeneous model replaces the single mean-reversion rate theta by
//! K distinct group rates Theta_l with population fractions rho_l.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Drift force U(y) = y^3 - y of the double-well potential.
///
/// U is odd and vanishes at the well bottoms +-1 and the barrier top 0.
#[inline]
pub fn force_u(y: f64) -> f64 {
    y * y * y - y
}

/// Double-well potential V(y) = y^4/4 - y^2/2, with V' = U identically.
///
/// V is even with minima V(+-1) = -1/4.
#[inline]
pub fn potential_v(y: f64) -> f64 {
    0.25 * y.powi(4) - 0.5 * y * y
}

/// Parameters of the homogeneous model.
///
/// `h` scales the intrinsic double-well drift, `theta` the mean-reversion
/// toward the empirical mean, `sigma` the noise. `n_agents`, `horizon` and
/// `dt` control simulation size and the Euler discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub h: f64,
    pub theta: f64,
    pub sigma: f64,
    pub n_agents: usize,
    pub horizon: f64,
    pub dt: f64,
}

impl ModelParams {
    /// Variance sigma^2 / (2 theta) of the h = 0 equilibrium density.
    ///
    /// Requires theta > 0; callers in the h = 0 theory guarantee it.
    #[inline]
    pub fn equilibrium_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }

    /// Checks every invariant and reports all violations, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        check_finite(&mut errs, "h", self.h);
        check_finite(&mut errs, "theta", self.theta);
        check_finite(&mut errs, "sigma", self.sigma);
        check_finite(&mut errs, "horizon", self.horizon);
        check_finite(&mut errs, "dt", self.dt);
        if self.h < 0.0 {
            errs.push(format!("h must be nonnegative (got {})", self.h));
        }
        if self.theta < 0.0 {
            errs.push(format!("theta must be nonnegative (got {})", self.theta));
        }
        if !(self.sigma > 0.0) {
            errs.push(format!("sigma must be positive (got {})", self.sigma));
        }
        if self.n_agents < 1 {
            errs.push("n_agents must be at least 1".to_string());
        }
        if !(self.horizon > 0.0) {
            errs.push(format!("horizon must be positive (got {})", self.horizon));
        }
        if !(self.dt > 0.0) {
            errs.push(format!("dt must be positive (got {})", self.dt));
        }
        if self.dt > 0.0 && self.horizon > 0.0 && self.dt >= self.horizon {
            errs.push(format!(
                "dt exceeds horizon (dt = {}, horizon = {})",
                self.dt, self.horizon
            ));
        }
        check_step_stability(&mut errs, self.dt, self.theta);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Number of Euler steps over the horizon.
    #[inline]
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// K groups of mean-reversion rates with population fractions.
///
/// Serializes as an array of `{"theta": .., "fraction": ..}` objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<GroupEntry>", into = "Vec<GroupEntry>")]
pub struct GroupSpec {
    /// Rates Theta_1..Theta_K, each positive, pairwise distinct.
    pub thetas: Vec<f64>,
    /// Fractions rho_1..rho_K, each positive, summing to 1 within 1e-12.
    pub fractions: Vec<f64>,
}

/// JSON shape of one group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupEntry {
    pub theta: f64,
    pub fraction: f64,
}

impl From<Vec<GroupEntry>> for GroupSpec {
    fn from(entries: Vec<GroupEntry>) -> Self {
        GroupSpec {
            thetas: entries.iter().map(|e| e.theta).collect(),
            fractions: entries.iter().map(|e| e.fraction).collect(),
        }
    }
}

impl From<GroupSpec> for Vec<GroupEntry> {
    fn from(g: GroupSpec) -> Self {
        g.thetas
            .iter()
            .zip(&g.fractions)
            .map(|(&theta, &fraction)| GroupEntry { theta, fraction })
            .collect()
    }
}

impl GroupSpec {
    pub fn new(thetas: Vec<f64>, fractions: Vec<f64>) -> Result<Self> {
        let g = GroupSpec { thetas, fractions };
        g.validate()?;
        Ok(g)
    }

    /// Number of groups K.
    #[inline]
    pub fn k(&self) -> usize {
        self.thetas.len()
    }

    /// Mean rate sum rho_l Theta_l, the homogeneous comparison point.
    pub fn mean_theta(&self) -> f64 {
        self.thetas
            .iter()
            .zip(&self.fractions)
            .map(|(t, r)| t * r)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.thetas.is_empty() {
            errs.push("at least one group is required".to_string());
        }
        if self.thetas.len() != self.fractions.len() {
            errs.push(format!(
                "thetas and fractions must have equal length (got {} and {})",
                self.thetas.len(),
                self.fractions.len()
            ));
        }
        for (l, t) in self.thetas.iter().enumerate() {
            if !t.is_finite() || *t <= 0.0 {
                errs.push(format!("group theta must be positive (group {l}, got {t})"));
            }
        }
        for (l, r) in self.fractions.iter().enumerate() {
            if !r.is_finite() || *r <= 0.0 {
                errs.push(format!(
                    "group fraction must be positive (group {l}, got {r})"
                ));
            }
        }
        for i in 0..self.thetas.len() {
            for j in (i + 1)..self.thetas.len() {
                if self.thetas[i] == self.thetas[j] {
                    errs.push(format!(
                        "group thetas must be pairwise distinct (groups {i} and {j} both {})",
                        self.thetas[i]
                    ));
                }
            }
        }
        let sum: f64 = self.fractions.iter().sum();
        if self.thetas.len() == self.fractions.len()
            && !self.fractions.is_empty()
            && (sum - 1.0).abs() > 1e-12
        {
            errs.push(format!("group fractions must sum to 1 (got {sum})"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }
}

/// Parameters of the heterogeneous model: the homogeneous set with theta
/// replaced by a group spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HetModelParams {
    pub h: f64,
    pub sigma: f64,
    pub n_agents: usize,
    pub horizon: f64,
    pub dt: f64,
    pub groups: GroupSpec,
}

impl HetModelParams {
    /// Checks every invariant of the base parameters and the group spec.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        check_finite(&mut errs, "h", self.h);
        check_finite(&mut errs, "sigma", self.sigma);
        check_finite(&mut errs, "horizon", self.horizon);
        check_finite(&mut errs, "dt", self.dt);
        if self.h < 0.0 {
            errs.push(format!("h must be nonnegative (got {})", self.h));
        }
        if !(self.sigma > 0.0) {
            errs.push(format!("sigma must be positive (got {})", self.sigma));
        }
        if self.n_agents < 1 {
            errs.push("n_agents must be at least 1".to_string());
        }
        if !(self.horizon > 0.0) {
            errs.push(format!("horizon must be positive (got {})", self.horizon));
        }
        if !(self.dt > 0.0) {
            errs.push(format!("dt must be positive (got {})", self.dt));
        }
        if self.dt > 0.0 && self.horizon > 0.0 && self.dt >= self.horizon {
            errs.push(format!(
                "dt exceeds horizon (dt = {}, horizon = {})",
                self.dt, self.horizon
            ));
        }
        let max_theta = self.groups.thetas.iter().cloned().fold(0.0, f64::max);
        check_step_stability(&mut errs, self.dt, max_theta);
        if let Err(Error::InvalidParams(mut group_errs)) = self.groups.validate() {
            errs.append(&mut group_errs);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Homogeneous parameter set at the mean rate, for comparisons.
    pub fn homogeneous_at_mean(&self) -> ModelParams {
        ModelParams {
            h: self.h,
            theta: self.groups.mean_theta(),
            sigma: self.sigma,
            n_agents: self.n_agents,
            horizon: self.horizon,
            dt: self.dt,
        }
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// Instantaneous state of the particle system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub positions: Vec<f64>,
    pub time: f64,
}

impl SystemState {
    pub fn new(positions: Vec<f64>, time: f64) -> Self {
        SystemState { positions, time }
    }

    /// All agents at the same value, time zero.
    pub fn uniform(n: usize, value: f64) -> Self {
        SystemState {
            positions: vec![value; n],
            time: 0.0,
        }
    }

    /// Empirical mean (1/N) sum x_j.
    pub fn empirical_mean(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.positions.len() as f64
    }
}

fn check_finite(errs: &mut Vec<String>, name: &str, value: f64) {
    if !value.is_finite() {
        errs.push(format!("{name} must be finite (got {value})"));
    }
}

///// Explicit-scheme stability guard: dt * max(theta, 1) <= 0.2.
///
/// The relaxation rate of the linearized step is about 2 theta, so this keeps
/// the Euler amplification factor within (0, 1). The small slack absorbs
/// boundary cases like dt = 0.02 at theta = 10.
fn check_step_stability(errs: &mut Vec<String>, dt: f64, theta: f64) {
    if dt > 0.0 && dt * theta.max(1.0) > 0.2 + 1e-12 {
        errs.push(format!(
            "dt too large for explicit-scheme stability (dt = {dt}, effective rate {})",
            theta.max(1.0)
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn force_and_potential_values() {
        assert_eq!(force_u(0.0), 0.0);
        assert_eq!(force_u(1.0), 0.0);
        assert_eq!(force_u(-1.0), 0.0);
        assert_eq!(force_u(0.5), -0.375);
        assert_eq!(potential_v(0.0), 0.0);
        assert_eq!(potential_v(1.0), -0.25);
        assert_eq!(potential_v(-1.0), -0.25);
    }

    #[test]
    fn potential_gradient_is_force() {
        let eps = 1e-5;
        for i in 0..100 {
            let y = -2.5 + 5.0 * (i as f64) / 99.0;
            let fd = (potential_v(y + eps) - potential_v(y - eps)) / (2.0 * eps);
            let u = force_u(y);
            let scale = u.abs().max(1.0);
            assert!(
                (fd - u).abs() / scale < 1e-6,
                "V' != U at y = {y}: fd = {fd}, U = {u}"
            );
        }
    }

    #[test]
    fn paper_regime_params_are_valid() {
        let p = ModelParams {
            h: 0.1,
            theta: 10.0,
            sigma: 1.0,
            n_agents: 100,
            horizon: 100.0,
            dt: 0.02,
        };
        p.validate().expect("reference parameter set must validate");
    }

    #[test]
    fn validation_reports_every_violation() {
        let p = ModelParams {
            h: -0.1,
            theta: 10.0,
            sigma: 0.0,
            n_agents: 0,
            horizon: 100.0,
            dt: 200.0,
        };
        let err = p.validate().unwrap_err();
        let Error::InvalidParams(msgs) = err else {
            panic!("expected InvalidParams");
        };
        let joined = msgs.join("; ");
        assert!(joined.contains("sigma must be positive"), "{joined}");
        assert!(joined.contains("dt exceeds horizon"), "{joined}");
        assert!(joined.contains("h must be nonnegative"), "{joined}");
        assert!(joined.contains("n_agents must be at least 1"), "{joined}");
        assert!(msgs.len() >= 4, "all violations reported: {joined}");
    }

    #[test]
    fn stability_guard_rejects_coarse_dt() {
        let p = ModelParams {
            h: 0.1,
            theta: 10.0,
            sigma: 1.0,
            n_agents: 10,
            horizon: 100.0,
            dt: 0.05,
        };
        assert!(p.validate().is_err(), "dt = 0.05 at theta = 10 must fail");
    }

    #[test]
    fn group_spec_validation() {
        let g = GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(g.k(), 2);
        assert!((g.mean_theta() - 2.0).abs() < 1e-15);

        assert!(GroupSpec::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.6]).is_err());
        assert!(GroupSpec::new(vec![1.0, -3.0], vec![0.5, 0.5]).is_err());
        assert!(GroupSpec::new(vec![], vec![]).is_err());
    }

    #[test]
    fn empirical_mean_is_average() {
        let s = SystemState::new(vec![1.0, 2.0, 3.0, 4.0], 0.0);
        assert_eq!(s.empirical_mean(), 2.5);
    }

    #[test]
    fn params_json_round_trip() {
        let p = ModelParams {
            h: 0.1,
            theta: 10.0,
            sigma: 1.0,
            n_agents: 100,
            horizon: 100.0,
            dt: 0.02,
        };
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"n_agents\""));
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);

        let h = HetModelParams {
            h: 0.0,
            sigma: 1.0,
            n_agents: 100,
            horizon: 5.0,
            dt: 0.002,
            groups: GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap(),
        };
        let json = serde_json::to_string(&h).unwrap();
        assert!(json.contains("\"groups\""));
        assert!(
            json.contains("{\"theta\":1.0,\"fraction\":0.5}"),
            "groups serialize as theta/fraction objects: {json}"
        );
        let back: HetModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(h, back);
    }
}
