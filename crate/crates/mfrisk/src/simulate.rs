//! Finite-population Monte Carlo for the interacting system.
//!
//! N agents follow the coupled Euler scheme
//!
//! ```text
//! x_j += [ -h U(x_j) + theta (xbar - x_j) ] dt + sigma sqrt(dt) g_j,
//! ```
//!
//! with the empirical mean xbar frozen at its pre-step value within each
//! step. Group-structured populations use per-agent rates Theta_l assigned
//! in contiguous blocks by largest-remainder apportionment.
//!
//! Randomness is reproducible and thread-invariant: a replica draws from
//! ChaCha8 keyed by the master seed with the replica index as the stream,
//! and Gaussians are consumed step-major, agent-minor. Ensembles fan the
//! replicas out over a thread pool and collect by index, so the thread
//! count never changes any number.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_bistable, solve_bistable_div};
use crate::model::{force_u, GroupSpec, HetModelParams, ModelParams, SystemState};
use crate::{Error, Result};

/// Default hysteresis band, as a fraction of xi_b.
pub const DEFAULT_BAND: f64 = 0.5;

/// z-score of the two-sided 95% normal interval.
const Z95: f64 = 1.959963984540054;

/// Where the population starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Every agent at the given value.
    AllAt(f64),
    /// Every agent at -xi_b, the normal-state equilibrium.
    NegativeEquilibrium,
    /// Explicit positions, one per agent.
    Custom(Vec<f64>),
}

/// A recorded mean path, with per-group means when groups exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    /// One series per group, aligned with `times`.
    pub group_means: Option<Vec<Vec<f64>>>,
}

/// Direction of a basin change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionDirection {
    Upward,
    Downward,
}

/// One detected transition: the path last sat in the old basin's band at
/// `start_index` and first reached the opposite band at `end_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub start_index: usize,
    pub end_index: usize,
    pub direction: TransitionDirection,
}

/// Per-replica digest of an ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub n_transitions: usize,
    pub first_transition_time: Option<f64>,
    pub final_mean: f64,
}

/// Ensemble outcome with a Wilson 95% interval on the transition
/// probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub n_replicas: usize,
    pub n_transitioned: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub master_seed: u64,
    pub replicas: Vec<ReplicaSummary>,
}

/// ChaCha8 generator for one replica: master seed keys the cipher, the
/// replica index selects the stream.
pub fn replica_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Largest-remainder apportionment of N agents to group fractions.
/// Remainder ties break toward the lower group index. Errors if any group
/// would be empty.
pub fn group_assignment(groups: &GroupSpec, n_agents: usize) -> Result<Vec<usize>> {
    groups.validate()?;
    let k = groups.k();
    let mut counts = vec![0usize; k];
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(k);
    let mut assigned = 0usize;
    for (l, rho) in groups.fractions.iter().enumerate() {
        let quota = rho * n_agents as f64;
        let floor = quota.floor();
        counts[l] = floor as usize;
        assigned += counts[l];
        remainders.push((l, quota - floor));
    }
    // Sort by remainder descending; stable sort keeps index order on ties.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite remainders"));
    let mut leftover = n_agents - assigned;
    for (l, _) in remainders {
        if leftover == 0 {
            break;
        }
        counts[l] += 1;
        leftover -= 1;
    }
    for (l, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyGroup {
                group: l,
                n_agents,
            });
        }
    }
    Ok(counts)
}

#[inline]
fn euler_step<F>(
    positions: &mut [f64],
    h: f64,
    sigma_sqrt_dt: f64,
    dt: f64,
    theta_of: F,
    gaussians: &[f64],
) where
    F: Fn(usize) -> f64,
{
    let xbar = positions.iter().sum::<f64>() / positions.len() as f64;
    for (j, x) in positions.iter_mut().enumerate() {
        let drift = -h * force_u(*x) + theta_of(j) * (xbar - *x);
        *x += drift * dt + sigma_sqrt_dt * gaussians[j];
    }
}

/// One Euler step of the homogeneous system. The mean in the coupling term
/// is the empirical mean before the step. `gaussians` holds one standard
/// normal draw per agent.
pub fn step_homogeneous(state: &mut SystemState, params: &ModelParams, gaussians: &[f64]) {
    assert_eq!(
        gaussians.len(),
        state.positions.len(),
        "one gaussian per agent"
    );
    euler_step(
        &mut state.positions,
        params.h,
        params.sigma * params.dt.sqrt(),
        params.dt,
        |_| params.theta,
        gaussians,
    );
    state.time += params.dt;
}

/// One Euler step of the group-structured system. `thetas_by_agent` maps
/// each agent to its group rate (agents sit in contiguous group blocks).
pub fn step_heterogeneous(
    state: &mut SystemState,
    het: &HetModelParams,
    thetas_by_agent: &[f64],
    gaussians: &[f64],
) {
    assert_eq!(gaussians.len(), state.positions.len());
    assert_eq!(thetas_by_agent.len(), state.positions.len());
    euler_step(
        &mut state.positions,
        het.h,
        het.sigma * het.dt.sqrt(),
        het.dt,
        |j| thetas_by_agent[j],
        gaussians,
    );
    state.time += het.dt;
}

fn initial_positions(
    initial: &InitialCondition,
    n_agents: usize,
    params_for_equilibrium: &ModelParams,
) -> Result<Vec<f64>> {
    match initial {
        InitialCondition::AllAt(x) => {
            if !x.is_finite() {
                return Err(Error::InvalidParams(vec![format!(
                    "initial position must be finite (got {x})"
                )]));
            }
            Ok(vec![*x; n_agents])
        }
        InitialCondition::NegativeEquilibrium => {
            let sol = solve_bistable(params_for_equilibrium)?;
            if !sol.bistable {
                return Err(Error::NoBistableEquilibria(
                    "the negative-equilibrium start needs a bistable regime".to_string(),
                ));
            }
            Ok(vec![-sol.xi_b; n_agents])
        }
        InitialCondition::Custom(xs) => {
            if xs.len() != n_agents {
                return Err(Error::InvalidParams(vec![format!(
                    "custom initial has {} positions for {} agents",
                    xs.len(),
                    n_agents
                )]));
            }
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams(vec![
                    "custom initial positions must be finite".to_string(),
                ]));
            }
            Ok(xs.clone())
        }
    }
}

fn run_path(
    positions: Vec<f64>,
    h: f64,
    sigma: f64,
    dt: f64,
    n_steps: usize,
    thetas_by_agent: Option<&[f64]>,
    uniform_theta: f64,
    group_counts: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let n = positions.len();
    let mut positions = positions;
    let mut gaussians = vec![0.0_f64; n];
    let sigma_sqrt_dt = sigma * dt.sqrt();

    let record_groups = |positions: &[f64], store: &mut Vec<Vec<f64>>| {
        if let Some(counts) = group_counts {
            let mut start = 0usize;
            for (l, &c) in counts.iter().enumerate() {
                let m = positions[start..start + c].iter().sum::<f64>() / c as f64;
                store[l].push(m);
                start += c;
            }
        }
    };

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut means = Vec::with_capacity(n_steps + 1);
    let mut group_series: Vec<Vec<f64>> =
        vec![Vec::with_capacity(n_steps + 1); group_counts.map_or(0, |c| c.len())];

    let mean0 = positions.iter().sum::<f64>() / n as f64;
    times.push(0.0);
    means.push(mean0);
    record_groups(&positions, &mut group_series);

    for step in 0..n_steps {
        for g in gaussians.iter_mut() {
            *g = rng.sample(StandardNormal);
        }
        match thetas_by_agent {
            Some(thetas) => euler_step(
                &mut positions,
                h,
                sigma_sqrt_dt,
                dt,
                |j| thetas[j],
                &gaussians,
            ),
            None => euler_step(
                &mut positions,
                h,
                sigma_sqrt_dt,
                dt,
                |_| uniform_theta,
                &gaussians,
            ),
        }
        let mean = positions.iter().sum::<f64>() / n as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        times.push((step + 1) as f64 * dt);
        means.push(mean);
        record_groups(&positions, &mut group_series);
    }

    Ok(Trajectory {
        times,
        means,
        group_means: if group_counts.is_some() {
            Some(group_series)
        } else {
            None
        },
    })
}

/// Simulates one homogeneous replica and records the mean path.
pub fn simulate_replica(
    params: &ModelParams,
    seed: u64,
    initial: &InitialCondition,
) -> Result<Trajectory> {
    params.validate()?;
    let positions = initial_positions(initial, params.n_agents, params)?;
    let mut rng = replica_rng(seed, 0);
    run_path(
        positions,
        params.h,
        params.sigma,
        params.dt,
        params.n_steps(),
        None,
        params.theta,
        None,
        &mut rng,
    )
}

/// Simulates one group-structured replica; the trajectory carries one mean
/// series per group alongside the population mean.
pub fn simulate_replica_het(
    het: &HetModelParams,
    seed: u64,
    initial: &InitialCondition,
) -> Result<Trajectory> {
    het.validate()?;
    let counts = group_assignment(&het.groups, het.n_agents)?;
    let mut thetas_by_agent = Vec::with_capacity(het.n_agents);
    for (l, &c) in counts.iter().enumerate() {
        thetas_by_agent.extend(std::iter::repeat(het.groups.thetas[l]).take(c));
    }
    let positions = initial_positions(initial, het.n_agents, &het.homogeneous_at_mean())?;
    let mut rng = replica_rng(seed, 0);
    run_path(
        positions,
        het.h,
        het.sigma,
        het.dt,
        het.n_steps(),
        Some(&thetas_by_agent),
        0.0,
        Some(&counts),
        &mut rng,
    )
}

/// Hysteresis transition detector. A transition is recorded only when the
/// mean path travels from one band (|m| >= band * xi_b, matching sign) all
/// the way into the opposite band, so basin-edge chatter never counts.
pub fn detect_transitions(traj: &Trajectory, xi_b: f64, band: f64) -> Vec<TransitionEvent> {
    let thr = band * xi_b;
    let mut events = Vec::new();
    let mut regime = 0i8;
    let mut last_in_band = 0usize;
    for (i, &m) in traj.means.iter().enumerate() {
        if m <= -thr {
            if regime == 1 {
                events.push(TransitionEvent {
                    start_index: last_in_band,
                    end_index: i,
                    direction: TransitionDirection::Downward,
                });
            }
            regime = -1;
            last_in_band = i;
        } else if m >= thr {
            if regime == -1 {
                events.push(TransitionEvent {
                    start_index: last_in_band,
                    end_index: i,
                    direction: TransitionDirection::Upward,
                });
            }
            regime = 1;
            last_in_band = i;
        }
    }
    events
}

fn wilson_interval(successes: usize, trials: usize) -> (f64, f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (p, (center - half).max(0.0), (center + half).min(1.0))
}

/// Runs `n_replicas` independent replicas (replica r on RNG stream r) and
/// estimates the probability of at least one transition over the horizon.
pub fn run_ensemble(
    params: &ModelParams,
    n_replicas: usize,
    master_seed: u64,
    initial: &InitialCondition,
) -> Result<EnsembleResult> {
    params.validate()?;
    if n_replicas == 0 {
        return Err(Error::InvalidParams(vec![
            "need at least one replica".to_string(),
        ]));
    }
    let sol = solve_bistable(params)?;
    if !sol.bistable {
        return Err(Error::NoBistableEquilibria(
            "transition counting needs a bistable regime".to_string(),
        ));
    }
    let positions0 = initial_positions(initial, params.n_agents, params)?;

    let replicas: Vec<ReplicaSummary> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(master_seed, r as u64);
            let traj = run_path(
                positions0.clone(),
                params.h,
                params.sigma,
                params.dt,
                params.n_steps(),
                None,
                params.theta,
                None,
                &mut rng,
            )
            .map_err(|e| Error::ReplicaFailed {
                replica: r,
                source: Box::new(e),
            })?;
            let events = detect_transitions(&traj, sol.xi_b, DEFAULT_BAND);
            Ok(ReplicaSummary {
                replica: r,
                n_transitions: events.len(),
                first_transition_time: events.first().map(|e| traj.times[e.end_index]),
                final_mean: *traj.means.last().expect("nonempty path"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_transitioned = replicas.iter().filter(|s| s.n_transitions > 0).count();
    let (p_hat, ci_low, ci_high) = wilson_interval(n_transitioned, n_replicas);
    Ok(EnsembleResult {
        n_replicas,
        n_transitioned,
        p_hat,
        ci_low,
        ci_high,
        master_seed,
        replicas,
    })
}

/// As [`run_ensemble`] for a group-structured population. Replica r draws
/// from stream r of the master seed, exactly as in the homogeneous case,
/// and transitions are counted against the diverse equilibrium xi_b.
pub fn run_ensemble_het(
    het: &HetModelParams,
    n_replicas: usize,
    master_seed: u64,
    initial: &InitialCondition,
) -> Result<EnsembleResult> {
    het.validate()?;
    if n_replicas == 0 {
        return Err(Error::InvalidParams(vec![
            "need at least one replica".to_string(),
        ]));
    }
    let sol = solve_bistable_div(het)?;
    if !sol.bistable {
        return Err(Error::NoBistableEquilibria(
            "transition counting needs a bistable regime".to_string(),
        ));
    }
    let counts = group_assignment(&het.groups, het.n_agents)?;
    let mut thetas_by_agent = Vec::with_capacity(het.n_agents);
    for (l, &c) in counts.iter().enumerate() {
        thetas_by_agent.extend(std::iter::repeat(het.groups.thetas[l]).take(c));
    }
    let positions0 = initial_positions(initial, het.n_agents, &het.homogeneous_at_mean())?;

    let replicas: Vec<ReplicaSummary> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(master_seed, r as u64);
            let traj = run_path(
                positions0.clone(),
                het.h,
                het.sigma,
                het.dt,
                het.n_steps(),
                Some(&thetas_by_agent),
                0.0,
                Some(&counts),
                &mut rng,
            )
            .map_err(|e| Error::ReplicaFailed {
                replica: r,
                source: Box::new(e),
            })?;
            let events = detect_transitions(&traj, sol.xi_b, DEFAULT_BAND);
            Ok(ReplicaSummary {
                replica: r,
                n_transitions: events.len(),
                first_transition_time: events.first().map(|e| traj.times[e.end_index]),
                final_mean: *traj.means.last().expect("nonempty path"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_transitioned = replicas.iter().filter(|s| s.n_transitions > 0).count();
    let (p_hat, ci_low, ci_high) = wilson_interval(n_transitioned, n_replicas);
    Ok(EnsembleResult {
        n_replicas,
        n_transitioned,
        p_hat,
        ci_low,
        ci_high,
        master_seed,
        replicas,
    })
}

fn reduced_coefficient(params: &ModelParams) -> Result<f64> {
    let three_s = 1.5 * params.sigma * params.sigma / params.theta;
    if !(three_s < 1.0) {
        return Err(Error::NoBistableEquilibria(format!(
            "reduced dynamics needs 3 sigma^2 / (2 theta) < 1 (got {three_s})"
        )));
    }
    Ok(1.0 - three_s)
}

fn reduced_path(
    params: &ModelParams,
    coeff: f64,
    noise: f64,
    initial: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let n_steps = params.n_steps();
    let mut x = initial;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut means = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    means.push(x);
    for step in 0..n_steps {
        let g: f64 = rng.sample(StandardNormal);
        x += -params.h * (x * x * x - coeff * x) * params.dt + noise * g;
        if !x.is_finite() {
            return Err(Error::NonFiniteState { step: step + 1 });
        }
        times.push((step + 1) as f64 * params.dt);
        means.push(x);
    }
    Ok(Trajectory {
        times,
        means,
        group_means: None,
    })
}

/// Euler path of the one-dimensional reduced mean dynamics
/// dxbar = -h [ xbar^3 - (1 - 3 sigma^2/(2 theta)) xbar ] dt
///         + (sigma / sqrt(N)) dW.
/// Requires the bistable regime 3 sigma^2 / (2 theta) < 1.
pub fn simulate_reduced(
    params: &ModelParams,
    seed: u64,
    initial: f64,
    with_noise: bool,
) -> Result<Trajectory> {
    params.validate()?;
    let coeff = reduced_coefficient(params)?;
    if !initial.is_finite() {
        return Err(Error::InvalidParams(vec![format!(
            "initial mean must be finite (got {initial})"
        )]));
    }
    let noise = if with_noise {
        params.sigma / (params.n_agents as f64).sqrt() * params.dt.sqrt()
    } else {
        0.0
    };
    let mut rng = replica_rng(seed, 0);
    reduced_path(params, coeff, noise, initial, &mut rng)
}

/// As [`run_ensemble`] for the reduced mean dynamics. Transitions are
/// counted against the reduced model's own equilibria at +-sqrt(1 - 3s),
/// which is what the drift relaxes to regardless of h.
pub fn run_ensemble_reduced(
    params: &ModelParams,
    n_replicas: usize,
    master_seed: u64,
    initial: f64,
) -> Result<EnsembleResult> {
    params.validate()?;
    if n_replicas == 0 {
        return Err(Error::InvalidParams(vec![
            "need at least one replica".to_string(),
        ]));
    }
    let coeff = reduced_coefficient(params)?;
    if !initial.is_finite() {
        return Err(Error::InvalidParams(vec![format!(
            "initial mean must be finite (got {initial})"
        )]));
    }
    let xi_reduced = coeff.sqrt();
    let noise = params.sigma / (params.n_agents as f64).sqrt() * params.dt.sqrt();

    let replicas: Vec<ReplicaSummary> = (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(master_seed, r as u64);
            let traj =
                reduced_path(params, coeff, noise, initial, &mut rng).map_err(|e| {
                    Error::ReplicaFailed {
                        replica: r,
                        source: Box::new(e),
                    }
                })?;
            let events = detect_transitions(&traj, xi_reduced, DEFAULT_BAND);
            Ok(ReplicaSummary {
                replica: r,
                n_transitions: events.len(),
                first_transition_time: events.first().map(|e| traj.times[e.end_index]),
                final_mean: *traj.means.last().expect("nonempty path"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_transitioned = replicas.iter().filter(|s| s.n_transitions > 0).count();
    let (p_hat, ci_low, ci_high) = wilson_interval(n_transitioned, n_replicas);
    Ok(EnsembleResult {
        n_replicas,
        n_transitioned,
        p_hat,
        ci_low,
        ci_high,
        master_seed,
        replicas,
    })
}

/// Euler path of the K-dimensional partial-average system at h = 0:
/// dXbar_l = Theta_l (xbar - Xbar_l) dt + sigma / sqrt(N rho_l) dW_l,
/// with xbar = sum_l rho_l Xbar_l.
#[allow(clippy::too_many_arguments)]
pub fn simulate_partial_averages(
    groups: &GroupSpec,
    sigma: f64,
    n_agents: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
    initial: &[f64],
) -> Result<Trajectory> {
    groups.validate()?;
    let k = groups.k();
    let mut errs = Vec::new();
    if sigma <= 0.0 || !sigma.is_finite() {
        errs.push(format!("sigma must be positive (got {sigma})"));
    }
    if n_agents == 0 {
        errs.push("n_agents must be at least 1".to_string());
    }
    if !(horizon > 0.0) || !(dt > 0.0) || dt > horizon {
        errs.push(format!("bad time discretization (dt = {dt}, horizon = {horizon})"));
    }
    if initial.len() != k {
        errs.push(format!("{} initial means for {k} groups", initial.len()));
    }
    let max_theta = groups.thetas.iter().cloned().fold(0.0_f64, f64::max);
    if dt > 0.0 && dt * max_theta.max(1.0) > 0.2 + 1e-12 {
        errs.push(format!(
            "dt too large for explicit-scheme stability (dt = {dt}, effective rate {})",
            max_theta.max(1.0)
        ));
    }
    if !errs.is_empty() {
        return Err(Error::InvalidParams(errs));
    }

    let noise: Vec<f64> = groups
        .fractions
        .iter()
        .map(|rho| sigma / (n_agents as f64 * rho).sqrt() * dt.sqrt())
        .collect();
    let n_steps = (horizon / dt).round().max(1.0) as usize;
    let mut rng = replica_rng(seed, 0);
    let mut x = initial.to_vec();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut means = Vec::with_capacity(n_steps + 1);
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(n_steps + 1); k];

    let mixture = |x: &[f64]| {
        x.iter()
            .zip(&groups.fractions)
            .map(|(v, r)| v * r)
            .sum::<f64>()
    };
    times.push(0.0);
    means.push(mixture(&x));
    for (l, v) in x.iter().enumerate() {
        series[l].push(*v);
    }
    for step in 0..n_steps {
        let xbar = mixture(&x);
        for (l, v) in x.iter_mut().enumerate() {
            let g: f64 = rng.sample(StandardNormal);
            *v += groups.thetas[l] * (xbar - *v) * dt + noise[l] * g;
            if !v.is_finite() {
                return Err(Error::NonFiniteState { step: step + 1 });
            }
        }
        times.push((step + 1) as f64 * dt);
        means.push(mixture(&x));
        for (l, v) in x.iter().enumerate() {
            series[l].push(*v);
        }
    }
    Ok(Trajectory {
        times,
        means,
        group_means: Some(series),
    })
}
