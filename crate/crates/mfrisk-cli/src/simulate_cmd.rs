//! Handlers for the particle-simulation subcommands: simulate,
//! simulate-het, and simulate-reduced.

use std::path::PathBuf;

use mfrisk::equilibrium::small_h_equilibrium;
use mfrisk::model::ModelParams;
use mfrisk::simulate::{
    run_ensemble, run_ensemble_het, run_ensemble_reduced, simulate_replica, simulate_replica_het,
    simulate_reduced, EnsembleResult, Trajectory,
};
use serde_json::{json, Value};

use crate::config::{apply_sweep_value, ExperimentConfig, InitialChoice, SweepAxis};
use crate::error::{CliError, CliResult};
use crate::output::{resolve_out, rng_block, rng_block_with, Artifact, Payload};
use crate::Global;

#[derive(clap::Args, Debug)]
pub struct SimArgs {
    /// Experiment config JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// Replica count; 1 emits a trajectory, more an ensemble summary.
    /// Overrides the config value.
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Starting position of every agent; overrides the config value.
    #[arg(long, value_enum)]
    pub initial: Option<InitialChoice>,
    /// Output file; stdout when absent. Overrides the config value.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Common resolution of config-vs-flag precedence.
struct Resolved {
    cfg: ExperimentConfig,
    seed: u64,
    replicas: usize,
    initial: InitialChoice,
    out: Option<PathBuf>,
}

fn resolve(global: &Global, args: &SimArgs) -> CliResult<Resolved> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let seed = global.seed.or(cfg.seed).unwrap_or(0);
    let replicas = args.replicas.or(cfg.replicas).unwrap_or(1);
    if replicas == 0 {
        return Err(CliError::Config("--replicas must be at least 1".to_string()));
    }
    let initial = args.initial.or(cfg.initial).unwrap_or(InitialChoice::MinusXib);
    let out = resolve_out(&global.out_dir, args.out.clone().or_else(|| cfg.out.clone()));
    Ok(Resolved {
        cfg,
        seed,
        replicas,
        initial,
        out,
    })
}

/// CSV columns and rows of a recorded trajectory.
pub(crate) fn trajectory_table(traj: &Trajectory) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut columns = vec!["t".to_string(), "xbar".to_string()];
    if let Some(gm) = &traj.group_means {
        for l in 1..=gm.len() {
            columns.push(format!("xbar_g{l}"));
        }
    }
    let rows = traj
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut row = vec![t, traj.means[i]];
            if let Some(gm) = &traj.group_means {
                for series in gm {
                    row.push(series[i]);
                }
            }
            row
        })
        .collect();
    (columns, rows)
}

/// Ensemble summary in the documented key layout.
fn ensemble_record(ens: &EnsembleResult, params: Value, initial: InitialChoice, rng: Value) -> Value {
    json!({
        "replicas": ens.n_replicas,
        "transitions": ens.n_transitioned,
        "p_hat": ens.p_hat,
        "ci_low": ens.ci_low,
        "ci_high": ens.ci_high,
        "seed": ens.master_seed,
        "params": params,
        "initial": initial.label(),
        "rng": rng,
    })
}

fn trajectory_artifact(
    out: Option<PathBuf>,
    traj: &Trajectory,
    meta: Value,
) -> Artifact {
    let (columns, rows) = trajectory_table(traj);
    Artifact {
        path: out,
        payload: Payload::Table { columns, rows },
        meta: Some(meta),
    }
}

// ==================== simulate ====================

pub fn run_simulate(global: &Global, args: &SimArgs) -> CliResult<()> {
    let r = resolve(global, args)?;
    let params = r.cfg.require_params()?;

    if let Some(sweep) = &r.cfg.sweep {
        let record = sweep_record(&params, sweep, r.replicas, r.seed, r.initial)?;
        return Artifact {
            path: r.out,
            payload: Payload::Record(record),
            meta: None,
        }
        .emit(global.format);
    }

    if r.replicas == 1 {
        let traj = simulate_replica(&params, r.seed, &r.initial.to_condition())?;
        let meta = json!({
            "seed": r.seed,
            "initial": r.initial.label(),
            "params": params,
            "rng": rng_block(r.seed, "stream 0"),
        });
        trajectory_artifact(r.out, &traj, meta).emit(global.format)
    } else {
        let ens = run_ensemble(&params, r.replicas, r.seed, &r.initial.to_condition())?;
        let record = ensemble_record(
            &ens,
            json!(params),
            r.initial,
            rng_block(r.seed, "one per replica index"),
        );
        Artifact {
            path: r.out,
            payload: Payload::Record(record),
            meta: None,
        }
        .emit(global.format)
    }
}

/// One ensemble per swept value, all sharing the master seed so every
/// value sees the same noise streams. Values outside the bistable
/// regime are reported, not fatal.
fn sweep_record(
    base: &ModelParams,
    sweep: &SweepAxis,
    replicas: usize,
    seed: u64,
    initial: InitialChoice,
) -> CliResult<Value> {
    let mut results = Vec::with_capacity(sweep.values.len());
    for &value in &sweep.values {
        let p = apply_sweep_value(base, &sweep.parameter, value)?;
        match run_ensemble(&p, replicas, seed, &initial.to_condition()) {
            Ok(ens) => results.push(json!({
                "value": value,
                "bistable": true,
                "replicas": ens.n_replicas,
                "transitions": ens.n_transitioned,
                "p_hat": ens.p_hat,
                "ci_low": ens.ci_low,
                "ci_high": ens.ci_high,
            })),
            Err(mfrisk::Error::NoBistableEquilibria(_)) => results.push(json!({
                "value": value,
                "bistable": false,
                "replicas": replicas,
                "transitions": Value::Null,
                "p_hat": Value::Null,
                "ci_low": Value::Null,
                "ci_high": Value::Null,
            })),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(json!({
        "sweep": {"parameter": sweep.parameter, "values": sweep.values},
        "replicas": replicas,
        "seed": seed,
        "initial": initial.label(),
        "params": base,
        "rng": rng_block(seed, "one per replica index; every swept value reuses the same streams"),
        "results": results,
    }))
}

// ==================== simulate-het ====================

pub fn run_simulate_het(global: &Global, args: &SimArgs) -> CliResult<()> {
    let r = resolve(global, args)?;
    let het = r.cfg.require_het()?;
    if r.cfg.sweep.is_some() {
        return Err(CliError::Config(
            "parameter sweeps are not supported for simulate-het; vary the config instead"
                .to_string(),
        ));
    }

    if r.replicas == 1 {
        let traj = simulate_replica_het(&het, r.seed, &r.initial.to_condition())?;
        let meta = json!({
            "seed": r.seed,
            "initial": r.initial.label(),
            "params": het,
            "rng": rng_block(r.seed, "stream 0"),
        });
        trajectory_artifact(r.out, &traj, meta).emit(global.format)
    } else {
        let ens = run_ensemble_het(&het, r.replicas, r.seed, &r.initial.to_condition())?;
        let record = ensemble_record(
            &ens,
            json!(het),
            r.initial,
            rng_block(r.seed, "one per replica index"),
        );
        Artifact {
            path: r.out,
            payload: Payload::Record(record),
            meta: None,
        }
        .emit(global.format)
    }
}

// ==================== simulate-reduced ====================

/// Starting mean of the reduced model: -1, or the reduced dynamics' own
/// negative equilibrium -sqrt(1 - 3 sigma^2 / (2 theta)).
fn reduced_initial(initial: InitialChoice, params: &ModelParams) -> mfrisk::Result<f64> {
    match initial {
        InitialChoice::MinusOne => Ok(-1.0),
        InitialChoice::MinusXib => small_h_equilibrium(params).map(|(xi0, _)| -xi0),
    }
}

fn reduced_rng(seed: u64, streams: &str) -> Value {
    rng_block_with(seed, streams, "one draw per step")
}

pub fn run_simulate_reduced(global: &Global, args: &SimArgs) -> CliResult<()> {
    let r = resolve(global, args)?;
    let params = r.cfg.require_params()?;

    if let Some(sweep) = &r.cfg.sweep {
        let record = reduced_sweep_record(&params, sweep, r.replicas, r.seed, r.initial)?;
        return Artifact {
            path: r.out,
            payload: Payload::Record(record),
            meta: None,
        }
        .emit(global.format);
    }

    if r.replicas == 1 {
        let start = reduced_initial(r.initial, &params)?;
        let traj = simulate_reduced(&params, r.seed, start, true)?;
        let meta = json!({
            "seed": r.seed,
            "model": "reduced",
            "initial": r.initial.label(),
            "start": start,
            "params": params,
            "rng": reduced_rng(r.seed, "stream 0"),
        });
        trajectory_artifact(r.out, &traj, meta).emit(global.format)
    } else {
        let start = reduced_initial(r.initial, &params)?;
        let ens = run_ensemble_reduced(&params, r.replicas, r.seed, start)?;
        let mut record = ensemble_record(
            &ens,
            json!(params),
            r.initial,
            reduced_rng(r.seed, "one per replica index"),
        );
        record
            .as_object_mut()
            .expect("ensemble record is an object")
            .insert("model".to_string(), json!("reduced"));
        Artifact {
            path: r.out,
            payload: Payload::Record(record),
            meta: None,
        }
        .emit(global.format)
    }
}

fn reduced_sweep_record(
    base: &ModelParams,
    sweep: &SweepAxis,
    replicas: usize,
    seed: u64,
    initial: InitialChoice,
) -> CliResult<Value> {
    let non_bistable = |value: f64| {
        json!({
            "value": value,
            "bistable": false,
            "replicas": replicas,
            "transitions": Value::Null,
            "p_hat": Value::Null,
            "ci_low": Value::Null,
            "ci_high": Value::Null,
        })
    };
    let mut results = Vec::with_capacity(sweep.values.len());
    for &value in &sweep.values {
        let p = apply_sweep_value(base, &sweep.parameter, value)?;
        let start = match reduced_initial(initial, &p) {
            Ok(s) => s,
            Err(mfrisk::Error::NoBistableEquilibria(_)) => {
                results.push(non_bistable(value));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        match run_ensemble_reduced(&p, replicas, seed, start) {
            Ok(ens) => results.push(json!({
                "value": value,
                "bistable": true,
                "replicas": ens.n_replicas,
                "transitions": ens.n_transitioned,
                "p_hat": ens.p_hat,
                "ci_low": ens.ci_low,
                "ci_high": ens.ci_high,
            })),
            Err(mfrisk::Error::NoBistableEquilibria(_)) => results.push(non_bistable(value)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(json!({
        "sweep": {"parameter": sweep.parameter, "values": sweep.values},
        "model": "reduced",
        "replicas": replicas,
        "seed": seed,
        "initial": initial.label(),
        "params": base,
        "rng": reduced_rng(seed, "one per replica index; every swept value reuses the same streams"),
        "results": results,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_trajectory() -> Trajectory {
        Trajectory {
            times: vec![0.0, 0.5, 1.0],
            means: vec![-1.0, -0.9, -0.8],
            group_means: Some(vec![vec![-1.1, -1.0, -0.9], vec![-0.9, -0.8, -0.7]]),
        }
    }

    #[test]
    fn trajectory_tables_add_one_column_per_group() {
        let (columns, rows) = trajectory_table(&toy_trajectory());
        assert_eq!(columns, vec!["t", "xbar", "xbar_g1", "xbar_g2"]);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1], vec![0.5, -0.9, -1.0, -0.8]);
        let mut plain = toy_trajectory();
        plain.group_means = None;
        let (columns, rows) = trajectory_table(&plain);
        assert_eq!(columns, vec!["t", "xbar"]);
        assert_eq!(rows[2], vec![1.0, -0.8]);
    }

    #[test]
    fn reduced_initial_matches_the_reduced_equilibrium() {
        let params = ModelParams {
            h: 0.1,
            theta: 10.0,
            sigma: 1.0,
            n_agents: 10,
            horizon: 1.0,
            dt: 0.01,
        };
        assert_eq!(reduced_initial(InitialChoice::MinusOne, &params).unwrap(), -1.0);
        let s = 1.0 / 20.0;
        let expected = -(1.0_f64 - 3.0 * s).sqrt();
        let got = reduced_initial(InitialChoice::MinusXib, &params).unwrap();
        assert!((got - expected).abs() < 1e-15, "got {got}, expected {expected}");
        let mut loud = params;
        loud.sigma = 3.0;
        assert!(reduced_initial(InitialChoice::MinusXib, &loud).is_err());
    }
}
