//! Handler for the figures subcommand: reproduces the standard regime
//! bundles as trajectory CSVs plus a manifest documenting every choice.

use mfrisk::equilibrium::{solve_bistable, solve_bistable_div, EquilibriumSolution};
use mfrisk::simulate::{
    run_ensemble, run_ensemble_het, simulate_replica, simulate_replica_het, EnsembleResult,
    InitialCondition, Trajectory,
};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::output::{atomic_write, rng_block_with, Artifact, Format, Payload};
use crate::regimes::{panels, Panel, Regime};
use crate::Global;

#[derive(clap::Args, Debug)]
pub struct FiguresArgs {
    /// Which regime bundle to produce.
    #[arg(long, value_enum)]
    pub regime: Regime,
    /// Replicas per bistable panel's transition count; 0 skips the
    /// ensembles and emits trajectories only.
    #[arg(long, default_value_t = 200)]
    pub replicas: usize,
}

/// Everything computed for one panel.
struct PanelRun {
    solution: EquilibriumSolution,
    trajectory: Trajectory,
    ensemble: Option<EnsembleResult>,
    params_value: Value,
}

fn run_panel(panel: &Panel, master: u64, replicas: usize) -> CliResult<PanelRun> {
    // Figure panels start every agent at -1, matching the standard
    // presentation; transition detection still uses the solved basins.
    let initial = InitialCondition::AllAt(-1.0);
    if let Some(params) = &panel.homogeneous {
        let solution = solve_bistable(params)?;
        let trajectory = simulate_replica(params, master, &initial)?;
        let ensemble = if solution.bistable && replicas > 0 {
            Some(run_ensemble(params, replicas, master, &initial)?)
        } else {
            None
        };
        Ok(PanelRun {
            solution,
            trajectory,
            ensemble,
            params_value: json!(params),
        })
    } else {
        let het = panel
            .heterogeneous
            .as_ref()
            .ok_or_else(|| CliError::Config("panel has no parameter set".to_string()))?;
        let solution = solve_bistable_div(het)?;
        let trajectory = simulate_replica_het(het, master, &initial)?;
        let ensemble = if solution.bistable && replicas > 0 {
            Some(run_ensemble_het(het, replicas, master, &initial)?)
        } else {
            None
        };
        Ok(PanelRun {
            solution,
            trajectory,
            ensemble,
            params_value: json!(het),
        })
    }
}

pub fn run_figures(global: &Global, args: &FiguresArgs) -> CliResult<()> {
    let seed = global.seed.unwrap_or(0);
    let panels = panels(args.regime)?;
    let root = global.out_dir.join("figures").join(args.regime.name());

    let mut runs = Vec::with_capacity(panels.len());
    for (i, panel) in panels.iter().enumerate() {
        // Each panel gets its own master seed so its replica streams are
        // unrelated to its neighbors'.
        let master = seed.wrapping_add(1000 * i as u64);
        let run = run_panel(panel, master, args.replicas)?;
        let csv_name = format!("{}.csv", panel.label);
        let (columns, rows) = crate::simulate_cmd::trajectory_table(&run.trajectory);
        // Panel files are always CSV regardless of --format; the
        // manifest names them as such.
        Artifact {
            path: Some(root.join(&csv_name)),
            payload: Payload::Table { columns, rows },
            meta: None,
        }
        .emit(Some(Format::Csv))?;
        runs.push(json!({
            "label": panel.label,
            "params": run.params_value,
            "bistable": run.solution.bistable,
            "xi_b": run.solution.xi_b,
            "sigma_c": run.solution.sigma_c,
            "seed": master,
            "initial": "minus-one",
            "trajectory_csv": csv_name,
            "ensemble": run.ensemble.map(|e| json!({
                "replicas": e.n_replicas,
                "transitions": e.n_transitioned,
                "p_hat": e.p_hat,
                "ci_low": e.ci_low,
                "ci_high": e.ci_high,
            })),
        }));
    }

    let manifest = json!({
        "regime": args.regime.name(),
        "seed": seed,
        "replicas": args.replicas,
        "initial": "minus-one",
        "rng": rng_block_with(
            seed,
            "per panel master seed = seed + 1000 * panel index; one stream per replica",
            "step-major, agent-minor",
        ),
        "runs": runs,
    });
    let pretty = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
    atomic_write(&root.join("manifest.json"), format!("{pretty}\n").as_bytes())?;

    // Echo the manifest so a terminal run shows what was produced and
    // where.
    Artifact::to_stdout(Payload::Record(manifest)).emit(global.format)
}
