//! Handlers for the analysis subcommands: equilibrium, rate, diversity,
//! fluctuation, and fokker-planck.

use std::path::PathBuf;

use mfrisk::diversity::{diversity_expansion, sigma_t_squared, transition_probability_diverse, DiversityPerturbation};
use mfrisk::equilibrium::{critical_sigma_small_h, equilibrium_density, small_h_equilibrium, small_h_equilibrium_div, solve_bistable, solve_bistable_div};
use mfrisk::fluctuation::{fluctuation_curve, validate_fluctuations_grid, FluctuationCurve};
use mfrisk::fokker_planck::{evolve_fp, evolve_fp_system, DensityGrid, DEFAULT_N_CELLS, DEFAULT_Y_MAX, DEFAULT_Y_MIN};
use mfrisk::largedev::{gaussian_path_rate, minimize_reduced, optimal_path_bvp, rate_h0, rate_small_h, reduced_rate_functional, MeanPath};
use mfrisk::model::{GroupEntry, GroupSpec, ModelParams};
use serde_json::{json, Value};

use crate::config::{parse_float_list, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{resolve_out, rng_block, Artifact, Payload};
use crate::Global;

/// Default time step for parameter sets built from bare flags: safely
/// inside the explicit-scheme stability region for the given coupling.
fn default_dt(theta: f64) -> f64 {
    (0.1 / theta.max(1.0)).min(0.01)
}

fn record_artifact(path: Option<PathBuf>, record: Value) -> Artifact {
    Artifact {
        path,
        payload: Payload::Record(record),
        meta: None,
    }
}

// ==================== equilibrium ====================

#[derive(clap::Args, Debug)]
pub struct EquilibriumArgs {
    /// Experiment config JSON; its params object supplies anything the
    /// direct flags leave out.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Coupling strength, overrides the config value.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Noise level, overrides the config value.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Intrinsic drift scale, overrides the config value.
    #[arg(long)]
    pub h: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn params_from_flags(
    config: Option<&PathBuf>,
    theta: Option<f64>,
    sigma: Option<f64>,
    h: Option<f64>,
) -> CliResult<(ModelParams, Option<ExperimentConfig>)> {
    let cfg = config.map(|p| ExperimentConfig::load(p)).transpose()?;
    let params = if let Some(cfg) = &cfg {
        let mut p = cfg.require_params()?;
        if let Some(v) = theta {
            p.theta = v;
        }
        if let Some(v) = sigma {
            p.sigma = v;
        }
        if let Some(v) = h {
            p.h = v;
        }
        p
    } else {
        let (Some(theta), Some(sigma), Some(h)) = (theta, sigma, h) else {
            return Err(CliError::Config(
                "without --config, all of --theta, --sigma, and --h are required".to_string(),
            ));
        };
        ModelParams {
            h,
            theta,
            sigma,
            n_agents: 100,
            horizon: 10.0,
            dt: default_dt(theta),
        }
    };
    Ok((params, cfg))
}

pub fn run_equilibrium(global: &Global, args: &EquilibriumArgs) -> CliResult<()> {
    let (params, cfg) = params_from_flags(args.config.as_ref(), args.theta, args.sigma, args.h)?;
    let seed = global.seed.or(cfg.as_ref().and_then(|c| c.seed)).unwrap_or(0);
    let mut record = if params.h == 0.0 {
        // The fixed-point map degenerates at h = 0; report the expansion
        // values, which are exact there.
        params.validate()?;
        let sigma_c = critical_sigma_small_h(params.theta, 0.0);
        match small_h_equilibrium(&params) {
            Ok((xi0, xi1)) => json!({
                "xi_b": xi0,
                "xi0": xi0,
                "xi1": xi1,
                "sigma_c": sigma_c,
                "bistable": true,
                "method": "small-h-expansion",
                "residual": 0.0,
            }),
            Err(mfrisk::Error::NoBistableEquilibria(_)) => json!({
                "xi_b": 0.0,
                "xi0": Value::Null,
                "xi1": Value::Null,
                "sigma_c": sigma_c,
                "bistable": false,
                "method": "small-h-expansion",
                "residual": 0.0,
            }),
            Err(e) => return Err(e.into()),
        }
    } else {
        let sol = solve_bistable(&params)?;
        serde_json::to_value(&sol)
            .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?
    };
    let obj = record.as_object_mut().expect("equilibrium record is an object");
    obj.insert("seed".to_string(), json!(seed));
    obj.insert("params".to_string(), json!(params));
    let out = resolve_out(&global.out_dir, args.out.clone());
    record_artifact(out, record).emit(global.format)
}

// ==================== rate ====================

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "kebab-case")]
pub enum RateMethodArg {
    /// Closed form at h = 0 from xi0, sigma, and T.
    H0,
    /// Small-h closed form from the full parameter set.
    SmallH,
    /// Direct minimization of the reduced action over discrete paths.
    Minimize,
    /// Gaussian-population action evaluated on the minimizing path.
    GaussianPath,
    /// Euler-Lagrange boundary value problem via shooting.
    Bvp,
}

impl RateMethodArg {
    fn label(self) -> &'static str {
        match self {
            RateMethodArg::H0 => "h0",
            RateMethodArg::SmallH => "small-h",
            RateMethodArg::Minimize => "minimize",
            RateMethodArg::GaussianPath => "gaussian-path",
            RateMethodArg::Bvp => "bvp",
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct RateArgs {
    /// Experiment config JSON supplying a params object.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// How to compute the rate.
    #[arg(long, value_enum)]
    pub method: RateMethodArg,
    /// Equilibrium displacement for the h0 method; derived from theta
    /// and sigma when omitted.
    #[arg(long)]
    pub xi0: Option<f64>,
    /// Coupling strength, overrides the config value.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Noise level, overrides the config value.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Intrinsic drift scale, overrides the config value.
    #[arg(long)]
    pub h: Option<f64>,
    /// Transition horizon; falls back to the config horizon.
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Path discretization intervals for the variational methods.
    #[arg(long, default_value_t = 2000)]
    pub grid: usize,
    /// Population size used to report log_p = -N rate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Output file for the JSON record; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the optimal path as CSV `t,a` to this file.
    #[arg(long = "path-out")]
    pub path_out: Option<PathBuf>,
}

pub fn run_rate(global: &Global, args: &RateArgs) -> CliResult<()> {
    let cfg = args.config.as_ref().map(|p| ExperimentConfig::load(p)).transpose()?;
    let base = cfg.as_ref().and_then(|c| c.params.clone());
    let seed = global.seed.or(cfg.as_ref().and_then(|c| c.seed)).unwrap_or(0);
    let theta = args.theta.or(base.as_ref().map(|p| p.theta));
    let sigma = args.sigma.or(base.as_ref().map(|p| p.sigma));
    let h = args.h.or(base.as_ref().map(|p| p.h));
    let t = args
        .t
        .or(base.as_ref().map(|p| p.horizon))
        .ok_or_else(|| CliError::Config("rate needs --T or a config with a horizon".to_string()))?;
    let n = args.n.or(base.as_ref().map(|p| p.n_agents)).unwrap_or(100);

    let full_params = || -> CliResult<ModelParams> {
        let (Some(theta), Some(sigma), Some(h)) = (theta, sigma, h) else {
            return Err(CliError::Config(format!(
                "method {} needs --theta, --sigma, and --h (or a config params object)",
                args.method.label()
            )));
        };
        Ok(ModelParams {
            h,
            theta,
            sigma,
            n_agents: n,
            horizon: t,
            dt: base.as_ref().map(|p| p.dt).unwrap_or_else(|| default_dt(theta)),
        })
    };

    let mut params_used: Option<ModelParams> = None;
    let mut xi0_used: Option<f64> = None;
    let (value, path): (f64, Option<MeanPath>) = match args.method {
        RateMethodArg::H0 => {
            let sigma = sigma.ok_or_else(|| {
                CliError::Config("method h0 needs --sigma (or a config params object)".to_string())
            })?;
            let xi0 = match args.xi0 {
                Some(x) => x,
                None => {
                    // Derive xi0 from theta and sigma; h plays no role in
                    // the h = 0 formula, so it defaults to zero here.
                    let Some(theta) = theta else {
                        return Err(CliError::Config(
                            "method h0 needs --xi0, or --theta with --sigma to derive it"
                                .to_string(),
                        ));
                    };
                    let p = ModelParams {
                        h: h.unwrap_or(0.0),
                        theta,
                        sigma,
                        n_agents: n,
                        horizon: t,
                        dt: base.as_ref().map(|p| p.dt).unwrap_or_else(|| default_dt(theta)),
                    };
                    let (xi0, _) = small_h_equilibrium(&p)?;
                    params_used = Some(p);
                    xi0
                }
            };
            if !(t > 0.0) || !(xi0.is_finite() && sigma > 0.0) {
                return Err(CliError::Config(format!(
                    "method h0 needs positive sigma and T and finite xi0 (got sigma = {sigma}, T = {t}, xi0 = {xi0})"
                )));
            }
            xi0_used = Some(xi0);
            (rate_h0(xi0, sigma, t), None)
        }
        RateMethodArg::SmallH => {
            let p = full_params()?;
            let v = rate_small_h(&p, t)?;
            params_used = Some(p);
            (v, None)
        }
        RateMethodArg::Minimize => {
            let p = full_params()?;
            let est = minimize_reduced(&p, t, args.grid)?;
            params_used = Some(p);
            (est.value, est.path)
        }
        RateMethodArg::GaussianPath => {
            let p = full_params()?;
            let est = minimize_reduced(&p, t, args.grid)?;
            let path = est.path.ok_or_else(|| {
                CliError::Numeric("minimizer returned no path to evaluate".to_string())
            })?;
            let v = gaussian_path_rate(&path, &p)?;
            params_used = Some(p);
            (v, Some(path))
        }
        RateMethodArg::Bvp => {
            let p = full_params()?;
            let path = optimal_path_bvp(&p, t)?;
            let v = reduced_rate_functional(&path, &p)?;
            params_used = Some(p);
            (v, Some(path))
        }
    };

    if let Some(path_out) = &args.path_out {
        let Some(path) = path.as_ref() else {
            return Err(CliError::Config(format!(
                "method {} produces no path; use minimize, gaussian-path, or bvp",
                args.method.label()
            )));
        };
        let rows: Vec<Vec<f64>> = path
            .times
            .iter()
            .zip(&path.values)
            .map(|(&t, &a)| vec![t, a])
            .collect();
        Artifact {
            path: resolve_out(&global.out_dir, Some(path_out.clone())),
            payload: Payload::Table {
                columns: vec!["t".to_string(), "a".to_string()],
                rows,
            },
            meta: Some(json!({
                "seed": seed,
                "method": args.method.label(),
                "T": t,
                "grid": args.grid,
                "params": params_used,
            })),
        }
        .emit(global.format)?;
    }

    let log_p = -(n as f64) * value;
    let mut record = json!({
        "rate": value,
        "method": args.method.label(),
        "N": n,
        "log_p": log_p,
        "p": log_p.exp(),
        "T": t,
        "seed": seed,
    });
    let obj = record.as_object_mut().expect("rate record is an object");
    if matches!(
        args.method,
        RateMethodArg::Minimize | RateMethodArg::GaussianPath
    ) {
        obj.insert("grid".to_string(), json!(args.grid));
    }
    if let Some(xi0) = xi0_used {
        obj.insert("xi0".to_string(), json!(xi0));
    }
    if let Some(p) = &params_used {
        obj.insert("params".to_string(), json!(p));
    }
    let out = resolve_out(&global.out_dir, args.out.clone());
    record_artifact(out, record).emit(global.format)
}

// ==================== diversity ====================

#[derive(clap::Args, Debug)]
pub struct DiversityArgs {
    /// Group spec: inline JSON array [{"theta":..,"fraction":..},..] or
    /// a path to a file holding that array.
    #[arg(long)]
    pub groups: Option<String>,
    /// Noise level.
    #[arg(long)]
    pub sigma: f64,
    /// Population size for the variance formula.
    #[arg(long = "N", default_value_t = 100)]
    pub n: usize,
    /// Transition horizon.
    #[arg(long = "T", default_value_t = 10.0)]
    pub t: f64,
    /// Comma-separated spread values; scans the two-group family
    /// theta_bar (1 +- delta) at equal fractions.
    #[arg(long = "delta-scan")]
    pub delta_scan: Option<String>,
    /// Mean rate of the scan family; defaults to the mean of --groups.
    #[arg(long = "theta-bar")]
    pub theta_bar: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_groups(text: &str) -> CliResult<GroupSpec> {
    let trimmed = text.trim_start();
    let json_text = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        text.to_string()
    } else {
        std::fs::read_to_string(text)
            .map_err(|e| CliError::Io(format!("cannot read groups file {text}: {e}")))?
    };
    let entries: Vec<GroupEntry> = serde_json::from_str(&json_text)
        .map_err(|e| CliError::Config(format!("bad groups JSON: {e}")))?;
    let spec = GroupSpec::from(entries);
    spec.validate()?;
    Ok(spec)
}

/// The symmetric two-group scan family: rates theta_bar (1 +- delta) at
/// equal fractions, collapsing to one group at delta = 0.
fn scan_groups(theta_bar: f64, delta: f64) -> CliResult<GroupSpec> {
    if delta == 0.0 {
        Ok(GroupSpec::new(vec![theta_bar], vec![1.0])?)
    } else {
        let pert =
            DiversityPerturbation::new(theta_bar, vec![1.0, -1.0], vec![0.5, 0.5], delta)?;
        Ok(pert.to_groups()?)
    }
}

pub fn run_diversity(global: &Global, args: &DiversityArgs) -> CliResult<()> {
    let seed = global.seed.unwrap_or(0);
    let groups = args.groups.as_deref().map(parse_groups).transpose()?;
    let out = resolve_out(&global.out_dir, args.out.clone());

    if let Some(scan_text) = &args.delta_scan {
        let deltas = parse_float_list("--delta-scan", scan_text)?;
        let theta_bar = args
            .theta_bar
            .or_else(|| groups.as_ref().map(|g| g.mean_theta()))
            .ok_or_else(|| {
                CliError::Config(
                    "--delta-scan needs --theta-bar (or --groups to take the mean rate from)"
                        .to_string(),
                )
            })?;
        let mut rows = Vec::with_capacity(deltas.len());
        for &delta in &deltas {
            let exact_groups = scan_groups(theta_bar, delta)?;
            let xi_exact = small_h_equilibrium_div(&exact_groups, args.sigma).map_err(|e| {
                CliError::Numeric(format!("delta = {delta}: {e}"))
            })?;
            let st2_exact = sigma_t_squared(&exact_groups, args.sigma, args.n, args.t)?;
            let pert =
                DiversityPerturbation::new(theta_bar, vec![1.0, -1.0], vec![0.5, 0.5], delta)?;
            let exp = diversity_expansion(&pert, args.sigma, args.n, args.t)?;
            rows.push(vec![
                delta,
                xi_exact * xi_exact,
                exp.xi_b_squared,
                st2_exact,
                exp.sigma_t_squared,
                exp.log_p,
            ]);
        }
        let columns = [
            "delta",
            "xi_b2_exact",
            "xi_b2_exp",
            "sigmaT2_exact",
            "sigmaT2_exp",
            "log_pT_exp",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        return Artifact {
            path: out,
            payload: Payload::Table { columns, rows },
            meta: Some(json!({
                "seed": seed,
                "scan": {
                    "theta_bar": theta_bar,
                    "alphas": [1.0, -1.0],
                    "fractions": [0.5, 0.5],
                    "sigma": args.sigma,
                    "n_agents": args.n,
                    "horizon": args.t,
                },
            })),
        }
        .emit(global.format);
    }

    let groups = groups.ok_or_else(|| {
        CliError::Config("diversity needs --groups (or --delta-scan with --theta-bar)".to_string())
    })?;
    let (p, log_p) = transition_probability_diverse(&groups, args.sigma, args.n, args.t)?;
    let xi = small_h_equilibrium_div(&groups, args.sigma)?;
    let st2 = sigma_t_squared(&groups, args.sigma, args.n, args.t)?;

    // Decompose the groups around their mean rate to evaluate the
    // second-order expansion next to the exact values. Rates are
    // Theta_l = theta_bar (1 + delta alpha_l), so delta is the largest
    // relative deviation and the alphas are normalized to max one.
    let theta_bar = groups.mean_theta();
    let devs: Vec<f64> = groups.thetas.iter().map(|th| th - theta_bar).collect();
    let spread = devs.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let delta = if spread < 1e-12 * theta_bar {
        0.0
    } else {
        spread / theta_bar
    };
    let expansion = {
        let alphas = if delta == 0.0 {
            vec![0.0; groups.k()]
        } else {
            devs.iter().map(|d| d / spread).collect()
        };
        DiversityPerturbation::new(theta_bar, alphas, groups.fractions.clone(), delta)
            .and_then(|pert| diversity_expansion(&pert, args.sigma, args.n, args.t))
            .ok()
    };
    let record = json!({
        "exact": {
            "xi_b2": xi * xi,
            "sigma_t2": st2,
            "log_p": log_p,
            "p": p,
        },
        "expansion": expansion.map(|e| json!({
            "xi_b2": e.xi_b_squared,
            "sigma_t2": e.sigma_t_squared,
            "log_p": e.log_p,
        })),
        "delta": delta,
        "theta_bar": theta_bar,
        "groups": groups,
        "sigma": args.sigma,
        "n_agents": args.n,
        "horizon": args.t,
        "seed": seed,
    });
    record_artifact(out, record).emit(global.format)
}

// ==================== fluctuation ====================

#[derive(clap::Args, Debug)]
pub struct FluctuationArgs {
    /// Experiment config JSON supplying the params object.
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated observation times; default is 51 evenly spaced
    /// points over [0, horizon].
    #[arg(long = "t-grid")]
    pub t_grid: Option<String>,
    /// Run the Monte Carlo check alongside the closed forms.
    #[arg(long)]
    pub validate: bool,
    /// Replicas for the Monte Carlo check; overrides the config value.
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn curve_table(curve: &FluctuationCurve) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut columns = vec![
        "t".to_string(),
        "var_mean_cf".to_string(),
        "var_agent_cf".to_string(),
    ];
    let with_mc = curve.var_mean_mc.is_some();
    if with_mc {
        columns.extend(
            ["var_mean_mc", "var_agent_mc", "se_mean", "se_agent"]
                .iter()
                .map(|s| s.to_string()),
        );
    }
    let rows = (0..curve.times.len())
        .map(|i| {
            let mut row = vec![
                curve.times[i],
                curve.var_mean_cf[i],
                curve.var_agent_cf[i],
            ];
            if with_mc {
                row.push(curve.var_mean_mc.as_ref().unwrap()[i]);
                row.push(curve.var_agent_mc.as_ref().unwrap()[i]);
                row.push(curve.se_mean.as_ref().unwrap()[i]);
                row.push(curve.se_agent.as_ref().unwrap()[i]);
            }
            row
        })
        .collect();
    (columns, rows)
}

pub fn run_fluctuation(global: &Global, args: &FluctuationArgs) -> CliResult<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let params = cfg.require_params()?;
    let seed = global.seed.or(cfg.seed).unwrap_or(0);
    let grid = match &args.t_grid {
        Some(text) => parse_float_list("--t-grid", text)?,
        None => (0..=50)
            .map(|i| params.horizon * i as f64 / 50.0)
            .collect(),
    };
    let curve = if args.validate {
        let replicas = args.replicas.or(cfg.replicas).unwrap_or(1000);
        validate_fluctuations_grid(&params, &grid, replicas, seed)?
    } else {
        fluctuation_curve(&params, &grid)?
    };
    if let Some(w) = &curve.warning {
        eprintln!("{}", json!({ "warning": w }));
    }
    let (columns, rows) = curve_table(&curve);
    let mut meta = json!({
        "seed": seed,
        "params": params,
        "times_snapped_to_step_grid": curve.times,
    });
    let obj = meta.as_object_mut().expect("meta is an object");
    if args.validate {
        obj.insert("replicas".to_string(), json!(curve.replicas));
        obj.insert(
            "rng".to_string(),
            rng_block(seed, "one per replica index"),
        );
    }
    if let Some(w) = &curve.warning {
        obj.insert("warning".to_string(), json!(w));
    }
    Artifact {
        path: resolve_out(&global.out_dir, args.out.clone()),
        payload: Payload::Table { columns, rows },
        meta: Some(meta),
    }
    .emit(global.format)
}

// ==================== fokker-planck ====================

#[derive(clap::Args, Debug)]
pub struct FokkerPlanckArgs {
    /// Experiment config JSON; a het object selects the grouped system,
    /// otherwise the params object drives the single-density solver.
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated output times, strictly increasing.
    #[arg(long = "t-end")]
    pub t_end: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn check_times(times: &[f64]) -> CliResult<()> {
    if times[0] < 0.0 {
        return Err(CliError::Config(format!(
            "--t-end times must be nonnegative (got {})",
            times[0]
        )));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(CliError::Config(format!(
                "--t-end times must be strictly increasing (got {} then {})",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

pub fn run_fokker_planck(global: &Global, args: &FokkerPlanckArgs) -> CliResult<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let times = parse_float_list("--t-end", &args.t_end)?;
    check_times(&times)?;
    let seed = global.seed.or(cfg.seed).unwrap_or(0);
    let out = resolve_out(&global.out_dir, args.out.clone());

    if let Some(het) = &cfg.het {
        het.validate()?;
        let xi = if het.h == 0.0 {
            match small_h_equilibrium_div(&het.groups, het.sigma) {
                Ok(x) => x,
                Err(mfrisk::Error::NoBistableEquilibria(_)) => 0.0,
                Err(e) => return Err(e.into()),
            }
        } else {
            solve_bistable_div(het)?.xi_b
        };
        let k = het.groups.k();
        let mut grids: Vec<DensityGrid> = het
            .groups
            .thetas
            .iter()
            .map(|&theta_l| {
                DensityGrid::gaussian(
                    DEFAULT_Y_MIN,
                    DEFAULT_Y_MAX,
                    DEFAULT_N_CELLS,
                    -xi,
                    het.sigma * het.sigma / (2.0 * theta_l),
                )
            })
            .collect::<mfrisk::Result<_>>()?;
        let mut columns = vec!["t".to_string(), "y".to_string()];
        for l in 1..=k {
            columns.push(format!("u_{l}"));
        }
        let mut rows = Vec::with_capacity(times.len() * DEFAULT_N_CELLS);
        let mut t_prev = 0.0;
        for &t in &times {
            grids = evolve_fp_system(&grids, &het.groups, het.sigma, het.h, t - t_prev)?;
            t_prev = t;
            let dy = grids[0].dy();
            for i in 0..DEFAULT_N_CELLS {
                let y = DEFAULT_Y_MIN + (i as f64 + 0.5) * dy;
                let mut row = vec![t, y];
                for g in &grids {
                    row.push(g.values[i]);
                }
                rows.push(row);
            }
        }
        return Artifact {
            path: out,
            payload: Payload::Table { columns, rows },
            meta: Some(json!({
                "seed": seed,
                "het": het,
                "initial": {"kind": "per-group gaussians", "mean": -xi, "variances": "sigma^2 / (2 Theta_l)"},
                "grid": {"y_min": DEFAULT_Y_MIN, "y_max": DEFAULT_Y_MAX, "n_cells": DEFAULT_N_CELLS},
            })),
        }
        .emit(global.format);
    }

    let params = cfg.require_params()?;
    params.validate()?;
    let xi = if params.h == 0.0 {
        match small_h_equilibrium(&params) {
            Ok((xi0, _)) => xi0,
            Err(mfrisk::Error::NoBistableEquilibria(_)) => 0.0,
            Err(e) => return Err(e.into()),
        }
    } else {
        solve_bistable(&params)?.xi_b
    };
    let mut grid = equilibrium_density(-xi, &params, DEFAULT_Y_MIN, DEFAULT_Y_MAX, DEFAULT_N_CELLS)?;
    let mut rows = Vec::with_capacity(times.len() * DEFAULT_N_CELLS);
    let mut t_prev = 0.0;
    for &t in &times {
        grid = evolve_fp(&grid, &params, t - t_prev)?;
        t_prev = t;
        let dy = grid.dy();
        for i in 0..DEFAULT_N_CELLS {
            let y = DEFAULT_Y_MIN + (i as f64 + 0.5) * dy;
            rows.push(vec![t, y, grid.values[i]]);
        }
    }
    Artifact {
        path: out,
        payload: Payload::Table {
            columns: vec!["t".to_string(), "y".to_string(), "u".to_string()],
            rows,
        },
        meta: Some(json!({
            "seed": seed,
            "params": params,
            "initial": {"kind": "equilibrium density", "xi": -xi},
            "grid": {"y_min": DEFAULT_Y_MIN, "y_max": DEFAULT_Y_MAX, "n_cells": DEFAULT_N_CELLS},
        })),
    }
    .emit(global.format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_flag_dt_defaults_stay_stable() {
        for theta in [0.5, 1.0, 10.0, 200.0] {
            let dt = default_dt(theta);
            assert!(dt * theta.max(1.0) <= 0.2 + 1e-12, "theta {theta}");
            assert!(dt > 0.0);
        }
    }

    #[test]
    fn inline_groups_parse_and_validate() {
        let spec = parse_groups(r#"[{"theta": 1.0, "fraction": 0.5}, {"theta": 3.0, "fraction": 0.5}]"#)
            .unwrap();
        assert_eq!(spec.k(), 2);
        assert!((spec.mean_theta() - 2.0).abs() < 1e-15);
        let err = parse_groups(r#"[{"theta": -1.0, "fraction": 1.0}]"#).unwrap_err();
        assert_eq!(err.kind(), "config");
    }

    #[test]
    fn missing_groups_file_is_an_io_error() {
        let err = parse_groups("/nonexistent/groups.json").unwrap_err();
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn scan_family_collapses_to_one_group_at_zero_spread() {
        let g0 = scan_groups(2.0, 0.0).unwrap();
        assert_eq!(g0.k(), 1);
        assert_eq!(g0.thetas, vec![2.0]);
        let g = scan_groups(2.0, 0.3).unwrap();
        assert_eq!(g.k(), 2);
        assert!((g.mean_theta() - 2.0).abs() < 1e-15);
        assert!(scan_groups(2.0, 1.0).is_err(), "delta = 1 zeroes a rate");
    }

    #[test]
    fn time_lists_must_increase() {
        assert!(check_times(&[0.5, 1.0, 2.0]).is_ok());
        assert!(check_times(&[0.0]).is_ok());
        assert!(check_times(&[1.0, 1.0]).is_err());
        assert!(check_times(&[2.0, 1.0]).is_err());
        assert!(check_times(&[-0.5, 1.0]).is_err());
    }
}
