//! Every parameter choice behind the `figures` subcommand lives here, in
//! one place, so the chosen panel values are easy to audit and change.
//!
//! Each regime produces three panels spanning the quantity of interest:
//! below, at, and above the critical relation 3 sigma^2 / (2 theta) = 1
//! for the noise and coupling sweeps, and low/mid/high for h, N, and the
//! diversity spread.

use mfrisk::model::{GroupSpec, HetModelParams, ModelParams};

use crate::error::{CliError, CliResult};

/// Named figure regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "kebab-case")]
pub enum Regime {
    SigmaSweep,
    ThetaSweep,
    HSweep,
    NSweep,
    HetSigma,
    HetH,
    HetN,
    HetDiversity,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::SigmaSweep => "sigma-sweep",
            Regime::ThetaSweep => "theta-sweep",
            Regime::HSweep => "h-sweep",
            Regime::NSweep => "n-sweep",
            Regime::HetSigma => "het-sigma",
            Regime::HetH => "het-h",
            Regime::HetN => "het-n",
            Regime::HetDiversity => "het-diversity",
        }
    }
}

/// One panel: either a homogeneous or a heterogeneous parameter set,
/// with a short label naming what varies.
#[derive(Debug, Clone)]
pub struct Panel {
    pub label: String,
    pub homogeneous: Option<ModelParams>,
    pub heterogeneous: Option<HetModelParams>,
}

fn homogeneous_panel(label: String, params: ModelParams) -> Panel {
    Panel {
        label,
        homogeneous: Some(params),
        heterogeneous: None,
    }
}

fn heterogeneous_panel(label: String, params: HetModelParams) -> Panel {
    Panel {
        label,
        homogeneous: None,
        heterogeneous: Some(params),
    }
}

const BASE_N: usize = 20;
const BASE_HORIZON: f64 = 100.0;
const BASE_DT: f64 = 0.02;

fn base_homogeneous() -> ModelParams {
    ModelParams {
        h: 0.1,
        theta: 10.0,
        sigma: 1.0,
        n_agents: BASE_N,
        horizon: BASE_HORIZON,
        dt: BASE_DT,
    }
}

/// Two-group base used by the heterogeneous panels: rates (1, 3) at
/// equal fractions, mean rate 2.
fn base_heterogeneous() -> CliResult<HetModelParams> {
    let groups = GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.5])
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(HetModelParams {
        h: 0.1,
        sigma: 0.5,
        n_agents: BASE_N,
        horizon: BASE_HORIZON,
        dt: BASE_DT,
        groups,
    })
}

/// The three panels of a regime, in presentation order.
pub fn panels(regime: Regime) -> CliResult<Vec<Panel>> {
    match regime {
        // Criticality sits at sigma = sqrt(2 theta / 3) = sqrt(20/3),
        // about 2.582 at theta = 10: below, at, above.
        Regime::SigmaSweep => {
            let sigmas = [2.0, (20.0_f64 / 3.0).sqrt(), 3.2];
            Ok(sigmas
                .iter()
                .enumerate()
                .map(|(i, &sigma)| {
                    let mut p = base_homogeneous();
                    p.sigma = sigma;
                    homogeneous_panel(format!("panel-{}-sigma-{:.4}", i + 1, sigma), p)
                })
                .collect())
        }
        // At sigma = 1 the critical coupling is theta = 3 sigma^2 / 2 =
        // 1.5: weaker coupling loses bistability.
        Regime::ThetaSweep => {
            let thetas = [1.0, 1.5, 6.0];
            Ok(thetas
                .iter()
                .enumerate()
                .map(|(i, &theta)| {
                    let mut p = base_homogeneous();
                    p.theta = theta;
                    homogeneous_panel(format!("panel-{}-theta-{:.4}", i + 1, theta), p)
                })
                .collect())
        }
        Regime::HSweep => {
            let hs = [0.05, 0.1, 0.2];
            Ok(hs
                .iter()
                .enumerate()
                .map(|(i, &h)| {
                    let mut p = base_homogeneous();
                    p.h = h;
                    homogeneous_panel(format!("panel-{}-h-{:.4}", i + 1, h), p)
                })
                .collect())
        }
        Regime::NSweep => {
            let ns = [10usize, 20, 40];
            Ok(ns
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let mut p = base_homogeneous();
                    p.n_agents = n;
                    homogeneous_panel(format!("panel-{}-n-{}", i + 1, n), p)
                })
                .collect())
        }
        // For groups (1, 3) at equal fractions the critical noise
        // sqrt(sum(rho/Theta) / sum(1.5 rho/Theta^2)) works out to
        // sqrt(0.8), about 0.894: below, at, above.
        Regime::HetSigma => {
            let sigmas = [0.7, 0.8_f64.sqrt(), 1.1];
            let base = base_heterogeneous()?;
            Ok(sigmas
                .iter()
                .enumerate()
                .map(|(i, &sigma)| {
                    let mut p = base.clone();
                    p.sigma = sigma;
                    heterogeneous_panel(format!("panel-{}-sigma-{:.4}", i + 1, sigma), p)
                })
                .collect())
        }
        Regime::HetH => {
            let hs = [0.05, 0.1, 0.2];
            let base = base_heterogeneous()?;
            Ok(hs
                .iter()
                .enumerate()
                .map(|(i, &h)| {
                    let mut p = base.clone();
                    p.h = h;
                    heterogeneous_panel(format!("panel-{}-h-{:.4}", i + 1, h), p)
                })
                .collect())
        }
        Regime::HetN => {
            let ns = [10usize, 20, 40];
            let base = base_heterogeneous()?;
            Ok(ns
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let mut p = base.clone();
                    p.n_agents = n;
                    heterogeneous_panel(format!("panel-{}-n-{}", i + 1, n), p)
                })
                .collect())
        }
        // Fixed mean rate 2 and noise 0.8, spread delta growing. The
        // third spread pushes the critical noise below 0.8, so that
        // panel is deliberately outside the bistable regime: spread
        // alone destabilizes the system.
        Regime::HetDiversity => {
            let deltas = [0.0, 0.3, 0.6];
            let base = base_heterogeneous()?;
            deltas
                .iter()
                .enumerate()
                .map(|(i, &delta)| {
                    let groups = if delta == 0.0 {
                        GroupSpec::new(vec![2.0], vec![1.0])
                    } else {
                        GroupSpec::new(
                            vec![2.0 * (1.0 - delta), 2.0 * (1.0 + delta)],
                            vec![0.5, 0.5],
                        )
                    }
                    .map_err(|e| CliError::Config(e.to_string()))?;
                    let mut p = base.clone();
                    p.sigma = 0.8;
                    p.groups = groups;
                    Ok(heterogeneous_panel(
                        format!("panel-{}-delta-{:.4}", i + 1, delta),
                        p,
                    ))
                })
                .collect()
        }
    }
}
