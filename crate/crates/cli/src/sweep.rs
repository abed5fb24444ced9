//! Experiment sweeps. Grid points run on the rayon pool; rows come back in
//! grid order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spotcheck_core::mechanisms::{optimal_ros, optimal_rss, EconParams, Mechanism, Optimum};
use spotcheck_core::prob_model::SignalModel;
use spotcheck_core::workload::{compare_mechanisms, ta_workload};
use spotcheck_core::Result;

use crate::config::{SweepNConfig, SweepRcConfig};

pub const SWEEP_RC_HEADER: [&str; 8] = [
    "r_over_c",
    "p_signal",
    "prior_star",
    "ros_workload",
    "rss_workload",
    "scaled_rss",
    "feasible_ros",
    "feasible_rss",
];

pub const SWEEP_N_HEADER: [&str; 6] =
    ["n", "ros_workload", "rss_workload", "rsus_workload", "scaled_rss", "scaled_rsus"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRcRow {
    pub r_over_c: f64,
    pub p_signal: f64,
    /// Prior of the likelier quality minimizing the scaled RSS workload.
    pub prior_star: Option<f64>,
    pub ros_workload: Option<f64>,
    pub rss_workload: Option<f64>,
    pub scaled_rss: Option<f64>,
    /// Whether ROS is feasible at some prior on the grid.
    pub feasible_ros: bool,
    pub feasible_rss: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepNRow {
    pub n: usize,
    pub ros_workload: Option<f64>,
    pub rss_workload: Option<f64>,
    pub rsus_workload: Option<f64>,
    pub scaled_rss: Option<f64>,
    pub scaled_rsus: Option<f64>,
}

/// Priors `0.5, 0.5 + step, ...` strictly below 1. Labels are canonical, so
/// priors below one half repeat models already on the grid.
pub fn prior_grid(step: f64) -> Vec<f64> {
    let per_unit = (1.0 / step).round();
    let at = |k: usize| {
        if (per_unit * step - 1.0).abs() < 1e-9 && per_unit % 2.0 == 0.0 {
            (per_unit / 2.0 + k as f64) / per_unit
        } else {
            0.5 + k as f64 * step
        }
    };
    (0..).map(at).take_while(|&p| p < 1.0 - 1e-12).collect()
}

fn workload_of(model: &SignalModel, mech: Result<Optimum<Mechanism>>) -> Result<Option<f64>> {
    match mech?.into_value() {
        Some(m) => Ok(Some(ta_workload(model, &m)?.workload)),
        None => Ok(None),
    }
}

pub fn sweep_rc_point(r_over_c: f64, p_signal: f64, priors: &[f64], n: usize) -> Result<SweepRcRow> {
    let econ = EconParams::new(1.0, r_over_c)?;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    let (mut any_ros, mut any_rss) = (false, false);
    for &prior in priors {
        let model = SignalModel::symmetric(prior, p_signal)?;
        let ros = workload_of(&model, optimal_ros(&model, &econ, n))?;
        let rss = workload_of(&model, optimal_rss(&model, &econ, n))?;
        any_ros |= ros.is_some();
        any_rss |= rss.is_some();
        if let (Some(ros), Some(rss)) = (ros, rss) {
            let scaled = rss / ros;
            if best.is_none_or(|b| scaled < b.3) {
                best = Some((prior, ros, rss, scaled));
            }
        }
    }
    let reason = match (best, any_ros, any_rss) {
        (Some(_), ..) => None,
        (None, false, false) => Some("ROS and RSS infeasible at every prior".to_string()),
        (None, false, true) => Some("ROS infeasible at every prior".to_string()),
        (None, true, _) => Some("no prior with both mechanisms feasible".to_string()),
    };
    Ok(SweepRcRow {
        r_over_c,
        p_signal,
        prior_star: best.map(|b| b.0),
        ros_workload: best.map(|b| b.1),
        rss_workload: best.map(|b| b.2),
        scaled_rss: best.map(|b| b.3),
        feasible_ros: any_ros,
        feasible_rss: any_rss,
        reason,
    })
}

/// Rows ordered by `r_over_c` first, then `p_signal`.
pub fn sweep_rc(cfg: &SweepRcConfig, n: usize) -> Result<Vec<SweepRcRow>> {
    let priors = prior_grid(cfg.prior_step);
    let points: Vec<(f64, f64)> =
        cfg.r_over_c.iter().flat_map(|&r| cfg.p_signal.iter().map(move |&p| (r, p))).collect();
    points.par_iter().map(|&(r, p)| sweep_rc_point(r, p, &priors, n)).collect()
}

pub fn sweep_n(cfg: &SweepNConfig, model: &SignalModel, econ: &EconParams) -> Result<Vec<SweepNRow>> {
    (cfg.n_min..=cfg.n_max)
        .into_par_iter()
        .map(|n| {
            let c = compare_mechanisms(model, econ, n)?;
            Ok(SweepNRow {
                n,
                ros_workload: c.ros_workload(),
                rss_workload: c.rss_workload(),
                rsus_workload: c.rsus_workload(),
                scaled_rss: c.scaled_rss,
                scaled_rsus: c.scaled_rsus,
            })
        })
        .collect()
}
