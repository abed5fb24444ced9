use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use clap::Subcommand;
use serde::{Deserialize, Serialize};
use spotcheck_core::incentives::{verify_dsic, verify_iccp_with, Concept, Strategy, VerificationReport};
use spotcheck_core::mechanisms::{
    feasibility_report, optimal_hetero_prss, optimal_ros, optimal_rss, optimal_rsus, Family, Feasibility,
    FeasibilityReport, Mechanism, Optimum, Policy,
};
use spotcheck_core::prob_model::{HeteroModel, SignalModel};
use spotcheck_core::sim::{simulate, SimConfig, SimResult};
use spotcheck_core::workload::{compare_mechanisms, hetero_workload, ta_workload, ComparisonReport};

use crate::config::{ConceptChoice, FamilyChoice, OutputFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{fmt_f64, use_color, verdict, write_sweep_n, write_sweep_rc};
use crate::sweep::{sweep_n, sweep_rc, SweepNRow, SweepRcRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimal spot-checking probabilities for the chosen family.
    Optimal,
    /// Brute-force incentive certification.
    Verify,
    /// ROS, RSS and RSUS workloads side by side.
    Compare,
    /// Minimal scaled RSS workload over a grid of R/c and signal accuracy.
    SweepRc,
    /// Workloads as a function of the number of students.
    SweepN,
    /// Monte Carlo run of the grading process.
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    VerificationFailed,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::VerificationFailed => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalReport {
    pub config: RunConfig,
    pub mechanism: Optimum<Mechanism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilityReport>,
    pub workload: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: RunConfig,
    pub concept: Concept,
    pub verification: Option<VerificationReport>,
    /// Set instead of `verification` when there is no mechanism to check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<Feasibility>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config: RunConfig,
    pub comparison: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRcReport {
    pub config: RunConfig,
    pub rows: Vec<SweepRcRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepNReport {
    pub config: RunConfig,
    pub rows: Vec<SweepNRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub config: RunConfig,
    pub family: Family,
    pub profile: Vec<Strategy>,
    pub result: SimResult,
    /// Exact workload under truthful play; absent for other profiles.
    pub analytic_workload: Option<f64>,
    pub workload_delta: Option<f64>,
}

enum Model {
    Homogeneous(SignalModel),
    Hetero(HeteroModel),
}

fn model(cfg: &RunConfig) -> Result<Model> {
    Ok(match cfg.hetero()? {
        Some(h) => Model::Hetero(h),
        None => Model::Homogeneous(cfg.signal_model()?),
    })
}

fn homogeneous(cfg: &RunConfig, what: &str) -> Result<SignalModel> {
    if cfg.hetero_model.is_some() {
        return Err(CliError::Usage(format!("{what} needs a homogeneous model")));
    }
    cfg.signal_model()
}

fn build(cfg: &RunConfig, model: &Model) -> Result<Optimum<Mechanism>> {
    let econ = cfg.econ()?;
    let n = cfg.students();
    Ok(match (cfg.family, model) {
        (FamilyChoice::Ros, Model::Homogeneous(m)) => optimal_ros(m, &econ, n)?,
        (FamilyChoice::Rss, Model::Homogeneous(m)) => optimal_rss(m, &econ, n)?,
        (FamilyChoice::Rsus, Model::Homogeneous(m)) => optimal_rsus(m, &econ, n)?,
        (FamilyChoice::Hetero, Model::Hetero(h)) => optimal_hetero_prss(h, econ.reward)?,
        (FamilyChoice::Custom, _) => {
            let policy = cfg.custom_policy()?.expect("validated");
            let feasibility = Feasibility { feasible: true, margin: 0.0, reason: Some("custom policy".into()) };
            Optimum::Feasible { value: Mechanism::custom(policy, econ), feasibility }
        }
        (family, _) => return Err(CliError::Usage(format!("family {family:?} does not match the model"))),
    })
}

/// Exact TA workload under truthful play.
fn analytic_workload(model: &Model, mech: &Mechanism) -> Result<Option<f64>> {
    Ok(match (model, &mech.policy) {
        (Model::Homogeneous(m), Policy::Count(_)) => Some(ta_workload(m, mech)?.workload),
        (Model::Hetero(h), Policy::Personal(p)) => Some(hetero_workload(h, p)?),
        _ => None,
    })
}

pub fn optimal(cfg: &RunConfig) -> Result<OptimalReport> {
    if cfg.family == FamilyChoice::Custom {
        return Err(CliError::Usage("optimal needs family ros, rss, rsus or hetero".into()));
    }
    let model = model(cfg)?;
    let mechanism = build(cfg, &model)?;
    let workload = match mechanism.value() {
        Some(m) => analytic_workload(&model, m)?,
        None => None,
    };
    let feasibility = match &model {
        Model::Homogeneous(m) => Some(feasibility_report(m, &cfg.econ()?)),
        Model::Hetero(_) => None,
    };
    Ok(OptimalReport { config: cfg.clone(), mechanism, feasibility, workload })
}

pub fn verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let model = model(cfg)?;
    let concept = match cfg.concept {
        ConceptChoice::Dsic => Concept::Dsic,
        ConceptChoice::Iccp => Concept::Iccp,
    };
    let mech = match build(cfg, &model)? {
        Optimum::Feasible { value, .. } => value,
        Optimum::Infeasible(f) => {
            return Ok(VerifyReport { config: cfg.clone(), concept, verification: None, infeasible: Some(f) })
        }
    };
    let tol = cfg.tolerance;
    let report = match (&model, concept) {
        (Model::Homogeneous(m), Concept::Dsic) => verify_dsic(m, &mech, tol)?,
        (Model::Homogeneous(m), Concept::Iccp) => verify_iccp_with(m, &mech, tol, cfg.iccp_deviations)?,
        (Model::Hetero(h), Concept::Dsic) => verify_dsic(h, &mech, tol)?,
        (Model::Hetero(h), Concept::Iccp) => verify_iccp_with(h, &mech, tol, cfg.iccp_deviations)?,
    };
    Ok(VerifyReport { config: cfg.clone(), concept, verification: Some(report), infeasible: None })
}

pub fn compare(cfg: &RunConfig) -> Result<CompareReport> {
    let model = homogeneous(cfg, "compare")?;
    let comparison = compare_mechanisms(&model, &cfg.econ()?, cfg.n)?;
    Ok(CompareReport { config: cfg.clone(), comparison })
}

pub fn run_sweep_rc(cfg: &RunConfig) -> Result<SweepRcReport> {
    homogeneous(cfg, "sweep-rc")?;
    Ok(SweepRcReport { config: cfg.clone(), rows: sweep_rc(&cfg.sweep_rc, cfg.n)? })
}

pub fn run_sweep_n(cfg: &RunConfig) -> Result<SweepNReport> {
    let model = homogeneous(cfg, "sweep-n")?;
    Ok(SweepNReport { config: cfg.clone(), rows: sweep_n(&cfg.sweep_n, &model, &cfg.econ()?)? })
}

pub fn run_simulation(cfg: &RunConfig) -> Result<SimulateReport> {
    let model = model(cfg)?;
    let mech = match build(cfg, &model)? {
        Optimum::Feasible { value, .. } => value,
        Optimum::Infeasible(f) => {
            return Err(CliError::Usage(format!(
                "no mechanism to simulate: {}",
                f.reason.unwrap_or_else(|| "infeasible".into())
            )))
        }
    };
    let profile = cfg.profile()?;
    let (trials, seed, family) = (cfg.trials, cfg.seed, mech.family);
    let truthful = profile.iter().all(|&s| s == Strategy::Truthful);
    let analytic = if truthful { analytic_workload(&model, &mech)? } else { None };
    let result = match model {
        Model::Homogeneous(m) => {
            simulate(&SimConfig { model: m, mechanism: mech, profile: profile.clone(), trials, seed })?
        }
        Model::Hetero(h) => simulate(&SimConfig { model: h, mechanism: mech, profile: profile.clone(), trials, seed })?,
    };
    let workload_delta = analytic.map(|a| result.empirical_workload.mean - a);
    Ok(SimulateReport { config: cfg.clone(), family, profile, result, analytic_workload: analytic, workload_delta })
}

fn policy_text(out: &mut String, mech: &Mechanism) {
    match &mech.policy {
        Policy::Count(p) => {
            let _ = writeln!(out, "{:>4}  {:<22}{:<22}", "k", "x_a(k)", "x_b(k)");
            for k in 0..=p.n() {
                let _ = writeln!(out, "{k:>4}  {:<22}{:<22}", fmt_f64(p.x_a()[k]), fmt_f64(p.x_b()[k]));
            }
        }
        Policy::Personal(ps) => {
            let _ = writeln!(out, "{:>7}  {:<22}{:<22}", "student", "x_a", "x_b");
            for (i, p) in ps.iter().enumerate() {
                let _ = writeln!(out, "{i:>7}  {:<22}{:<22}", fmt_f64(p.x_a), fmt_f64(p.x_b));
            }
        }
    }
}

/// Name as it appears in JSON output.
fn label<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), fmt_f64)
}

fn optimal_text(r: &OptimalReport) -> String {
    let mut s = String::new();
    match &r.mechanism {
        Optimum::Feasible { value, feasibility } => {
            let _ = writeln!(s, "family    {}", label(&value.family));
            let _ = writeln!(s, "students  {}", value.n());
            let _ = writeln!(s, "margin    {}", fmt_f64(feasibility.margin));
            let _ = writeln!(s, "workload  {}", opt(r.workload));
            policy_text(&mut s, value);
        }
        Optimum::Infeasible(f) => {
            let _ = writeln!(s, "infeasible: {}", f.reason.as_deref().unwrap_or("no feasible mechanism"));
            let _ = writeln!(s, "margin    {}", fmt_f64(f.margin));
        }
    }
    if let Some(f) = &r.feasibility {
        let _ = writeln!(s, "ROS margin  {}", fmt_f64(f.ros_margin));
        let _ = writeln!(s, "RSS margin  {}", fmt_f64(f.rss_margin));
    }
    s
}

fn verify_text(r: &VerifyReport, color: bool) -> String {
    let mut s = String::new();
    let Some(v) = &r.verification else {
        let f = r.infeasible.as_ref();
        let _ = writeln!(s, "nothing to verify: {}", f.and_then(|f| f.reason.as_deref()).unwrap_or("infeasible"));
        return s;
    };
    let w = &v.worst;
    let _ = writeln!(s, "concept   {}", label(&v.concept));
    let _ = writeln!(s, "verdict   {}", verdict(v.passed, color));
    let _ = writeln!(s, "profiles  {}", v.profiles_checked);
    let _ = writeln!(
        s,
        "worst     student {} plays {} against [{}]: gain {}",
        w.student,
        label(&w.strategy),
        w.opponent_profile.iter().map(label).collect::<Vec<_>>().join(", "),
        fmt_f64(w.utility_gap)
    );
    s
}

fn compare_text(r: &CompareReport) -> String {
    let c = &r.comparison;
    let mut s = String::new();
    let _ = writeln!(s, "students  {}", c.n);
    for (name, w) in [("ROS", &c.ros), ("RSS", &c.rss), ("RSUS", &c.rsus)] {
        let line = match w {
            Optimum::Feasible { value, .. } => fmt_f64(value.workload),
            Optimum::Infeasible(f) => format!("infeasible ({})", f.reason.as_deref().unwrap_or("")),
        };
        let _ = writeln!(s, "{name:<5} workload  {line}");
    }
    let _ = writeln!(s, "scaled RSS   {}", opt(c.scaled_rss));
    let _ = writeln!(s, "scaled RSUS  {}", opt(c.scaled_rsus));
    s
}

fn simulate_text(r: &SimulateReport) -> String {
    let res = &r.result;
    let mut s = String::new();
    let w = res.empirical_workload;
    let _ = writeln!(s, "trials    {} (seed {})", res.trials, res.seed);
    let _ = writeln!(s, "workload  {} ± {}", fmt_f64(w.mean), fmt_f64(w.std_error));
    if let (Some(a), Some(d)) = (r.analytic_workload, r.workload_delta) {
        let _ = writeln!(s, "analytic  {}  (delta {})", fmt_f64(a), fmt_f64(d));
    }
    let _ = writeln!(s, "agreement {}", opt(res.agreement_rate));
    let _ = writeln!(s, "{:>7}  {:<14}{:<34}checked", "student", "strategy", "utility");
    for (i, st) in r.profile.iter().enumerate() {
        let u = res.mean_utility[i];
        let c = res.spot_check_rate[i];
        let _ = writeln!(
            s,
            "{i:>7}  {:<14}{:<34}{} ± {}",
            label(st),
            format!("{} ± {}", fmt_f64(u.mean), fmt_f64(u.std_error)),
            fmt_f64(c.mean),
            fmt_f64(c.std_error)
        );
    }
    s
}

pub const SIMULATE_HEADER: [&str; 6] =
    ["student", "strategy", "mean_utility", "utility_se", "spot_check_rate", "spot_check_se"];

fn write_simulate_csv<W: Write>(w: W, r: &SimulateReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SIMULATE_HEADER)?;
    for (i, st) in r.profile.iter().enumerate() {
        let u = r.result.mean_utility[i];
        let c = r.result.spot_check_rate[i];
        out.write_record([
            i.to_string(),
            label(st),
            fmt_f64(u.mean),
            fmt_f64(u.std_error),
            fmt_f64(c.mean),
            fmt_f64(c.std_error),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn no_csv(cmd: Command) -> CliError {
    CliError::Usage(format!("{cmd:?} has no CSV output; use text or json"))
}

/// Runs `cmd` and writes its report to `--out` or stdout.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Status> {
    let mut sink: Box<dyn Write> = match &cfg.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    let color = cfg.out.is_none() && use_color();
    let status = execute(cmd, cfg, &mut sink, color)?;
    sink.flush()?;
    Ok(status)
}

pub fn execute(cmd: Command, cfg: &RunConfig, w: &mut dyn Write, color: bool) -> Result<Status> {
    let sweep = matches!(cmd, Command::SweepRc | Command::SweepN);
    let format = cfg.format.unwrap_or(if sweep { OutputFormat::Csv } else { OutputFormat::Text });
    match cmd {
        Command::Optimal => {
            let r = optimal(cfg)?;
            match format {
                OutputFormat::Text => w.write_all(optimal_text(&r).as_bytes())?,
                OutputFormat::Json => write_json(w, &r)?,
                OutputFormat::Csv => return Err(no_csv(cmd)),
            }
        }
        Command::Verify => {
            let r = verify(cfg)?;
            match format {
                OutputFormat::Text => w.write_all(verify_text(&r, color).as_bytes())?,
                OutputFormat::Json => write_json(&mut *w, &r)?,
                OutputFormat::Csv => return Err(no_csv(cmd)),
            }
            if r.verification.is_some_and(|v| !v.passed) {
                return Ok(Status::VerificationFailed);
            }
        }
        Command::Compare => {
            let r = compare(cfg)?;
            match format {
                OutputFormat::Text => w.write_all(compare_text(&r).as_bytes())?,
                OutputFormat::Json => write_json(w, &r)?,
                OutputFormat::Csv => {
                    let c = &r.comparison;
                    let row = SweepNRow {
                        n: c.n,
                        ros_workload: c.ros_workload(),
                        rss_workload: c.rss_workload(),
                        rsus_workload: c.rsus_workload(),
                        scaled_rss: c.scaled_rss,
                        scaled_rsus: c.scaled_rsus,
                    };
                    write_sweep_n(w, &[row])?
                }
            }
        }
        Command::SweepRc => {
            let r = run_sweep_rc(cfg)?;
            match format {
                OutputFormat::Json => write_json(w, &r)?,
                _ => write_sweep_rc(w, &r.rows)?,
            }
        }
        Command::SweepN => {
            let r = run_sweep_n(cfg)?;
            match format {
                OutputFormat::Json => write_json(w, &r)?,
                _ => write_sweep_n(w, &r.rows)?,
            }
        }
        Command::Simulate => {
            let r = run_simulation(cfg)?;
            match format {
                OutputFormat::Text => w.write_all(simulate_text(&r).as_bytes())?,
                OutputFormat::Json => write_json(w, &r)?,
                OutputFormat::Csv => write_simulate_csv(w, &r)?,
            }
        }
    }
    Ok(Status::Success)
}
