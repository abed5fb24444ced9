//! Spot-checking policies and the closed-form optimal mechanisms.
//!
//! Rewards are always output agreement: a spot-checked student earns `R`
//! when her report equals the TA's signal and nothing otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::prob_model::{HeteroModel, Signal, SignalModel, UNINFORMATIVE_EPS};

/// Slack allowed on a feasibility margin before a cell counts as infeasible.
pub const FEASIBILITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconParams {
    pub cost: f64,
    pub reward: f64,
}

impl EconParams {
    pub fn new(cost: f64, reward: f64) -> Result<Self> {
        for (name, v) in [("cost", cost), ("reward", reward)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("{v} must be > 0") });
            }
        }
        Ok(Self { cost, reward })
    }

    /// Cost-to-reward ratio `c/R`; every optimal policy depends on it alone.
    pub fn ratio(&self) -> f64 {
        self.cost / self.reward
    }
}

/// Spot-check probabilities indexed by `k`, the total number of `a` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountPolicy {
    n: usize,
    x_a: Vec<f64>,
    x_b: Vec<f64>,
}

impl CountPolicy {
    pub fn new(x_a: Vec<f64>, x_b: Vec<f64>) -> Result<Self> {
        if x_a.len() < 2 || x_a.len() != x_b.len() {
            return Err(Error::DimensionError(format!(
                "x_a has {} entries and x_b has {}; both need n + 1 >= 2",
                x_a.len(),
                x_b.len()
            )));
        }
        let n = x_a.len() - 1;
        for &v in x_a.iter().chain(&x_b) {
            check_probability("spot-check probability", v)?;
        }
        if x_a[0] != 0.0 {
            return Err(Error::InvalidParameter { name: "x_a", reason: "x_a(0) must be zero".into() });
        }
        if x_b[n] != 0.0 {
            return Err(Error::InvalidParameter { name: "x_b", reason: "x_b(n) must be zero".into() });
        }
        Ok(Self { n, x_a, x_b })
    }

    /// Report-independent (PRSS-shaped) policy with the boundary zeros in place.
    pub fn personal(n: usize, x_a: f64, x_b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter { name: "n", reason: "need at least one student".into() });
        }
        let mut xa = vec![x_a; n + 1];
        let mut xb = vec![x_b; n + 1];
        xa[0] = 0.0;
        xb[n] = 0.0;
        Self::new(xa, xb)
    }

    /// Uniform policy: both reports share `x[k]`, except the boundary zeros.
    pub fn uniform(x: Vec<f64>) -> Result<Self> {
        let mut xa = x.clone();
        let mut xb = x;
        if let Some(first) = xa.first_mut() {
            *first = 0.0;
        }
        if let Some(last) = xb.last_mut() {
            *last = 0.0;
        }
        Self::new(xa, xb)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_a(&self) -> &[f64] {
        &self.x_a
    }

    pub fn x_b(&self) -> &[f64] {
        &self.x_b
    }

    pub fn get(&self, report: Signal, k: usize) -> f64 {
        match report {
            Signal::A => self.x_a[k],
            Signal::B => self.x_b[k],
        }
    }

    /// Copy of the policy with one entry replaced.
    pub fn with_entry(&self, report: Signal, k: usize, value: f64) -> Result<Self> {
        if k > self.n {
            return Err(Error::IndexError { index: k, len: self.n + 1 });
        }
        let (mut xa, mut xb) = (self.x_a.clone(), self.x_b.clone());
        match report {
            Signal::A => xa[k] = value,
            Signal::B => xb[k] = value,
        }
        Self::new(xa, xb)
    }

    /// TA consult probability when `k` students report `a`.
    pub fn consult(&self, k: usize) -> f64 {
        self.x_a[k].max(self.x_b[k])
    }
}

/// Spot-check probabilities of one student that depend on her own report only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonalPolicy {
    pub x_a: f64,
    pub x_b: f64,
}

impl PersonalPolicy {
    pub fn new(x_a: f64, x_b: f64) -> Result<Self> {
        Ok(Self { x_a: check_probability("x_a", x_a)?, x_b: check_probability("x_b", x_b)? })
    }

    pub fn get(&self, report: Signal) -> f64 {
        match report {
            Signal::A => self.x_a,
            Signal::B => self.x_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Count(CountPolicy),
    Personal(Vec<PersonalPolicy>),
}

impl Policy {
    pub fn n(&self) -> usize {
        match self {
            Policy::Count(p) => p.n(),
            Policy::Personal(p) => p.len(),
        }
    }

    /// Probability that student `i` reporting `report` is spot checked when
    /// `k` students (including her) report `a`.
    pub fn check_probability(&self, i: usize, report: Signal, k: usize) -> f64 {
        match self {
            Policy::Count(p) => p.get(report, k),
            Policy::Personal(p) => p[i].get(report),
        }
    }

    /// Probability that the TA must produce a signal for a report vector.
    pub fn consult_probability(&self, reports: &[Signal]) -> f64 {
        match self {
            Policy::Count(p) => p.consult(reports.iter().filter(|&&r| r == Signal::A).count()),
            Policy::Personal(p) => p.iter().zip(reports).map(|(x, &r)| x.get(r)).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Ros,
    RssOpt,
    RsusOpt,
    HeteroPrss,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub policy: Policy,
    /// For heterogeneous mechanisms the per-student costs of the model take
    /// precedence over `econ.cost`.
    pub econ: EconParams,
    pub family: Family,
}

impl Mechanism {
    pub fn custom(policy: CountPolicy, econ: EconParams) -> Self {
        Self { policy: Policy::Count(policy), econ, family: Family::Custom }
    }

    pub fn n(&self) -> usize {
        self.policy.n()
    }

    pub fn count_policy(&self) -> Option<&CountPolicy> {
        match &self.policy {
            Policy::Count(p) => Some(p),
            Policy::Personal(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub margin: f64,
    pub reason: Option<String>,
}

impl Feasibility {
    fn from_margin(margin: f64, what: &str) -> Self {
        if margin >= -FEASIBILITY_EPS {
            Self { feasible: true, margin, reason: None }
        } else {
            Self { feasible: false, margin, reason: Some(format!("{what}: margin {margin:.6} < 0")) }
        }
    }

    fn infeasible(margin: f64, reason: impl Into<String>) -> Self {
        Self { feasible: false, margin, reason: Some(reason.into()) }
    }
}

/// Result of an optimal-mechanism constructor. Infeasibility is a value so
/// sweeps can record it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Optimum<T> {
    Feasible { value: T, feasibility: Feasibility },
    Infeasible(Feasibility),
}

impl<T> Optimum<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Optimum::Feasible { value, .. } => Some(value),
            Optimum::Infeasible(_) => None,
        }
    }

    pub fn into_value(self) -> Option<T> {
        match self {
            Optimum::Feasible { value, .. } => Some(value),
            Optimum::Infeasible(_) => None,
        }
    }

    pub fn feasibility(&self) -> &Feasibility {
        match self {
            Optimum::Feasible { feasibility, .. } | Optimum::Infeasible(feasibility) => feasibility,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Optimum::Feasible { .. })
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

struct Moments {
    pa: f64,
    pb: f64,
    paa: f64,
    pab: f64,
    pbb: f64,
}

impl Moments {
    fn of(model: &SignalModel) -> Self {
        Self {
            pa: model.marginal(Signal::A),
            pb: model.marginal(Signal::B),
            paa: model.pair_joint(Signal::A, Signal::A),
            pab: model.pair_joint(Signal::A, Signal::B),
            pbb: model.pair_joint(Signal::B, Signal::B),
        }
    }

    fn det(&self) -> f64 {
        self.paa * self.pbb - self.pab * self.pab
    }
}

/// Minimal DSIC report-oblivious probability `x* = (c/R) / (P_bb − P_ab)`.
pub fn ros_probability(model: &SignalModel, econ: &EconParams) -> Optimum<f64> {
    let m = Moments::of(model);
    let denom = m.pbb - m.pab;
    let margin = denom - econ.ratio();
    if denom <= UNINFORMATIVE_EPS {
        return Optimum::Infeasible(Feasibility::infeasible(margin, "uninformative signals: P_bb - P_ab <= 0"));
    }
    let feasibility = Feasibility::from_margin(margin, "ROS infeasible");
    if !feasibility.feasible {
        return Optimum::Infeasible(feasibility);
    }
    Optimum::Feasible { value: clamp_unit(econ.ratio() / denom), feasibility }
}

/// Optimal DSIC ROS mechanism for `n` students.
pub fn optimal_ros(model: &SignalModel, econ: &EconParams, n: usize) -> Result<Optimum<Mechanism>> {
    Ok(match ros_probability(model, econ) {
        Optimum::Feasible { value, feasibility } => Optimum::Feasible {
            value: Mechanism {
                policy: Policy::Count(CountPolicy::personal(n, value, value)?),
                econ: *econ,
                family: Family::Ros,
            },
            feasibility,
        },
        Optimum::Infeasible(f) => Optimum::Infeasible(f),
    })
}

/// Optimal DSIC RSS probabilities `(x_a, x_b)`; the optimum is PRSS so the
/// pair does not depend on `n`.
pub fn rss_probabilities(model: &SignalModel, econ: &EconParams) -> Optimum<(f64, f64)> {
    let m = Moments::of(model);
    let d = m.det();
    let ratio = econ.ratio();
    if d <= UNINFORMATIVE_EPS || m.pa <= 0.0 {
        return Optimum::Infeasible(Feasibility::infeasible(-ratio, "uninformative signals"));
    }
    // P_{a|a} - P_a = D / P_a
    let feasibility = Feasibility::from_margin(d / m.pa - ratio, "RSS infeasible");
    if !feasibility.feasible {
        return Optimum::Infeasible(feasibility);
    }
    let x_a = clamp_unit(ratio * m.pb / d);
    let x_b = clamp_unit(ratio * m.pa / d);
    Optimum::Feasible { value: (x_a, x_b), feasibility }
}

/// Optimal DSIC RSS mechanism (a PRSS policy) for `n` students.
pub fn optimal_rss(model: &SignalModel, econ: &EconParams, n: usize) -> Result<Optimum<Mechanism>> {
    Ok(match rss_probabilities(model, econ) {
        Optimum::Feasible { value: (x_a, x_b), feasibility } => Optimum::Feasible {
            value: Mechanism {
                policy: Policy::Count(CountPolicy::personal(n, x_a, x_b)?),
                econ: *econ,
                family: Family::RssOpt,
            },
            feasibility,
        },
        Optimum::Infeasible(f) => Optimum::Infeasible(f),
    })
}

/// Binding-constraint solution of the RSUS program, `x[k]` for `k = 0..=n`.
///
/// `x(n) = (c/R)·P_b / D` and `x(k) = (c/R + P_ab·x(k+1)) / P_bb` below it.
pub fn rsus_probabilities(model: &SignalModel, econ: &EconParams, n: usize) -> Result<Optimum<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", reason: "need at least one student".into() });
    }
    let m = Moments::of(model);
    if m.pbb <= UNINFORMATIVE_EPS {
        return Err(Error::DegenerateModel("P_bb is zero; the RSUS recursion is undefined".into()));
    }
    let ratio = econ.ratio();
    let d = m.det();
    if d <= UNINFORMATIVE_EPS {
        return Ok(Optimum::Infeasible(Feasibility::infeasible(-ratio, "uninformative signals")));
    }
    let mut x = vec![0.0; n + 1];
    x[n] = ratio * m.pb / d;
    for k in (0..n).rev() {
        x[k] = (ratio + m.pab * x[k + 1]) / m.pbb;
    }
    let feasibility = Feasibility::from_margin(1.0 - x[0], "RSUS infeasible: x(0) > 1");
    if !feasibility.feasible {
        return Ok(Optimum::Infeasible(feasibility));
    }
    Ok(Optimum::Feasible { value: x.into_iter().map(clamp_unit).collect(), feasibility })
}

pub fn optimal_rsus(model: &SignalModel, econ: &EconParams, n: usize) -> Result<Optimum<Mechanism>> {
    Ok(match rsus_probabilities(model, econ, n)? {
        Optimum::Feasible { value, feasibility } => Optimum::Feasible {
            value: Mechanism {
                policy: Policy::Count(CountPolicy::uniform(value)?),
                econ: *econ,
                family: Family::RsusOpt,
            },
            feasibility,
        },
        Optimum::Infeasible(f) => Optimum::Infeasible(f),
    })
}

/// Optimal PRSS mechanism when every agent has its own noise model and each
/// student her own cost.
pub fn optimal_hetero_prss(model: &HeteroModel, reward: f64) -> Result<Optimum<Mechanism>> {
    if !(reward.is_finite() && reward > 0.0) {
        return Err(Error::InvalidParameter { name: "reward", reason: format!("{reward} must be > 0") });
    }
    let mut policies = Vec::with_capacity(model.n());
    let mut worst = f64::INFINITY;
    let mut reasons = Vec::new();
    for (i, &cost) in model.costs().iter().enumerate() {
        let ratio = cost / reward;
        // gain[l] = Pr[s_i = l | s_TA = l] - Pr[s_i = l]
        let gain = |l: Signal| -> Result<Option<f64>> {
            match model.student_given_ta(i, l, l) {
                Ok(c) => Ok(Some(c - model.student_marginal(i, l)?)),
                Err(Error::DegenerateConditioning) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let (ga, gb) = (gain(Signal::A)?, gain(Signal::B)?);
        match (ga, gb) {
            (Some(ga), Some(gb)) if ga > UNINFORMATIVE_EPS && gb > UNINFORMATIVE_EPS => {
                let margin = ga.min(gb) - ratio;
                worst = worst.min(margin);
                if margin < -FEASIBILITY_EPS {
                    reasons.push(format!("student {i}: margin {margin:.6} < 0"));
                }
                policies.push(PersonalPolicy { x_a: clamp_unit(ratio / gb), x_b: clamp_unit(ratio / ga) });
            }
            _ => {
                worst = worst.min(-ratio);
                reasons.push(format!("student {i}: signal not positively correlated with the TA"));
            }
        }
    }
    if !reasons.is_empty() {
        return Ok(Optimum::Infeasible(Feasibility::infeasible(worst, reasons.join("; "))));
    }
    let mean_cost = model.costs().iter().sum::<f64>() / model.n() as f64;
    Ok(Optimum::Feasible {
        value: Mechanism {
            policy: Policy::Personal(policies),
            econ: EconParams::new(mean_cost, reward)?,
            family: Family::HeteroPrss,
        },
        feasibility: Feasibility { feasible: true, margin: worst, reason: None },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `(P_bb − P_ab) − c/R`
    pub ros_margin: f64,
    /// `(P_{a|a} − P_a) − c/R`
    pub rss_margin: f64,
}

pub fn feasibility_report(model: &SignalModel, econ: &EconParams) -> FeasibilityReport {
    let m = Moments::of(model);
    let ratio = econ.ratio();
    let rss_gap = if m.pa > 0.0 { m.det() / m.pa } else { 0.0 };
    FeasibilityReport { ros_margin: m.pbb - m.pab - ratio, rss_margin: rss_gap - ratio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob_model::NoisePair;
    use proptest::prelude::*;

    fn fig2() -> SignalModel {
        SignalModel::new(0.8, 0.9, 0.9).unwrap()
    }

    fn econ(ratio: f64) -> EconParams {
        EconParams::new(ratio, 1.0).unwrap()
    }

    #[test]
    fn ros_values() {
        let x = ros_probability(&fig2(), &econ(1.0 / 25.0));
        assert!((x.value().unwrap() - 0.5).abs() < 1e-12);
        let bad = ros_probability(&fig2(), &econ(0.1));
        assert!(!bad.is_feasible());
        assert!((bad.feasibility().margin - (0.08 - 0.1)).abs() < 1e-12);
        // c/R exactly at the boundary
        let m = fig2();
        let edge = m.pair_joint(Signal::B, Signal::B) - m.pair_joint(Signal::A, Signal::B);
        let at = ros_probability(&m, &econ(edge));
        assert!((at.value().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ros_policy_shape() {
        let mech = optimal_ros(&fig2(), &econ(0.04), 3).unwrap().into_value().unwrap();
        let p = mech.count_policy().unwrap();
        assert_eq!(p.x_a()[0], 0.0);
        assert_eq!(p.x_b()[3], 0.0);
        assert!(p.x_a()[1..].iter().chain(&p.x_b()[..3]).all(|&x| (x - 0.5).abs() < 1e-12));
    }

    #[test]
    fn rss_values() {
        let (xa, xb) = *rss_probabilities(&fig2(), &econ(1.0 / 25.0)).value().unwrap();
        assert!((xa - 0.1015625).abs() < 1e-12);
        assert!((xb - 0.2890625).abs() < 1e-12);

        let sym = SignalModel::new(0.5, 0.9, 0.9).unwrap();
        let e = econ(0.1);
        let (xa, xb) = *rss_probabilities(&sym, &e).value().unwrap();
        let xs = *ros_probability(&sym, &e).value().unwrap();
        assert!((xa - xs).abs() < 1e-12 && (xb - xs).abs() < 1e-12);

        let bad = rss_probabilities(&fig2(), &econ(0.2));
        assert!(!bad.is_feasible());
        assert!((bad.feasibility().margin - (0.65 / 0.74 - 0.74 - 0.2)).abs() < 1e-12);
    }

    #[test]
    fn rss_boundary_is_feasible() {
        let m = fig2();
        let gap = m.conditional(Signal::A, Signal::A).unwrap() - m.marginal(Signal::A);
        let (_, xb) = *rss_probabilities(&m, &econ(gap)).value().unwrap();
        assert!((xb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rss_uninformative_is_infeasible() {
        let flat = SignalModel::new(0.7, 0.5, 0.5).unwrap();
        let r = optimal_rss(&flat, &econ(0.01), 3).unwrap();
        assert!(!r.is_feasible());
        assert!(r.feasibility().reason.as_deref().unwrap().contains("uninformative"));
    }

    #[test]
    fn rsus_values() {
        let m = fig2();
        let x = rsus_probabilities(&m, &econ(1.0 / 25.0), 3).unwrap().into_value().unwrap();
        // hand recursion: x3 = 0.04·0.26/0.1024; x_k = (0.04 + 0.09·x_{k+1}) / 0.17
        let x3 = 0.04 * 0.26 / 0.1024;
        let x2 = (0.04 + 0.09 * x3) / 0.17;
        let x1 = (0.04 + 0.09 * x2) / 0.17;
        let x0 = (0.04 + 0.09 * x1) / 0.17;
        for (got, want) in x.iter().zip([x0, x1, x2, x3]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((x[3] - 0.1015625).abs() < 1e-12);
        assert!((x[2] - 0.2890625).abs() < 1e-12);
        assert!((x[0] - 0.440_879).abs() < 1e-6);
    }

    #[test]
    fn rsus_single_student_matches_rss() {
        let m = fig2();
        let e = econ(0.04);
        let x = rsus_probabilities(&m, &e, 1).unwrap().into_value().unwrap();
        let (xa, xb) = *rss_probabilities(&m, &e).value().unwrap();
        assert!((x[1] - xa).abs() < 1e-12 && (x[0] - xb).abs() < 1e-12);
    }

    #[test]
    fn rsus_symmetric_is_constant() {
        let sym = SignalModel::new(0.5, 0.85, 0.85).unwrap();
        let e = econ(0.1);
        let x = rsus_probabilities(&sym, &e, 6).unwrap().into_value().unwrap();
        let xs = *ros_probability(&sym, &e).value().unwrap();
        assert!(x.iter().all(|&v| (v - xs).abs() < 1e-12));
    }

    #[test]
    fn rsus_errors() {
        let degenerate = SignalModel::new(1.0, 0.9, 0.9).unwrap();
        // q = a surely: P_bb = 0.01 > 0 so fine; a perfect a-world has P_bb = 0
        assert!(rsus_probabilities(&degenerate, &econ(0.01), 2).is_ok());
        let no_b = SignalModel::new(1.0, 1.0, 0.5).unwrap();
        assert!(matches!(rsus_probabilities(&no_b, &econ(0.01), 2), Err(Error::DegenerateModel(_))));
        // the recursion climbs towards x* = (c/R)/(P_bb - P_ab), which exceeds 1 here
        let infeasible = rsus_probabilities(&fig2(), &econ(0.1), 3).unwrap();
        assert!(!infeasible.is_feasible());
        assert!(rsus_probabilities(&fig2(), &econ(0.04), 200).unwrap().is_feasible());
    }

    #[test]
    fn hetero_reduces_to_homogeneous() {
        let m = fig2();
        let h = m.homogenized(3, 1.0).unwrap();
        let mech = optimal_hetero_prss(&h, 25.0).unwrap().into_value().unwrap();
        let Policy::Personal(p) = &mech.policy else { panic!("expected personal policy") };
        for pol in p {
            assert!((pol.x_a - 0.1015625).abs() < 1e-12);
            assert!((pol.x_b - 0.2890625).abs() < 1e-12);
        }
    }

    #[test]
    fn hetero_perfect_ta() {
        let h = HeteroModel::new(
            0.8,
            vec![NoisePair::new(0.9, 0.9).unwrap()],
            NoisePair::new(1.0, 1.0).unwrap(),
            vec![0.04],
        )
        .unwrap();
        let mech = optimal_hetero_prss(&h, 1.0).unwrap().into_value().unwrap();
        let Policy::Personal(p) = &mech.policy else { panic!() };
        assert!((p[0].x_b - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hetero_uninformative_student() {
        let good = NoisePair::new(0.9, 0.9).unwrap();
        let h = HeteroModel::new(0.8, vec![good, NoisePair::new(0.5, 0.5).unwrap()], good, vec![0.04, 0.04]).unwrap();
        let r = optimal_hetero_prss(&h, 1.0).unwrap();
        assert!(!r.is_feasible());
        assert!(r.feasibility().reason.as_deref().unwrap().contains("student 1"));
    }

    #[test]
    fn feasibility_report_values() {
        let r = feasibility_report(&fig2(), &econ(0.04));
        assert!((r.ros_margin - 0.04).abs() < 1e-12);
        assert!((r.rss_margin - (0.65 / 0.74 - 0.74 - 0.04)).abs() < 1e-12);
        assert!((r.rss_margin - 0.09838).abs() < 1e-5);

        let sym = feasibility_report(&SignalModel::new(0.5, 0.8, 0.8).unwrap(), &econ(0.04));
        assert!((sym.ros_margin - sym.rss_margin).abs() < 1e-12);

        // inside the open gap (0.08, 0.13838): RSS only
        let e = econ(0.11);
        assert!(!optimal_ros(&fig2(), &e, 3).unwrap().is_feasible());
        assert!(optimal_rss(&fig2(), &e, 3).unwrap().is_feasible());
    }

    #[test]
    fn custom_policy_validation() {
        assert!(CountPolicy::new(vec![0.1, 0.2], vec![0.3, 0.0]).is_err());
        assert!(CountPolicy::new(vec![0.0, 0.2], vec![0.3, 0.1]).is_err());
        assert!(CountPolicy::new(vec![0.0, 1.2], vec![0.3, 0.0]).is_err());
        assert!(CountPolicy::new(vec![0.0, 0.2, 0.1], vec![0.3, 0.0]).is_err());
        assert!(CountPolicy::new(vec![0.0, 0.2], vec![0.3, 0.0]).is_ok());
    }

    fn canonical_model() -> impl Strategy<Value = SignalModel> {
        (0.0..=1.0f64, 0.5..=1.0f64, 0.5..=1.0f64).prop_map(|(p, a, b)| SignalModel::new(p, a, b).unwrap())
    }

    proptest! {
        #[test]
        fn rss_invariants(model in canonical_model(), ratio in 1e-4..0.5f64, n in 1usize..12) {
            let e = econ(ratio);
            if let Some(mech) = optimal_rss(&model, &e, n).unwrap().into_value() {
                let p = mech.count_policy().unwrap();
                prop_assert_eq!(p.x_a()[0], 0.0);
                prop_assert_eq!(p.x_b()[n], 0.0);
                let (xa, xb) = (p.x_a()[n], p.x_b()[0]);
                prop_assert!(xb >= xa - 1e-12);
                let symmetric = (model.marginal(Signal::A) - model.marginal(Signal::B)).abs() < 1e-12;
                if !symmetric && (xb - xa).abs() < 1e-12 {
                    // equality only in the symmetric case, up to clamping at 1
                    prop_assert!(xa >= 1.0 - 1e-12);
                }
            }
            if optimal_ros(&model, &e, n).unwrap().is_feasible() {
                prop_assert!(optimal_rss(&model, &e, n).unwrap().is_feasible());
            }
        }

        #[test]
        fn rsus_chain(model in canonical_model(), ratio in 1e-4..0.3f64, n in 1usize..10) {
            let e = econ(ratio);
            if let Ok(Optimum::Feasible { value: x, .. }) = rsus_probabilities(&model, &e, n) {
                let (xa, xb) = *rss_probabilities(&model, &e).value().unwrap();
                prop_assert!((x[n] - xa).abs() <= 1e-12);
                prop_assert!((x[n - 1] - xb).abs() <= 1e-12);
                for k in 0..n {
                    prop_assert!(x[k] >= x[k + 1] - 1e-12);
                }
            }
        }

        #[test]
        fn hetero_homogenized_matches(model in canonical_model(), ratio in 1e-4..0.3f64, n in 1usize..5) {
            let e = econ(ratio);
            let h = model.homogenized(n, ratio).unwrap();
            let het = optimal_hetero_prss(&h, 1.0).unwrap();
            let hom = rss_probabilities(&model, &e);
            prop_assert_eq!(het.is_feasible(), hom.is_feasible());
            if let (Some(mech), Some(&(xa, xb))) = (het.value(), hom.value()) {
                let Policy::Personal(p) = &mech.policy else { unreachable!() };
                for pol in p {
                    prop_assert!((pol.x_a - xa).abs() <= 1e-12);
                    prop_assert!((pol.x_b - xb).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn ratio_scaling_invariance(model in canonical_model(), ratio in 1e-3..0.3f64, scale in 0.01..100.0f64) {
            let a = rss_probabilities(&model, &econ(ratio));
            let b = rss_probabilities(&model, &EconParams::new(ratio * scale, scale).unwrap());
            prop_assert_eq!(a.is_feasible(), b.is_feasible());
            if let (Some(x), Some(y)) = (a.value(), b.value()) {
                prop_assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12);
            }
        }
    }
}
