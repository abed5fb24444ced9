//! Exact expected utilities over the full strategy space and brute-force
//! certification of dominant-strategy and conscientious incentive
//! compatibility.
//!
//! A student's expected utility is affine in every other student's mixing
//! weights, so checking all pure opponent profiles certifies the property
//! for mixed profiles as well.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::prob_model::{GradingModel, Signal};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DSIC_MAX_N: usize = 6;
pub const ICCP_MAX_N: usize = 8;

/// Slack under which two utilities count as tied in [`best_response`].
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Invest effort, report the observed signal.
    Truthful,
    /// Invest effort, report the opposite signal.
    EffortFlip,
    /// Invest effort, report `a` regardless.
    EffortConstA,
    /// Invest effort, report `b` regardless.
    EffortConstB,
    /// No effort, report `a`.
    LazyA,
    /// No effort, report `b`.
    LazyB,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Truthful,
        Strategy::EffortFlip,
        Strategy::EffortConstA,
        Strategy::EffortConstB,
        Strategy::LazyA,
        Strategy::LazyB,
    ];

    /// Strategies in which effort is always followed by an honest report.
    pub const CONSCIENTIOUS: [Strategy; 3] = [Strategy::Truthful, Strategy::LazyA, Strategy::LazyB];

    pub fn invests_effort(self) -> bool {
        !matches!(self, Strategy::LazyA | Strategy::LazyB)
    }

    /// Report given the observed signal (`None` when no effort was spent).
    pub fn report(self, observed: Option<Signal>) -> Signal {
        match self {
            Strategy::Truthful => observed.unwrap_or(Signal::A),
            Strategy::EffortFlip => observed.unwrap_or(Signal::B).flipped(),
            Strategy::EffortConstA | Strategy::LazyA => Signal::A,
            Strategy::EffortConstB | Strategy::LazyB => Signal::B,
        }
    }

    pub fn is_lazy(self) -> bool {
        !self.invests_effort()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Concept {
    Dsic,
    Iccp,
}

/// Own deviations considered under ICCP. By default the deviating student is
/// conscientious too; `Full` lets her misreport after investing effort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IccpDeviations {
    #[default]
    Conscientious,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub student: usize,
    pub opponent_profile: Vec<Strategy>,
    pub strategy: Strategy,
    /// Deviation utility minus truthful utility.
    pub utility_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub concept: Concept,
    pub passed: bool,
    pub worst: Deviation,
    pub tolerance: f64,
    pub profiles_checked: usize,
}

/// Expected reward-weighted match and spot-check rate of one student.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Probability of being spot checked and matching the TA.
    pub rewarded: f64,
    /// Probability of being spot checked.
    pub checked: f64,
    pub invests_effort: bool,
}

fn check_dimensions<M: GradingModel>(model: &M, mech: &Mechanism, i: usize, others: &[Strategy]) -> Result<usize> {
    let n = mech.n();
    if let Some(m) = model.fixed_n() {
        if m != n {
            return Err(Error::DimensionError(format!("model has {m} students, mechanism {n}")));
        }
    }
    if i >= n {
        return Err(Error::IndexError { index: i, len: n });
    }
    if others.len() + 1 != n {
        return Err(Error::DimensionError(format!("{} opponent strategies for {} students", others.len(), n)));
    }
    Ok(n)
}

/// Probability that an agent playing `strategy` reports `a`, given quality `q`.
fn report_a_prob<M: GradingModel>(model: &M, agent: usize, strategy: Strategy, q: Signal) -> f64 {
    match strategy {
        Strategy::Truthful => model.student_likelihood(agent, Signal::A, q),
        Strategy::EffortFlip => model.student_likelihood(agent, Signal::B, q),
        Strategy::EffortConstA | Strategy::LazyA => 1.0,
        Strategy::EffortConstB | Strategy::LazyB => 0.0,
    }
}

/// Exact spot-check and reward probabilities of student `i`.
///
/// Given `q`, reports of different agents and the TA signal are independent,
/// so the opponents enter only through the distribution of their `a`-report
/// count.
pub fn evaluate<M: GradingModel>(
    model: &M,
    mech: &Mechanism,
    i: usize,
    own: Strategy,
    others: &[Strategy],
) -> Result<Evaluation> {
    let n = check_dimensions(model, mech, i, others)?;
    let opponents: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut rewarded = 0.0;
    let mut checked = 0.0;
    let mut counts = vec![0.0; n];
    for q in Signal::ALL {
        let prior = model.prior(q);
        if prior == 0.0 {
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0.0);
        counts[0] = 1.0;
        for (m, (&agent, &s)) in opponents.iter().zip(others).enumerate() {
            let pa = report_a_prob(model, agent, s, q);
            for k in (0..=m + 1).rev() {
                let from_a = if k > 0 { counts[k - 1] * pa } else { 0.0 };
                counts[k] = counts[k] * (1.0 - pa) + from_a;
            }
        }
        let observations: Vec<(Option<Signal>, f64)> = if own.invests_effort() {
            Signal::ALL.iter().map(|&s| (Some(s), model.student_likelihood(i, s, q))).collect()
        } else {
            vec![(None, 1.0)]
        };
        for (observed, weight) in observations {
            let report = own.report(observed);
            let bump = usize::from(report == Signal::A);
            let check: f64 =
                counts.iter().enumerate().map(|(k, &p)| p * mech.policy.check_probability(i, report, k + bump)).sum();
            checked += prior * weight * check;
            rewarded += prior * weight * check * model.ta_likelihood(report, q);
        }
    }
    Ok(Evaluation { rewarded, checked, invests_effort: own.invests_effort() })
}

fn effort_cost<M: GradingModel>(model: &M, mech: &Mechanism, i: usize) -> f64 {
    model.student_cost(i).unwrap_or(mech.econ.cost)
}

pub fn expected_utility<M: GradingModel>(
    model: &M,
    mech: &Mechanism,
    i: usize,
    own: Strategy,
    others: &[Strategy],
) -> Result<f64> {
    let e = evaluate(model, mech, i, own, others)?;
    let cost = if e.invests_effort { effort_cost(model, mech, i) } else { 0.0 };
    Ok(mech.econ.reward * e.rewarded - cost)
}

/// Best pure strategy; ties within `1e-12` go to the earlier strategy in
/// [`Strategy::ALL`], so weakly truthful play reports as `Truthful`.
pub fn best_response<M: GradingModel>(
    model: &M,
    mech: &Mechanism,
    i: usize,
    others: &[Strategy],
) -> Result<(Strategy, f64)> {
    let mut best = (Strategy::Truthful, expected_utility(model, mech, i, Strategy::Truthful, others)?);
    for &s in &Strategy::ALL[1..] {
        let u = expected_utility(model, mech, i, s, others)?;
        if u > best.1 + TIE_EPS {
            best = (s, u);
        }
    }
    Ok(best)
}

/// Decodes profile number `index` into strategies, most significant first,
/// so increasing indices enumerate profiles lexicographically.
fn decode_profile(mut index: usize, len: usize, set: &[Strategy]) -> Vec<Strategy> {
    let mut profile = vec![set[0]; len];
    for slot in profile.iter_mut().rev() {
        *slot = set[index % set.len()];
        index /= set.len();
    }
    profile
}

fn verify<M: GradingModel + Sync>(
    model: &M,
    mech: &Mechanism,
    tolerance: f64,
    concept: Concept,
    opponent_set: &[Strategy],
    own_set: &[Strategy],
) -> Result<VerificationReport> {
    let n = mech.n();
    let cap = match concept {
        Concept::Dsic => DSIC_MAX_N,
        Concept::Iccp => ICCP_MAX_N,
    };
    if n > cap {
        return Err(Error::TooLarge { what: "students", got: n, cap });
    }
    let profiles = opponent_set.len().pow((n - 1) as u32);
    // Each student's worst deviation, scanned in lexicographic order; ties keep
    // the first one seen, so the result does not depend on scheduling.
    let per_student: Vec<Deviation> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Deviation> {
            let mut worst: Option<Deviation> = None;
            for p in 0..profiles {
                let others = decode_profile(p, n - 1, opponent_set);
                let truthful = expected_utility(model, mech, i, Strategy::Truthful, &others)?;
                for &s in own_set.iter().filter(|&&s| s != Strategy::Truthful) {
                    let gap = expected_utility(model, mech, i, s, &others)? - truthful;
                    if worst.as_ref().is_none_or(|w| gap > w.utility_gap) {
                        worst = Some(Deviation {
                            student: i,
                            opponent_profile: others.clone(),
                            strategy: s,
                            utility_gap: gap,
                        });
                    }
                }
            }
            Ok(worst.expect("at least one deviation strategy"))
        })
        .collect::<Result<_>>()?;
    let worst = per_student
        .into_iter()
        .reduce(|best, d| if d.utility_gap > best.utility_gap { d } else { best })
        .expect("at least one student");
    Ok(VerificationReport {
        concept,
        passed: worst.utility_gap <= tolerance,
        worst,
        tolerance,
        profiles_checked: n * profiles,
    })
}

/// Checks that truthful play is a best response to every pure opponent
/// profile, for every student.
pub fn verify_dsic<M: GradingModel + Sync>(model: &M, mech: &Mechanism, tolerance: f64) -> Result<VerificationReport> {
    verify(model, mech, tolerance, Concept::Dsic, &Strategy::ALL, &Strategy::ALL)
}

/// DSIC restricted to conscientious opponents and conscientious deviations.
pub fn verify_iccp<M: GradingModel + Sync>(model: &M, mech: &Mechanism, tolerance: f64) -> Result<VerificationReport> {
    verify_iccp_with(model, mech, tolerance, IccpDeviations::default())
}

pub fn verify_iccp_with<M: GradingModel + Sync>(
    model: &M,
    mech: &Mechanism,
    tolerance: f64,
    deviations: IccpDeviations,
) -> Result<VerificationReport> {
    let own: &[Strategy] = match deviations {
        IccpDeviations::Conscientious => &Strategy::CONSCIENTIOUS,
        IccpDeviations::Full => &Strategy::ALL,
    };
    verify(model, mech, tolerance, Concept::Iccp, &Strategy::CONSCIENTIOUS, own)
}
