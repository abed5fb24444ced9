//! Seeded Monte Carlo simulation of the grading process.
//!
//! Each trial draws the quality, the signals of students who invest effort
//! and their reports. The TA is consulted with probability
//! `m = max_i x_{r_i}`; given a consult, each student is checked
//! independently with probability `x_{r_i} / m`, so her marginal check
//! probability is exactly `x_{r_i}`.
//!
//! Trial `t` draws from ChaCha8 seeded with `seed` on stream `t`, and trials
//! are aggregated in fixed-size chunks combined in index order. Results are
//! therefore bit-identical for a given seed whatever the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incentives::{evaluate, expected_utility, Strategy};
use crate::mechanisms::Mechanism;
use crate::prob_model::{GradingModel, Signal};

const CHUNK: u64 = 4096;
pub const CROSSCHECK_MAX_N: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<M> {
    pub model: M,
    pub mechanism: Mechanism,
    pub profile: Vec<Strategy>,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`; zero for a single trial.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trials: u64,
    pub seed: u64,
    pub empirical_workload: Estimate,
    pub mean_utility: Vec<Estimate>,
    pub spot_check_rate: Vec<Estimate>,
    /// Fraction of spot checks in which the report matched the TA; `None`
    /// when no student was ever checked.
    pub agreement_rate: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct Acc {
    consults: u64,
    utility: Vec<f64>,
    utility_sq: Vec<f64>,
    checks: Vec<u64>,
    agreements: u64,
}

impl Acc {
    fn new(n: usize) -> Self {
        Self { utility: vec![0.0; n], utility_sq: vec![0.0; n], checks: vec![0; n], ..Default::default() }
    }

    fn merge(mut self, other: &Acc) -> Acc {
        self.consults += other.consults;
        self.agreements += other.agreements;
        for j in 0..self.utility.len() {
            self.utility[j] += other.utility[j];
            self.utility_sq[j] += other.utility_sq[j];
            self.checks[j] += other.checks[j];
        }
        self
    }
}

fn estimate(sum: f64, sum_sq: f64, trials: u64) -> Estimate {
    let t = trials as f64;
    let mean = sum / t;
    let std_error = if trials > 1 {
        let var = ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0);
        (var / t).sqrt()
    } else {
        0.0
    };
    Estimate { mean, std_error }
}

/// A Bernoulli count: `sum_sq == sum`.
fn rate(count: u64, trials: u64) -> Estimate {
    estimate(count as f64, count as f64, trials)
}

fn validate<M: GradingModel>(model: &M, mech: &Mechanism, profile: &[Strategy]) -> Result<usize> {
    let n = mech.n();
    if profile.len() != n {
        return Err(Error::DimensionError(format!("profile of length {} for {} students", profile.len(), n)));
    }
    if let Some(m) = model.fixed_n() {
        if m != n {
            return Err(Error::DimensionError(format!("model has {m} students, mechanism {n}")));
        }
    }
    Ok(n)
}

struct Setup<'a, M> {
    model: &'a M,
    mech: &'a Mechanism,
    profile: &'a [Strategy],
    costs: Vec<f64>,
}

fn run_trial<M: GradingModel>(
    setup: &Setup<'_, M>,
    rng: &mut ChaCha8Rng,
    reports: &mut [Signal],
    payoff: &mut [f64],
    acc: &mut Acc,
) {
    let &Setup { model, mech, profile, ref costs } = setup;
    let quality = if rng.gen::<f64>() < model.prior(Signal::A) { Signal::A } else { Signal::B };
    for (j, (report, strategy)) in reports.iter_mut().zip(profile).enumerate() {
        let observed = strategy.invests_effort().then(|| {
            if rng.gen::<f64>() < model.student_likelihood(j, Signal::A, quality) {
                Signal::A
            } else {
                Signal::B
            }
        });
        *report = strategy.report(observed);
    }
    let k = reports.iter().filter(|&&r| r == Signal::A).count();
    let consult = mech.policy.consult_probability(reports);
    payoff.fill(0.0);
    if consult > 0.0 && rng.gen::<f64>() < consult {
        acc.consults += 1;
        let ta = if rng.gen::<f64>() < model.ta_likelihood(Signal::A, quality) { Signal::A } else { Signal::B };
        for (j, &r) in reports.iter().enumerate() {
            let x = mech.policy.check_probability(j, r, k);
            if rng.gen::<f64>() < x / consult {
                acc.checks[j] += 1;
                if r == ta {
                    acc.agreements += 1;
                    payoff[j] = mech.econ.reward;
                }
            }
        }
    }
    for (j, strategy) in profile.iter().enumerate() {
        let u = payoff[j] - if strategy.invests_effort() { costs[j] } else { 0.0 };
        acc.utility[j] += u;
        acc.utility_sq[j] += u * u;
    }
}

pub fn simulate<M: GradingModel + Sync>(cfg: &SimConfig<M>) -> Result<SimResult> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", reason: "need at least one trial".into() });
    }
    let n = validate(&cfg.model, &cfg.mechanism, &cfg.profile)?;
    let costs = (0..n).map(|j| cfg.model.student_cost(j).unwrap_or(cfg.mechanism.econ.cost)).collect();
    let setup = Setup { model: &cfg.model, mech: &cfg.mechanism, profile: &cfg.profile, costs };
    let chunks = cfg.trials.div_ceil(CHUNK);
    let partials: Vec<Acc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc::new(n);
            let mut reports = vec![Signal::A; n];
            let mut payoff = vec![0.0; n];
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for t in c * CHUNK..((c + 1) * CHUNK).min(cfg.trials) {
                rng.set_stream(t);
                rng.set_word_pos(0);
                run_trial(&setup, &mut rng, &mut reports, &mut payoff, &mut acc);
            }
            acc
        })
        .collect();
    let total = partials.iter().fold(Acc::new(n), |a, b| a.merge(b));
    let checks: u64 = total.checks.iter().sum();
    Ok(SimResult {
        trials: cfg.trials,
        seed: cfg.seed,
        empirical_workload: rate(total.consults, cfg.trials),
        mean_utility: (0..n).map(|j| estimate(total.utility[j], total.utility_sq[j], cfg.trials)).collect(),
        spot_check_rate: total.checks.iter().map(|&c| rate(c, cfg.trials)).collect(),
        agreement_rate: (checks > 0).then(|| total.agreements as f64 / checks as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityCrosscheck {
    /// Largest `|simulated mean − exact expected utility|` over students.
    pub max_abs_error: f64,
    /// Largest error measured in standard errors.
    pub max_z: f64,
    pub exact: Vec<f64>,
    pub simulated: Vec<Estimate>,
}

/// Compares simulated mean utilities with the exact expected utilities.
pub fn utility_crosscheck<M: GradingModel + Sync + Clone>(
    model: &M,
    mech: &Mechanism,
    profile: &[Strategy],
    trials: u64,
    seed: u64,
) -> Result<UtilityCrosscheck> {
    let n = validate(model, mech, profile)?;
    if n > CROSSCHECK_MAX_N {
        return Err(Error::TooLarge { what: "students", got: n, cap: CROSSCHECK_MAX_N });
    }
    let cfg = SimConfig { model: model.clone(), mechanism: mech.clone(), profile: profile.to_vec(), trials, seed };
    let sim = simulate(&cfg)?;
    let exact: Vec<f64> = (0..n)
        .map(|i| {
            let mut others = profile.to_vec();
            let own = others.remove(i);
            expected_utility(model, mech, i, own, &others)
        })
        .collect::<Result<_>>()?;
    let mut max_abs_error = 0.0f64;
    let mut max_z = 0.0f64;
    for (e, s) in exact.iter().zip(&sim.mean_utility) {
        let err = (s.mean - e).abs();
        max_abs_error = max_abs_error.max(err);
        if s.std_error > 0.0 {
            max_z = max_z.max(err / s.std_error);
        } else if err > 0.0 {
            max_z = f64::INFINITY;
        }
    }
    Ok(UtilityCrosscheck { max_abs_error, max_z, exact, simulated: sim.mean_utility })
}

/// Exact per-student spot-check probabilities under `profile`.
pub fn analytic_check_rates<M: GradingModel>(model: &M, mech: &Mechanism, profile: &[Strategy]) -> Result<Vec<f64>> {
    let n = validate(model, mech, profile)?;
    (0..n)
        .map(|i| {
            let mut others = profile.to_vec();
            let own = others.remove(i);
            Ok(evaluate(model, mech, i, own, &others)?.checked)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{optimal_ros, optimal_rss, CountPolicy, EconParams};
    use crate::prob_model::SignalModel;
    use crate::workload::ta_workload;

    fn fig2() -> SignalModel {
        SignalModel::new(0.8, 0.9, 0.9).unwrap()
    }

    fn econ25() -> EconParams {
        EconParams::new(1.0, 25.0).unwrap()
    }

    fn cfg(mech: Mechanism, profile: Vec<Strategy>, trials: u64, seed: u64) -> SimConfig<SignalModel> {
        SimConfig { model: fig2(), mechanism: mech, profile, trials, seed }
    }

    #[test]
    fn rss_workload_is_reproduced() {
        let mech = optimal_rss(&fig2(), &econ25(), 3).unwrap().into_value().unwrap();
        let analytic = ta_workload(&fig2(), &mech).unwrap().workload;
        let r = simulate(&cfg(mech, vec![Strategy::Truthful; 3], 200_000, 7)).unwrap();
        let w = r.empirical_workload;
        assert!((w.mean - analytic).abs() <= 4.0 * w.std_error, "{w:?} vs {analytic}");
    }

    #[test]
    fn ros_checks_every_student_at_x_star() {
        let mech = optimal_ros(&fig2(), &econ25(), 3).unwrap().into_value().unwrap();
        let r = simulate(&cfg(mech, vec![Strategy::Truthful; 3], 100_000, 1)).unwrap();
        for c in &r.spot_check_rate {
            assert!((c.mean - 0.5).abs() <= 4.0 * c.std_error);
        }
        // a consult checks everyone under ROS
        assert_eq!(r.spot_check_rate[0].mean, r.empirical_workload.mean);
    }

    #[test]
    fn zero_policy_never_consults() {
        let mech = Mechanism::custom(CountPolicy::personal(3, 0.0, 0.0).unwrap(), econ25());
        let profile = vec![Strategy::Truthful, Strategy::LazyA, Strategy::EffortFlip];
        let r = simulate(&cfg(mech, profile, 10_000, 3)).unwrap();
        assert_eq!(r.empirical_workload.mean, 0.0);
        assert_eq!(r.mean_utility[0].mean, -1.0);
        assert_eq!(r.mean_utility[1].mean, 0.0);
        assert_eq!(r.mean_utility[2].mean, -1.0);
        assert_eq!(r.agreement_rate, None);
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let mech = optimal_rss(&fig2(), &econ25(), 4).unwrap().into_value().unwrap();
        let c =
            cfg(mech, vec![Strategy::Truthful, Strategy::LazyB, Strategy::Truthful, Strategy::EffortFlip], 50_000, 99);
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = single.install(|| simulate(&c).unwrap());
        assert_eq!(a, serial);
        let other = simulate(&SimConfig { seed: 100, ..c }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn crosscheck_with_lazy_deviant() {
        let mech = optimal_rss(&fig2(), &econ25(), 3).unwrap().into_value().unwrap();
        let profile = [Strategy::LazyA, Strategy::Truthful, Strategy::Truthful];
        let c = utility_crosscheck(&fig2(), &mech, &profile, 200_000, 11).unwrap();
        assert!(c.max_z <= 4.0, "{c:?}");
    }

    #[test]
    fn single_trial_is_one_payoff() {
        let mech = optimal_rss(&fig2(), &econ25(), 3).unwrap().into_value().unwrap();
        let r = simulate(&cfg(mech, vec![Strategy::Truthful; 3], 1, 5)).unwrap();
        for u in &r.mean_utility {
            assert!(u.mean == -1.0 || u.mean == 24.0);
            assert_eq!(u.std_error, 0.0);
        }
    }

    #[test]
    fn validation_errors() {
        let mech = optimal_rss(&fig2(), &econ25(), 3).unwrap().into_value().unwrap();
        assert!(matches!(
            simulate(&cfg(mech.clone(), vec![Strategy::Truthful; 2], 10, 0)),
            Err(Error::DimensionError(_))
        ));
        assert!(matches!(simulate(&cfg(mech, vec![Strategy::Truthful; 3], 0, 0)), Err(Error::InvalidParameter { .. })));
    }
}
