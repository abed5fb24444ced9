//! Probabilistic model of assignment quality and grader signals.
//!
//! Quality `q` and every signal take one of two labels. Signals of different
//! agents are conditionally independent given `q`, so all joint quantities are
//! two-point mixtures over the quality.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Numerical floor under which the signal variance counts as zero.
pub const UNINFORMATIVE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Signal {
    A,
    B,
}

impl Signal {
    pub const ALL: [Signal; 2] = [Signal::A, Signal::B];

    pub fn flipped(self) -> Signal {
        match self {
            Signal::A => Signal::B,
            Signal::B => Signal::A,
        }
    }
}

/// Conditional noise of one grader: `Pr[s=a|q=a]` and `Pr[s=b|q=b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePair {
    pub p_a_given_a: f64,
    pub p_b_given_b: f64,
}

impl NoisePair {
    pub fn new(p_a_given_a: f64, p_b_given_b: f64) -> Result<Self> {
        Ok(Self {
            p_a_given_a: check_probability("p_a_given_a", p_a_given_a)?,
            p_b_given_b: check_probability("p_b_given_b", p_b_given_b)?,
        })
    }

    /// `Pr[s = signal | q = quality]`.
    pub fn likelihood(&self, signal: Signal, quality: Signal) -> f64 {
        match (signal, quality) {
            (Signal::A, Signal::A) => self.p_a_given_a,
            (Signal::B, Signal::A) => 1.0 - self.p_a_given_a,
            (Signal::B, Signal::B) => self.p_b_given_b,
            (Signal::A, Signal::B) => 1.0 - self.p_b_given_b,
        }
    }

    fn swapped(self) -> Self {
        Self { p_a_given_a: self.p_b_given_b, p_b_given_b: self.p_a_given_a }
    }
}

fn prior_of(prior_a: f64, quality: Signal) -> f64 {
    match quality {
        Signal::A => prior_a,
        Signal::B => 1.0 - prior_a,
    }
}

/// Homogeneous model: students and TA share one noise distribution.
///
/// Construction canonicalizes the labels so that `marginal(A) >= marginal(B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    prior_a: f64,
    noise: NoisePair,
    label_swapped: bool,
}

impl SignalModel {
    pub fn new(prior_a: f64, p_a_given_a: f64, p_b_given_b: f64) -> Result<Self> {
        let prior_a = check_probability("prior_a", prior_a)?;
        let noise = NoisePair::new(p_a_given_a, p_b_given_b)?;
        let raw = Self { prior_a, noise, label_swapped: false };
        if raw.marginal(Signal::A) < raw.marginal(Signal::B) {
            Ok(Self { prior_a: 1.0 - prior_a, noise: noise.swapped(), label_swapped: true })
        } else {
            Ok(raw)
        }
    }

    /// Symmetric-noise shorthand, `Pr[s=q|q] = accuracy` for both qualities.
    pub fn symmetric(prior_a: f64, accuracy: f64) -> Result<Self> {
        Self::new(prior_a, accuracy, accuracy)
    }

    pub fn prior_a(&self) -> f64 {
        self.prior_a
    }

    pub fn p_a_given_a(&self) -> f64 {
        self.noise.p_a_given_a
    }

    pub fn p_b_given_b(&self) -> f64 {
        self.noise.p_b_given_b
    }

    pub fn noise(&self) -> NoisePair {
        self.noise
    }

    pub fn label_swapped(&self) -> bool {
        self.label_swapped
    }

    pub fn prior(&self, quality: Signal) -> f64 {
        prior_of(self.prior_a, quality)
    }

    pub fn likelihood(&self, signal: Signal, quality: Signal) -> f64 {
        self.noise.likelihood(signal, quality)
    }

    /// Ex ante probability `P_l` that a single grader observes `l`.
    pub fn marginal(&self, l: Signal) -> f64 {
        Signal::ALL.iter().map(|&q| self.prior(q) * self.likelihood(l, q)).sum()
    }

    /// `P_{lt}`: probability that two graders observe `l` and `t`.
    pub fn pair_joint(&self, l: Signal, t: Signal) -> f64 {
        Signal::ALL.iter().map(|&q| self.prior(q) * self.likelihood(l, q) * self.likelihood(t, q)).sum()
    }

    /// `P_{l|t}`: probability of observing `l` given another grader observed `t`.
    pub fn conditional(&self, l: Signal, t: Signal) -> Result<f64> {
        let m = self.marginal(t);
        if m <= 0.0 {
            return Err(Error::DegenerateConditioning);
        }
        Ok(self.pair_joint(l, t) / m)
    }

    pub fn vector_joint(&self, signals: &[Signal]) -> Result<f64> {
        if signals.is_empty() {
            return Err(Error::InvalidParameter { name: "signals", reason: "signal vector must be nonempty".into() });
        }
        Ok(Signal::ALL
            .iter()
            .map(|&q| self.prior(q) * signals.iter().map(|&s| self.likelihood(s, q)).product::<f64>())
            .sum())
    }

    /// Distribution of the number of `a` observations among `n` graders.
    pub fn count_distribution(&self, n: usize) -> Result<CountDistribution> {
        if n == 0 {
            return Err(Error::InvalidParameter { name: "n", reason: "need at least one student".into() });
        }
        let mut probs = vec![0.0; n + 1];
        for q in Signal::ALL {
            let w = self.prior(q);
            let pa = self.likelihood(Signal::A, q);
            let pb = self.likelihood(Signal::B, q);
            let mut binom = 1.0;
            for (j, slot) in probs.iter_mut().enumerate() {
                *slot += w * binom * pa.powi(j as i32) * pb.powi((n - j) as i32);
                binom = binom * (n - j) as f64 / (j + 1) as f64;
            }
        }
        Ok(CountDistribution { n, probs })
    }

    /// Signal variance `D = P_aa − P_a²`; also equals `P_aa·P_bb − P_ab²`.
    pub fn signal_variance(&self) -> f64 {
        let pa = self.marginal(Signal::A);
        self.pair_joint(Signal::A, Signal::A) - pa * pa
    }

    pub fn is_uninformative(&self) -> bool {
        self.signal_variance() <= UNINFORMATIVE_EPS
    }

    /// The homogeneous model viewed as a heterogeneous one with `n` students
    /// sharing effort cost `cost`.
    pub fn homogenized(&self, n: usize, cost: f64) -> Result<HeteroModel> {
        HeteroModel::new(self.prior_a, vec![self.noise; n], self.noise, vec![cost; n])
    }
}

/// Heterogeneous model: per-student noise, a separate TA noise, and
/// per-student effort costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroModel {
    prior_a: f64,
    student_noise: Vec<NoisePair>,
    ta_noise: NoisePair,
    costs: Vec<f64>,
}

impl HeteroModel {
    pub fn new(prior_a: f64, student_noise: Vec<NoisePair>, ta_noise: NoisePair, costs: Vec<f64>) -> Result<Self> {
        let prior_a = check_probability("prior_a", prior_a)?;
        if student_noise.is_empty() {
            return Err(Error::InvalidParameter { name: "student_noise", reason: "need at least one student".into() });
        }
        if costs.len() != student_noise.len() {
            return Err(Error::DimensionError(format!("{} costs for {} students", costs.len(), student_noise.len())));
        }
        for pair in student_noise.iter().chain(std::iter::once(&ta_noise)) {
            NoisePair::new(pair.p_a_given_a, pair.p_b_given_b)?;
        }
        if let Some(&c) = costs.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidParameter { name: "costs", reason: format!("cost {c} must be > 0") });
        }
        Ok(Self { prior_a, student_noise, ta_noise, costs })
    }

    pub fn prior_a(&self) -> f64 {
        self.prior_a
    }

    pub fn n(&self) -> usize {
        self.student_noise.len()
    }

    pub fn student_noise(&self) -> &[NoisePair] {
        &self.student_noise
    }

    pub fn ta_noise(&self) -> NoisePair {
        self.ta_noise
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn prior(&self, quality: Signal) -> f64 {
        prior_of(self.prior_a, quality)
    }

    fn student(&self, i: usize) -> Result<&NoisePair> {
        self.student_noise.get(i).ok_or(Error::IndexError { index: i, len: self.n() })
    }

    pub fn student_marginal(&self, i: usize, l: Signal) -> Result<f64> {
        let s = self.student(i)?;
        Ok(Signal::ALL.iter().map(|&q| self.prior(q) * s.likelihood(l, q)).sum())
    }

    pub fn ta_marginal(&self, l: Signal) -> f64 {
        Signal::ALL.iter().map(|&q| self.prior(q) * self.ta_noise.likelihood(l, q)).sum()
    }

    /// `Pr[s_i = l, s_TA = t]`.
    pub fn ta_joint(&self, i: usize, l: Signal, t: Signal) -> Result<f64> {
        let s = self.student(i)?;
        Ok(Signal::ALL.iter().map(|&q| self.prior(q) * s.likelihood(l, q) * self.ta_noise.likelihood(t, q)).sum())
    }

    /// `Pr[s_i = l | s_TA = t]`.
    pub fn student_given_ta(&self, i: usize, l: Signal, t: Signal) -> Result<f64> {
        let m = self.ta_marginal(t);
        if m <= 0.0 {
            return Err(Error::DegenerateConditioning);
        }
        Ok(self.ta_joint(i, l, t)? / m)
    }

    /// Probability of the full student signal vector (one entry per student).
    pub fn vector_joint(&self, signals: &[Signal]) -> Result<f64> {
        if signals.len() != self.n() {
            return Err(Error::DimensionError(format!(
                "signal vector of length {} for {} students",
                signals.len(),
                self.n()
            )));
        }
        Ok(Signal::ALL
            .iter()
            .map(|&q| {
                self.prior(q)
                    * signals.iter().zip(&self.student_noise).map(|(&s, noise)| noise.likelihood(s, q)).product::<f64>()
            })
            .sum())
    }
}

/// `probs[j]` = probability that exactly `j` of `n` graders observe `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
}

impl CountDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean_fraction_a(&self) -> f64 {
        self.probs.iter().enumerate().map(|(j, p)| j as f64 * p).sum::<f64>() / self.n as f64
    }
}

/// Model access shared by the incentive engine and the simulator, so both
/// homogeneous and heterogeneous models run through the same code.
pub trait GradingModel {
    fn prior(&self, quality: Signal) -> f64;
    fn student_likelihood(&self, i: usize, signal: Signal, quality: Signal) -> f64;
    fn ta_likelihood(&self, signal: Signal, quality: Signal) -> f64;
    /// Effort cost of student `i`; `None` means the mechanism's own cost applies.
    fn student_cost(&self, i: usize) -> Option<f64>;
    /// Fixed student count, if the model carries one.
    fn fixed_n(&self) -> Option<usize>;
}

impl GradingModel for SignalModel {
    fn prior(&self, quality: Signal) -> f64 {
        SignalModel::prior(self, quality)
    }

    fn student_likelihood(&self, _i: usize, signal: Signal, quality: Signal) -> f64 {
        self.likelihood(signal, quality)
    }

    fn ta_likelihood(&self, signal: Signal, quality: Signal) -> f64 {
        self.likelihood(signal, quality)
    }

    fn student_cost(&self, _i: usize) -> Option<f64> {
        None
    }

    fn fixed_n(&self) -> Option<usize> {
        None
    }
}

impl GradingModel for HeteroModel {
    fn prior(&self, quality: Signal) -> f64 {
        HeteroModel::prior(self, quality)
    }

    fn student_likelihood(&self, i: usize, signal: Signal, quality: Signal) -> f64 {
        self.student_noise[i].likelihood(signal, quality)
    }

    fn ta_likelihood(&self, signal: Signal, quality: Signal) -> f64 {
        self.ta_noise.likelihood(signal, quality)
    }

    fn student_cost(&self, i: usize) -> Option<f64> {
        self.costs.get(i).copied()
    }

    fn fixed_n(&self) -> Option<usize> {
        Some(self.n())
    }
}
