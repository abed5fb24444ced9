//! TA workload: the probability that the TA has to grade an assignment when
//! every student grades truthfully.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{
    feasibility_report, optimal_ros, optimal_rss, optimal_rsus, EconParams, Family, Feasibility, Mechanism, Optimum,
    PersonalPolicy, Policy,
};
use crate::prob_model::{HeteroModel, Signal, SignalModel};

/// Largest student count accepted by the exact heterogeneous enumeration.
pub const HETERO_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountTerm {
    /// Probability that exactly `k` students report `a`.
    pub weight: f64,
    /// TA consult probability at that count.
    pub consult: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub workload: f64,
    pub per_count: Vec<CountTerm>,
    pub family: Family,
}

pub fn ta_workload(model: &SignalModel, mech: &Mechanism) -> Result<WorkloadReport> {
    let Policy::Count(policy) = &mech.policy else {
        return Err(Error::DimensionError(
            "count-based workload needs a count policy; use hetero_workload for per-student policies".into(),
        ));
    };
    let dist = model.count_distribution(policy.n())?;
    let per_count: Vec<CountTerm> =
        dist.probs.iter().enumerate().map(|(k, &weight)| CountTerm { weight, consult: policy.consult(k) }).collect();
    let workload = per_count.iter().map(|t| t.weight * t.consult).sum();
    Ok(WorkloadReport { workload, per_count, family: mech.family })
}

/// Exact workload of per-student policies, summed over all `2^n` signal vectors.
pub fn hetero_workload(model: &HeteroModel, policies: &[PersonalPolicy]) -> Result<f64> {
    let n = model.n();
    if policies.len() != n {
        return Err(Error::DimensionError(format!("{} policies for {} students", policies.len(), n)));
    }
    if n > HETERO_MAX_N {
        return Err(Error::TooLarge { what: "students", got: n, cap: HETERO_MAX_N });
    }
    let term = |mask: usize| -> f64 {
        let signal = |j: usize| if mask >> j & 1 == 1 { Signal::A } else { Signal::B };
        let prob: f64 = Signal::ALL
            .iter()
            .map(|&q| {
                model.prior(q) * (0..n).map(|j| model.student_noise()[j].likelihood(signal(j), q)).product::<f64>()
            })
            .sum();
        let consult = (0..n).map(|j| policies[j].get(signal(j))).fold(0.0, f64::max);
        prob * consult
    };
    Ok(pairwise_sum(0, 1usize << n, &term))
}

/// Pairwise tree sum over `lo..hi`. Halves are evaluated in parallel above a
/// threshold; the tree shape depends only on the range, so the result does not
/// depend on the worker count.
fn pairwise_sum<F: Fn(usize) -> f64 + Sync>(lo: usize, hi: usize, f: &F) -> f64 {
    const LEAF: usize = 64;
    const PARALLEL: usize = 1 << 12;
    if hi - lo <= LEAF {
        return (lo..hi).map(f).sum();
    }
    let mid = lo + (hi - lo) / 2;
    let (a, b) = if hi - lo >= PARALLEL {
        rayon::join(|| pairwise_sum(lo, mid, f), || pairwise_sum(mid, hi, f))
    } else {
        (pairwise_sum(lo, mid, f), pairwise_sum(mid, hi, f))
    };
    a + b
}

/// Lower bound on the workload saved by optimal RSS over optimal ROS:
/// `(c/R)·P_b / (P_aa·P_bb − P_ab²)`.
pub fn savings_lower_bound(model: &SignalModel, econ: &EconParams) -> Result<f64> {
    let pa = model.marginal(Signal::A);
    let pb = model.marginal(Signal::B);
    if pa - pb <= 1e-12 {
        return Err(Error::NotApplicable("the bound needs P_a > P_b".into()));
    }
    let paa = model.pair_joint(Signal::A, Signal::A);
    let pab = model.pair_joint(Signal::A, Signal::B);
    let pbb = model.pair_joint(Signal::B, Signal::B);
    if pbb - pab <= econ.ratio() {
        return Err(Error::NotApplicable("the bound needs P_bb - P_ab > c/R".into()));
    }
    Ok(econ.ratio() * pb / (paa * pbb - pab * pab))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub ros: Optimum<WorkloadReport>,
    pub rss: Optimum<WorkloadReport>,
    pub rsus: Optimum<WorkloadReport>,
    /// RSS workload over ROS workload.
    pub scaled_rss: Option<f64>,
    /// RSUS workload over ROS workload.
    pub scaled_rsus: Option<f64>,
}

impl ComparisonReport {
    pub fn ros_workload(&self) -> Option<f64> {
        self.ros.value().map(|w| w.workload)
    }

    pub fn rss_workload(&self) -> Option<f64> {
        self.rss.value().map(|w| w.workload)
    }

    pub fn rsus_workload(&self) -> Option<f64> {
        self.rsus.value().map(|w| w.workload)
    }
}

fn assess(
    model: &SignalModel,
    built: Result<Optimum<Mechanism>>,
    fallback_margin: f64,
) -> Result<Optimum<WorkloadReport>> {
    match built {
        Ok(Optimum::Feasible { value, feasibility }) => {
            Ok(Optimum::Feasible { value: ta_workload(model, &value)?, feasibility })
        }
        Ok(Optimum::Infeasible(f)) => Ok(Optimum::Infeasible(f)),
        Err(Error::DegenerateModel(reason)) => {
            Ok(Optimum::Infeasible(Feasibility { feasible: false, margin: fallback_margin, reason: Some(reason) }))
        }
        Err(e) => Err(e),
    }
}

/// Builds the optimal ROS, RSS and RSUS mechanisms and compares their workloads.
pub fn compare_mechanisms(model: &SignalModel, econ: &EconParams, n: usize) -> Result<ComparisonReport> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "n", reason: "need at least one student".into() });
    }
    // a degenerate RSUS recursion only happens where ROS is infeasible too
    let ros_margin = feasibility_report(model, econ).ros_margin;
    let ros = assess(model, optimal_ros(model, econ, n), ros_margin)?;
    let rss = assess(model, optimal_rss(model, econ, n), ros_margin)?;
    let rsus = assess(model, optimal_rsus(model, econ, n), ros_margin)?;
    let scale = |w: &Optimum<WorkloadReport>| Some(w.value()?.workload / ros.value()?.workload);
    let scaled_rss = scale(&rss);
    let scaled_rsus = scale(&rsus);
    Ok(ComparisonReport { n, ros, rss, rsus, scaled_rss, scaled_rsus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::optimal_hetero_prss;
    use crate::prob_model::NoisePair;
    use proptest::prelude::*;

    fn fig2() -> SignalModel {
        SignalModel::new(0.8, 0.9, 0.9).unwrap()
    }

    fn econ25() -> EconParams {
        EconParams::new(1.0, 25.0).unwrap()
    }

    fn rss_mech(model: &SignalModel, e: &EconParams, n: usize) -> Mechanism {
        optimal_rss(model, e, n).unwrap().into_value().unwrap()
    }

    #[test]
    fn fig2_workloads() {
        let m = fig2();
        let ros = optimal_ros(&m, &econ25(), 3).unwrap().into_value().unwrap();
        assert!((ta_workload(&m, &ros).unwrap().workload - 0.5).abs() < 1e-12);
        let w3 = ta_workload(&m, &rss_mech(&m, &econ25(), 3)).unwrap();
        assert!((w3.workload - 0.1797).abs() < 0.005);
        let w10 = ta_workload(&m, &rss_mech(&m, &econ25(), 10)).unwrap();
        assert!((w10.workload - 0.2368).abs() < 0.005);
        let direct: f64 = w3.per_count.iter().map(|t| t.weight * t.consult).sum();
        assert!((direct - w3.workload).abs() < 1e-12);
    }

    #[test]
    fn rss_workload_closed_form() {
        // P(all a)·x_a + (1 − P(all a))·x_b
        let m = fig2();
        for n in 1..=12 {
            let all_a = m.vector_joint(&vec![Signal::A; n]).unwrap();
            let w = ta_workload(&m, &rss_mech(&m, &econ25(), n)).unwrap().workload;
            let want = all_a * 0.1015625 + (1.0 - all_a) * 0.2890625;
            assert!((w - want).abs() < 1e-12);
        }
    }

    #[test]
    fn personal_policy_is_rejected() {
        let m = fig2();
        let h = m.homogenized(2, 1.0).unwrap();
        let mech = optimal_hetero_prss(&h, 25.0).unwrap().into_value().unwrap();
        assert!(matches!(ta_workload(&m, &mech), Err(Error::DimensionError(_))));
    }

    #[test]
    fn hetero_workload_reductions() {
        let m = fig2();
        for n in 1..=4 {
            let h = m.homogenized(n, 1.0).unwrap();
            let mech = optimal_hetero_prss(&h, 25.0).unwrap().into_value().unwrap();
            let Policy::Personal(p) = &mech.policy else { unreachable!() };
            let brute = hetero_workload(&h, p).unwrap();
            let analytic = ta_workload(&m, &rss_mech(&m, &econ25(), n)).unwrap().workload;
            assert!((brute - analytic).abs() < 1e-12, "n={n}: {brute} vs {analytic}");
        }
        let h = m.homogenized(1, 1.0).unwrap();
        let p = [PersonalPolicy::new(0.3, 0.7).unwrap()];
        let w = hetero_workload(&h, &p).unwrap();
        assert!((w - (0.74 * 0.3 + 0.26 * 0.7)).abs() < 1e-12);
    }

    #[test]
    fn hetero_workload_two_students_by_hand() {
        // four signal vectors, max over the two students' probabilities
        let m = fig2();
        let h = m.homogenized(2, 1.0).unwrap();
        let p = [PersonalPolicy::new(0.1015625, 0.2890625).unwrap(); 2];
        let paa = m.pair_joint(Signal::A, Signal::A);
        let want = paa * 0.1015625 + (1.0 - paa) * 0.2890625;
        assert!((hetero_workload(&h, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn hetero_workload_caps() {
        let pair = NoisePair::new(0.9, 0.9).unwrap();
        let h = HeteroModel::new(0.5, vec![pair; 21], pair, vec![1.0; 21]).unwrap();
        let p = vec![PersonalPolicy::new(0.1, 0.1).unwrap(); 21];
        assert!(matches!(hetero_workload(&h, &p), Err(Error::TooLarge { .. })));
        assert!(matches!(hetero_workload(&h, &p[..3]), Err(Error::DimensionError(_))));
    }

    #[test]
    fn hetero_workload_large_enumeration() {
        // exercises the parallel tree reduction; constant policy gives workload = constant
        let pair = NoisePair::new(0.8, 0.7).unwrap();
        let h = HeteroModel::new(0.6, vec![pair; 16], pair, vec![1.0; 16]).unwrap();
        let p = vec![PersonalPolicy::new(0.3, 0.3).unwrap(); 16];
        assert!((hetero_workload(&h, &p).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn savings_bound_values() {
        let m = fig2();
        let b = savings_lower_bound(&m, &econ25()).unwrap();
        assert!((b - 0.04 * 0.26 / 0.1024).abs() < 1e-12);
        let r = compare_mechanisms(&m, &econ25(), 3).unwrap();
        assert!(r.ros_workload().unwrap() - r.rss_workload().unwrap() >= b);

        let sym = SignalModel::new(0.5, 0.9, 0.9).unwrap();
        assert!(matches!(savings_lower_bound(&sym, &econ25()), Err(Error::NotApplicable(_))));
        assert!(matches!(savings_lower_bound(&m, &EconParams::new(1.0, 10.0).unwrap()), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn comparison_fig2() {
        let r3 = compare_mechanisms(&fig2(), &econ25(), 3).unwrap();
        assert!((r3.scaled_rss.unwrap() - 0.36).abs() < 0.01);
        let rsus = r3.rsus_workload().unwrap();
        assert!((rsus - 0.2089).abs() < 1e-4);
        assert!(r3.rss_workload().unwrap() < rsus && rsus < r3.ros_workload().unwrap());
        let r10 = compare_mechanisms(&fig2(), &econ25(), 10).unwrap();
        assert!((r10.scaled_rss.unwrap() - 0.47).abs() < 0.01);
    }

    #[test]
    fn comparison_marks_infeasible() {
        let r = compare_mechanisms(&fig2(), &EconParams::new(1.0, 9.0).unwrap(), 3).unwrap();
        assert!(!r.ros.is_feasible());
        assert!(r.rss.is_feasible());
        assert!(r.scaled_rss.is_none());
    }

    #[test]
    fn rss_workload_monotone_in_n() {
        let m = fig2();
        let mut prev = 0.0;
        for n in 1..=200 {
            let w = ta_workload(&m, &rss_mech(&m, &econ25(), n)).unwrap().workload;
            assert!(w >= prev - 1e-15);
            prev = w;
        }
        assert!((prev / 0.5 - 0.578).abs() < 0.005);
    }

    #[test]
    fn savings_bound_counterexample() {
        // prior 0.6, accuracy 0.9: D = 0.1536 < P_bb - P_ab = 0.24, and the
        // realized saving falls short of the bound
        let m = SignalModel::new(0.6, 0.9, 0.9).unwrap();
        let e = EconParams::new(0.001, 1.0).unwrap();
        let bound = savings_lower_bound(&m, &e).unwrap();
        let r = compare_mechanisms(&m, &e, 1).unwrap();
        let saved = r.ros_workload().unwrap() - r.rss_workload().unwrap();
        assert!(saved < bound);
        assert!((saved - 0.000_994_791_666_666_666_4).abs() < 1e-15);
    }

    fn canonical_model() -> impl Strategy<Value = SignalModel> {
        (0.0..=1.0f64, 0.5..=1.0f64, 0.5..=1.0f64).prop_map(|(p, a, b)| SignalModel::new(p, a, b).unwrap())
    }

    proptest! {
        #[test]
        fn savings_bound_holds_when_variance_dominates(model in canonical_model(), ratio in 1e-3..0.3f64, n in 1usize..20) {
            // the chain x* - x_b >= bound needs D >= P_bb - P_ab
            let e = EconParams::new(ratio, 1.0).unwrap();
            let d = model.signal_variance();
            let ros_gap = model.pair_joint(Signal::B, Signal::B) - model.pair_joint(Signal::A, Signal::B);
            if let (Ok(bound), true) = (savings_lower_bound(&model, &e), d >= ros_gap) {
                let r = compare_mechanisms(&model, &e, n).unwrap();
                if let (Some(ros), Some(rss)) = (r.ros_workload(), r.rss_workload()) {
                    prop_assert!(ros - rss >= bound - 1e-12);
                }
            }
        }

        #[test]
        fn symmetric_models_do_not_save(acc in 0.55..=1.0f64, ratio in 1e-3..0.3f64, n in 1usize..15) {
            let m = SignalModel::new(0.5, acc, acc).unwrap();
            let e = EconParams::new(ratio, 1.0).unwrap();
            let r = compare_mechanisms(&m, &e, n).unwrap();
            if let Some(s) = r.scaled_rss {
                prop_assert!((s - 1.0).abs() <= 1e-12);
                prop_assert!((r.scaled_rsus.unwrap() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn workload_ordering(model in canonical_model(), ratio in 1e-3..0.3f64, n in 2usize..15) {
            let e = EconParams::new(ratio, 1.0).unwrap();
            let r = compare_mechanisms(&model, &e, n).unwrap();
            if let (Some(ros), Some(rss), Some(rsus)) = (r.ros_workload(), r.rss_workload(), r.rsus_workload()) {
                prop_assert!(rss <= rsus + 1e-12);
                prop_assert!(rsus <= ros + 1e-12);
            }
        }
    }
}
