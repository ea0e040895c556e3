mod common;

use adaptive_ssr::bayespower::{
    posterior, pp_closed_form_single, pp_first_crossing, pp_ssr_decide, predictive_power, Prior,
};
use adaptive_ssr::freqpower::{
    conditional_error_single, conditional_law, conditional_power_single, cp_ssr_decide, DeltaSource, InterimState, Zone,
};
use common::{study_design, study_plan, Timing};
use proptest::prelude::*;

fn timing() -> impl Strategy<Value = Timing> {
    prop_oneof![Just(Timing::Early), Just(Timing::Late)]
}

fn arm_means() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.5, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cp_increases_with_stage2_size_for_positive_effect(
        t in timing(), t1 in -2.0f64..3.0, delta in 0.01f64..1.0, a in 1.0f64..300.0, b in 1.0f64..300.0
    ) {
        let design = study_design(false, t);
        let interim = InterimState::from_first_statistic(&design, t1).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cp_lo = conditional_power_single(lo, delta, &interim, &design);
        let cp_hi = conditional_power_single(hi, delta, &interim, &design);
        prop_assert!(cp_hi >= cp_lo - 1e-12);
    }

    #[test]
    fn cp_increases_with_interim_statistic(
        t in timing(), a in -3.0f64..3.0, b in -3.0f64..3.0, delta in -0.5f64..1.0, n2 in 1.0f64..200.0
    ) {
        let design = study_design(false, t);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let s_lo = InterimState::from_first_statistic(&design, lo).unwrap();
        let s_hi = InterimState::from_first_statistic(&design, hi).unwrap();
        prop_assert!(
            conditional_power_single(n2, delta, &s_hi, &design)
                >= conditional_power_single(n2, delta, &s_lo, &design) - 1e-12
        );
    }

    #[test]
    fn cp_decision_stays_within_bounds(t in timing(), ybar in arm_means(), which in 0usize..3) {
        let plan = study_plan(false, t);
        let d = &plan.design;
        let interim = InterimState::for_design(d, ybar).unwrap();
        let source = match which {
            0 => DeltaSource::Observed,
            1 => DeltaSource::AssumedMeans(common::OPTIMISTIC.to_vec()),
            _ => DeltaSource::AssumedMeans(common::UNDER.to_vec()),
        };
        let dec = cp_ssr_decide(&interim, &plan, &source).unwrap();
        prop_assert!(dec.n2_new >= d.n2 && dec.n2_new <= d.n_max);
        if dec.zone != Zone::Promising {
            prop_assert_eq!(dec.n2_new, d.n2);
        }
        prop_assert!(dec.metric_at_zero.is_none());
    }

    #[test]
    fn pp_decision_stays_within_bounds(t in timing(), ybar in arm_means(), conj in any::<bool>()) {
        let plan = study_plan(false, t);
        let d = &plan.design;
        let interim = InterimState::for_design(d, ybar).unwrap();
        let prior = if conj {
            Prior::conjugate(common::OPTIMISTIC.to_vec(), 5.0).unwrap()
        } else {
            Prior::Flat
        };
        let dec = pp_ssr_decide(&interim, &plan, &prior).unwrap();
        prop_assert!(dec.n2_new >= d.n2 && dec.n2_new <= d.n_max);
        prop_assert_eq!(dec.n2_new, dec.n2_new.round());
        prop_assert!(dec.metric_at_zero.is_some());
    }

    /// Flat-prior predictive power sits between one half and conditional
    /// power at the interim estimate.
    #[test]
    fn flat_pp_shrinks_cp_toward_half(t in timing(), ybar in arm_means(), n2 in 1.0f64..250.0) {
        let design = study_design(false, t);
        let interim = InterimState::for_design(&design, ybar.clone()).unwrap();
        let post = posterior(&Prior::Flat, &interim, design.sigma).unwrap();
        let pp = pp_closed_form_single(&post, n2, &interim, &design).unwrap();
        let delta_hat: f64 = design.contrasts.row(0).iter().zip(&ybar).map(|(c, y)| c * y).sum();
        let cp = conditional_power_single(n2, delta_hat, &interim, &design);
        prop_assert!((pp - 0.5).abs() <= (cp - 0.5).abs() + 1e-12);
        prop_assert!((pp - 0.5) * (cp - 0.5) >= -1e-12);
    }

    /// The conjugate posterior mean lies between the prior mean and the
    /// interim mean, arm by arm, and is never more variable than the flat one.
    #[test]
    fn conjugate_posterior_is_sandwiched(t in timing(), ybar in arm_means(), mu0 in arm_means(), tau0 in 0.01f64..50.0) {
        let design = study_design(false, t);
        let interim = InterimState::for_design(&design, ybar.clone()).unwrap();
        let conj = posterior(&Prior::conjugate(mu0.clone(), tau0).unwrap(), &interim, design.sigma).unwrap();
        let flat = posterior(&Prior::Flat, &interim, design.sigma).unwrap();
        for i in 0..5 {
            let (lo, hi) = if mu0[i] < ybar[i] { (mu0[i], ybar[i]) } else { (ybar[i], mu0[i]) };
            prop_assert!(conj.mean()[i] >= lo - 1e-12 && conj.mean()[i] <= hi + 1e-12);
            prop_assert!(conj.cov(i, i) <= flat.cov(i, i));
        }
    }

    /// Null rejection probability given stage 1 does not depend on the
    /// stage-2 size.
    #[test]
    fn conditional_error_ignores_stage2_size(t in timing(), t1 in -3.0f64..4.0, n2 in 0.5f64..400.0) {
        let design = study_design(false, t);
        let interim = InterimState::from_first_statistic(&design, t1).unwrap();
        let ce = conditional_error_single(&interim, &design);
        prop_assert!((conditional_power_single(n2, 0.0, &interim, &design) - ce).abs() < 1e-12);
    }

    #[test]
    fn first_crossing_matches_exhaustive_scan(t in timing(), ybar in arm_means(), level in 0.3f64..0.95) {
        let plan = study_plan(false, t);
        let interim = InterimState::for_design(&plan.design, ybar).unwrap();
        let post = posterior(&Prior::Flat, &interim, plan.design.sigma).unwrap();
        let scan = (1..=plan.design.n_max.floor() as u64)
            .find(|n| predictive_power(&post, *n as f64, &interim, &plan).unwrap() >= level);
        prop_assert_eq!(pp_first_crossing(&post, &interim, &plan, level).unwrap(), scan);
    }

    #[test]
    fn laplace_matches_conjugate_for_gaussian_prior(
        t in timing(), ybar in arm_means(), mu0 in arm_means(), tau0 in 0.1f64..20.0, n2 in 5.0f64..200.0
    ) {
        let design = study_design(false, t);
        let interim = InterimState::for_design(&design, ybar).unwrap();
        let conj = posterior(&Prior::conjugate(mu0.clone(), tau0).unwrap(), &interim, design.sigma).unwrap();
        let m0 = mu0.clone();
        let general = Prior::general(move |mu: &[f64]| {
            -0.5 * tau0 * mu.iter().zip(&m0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        });
        let lap = posterior(&general, &interim, design.sigma).unwrap();
        let a = pp_closed_form_single(&conj, n2, &interim, &design).unwrap();
        let b = pp_closed_form_single(&lap, n2, &interim, &design).unwrap();
        prop_assert!((a - b).abs() < 1e-5, "{} vs {}", a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// With proportional stage-2 allocation the conditional covariance of
    /// the combined statistics does not depend on the stage-2 size.
    #[test]
    fn multi_conditional_covariance_ignores_stage2_size(
        t in timing(), ybar in arm_means(), a in 1.0f64..400.0, b in 1.0f64..400.0
    ) {
        let design = study_design(true, t);
        let interim = InterimState::for_design(&design, ybar).unwrap();
        let delta = design.contrasts.apply(&common::UNDER);
        let la = conditional_law(a, &delta, &interim, &design).unwrap();
        let lb = conditional_law(b, &delta, &interim, &design).unwrap();
        for (x, y) in la.cov_matrix().iter().zip(lb.cov_matrix()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn multi_cp_decision_stays_within_bounds(t in timing(), ybar in arm_means()) {
        let plan = study_plan(true, t);
        let d = &plan.design;
        let interim = InterimState::for_design(d, ybar).unwrap();
        let dec = cp_ssr_decide(&interim, &plan, &DeltaSource::Observed).unwrap();
        prop_assert!(dec.n2_new >= d.n2 && dec.n2_new <= d.n_max);
        if dec.zone == Zone::Promising && dec.n2_new < d.n_max {
            let cp = plan.conditional_power(dec.n2_new, &d.contrasts.apply(interim.ybar1()), &interim).unwrap();
            prop_assert!(cp >= d.target_power() - 3e-3, "cp at n2_new = {}", cp);
        }
    }
}
