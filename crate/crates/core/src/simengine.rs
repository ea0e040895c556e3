//! Trial simulation at the sufficient-statistic level and operating
//! characteristics of the adaptive designs.
//!
//! Each replicate owns two ChaCha streams, one per stage, keyed by the master
//! seed and the replicate index. Stage-2 draws therefore never depend on how
//! much randomness the interim decision consumed, and results do not depend
//! on the number of worker threads.

use crate::bayespower::{pp_ssr_decide, Prior};
use crate::design::{Allocation, TwoStageDesign};
use crate::error::{invalid, Result};
use crate::freqpower::{
    combine_multi, cp_ssr_decide, final_test, stage_statistic, AnalysisPlan, DeltaSource, InterimState, SsrDecision,
    Zone,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::borrow::Cow;
use std::sync::Arc;

/// Interim decision rule used in a simulated trial.
#[derive(Debug, Clone)]
pub enum SsrRule {
    Conditional(DeltaSource),
    Predictive(Prior),
}

/// A named interim rule.
#[derive(Debug, Clone)]
pub struct SsrMethod {
    pub label: String,
    pub rule: SsrRule,
}

impl SsrMethod {
    pub fn new(label: impl Into<String>, rule: SsrRule) -> Self {
        Self {
            label: label.into(),
            rule,
        }
    }

    /// Conditional power at the observed interim effect.
    pub fn fq1() -> Self {
        Self::new("FQ1", SsrRule::Conditional(DeltaSource::Observed))
    }

    /// Conditional power at the effect of an anticipated profile, usually
    /// the one the design was planned under.
    pub fn fq2(planned: Vec<f64>) -> Self {
        Self::new("FQ2", SsrRule::Conditional(DeltaSource::AssumedMeans(planned)))
    }

    /// Conditional power at the effect of a second anticipated profile.
    pub fn fq3(assumed: Vec<f64>) -> Self {
        Self::new("FQ3", SsrRule::Conditional(DeltaSource::AssumedMeans(assumed)))
    }

    /// Predictive power under the flat prior.
    pub fn by1() -> Self {
        Self::new("BY1", SsrRule::Predictive(Prior::Flat))
    }

    /// Predictive power under a conjugate prior centred on `mu0`.
    pub fn by2(mu0: Vec<f64>, tau0: f64) -> Result<Self> {
        Ok(Self::new("BY2", SsrRule::Predictive(Prior::conjugate(mu0, tau0)?)))
    }

    pub fn by3(mu0: Vec<f64>, tau0: f64) -> Result<Self> {
        Ok(Self::new("BY3", SsrRule::Predictive(Prior::conjugate(mu0, tau0)?)))
    }

    pub fn decide(&self, interim: &InterimState, plan: &AnalysisPlan) -> Result<SsrDecision> {
        match &self.rule {
            SsrRule::Conditional(source) => cp_ssr_decide(interim, plan, source),
            SsrRule::Predictive(prior) => pp_ssr_decide(interim, plan, prior),
        }
    }
}

/// One simulated study configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Shared design, critical value and QMC settings.
    pub plan: Arc<AnalysisPlan>,
    pub true_mu: Vec<f64>,
    pub method: SsrMethod,
    pub replicates: u64,
    pub master_seed: u64,
}

impl Scenario {
    pub fn new(
        plan: Arc<AnalysisPlan>,
        true_mu: Vec<f64>,
        method: SsrMethod,
        replicates: u64,
        master_seed: u64,
    ) -> Result<Self> {
        let k = plan.design.arms();
        if true_mu.len() != k {
            return invalid(format!("true means have {} arms, design has {k}", true_mu.len()));
        }
        if true_mu.iter().any(|m| !m.is_finite()) {
            return invalid("true means must be finite");
        }
        if replicates == 0 {
            return invalid("at least one replicate is required");
        }
        if let SsrRule::Conditional(DeltaSource::AssumedMeans(mu)) = &method.rule {
            if mu.len() != k {
                return invalid(format!("assumed profile has {} arms, design has {k}", mu.len()));
            }
        }
        if let SsrRule::Predictive(Prior::ConjugateNormal { mu0, .. }) = &method.rule {
            if mu0.len() != k {
                return invalid(format!("prior has {} arms, design has {k}", mu0.len()));
            }
        }
        Ok(Self {
            plan,
            true_mu,
            method,
            replicates,
            master_seed,
        })
    }

    pub fn design(&self) -> &TwoStageDesign {
        &self.plan.design
    }
}

/// Result of one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub zone: Zone,
    pub metric_at_n2: f64,
    pub final_n2: f64,
    pub total_n: f64,
    pub rejected: bool,
}

/// Operating characteristics over all replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationReport {
    pub pct_unfavorable: f64,
    pub pct_favorable: f64,
    pub pct_promising: f64,
    pub metric_mean: f64,
    pub metric_sd: f64,
    pub power: f64,
    pub mean_ss: f64,
    /// Mean of `final_n2 − N₂` over promising-zone replicates.
    pub mean_incr: f64,
    pub replicates: u64,
    pub mc_se_power: f64,
}

/// Minimum replicate count for [`run_study`].
pub const MIN_REPLICATES: u64 = 100;

/// Random stream for one stage of one replicate.
pub fn replicate_stream(master_seed: u64, replicate: u64, stage: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate.wrapping_mul(2).wrapping_add(stage as u64));
    rng
}

/// Per-arm sample means `ȳ_i ~ N(μ_i, σ²/(nφ_i))`.
pub fn draw_stage_means(mu: &[f64], sigma: f64, n: f64, phi: &Allocation, rng: &mut ChaCha8Rng) -> Vec<f64> {
    mu.iter()
        .zip(phi.as_slice())
        .map(|(m, p)| {
            let z: f64 = StandardNormal.sample(rng);
            m + sigma / (n * p).sqrt() * z
        })
        .collect()
}

/// Runs one two-stage trial.
pub fn run_trial(scenario: &Scenario, replicate: u64) -> Result<TrialOutcome> {
    let design = scenario.design();
    let mut rng1 = replicate_stream(scenario.master_seed, replicate, 0);
    let ybar1 = draw_stage_means(&scenario.true_mu, design.sigma, design.n1, &design.alloc1, &mut rng1);
    let interim = InterimState::for_design(design, ybar1)?;

    let plan: Cow<AnalysisPlan> = if scenario.plan.is_multi() {
        Cow::Owned(scenario.plan.salted(replicate))
    } else {
        Cow::Borrowed(&scenario.plan)
    };
    let decision = scenario.method.decide(&interim, &plan)?;
    // guard against closed-form round-off just above an integer
    let n2 = (decision.n2_new - 1e-9).ceil().max(1.0);

    let mut rng2 = replicate_stream(scenario.master_seed, replicate, 1);
    let ybar2 = draw_stage_means(&scenario.true_mu, design.sigma, n2, &design.alloc2, &mut rng2);
    let t2 = design
        .contrasts
        .rows()
        .iter()
        .map(|c| stage_statistic(&ybar2, n2, &design.alloc2, c, design.sigma))
        .collect::<Result<Vec<_>>>()?;
    let combined = combine_multi(interim.t1(), &t2, &design.w1(), &design.w2());
    Ok(TrialOutcome {
        zone: decision.zone,
        metric_at_n2: decision.metric_at_n2,
        final_n2: n2,
        total_n: design.n1 + n2,
        rejected: final_test(&combined, plan.critical),
    })
}

/// Runs every replicate (in parallel) and returns the outcomes in replicate
/// order.
pub fn simulate(scenario: &Scenario) -> Result<Vec<TrialOutcome>> {
    (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_trial(scenario, r))
        .collect()
}

/// Aggregates outcomes in order.
pub fn summarize(outcomes: &[TrialOutcome], design: &TwoStageDesign) -> SimulationReport {
    let r = outcomes.len() as f64;
    let count = |z| outcomes.iter().filter(|o| o.zone == z).count() as f64;
    let metric_mean = outcomes.iter().map(|o| o.metric_at_n2).sum::<f64>() / r;
    let metric_sd = if outcomes.len() > 1 {
        (outcomes
            .iter()
            .map(|o| (o.metric_at_n2 - metric_mean).powi(2))
            .sum::<f64>()
            / (r - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let power = outcomes.iter().filter(|o| o.rejected).count() as f64 / r;
    let promising: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.zone == Zone::Promising).collect();
    let mean_incr = if promising.is_empty() {
        0.0
    } else {
        promising.iter().map(|o| o.final_n2 - design.n2).sum::<f64>() / promising.len() as f64
    };
    SimulationReport {
        pct_unfavorable: 100.0 * count(Zone::Unfavorable) / r,
        pct_favorable: 100.0 * count(Zone::Favorable) / r,
        pct_promising: 100.0 * count(Zone::Promising) / r,
        metric_mean,
        metric_sd,
        power,
        mean_ss: outcomes.iter().map(|o| o.total_n).sum::<f64>() / r,
        mean_incr,
        replicates: outcomes.len() as u64,
        mc_se_power: (power * (1.0 - power) / r).sqrt(),
    }
}

/// Simulates a scenario and aggregates its operating characteristics.
pub fn run_study(scenario: &Scenario) -> Result<SimulationReport> {
    if scenario.replicates < MIN_REPLICATES {
        return invalid(format!(
            "at least {MIN_REPLICATES} replicates are required, got {}",
            scenario.replicates
        ));
    }
    let outcomes = simulate(scenario)?;
    Ok(summarize(&outcomes, scenario.design()))
}

/// Interim metric values across replicates with their quartiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDistribution {
    pub values: Vec<f64>,
    /// 25th, 50th and 75th percentiles.
    pub quartiles: [f64; 3],
}

impl MetricDistribution {
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let values: Vec<f64> = outcomes.iter().map(|o| o.metric_at_n2).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if sorted.is_empty() {
                return f64::NAN;
            }
            let h = p * (sorted.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        };
        Self {
            quartiles: [q(0.25), q(0.5), q(0.75)],
            values,
        }
    }
}

/// Distribution of CP(N₂) or PP(N₂) across replicates.
pub fn metric_distribution(scenario: &Scenario) -> Result<MetricDistribution> {
    if scenario.replicates < MIN_REPLICATES {
        return invalid(format!(
            "at least {MIN_REPLICATES} replicates are required, got {}",
            scenario.replicates
        ));
    }
    Ok(MetricDistribution::from_outcomes(&simulate(scenario)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{optimal_contrast, shape_profile, ContrastSet, ShapeModel};
    use crate::gaussian::QmcConfig;

    fn plan(n1: f64, n2: f64, sigma: f64) -> Arc<AnalysisPlan> {
        let doses = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let phi = Allocation::equal(5);
        let p = shape_profile(&ShapeModel::Linear, &doses).unwrap();
        let c = optimal_contrast(&p, &phi).unwrap();
        let design = TwoStageDesign {
            doses,
            sigma,
            alloc1: phi.clone(),
            alloc2: phi,
            n1,
            n2,
            contrasts: ContrastSet::new(vec![c]).unwrap(),
            alpha: 0.1,
            beta: 0.2,
            n_max: n2 + 80.0,
            promising_min: 0.3,
        };
        Arc::new(AnalysisPlan::new(design, QmcConfig::default()).unwrap())
    }

    #[test]
    fn draws_are_deterministic_and_shrink() {
        let phi = Allocation::equal(5);
        let mu = [0.0, 0.2, 0.4, 0.6, 0.8];
        let a = draw_stage_means(&mu, 2.0, 60.0, &phi, &mut replicate_stream(7, 3, 0));
        let b = draw_stage_means(&mu, 2.0, 60.0, &phi, &mut replicate_stream(7, 3, 0));
        assert_eq!(a, b);
        let c = draw_stage_means(&mu, 2.0, 60.0, &phi, &mut replicate_stream(7, 3, 1));
        assert_ne!(a, c);
        let tiny = draw_stage_means(&mu, 1e-12, 60.0, &phi, &mut replicate_stream(1, 0, 0));
        for (t, m) in tiny.iter().zip(&mu) {
            assert!((t - m).abs() < 1e-9);
        }
    }

    #[test]
    fn stage_means_have_the_right_mean() {
        let phi = Allocation::equal(5);
        let mu = [0.0, 0.2, 0.4, 0.6, 0.8];
        let reps = 100_000;
        let mut sums = [0.0; 5];
        let mut rng = replicate_stream(11, 0, 0);
        for _ in 0..reps {
            let d = draw_stage_means(&mu, 2.0, 60.0, &phi, &mut rng);
            for i in 0..5 {
                sums[i] += d[i];
            }
        }
        let se = 2.0 / (60.0f64 * 0.2 * reps as f64).sqrt();
        for i in 0..5 {
            assert!((sums[i] / reps as f64 - mu[i]).abs() < 4.0 * se);
        }
    }

    #[test]
    fn fixed_zones_keep_the_planned_size() {
        let p = plan(60.0, 90.0, 2.0);
        let s = Scenario::new(p, vec![0.0, 0.2, 0.4, 0.6, 0.8], SsrMethod::fq1(), 300, 5).unwrap();
        for r in 0..300 {
            let o = run_trial(&s, r).unwrap();
            assert_eq!(o.total_n, 60.0 + o.final_n2);
            if o.zone != Zone::Promising {
                assert_eq!(o.final_n2, 90.0);
            } else {
                assert!(o.final_n2 >= 90.0 && o.final_n2 <= 170.0);
            }
        }
    }

    #[test]
    fn report_is_reproducible_and_consistent() {
        let p = plan(60.0, 90.0, 2.0);
        let s = Scenario::new(p, vec![0.0, 0.2, 0.4, 0.6, 0.8], SsrMethod::by1(), 500, 99).unwrap();
        let a = run_study(&s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_study(&s)).unwrap();
        assert_eq!(a, b);
        assert!((a.pct_favorable + a.pct_promising + a.pct_unfavorable - 100.0).abs() < 0.01);
        assert!(a.mean_incr >= 0.0);
        assert!(a.mean_ss >= 150.0 && a.mean_ss <= 230.0);
    }

    #[test]
    fn degenerate_metric_distribution() {
        let p = plan(60.0, 90.0, 1e-12);
        let s = Scenario::new(p, vec![0.0, 0.2, 0.4, 0.6, 0.8], SsrMethod::fq2(vec![0.0, 0.25, 0.5, 0.75, 1.0]), 100, 1).unwrap();
        let d = metric_distribution(&s).unwrap();
        assert!(d.values.iter().all(|v| *v == d.values[0]));
        assert_eq!(d.quartiles[0], d.quartiles[2]);
    }

    #[test]
    fn too_few_replicates() {
        let p = plan(60.0, 90.0, 2.0);
        let s = Scenario::new(p, vec![0.0; 5], SsrMethod::fq1(), 99, 1).unwrap();
        assert!(run_study(&s).is_err());
    }
}
