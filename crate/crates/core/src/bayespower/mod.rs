//! Priors over the arm means, Gaussian posteriors, posterior predictive
//! power, and the predictive-power sample size rule.

mod laplace;

use crate::design::{contrast_variance_factor, TwoStageDesign};
use crate::error::{invalid, Result, SsrError};
use crate::freqpower::{exceedance_reaches, predictive_law, AnalysisPlan, InterimState, SsrDecision, Zone};
use crate::gaussian::{mvn_equicoordinate_cdf, phi, MvnSpec};
use std::fmt;
use std::sync::Arc;

pub use laplace::{laplace_posterior, LAPLACE_MAX_ITER};

/// Log prior density (up to a constant) over the vector of arm means.
pub type LogDensity = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Prior over the arm means.
#[derive(Clone)]
pub enum Prior {
    /// Improper uniform prior.
    Flat,
    /// Independent `μ_i ~ N(mu0_i, 1/tau0_i)`.
    ConjugateNormal { mu0: Vec<f64>, tau0: Vec<f64> },
    /// Any log density, handled with a Laplace approximation.
    General(LogDensity),
}

impl fmt::Debug for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Flat => f.write_str("Flat"),
            Prior::ConjugateNormal { mu0, tau0 } => f
                .debug_struct("ConjugateNormal")
                .field("mu0", mu0)
                .field("tau0", tau0)
                .finish(),
            Prior::General(_) => f.write_str("General(..)"),
        }
    }
}

impl Prior {
    /// Conjugate prior with a common precision for every arm.
    pub fn conjugate(mu0: Vec<f64>, tau0: f64) -> Result<Self> {
        let k = mu0.len();
        Self::conjugate_per_arm(mu0, vec![tau0; k])
    }

    pub fn conjugate_per_arm(mu0: Vec<f64>, tau0: Vec<f64>) -> Result<Self> {
        if mu0.len() != tau0.len() {
            return invalid("prior mean and precision lengths differ");
        }
        if mu0.iter().any(|m| !m.is_finite()) {
            return invalid("prior means must be finite");
        }
        if tau0.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return invalid("prior precisions must be positive and finite");
        }
        Ok(Prior::ConjugateNormal { mu0, tau0 })
    }

    pub fn general<F>(log_density: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Prior::General(Arc::new(log_density))
    }
}

/// Normal posterior for the arm means.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorNormal {
    mean: Vec<f64>,
    /// Row-major `k × k`.
    cov: Vec<f64>,
}

impl PosteriorNormal {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        // reuse the symmetric PSD checks
        let spec = MvnSpec::new(mean, cov)?;
        Ok(Self {
            mean: spec.mean().to_vec(),
            cov: spec.cov_matrix().to_vec(),
        })
    }

    pub fn diagonal(mean: Vec<f64>, var: &[f64]) -> Result<Self> {
        let k = mean.len();
        if var.len() != k {
            return invalid("posterior mean and variance lengths differ");
        }
        if var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return invalid("posterior variances must be finite and non-negative");
        }
        let mut cov = vec![0.0; k * k];
        for i in 0..k {
            cov[i * k + i] = var[i];
        }
        Ok(Self { mean, cov })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn arms(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.arms() + j]
    }

    pub fn cov_matrix(&self) -> &[f64] {
        &self.cov
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.arms()).map(|i| self.cov(i, i)).collect()
    }

    /// `cᵀ Ω c`.
    pub fn quad_form(&self, c: &[f64]) -> f64 {
        let k = self.arms();
        let mut q = 0.0;
        for i in 0..k {
            for j in 0..k {
                q += c[i] * self.cov[i * k + j] * c[j];
            }
        }
        q
    }
}

/// Posterior of the arm means given stage-1 data under `prior`.
pub fn posterior(prior: &Prior, interim: &InterimState, sigma: f64) -> Result<PosteriorNormal> {
    let ybar = interim.ybar1();
    let k = ybar.len();
    let tau = 1.0 / (sigma * sigma);
    let data_prec: Vec<f64> = interim
        .phi1()
        .as_slice()
        .iter()
        .map(|p| tau * interim.n1() * p)
        .collect();
    match prior {
        Prior::Flat => {
            let var: Vec<f64> = data_prec.iter().map(|p| 1.0 / p).collect();
            PosteriorNormal::diagonal(ybar.to_vec(), &var)
        }
        Prior::ConjugateNormal { mu0, tau0 } => {
            if mu0.len() != k {
                return invalid(format!("prior has {} arms, data have {k}", mu0.len()));
            }
            let mut mean = Vec::with_capacity(k);
            let mut var = Vec::with_capacity(k);
            for i in 0..k {
                let prec = tau0[i] + data_prec[i];
                mean.push((tau0[i] * mu0[i] + data_prec[i] * ybar[i]) / prec);
                var.push(1.0 / prec);
            }
            PosteriorNormal::diagonal(mean, &var)
        }
        Prior::General(log_prior) => {
            let log_post = |mu: &[f64]| {
                let mut ll = 0.0;
                for i in 0..k {
                    let d = mu[i] - ybar[i];
                    ll -= 0.5 * data_prec[i] * d * d;
                }
                ll + log_prior(mu)
            };
            laplace_posterior(log_post, ybar, &data_prec)
        }
    }
}

fn check_posterior(post: &PosteriorNormal, design: &TwoStageDesign) -> Result<()> {
    if post.arms() != design.arms() {
        return invalid(format!(
            "posterior has {} arms, design has {}",
            post.arms(),
            design.arms()
        ));
    }
    Ok(())
}

/// Single-contrast posterior predictive power at stage-2 size `n2`:
/// `Φ((a* − Z_α)/√b*)`.
pub fn pp_closed_form_single(
    post: &PosteriorNormal,
    n2: f64,
    interim: &InterimState,
    design: &TwoStageDesign,
) -> Result<f64> {
    pp_single_with_critical(post, n2, interim, design, design.z_alpha())
}

fn pp_single_with_critical(
    post: &PosteriorNormal,
    n2: f64,
    interim: &InterimState,
    design: &TwoStageDesign,
    critical: f64,
) -> Result<f64> {
    check_posterior(post, design)?;
    if !(n2 > 0.0) {
        return Err(SsrError::Domain(format!("stage-2 size must be positive, got {n2}")));
    }
    let c = design.contrasts.row(0);
    let sigma = design.sigma;
    let (w1, w2) = (design.w1()[0], design.w2()[0]);
    let s2 = contrast_variance_factor(c, &design.alloc2);
    let delta_star: f64 = c.iter().zip(post.mean()).map(|(a, b)| a * b).sum();
    let w_tilde = n2 * s2;
    let w_star = n2 * n2 * post.quad_form(c) / (sigma * sigma) + n2 * s2;
    let a_star = (w1.sqrt() * interim.t1()[0] + w2.sqrt() * delta_star * n2.sqrt() / (sigma * s2.sqrt()))
        / (w1 + w2).sqrt();
    let b_star = w2 / (w1 + w2) * w_star / w_tilde;
    Ok(phi((a_star - critical) / b_star.sqrt()))
}

/// Predictive law of the combined statistic vector at stage-2 size `n2`.
pub fn predictive_distribution(
    post: &PosteriorNormal,
    n2: f64,
    interim: &InterimState,
    design: &TwoStageDesign,
) -> Result<MvnSpec> {
    check_posterior(post, design)?;
    if !(n2 > 0.0) {
        return Err(SsrError::Domain(format!("stage-2 size must be positive, got {n2}")));
    }
    let k = design.arms();
    let mut cov = post.cov_matrix().to_vec();
    for (i, p) in design.alloc2.as_slice().iter().enumerate() {
        cov[i * k + i] += design.sigma * design.sigma / (n2 * p);
    }
    let delta_star = design.contrasts.apply(post.mean());
    predictive_law(n2, &delta_star, interim, design, &cov)
}

/// Multiple-contrast posterior predictive power at stage-2 size `n2`.
pub fn pp_closed_form_multi(
    post: &PosteriorNormal,
    n2: f64,
    interim: &InterimState,
    plan: &AnalysisPlan,
) -> Result<f64> {
    let law = predictive_distribution(post, n2, interim, &plan.design)?;
    Ok(1.0 - mvn_equicoordinate_cdf(&law, plan.critical, &plan.cfg)?.estimate)
}

/// Closed-form predictive power for either a single or several contrasts.
pub fn predictive_power(post: &PosteriorNormal, n2: f64, interim: &InterimState, plan: &AnalysisPlan) -> Result<f64> {
    if plan.is_multi() {
        pp_closed_form_multi(post, n2, interim, plan)
    } else {
        pp_single_with_critical(post, n2, interim, &plan.design, plan.critical)
    }
}

/// Whether predictive power at `n2` is at least `level`.
pub fn predictive_power_reaches(
    post: &PosteriorNormal,
    n2: f64,
    interim: &InterimState,
    plan: &AnalysisPlan,
    level: f64,
) -> Result<bool> {
    if plan.is_multi() {
        let law = predictive_distribution(post, n2, interim, &plan.design)?;
        exceedance_reaches(&law, plan.critical, level, &plan.cfg)
    } else {
        Ok(pp_single_with_critical(post, n2, interim, &plan.design, plan.critical)? >= level)
    }
}

/// Predictive power as `n₂ → 0⁺`: the chance that stage 1 alone carries the
/// final test. It does not depend on the posterior.
pub fn pp_at_zero(interim: &InterimState, plan: &AnalysisPlan) -> Result<f64> {
    let design = &plan.design;
    let (w1, w2) = (design.w1(), design.w2());
    let t1 = interim.t1();
    if !plan.is_multi() {
        let arg = (w1[0].sqrt() * t1[0] - plan.critical * (w1[0] + w2[0]).sqrt()) / w2[0].sqrt();
        return Ok(phi(arg));
    }
    let m = w1.len();
    let mean: Vec<f64> = (0..m)
        .map(|r| w1[r].sqrt() * t1[r] / (w1[r] + w2[r]).sqrt())
        .collect();
    let r2 = design.stage_correlation(design.n2, &design.alloc2);
    let d: Vec<f64> = (0..m).map(|r| (w2[r] / (w1[r] + w2[r])).sqrt()).collect();
    let mut cov = vec![0.0; m * m];
    for r in 0..m {
        for s in 0..m {
            cov[r * m + s] = d[r] * r2[r][s] * d[s];
        }
    }
    let law = MvnSpec::new(mean, cov)?;
    Ok(1.0 - mvn_equicoordinate_cdf(&law, plan.critical, &plan.cfg)?.estimate)
}

/// Minimum number of posterior draws accepted by [`pp_monte_carlo`].
pub const MIN_DRAWS: usize = 100;

/// Predictive power as the average conditional power over posterior draws
/// of the arm means. Returns the estimate and its standard error.
///
/// For several contrasts, draw `s` evaluates conditional power with the
/// plan's QMC seed salted by `s`, so integration error is independent across
/// draws and is reflected in the standard error.
pub fn pp_monte_carlo(draws: &[Vec<f64>], n2: f64, interim: &InterimState, plan: &AnalysisPlan) -> Result<(f64, f64)> {
    if draws.len() < MIN_DRAWS {
        return Err(SsrError::InsufficientSamples {
            got: draws.len(),
            need: MIN_DRAWS,
        });
    }
    let k = plan.design.arms();
    if let Some(bad) = draws.iter().position(|d| d.len() != k) {
        return invalid(format!("draw {bad} has {} arms, expected {k}", draws[bad].len()));
    }
    let values = draws
        .iter()
        .enumerate()
        .map(|(s, mu)| {
            let delta = plan.design.contrasts.apply(mu);
            if plan.is_multi() {
                plan.salted(s as u64).conditional_power(n2, &delta, interim)
            } else {
                plan.conditional_power(n2, &delta, interim)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    // moments of the shifts from the first value keep identical draws exact
    let n = values.len() as f64;
    let v0 = values[0];
    let dbar = values.iter().map(|v| v - v0).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - v0 - dbar).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((v0 + dbar, (var / n).sqrt()))
}

/// First integer `n₂` in `1..=n_max` with predictive power at least `level`.
pub fn pp_first_crossing(
    post: &PosteriorNormal,
    interim: &InterimState,
    plan: &AnalysisPlan,
    level: f64,
) -> Result<Option<u64>> {
    let n_max = plan.design.n_max.floor() as u64;
    for n in 1..=n_max {
        if predictive_power_reaches(post, n as f64, interim, plan, level)? {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Promising-zone decision based on posterior predictive power.
pub fn pp_ssr_decide(interim: &InterimState, plan: &AnalysisPlan, prior: &Prior) -> Result<SsrDecision> {
    let design = &plan.design;
    let post = posterior(prior, interim, design.sigma)?;
    let pp_n2 = predictive_power(&post, design.n2, interim, plan)?;
    let pp_0 = pp_at_zero(interim, plan)?;
    let target = design.target_power();
    let keep = |zone| SsrDecision {
        zone,
        n2_new: design.n2,
        metric_at_n2: pp_n2,
        metric_at_zero: Some(pp_0),
    };
    if pp_n2 < design.promising_min && pp_0 < design.promising_min {
        return Ok(keep(Zone::Unfavorable));
    }
    if pp_n2 >= target || pp_0 >= target {
        return Ok(keep(Zone::Favorable));
    }
    let n2_new = match pp_first_crossing(&post, interim, plan, target)? {
        Some(n) => (n as f64).min(design.n_max),
        None => design.n_max,
    };
    Ok(SsrDecision {
        zone: Zone::Promising,
        n2_new: n2_new.max(design.n2),
        metric_at_n2: pp_n2,
        metric_at_zero: Some(pp_0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{optimal_contrast, shape_profile, Allocation, ContrastSet, ShapeModel};
    use crate::freqpower::conditional_power_single;
    use crate::gaussian::QmcConfig;

    fn design(n1: f64, n2: f64) -> TwoStageDesign {
        let doses = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let phi = Allocation::equal(5);
        let p = shape_profile(&ShapeModel::Linear, &doses).unwrap();
        let c = optimal_contrast(&p, &phi).unwrap();
        TwoStageDesign {
            doses,
            sigma: 2.0,
            alloc1: phi.clone(),
            alloc2: phi,
            n1,
            n2,
            contrasts: ContrastSet::new(vec![c]).unwrap(),
            alpha: 0.1,
            beta: 0.2,
            n_max: n2 + 80.0,
            promising_min: 0.3,
        }
    }

    const OPTIMISTIC: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

    #[test]
    fn conjugate_posterior_hand_values() {
        let d = design(60.0, 90.0);
        let interim = InterimState::for_design(&d, OPTIMISTIC.to_vec()).unwrap();
        let prior = Prior::conjugate(OPTIMISTIC.to_vec(), 5.0).unwrap();
        let post = posterior(&prior, &interim, 2.0).unwrap();
        for i in 0..5 {
            assert!((post.mean()[i] - OPTIMISTIC[i]).abs() < 1e-12);
            assert!((post.cov(i, i) - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn vague_conjugate_matches_flat() {
        let d = design(60.0, 90.0);
        let interim = InterimState::for_design(&d, vec![0.3, -0.1, 0.6, 0.2, 0.9]).unwrap();
        let flat = posterior(&Prior::Flat, &interim, 2.0).unwrap();
        let vague = posterior(&Prior::conjugate(OPTIMISTIC.to_vec(), 1e-12).unwrap(), &interim, 2.0).unwrap();
        for i in 0..5 {
            assert!((flat.mean()[i] - vague.mean()[i]).abs() < 1e-8);
            assert!((flat.cov(i, i) - vague.cov(i, i)).abs() < 1e-8);
        }
    }

    #[test]
    fn flat_pp_is_cp_argument_shrunk() {
        let d = design(60.0, 90.0);
        let interim = InterimState::for_design(&d, vec![0.1, 0.2, 0.1, 0.5, 0.7]).unwrap();
        let post = posterior(&Prior::Flat, &interim, 2.0).unwrap();
        let c = d.contrasts.row(0);
        let delta_hat: f64 = c.iter().zip(interim.ybar1()).map(|(a, b)| a * b).sum();
        let s2 = contrast_variance_factor(c, &d.alloc2);
        for &n2 in &[10.0, 90.0, 170.0] {
            let pp = pp_closed_form_single(&post, n2, &interim, &d).unwrap();
            let cp = conditional_power_single(n2, delta_hat, &interim, &d);
            let w_tilde = n2 * s2;
            let w_star = n2 * n2 * post.quad_form(c) / 4.0 + n2 * s2;
            let want = crate::gaussian::phi_inv(cp) / (w_star / w_tilde).sqrt();
            assert!((crate::gaussian::phi_inv(pp) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn precise_prior_recovers_cp() {
        let d = design(60.0, 90.0);
        let interim = InterimState::for_design(&d, vec![0.1, 0.2, 0.1, 0.5, 0.7]).unwrap();
        let prior = Prior::conjugate(OPTIMISTIC.to_vec(), 1e10).unwrap();
        let post = posterior(&prior, &interim, 2.0).unwrap();
        let delta0: f64 = d.contrasts.row(0).iter().zip(&OPTIMISTIC).map(|(a, b)| a * b).sum();
        for &n2 in &[30.0, 90.0, 150.0] {
            let pp = pp_closed_form_single(&post, n2, &interim, &d).unwrap();
            let cp = conditional_power_single(n2, delta0, &interim, &d);
            assert!((pp - cp).abs() < 1e-6);
        }
    }

    #[test]
    fn pp_at_zero_values() {
        let d = design(60.0, 90.0);
        let plan = AnalysisPlan::new(d.clone(), QmcConfig::default()).unwrap();
        let (w1, w2) = (d.w1()[0], d.w2()[0]);
        let t_half = d.z_alpha() * (w1 + w2).sqrt() / w1.sqrt();
        let interim = InterimState::from_first_statistic(&d, t_half).unwrap();
        assert!((pp_at_zero(&interim, &plan).unwrap() - 0.5).abs() < 1e-12);
        let interim = InterimState::from_first_statistic(&d, 0.0).unwrap();
        assert!(pp_at_zero(&interim, &plan).unwrap() < d.alpha);
        let interim = InterimState::from_first_statistic(&d, 1.1).unwrap();
        let post = posterior(&Prior::Flat, &interim, 2.0).unwrap();
        let near = pp_closed_form_single(&post, 1e-6, &interim, &d).unwrap();
        assert!((near - pp_at_zero(&interim, &plan).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn monte_carlo_requires_draws() {
        let d = design(60.0, 90.0);
        let plan = AnalysisPlan::new(d.clone(), QmcConfig::default()).unwrap();
        let interim = InterimState::from_first_statistic(&d, 1.0).unwrap();
        let draws = vec![OPTIMISTIC.to_vec(); 99];
        assert!(matches!(
            pp_monte_carlo(&draws, 90.0, &interim, &plan),
            Err(SsrError::InsufficientSamples { got: 99, need: 100 })
        ));
        let draws = vec![OPTIMISTIC.to_vec(); 100];
        let (est, se) = pp_monte_carlo(&draws, 90.0, &interim, &plan).unwrap();
        let delta: f64 = d.contrasts.row(0).iter().zip(&OPTIMISTIC).map(|(a, b)| a * b).sum();
        assert!((est - conditional_power_single(90.0, delta, &interim, &d)).abs() < 1e-12);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn zones_and_floor() {
        let d = design(60.0, 90.0);
        let plan = AnalysisPlan::new(d.clone(), QmcConfig::default()).unwrap();
        let interim = InterimState::for_design(&d, vec![0.0; 5]).unwrap();
        let dec = pp_ssr_decide(&interim, &plan, &Prior::Flat).unwrap();
        assert_eq!(dec.zone, Zone::Unfavorable);
        assert_eq!(dec.n2_new, 90.0);
        let interim = InterimState::from_first_statistic(&d, 3.0).unwrap();
        let dec = pp_ssr_decide(&interim, &plan, &Prior::Flat).unwrap();
        assert_eq!(dec.zone, Zone::Favorable);
        for i in 0..40 {
            let t1 = 0.5 + 0.03 * i as f64;
            let interim = InterimState::from_first_statistic(&d, t1).unwrap();
            let dec = pp_ssr_decide(&interim, &plan, &Prior::Flat).unwrap();
            assert!(dec.n2_new >= d.n2 && dec.n2_new <= d.n_max);
            if dec.zone == Zone::Promising && dec.n2_new > d.n2 && dec.n2_new < d.n_max {
                let post = posterior(&Prior::Flat, &interim, 2.0).unwrap();
                let at = pp_closed_form_single(&post, dec.n2_new, &interim, &d).unwrap();
                let before = pp_closed_form_single(&post, dec.n2_new - 1.0, &interim, &d).unwrap();
                assert!(at >= 0.8 && before < 0.8);
            }
        }
    }
}
