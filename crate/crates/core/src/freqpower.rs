//! Stage statistics, weighted combination tests, conditional power, and the
//! promising-zone sample size rule.
//!
//! The combination weights always come from the pre-declared stage sizes.
//! A re-estimated stage-2 size only enters the stage-2 statistic itself, so
//! the null law of the final statistic is the same as without adaptation.

use crate::design::{
    contrast_variance_factor, dot, mcp_critical_value, Allocation, ContrastSet, TwoStageDesign,
};
use crate::error::{domain, invalid, Result, SsrError};
use crate::gaussian::{mvn_equicoordinate_cdf, mvn_equicoordinate_cdf_versus, phi, MvnSpec, QmcConfig};
use crate::roots::bisect_first;
use serde::{Deserialize, Serialize};

/// Stage-1 summary available at the interim look.
#[derive(Debug, Clone, PartialEq)]
pub struct InterimState {
    ybar1: Vec<f64>,
    n1: f64,
    phi1: Allocation,
    t1: Vec<f64>,
}

impl InterimState {
    /// Computes the stage-1 contrast statistics from per-arm means.
    pub fn from_means(
        ybar1: Vec<f64>,
        n1: f64,
        phi1: Allocation,
        contrasts: &ContrastSet,
        sigma: f64,
    ) -> Result<Self> {
        if ybar1.len() != phi1.arms() || ybar1.len() != contrasts.arms() {
            return invalid(format!(
                "stage-1 means have {} arms, allocation {}, contrasts {}",
                ybar1.len(),
                phi1.arms(),
                contrasts.arms()
            ));
        }
        if ybar1.iter().any(|y| !y.is_finite()) {
            return invalid("stage-1 means must be finite");
        }
        let t1 = contrasts
            .rows()
            .iter()
            .map(|c| stage_statistic(&ybar1, n1, &phi1, c, sigma))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ybar1,
            n1,
            phi1,
            t1,
        })
    }

    /// Stage-1 summary for a design's first stage.
    pub fn for_design(design: &TwoStageDesign, ybar1: Vec<f64>) -> Result<Self> {
        Self::from_means(
            ybar1,
            design.n1,
            design.alloc1.clone(),
            &design.contrasts,
            design.sigma,
        )
    }

    /// Accepts externally computed statistics, checking them against the means.
    pub fn with_statistics(
        ybar1: Vec<f64>,
        n1: f64,
        phi1: Allocation,
        t1: Vec<f64>,
        contrasts: &ContrastSet,
        sigma: f64,
    ) -> Result<Self> {
        let state = Self::from_means(ybar1, n1, phi1, contrasts, sigma)?;
        if t1.len() != state.t1.len() {
            return invalid("statistic vector length does not match the contrasts");
        }
        for (r, (given, want)) in t1.iter().zip(&state.t1).enumerate() {
            if (given - want).abs() > 1e-10 * want.abs().max(1.0) {
                return invalid(format!(
                    "stage-1 statistic {r} is {given}, but the means imply {want}"
                ));
            }
        }
        Ok(state)
    }

    /// Interim data placed along the first contrast so that its stage-1
    /// statistic equals `t1`.
    pub fn from_first_statistic(design: &TwoStageDesign, t1: f64) -> Result<Self> {
        let c = design.contrasts.row(0);
        let s1 = contrast_variance_factor(c, &design.alloc1);
        let scale = t1 * design.sigma * (s1 / design.n1).sqrt();
        let ybar1 = c.iter().map(|ci| scale * ci).collect();
        Self::for_design(design, ybar1)
    }

    pub fn ybar1(&self) -> &[f64] {
        &self.ybar1
    }

    pub fn n1(&self) -> f64 {
        self.n1
    }

    pub fn phi1(&self) -> &Allocation {
        &self.phi1
    }

    /// Stage-1 statistic for each contrast.
    pub fn t1(&self) -> &[f64] {
        &self.t1
    }
}

/// Standardized contrast statistic `Σc_i ȳ_i / (σ √((1/n) Σ c_i²/φ_i))`.
pub fn stage_statistic(
    ybar: &[f64],
    n: f64,
    phi: &Allocation,
    c: &[f64],
    sigma: f64,
) -> Result<f64> {
    if !(n > 0.0) {
        return domain(format!("stage size must be positive, got {n}"));
    }
    if ybar.len() != c.len() || phi.arms() != c.len() {
        return invalid("means, allocation and contrast lengths differ");
    }
    let s = contrast_variance_factor(c, phi);
    Ok(dot(c, ybar) / (sigma * (s / n).sqrt()))
}

/// Inverse-normal combination `(√w₁ t₁ + √w₂ t₂) / √(w₁ + w₂)`.
pub fn combine(t1: f64, t2: f64, w1: f64, w2: f64) -> f64 {
    (w1.sqrt() * t1 + w2.sqrt() * t2) / (w1 + w2).sqrt()
}

/// Componentwise combination with diagonal weight matrices.
pub fn combine_multi(t1: &[f64], t2: &[f64], w1: &[f64], w2: &[f64]) -> Vec<f64> {
    t1.iter()
        .zip(t2)
        .zip(w1.iter().zip(w2))
        .map(|((a, b), (u, v))| combine(*a, *b, *u, *v))
        .collect()
}

/// Final decision: reject when the (largest) combined statistic strictly
/// exceeds the critical value.
pub fn final_test(stats: &[f64], critical: f64) -> bool {
    stats.iter().any(|t| *t > critical)
}

/// `(Z_α √(w₁+w₂) − √w₁ T₁) / √w₂`: the stage-2 hurdle on the z scale.
fn stage2_hurdle(design: &TwoStageDesign, interim: &InterimState, critical: f64) -> f64 {
    let w1 = design.w1()[0];
    let w2 = design.w2()[0];
    (critical * (w1 + w2).sqrt() - w1.sqrt() * interim.t1[0]) / w2.sqrt()
}

/// Conditional power of the single contrast test at stage-2 size `n2` and
/// effect `delta`.
pub fn conditional_power_single(
    n2: f64,
    delta: f64,
    interim: &InterimState,
    design: &TwoStageDesign,
) -> f64 {
    let s2 = contrast_variance_factor(design.contrasts.row(0), &design.alloc2);
    let drift = delta * n2.sqrt() / (design.sigma * s2.sqrt());
    phi(drift - stage2_hurdle(design, interim, design.z_alpha()))
}

/// Conditional null rejection probability of the single contrast test given
/// stage 1; it does not depend on the realized stage-2 size.
pub fn conditional_error_single(interim: &InterimState, design: &TwoStageDesign) -> f64 {
    1.0 - phi(stage2_hurdle(design, interim, design.z_alpha()))
}

/// Law of the combined statistic vector given stage 1, a stage-2 size `n2`,
/// and effects `delta = Cμ`.
///
/// Mean `(W₁+W₂)^{-1/2}(W₁^{1/2}T₁ + (n₂/σ) W₂^{1/2} W̃₂(n₂)^{-1/2} δ)`,
/// covariance `(n₂²/σ²)(W₁+W₂)^{-1/2}W₂^{1/2}W̃₂^{-1/2} C Σ̃(n₂) Cᵀ
/// W̃₂^{-1/2}W₂^{1/2}(W₁+W₂)^{-1/2}` with `Σ̃(n₂) = (σ²/n₂) diag(1/φ⁽²⁾)`.
pub fn conditional_law(
    n2: f64,
    delta: &[f64],
    interim: &InterimState,
    design: &TwoStageDesign,
) -> Result<MvnSpec> {
    let k = design.arms();
    let stage2_cov: Vec<f64> = design
        .alloc2
        .as_slice()
        .iter()
        .map(|p| design.sigma * design.sigma / (n2 * p))
        .collect();
    predictive_law(n2, delta, interim, design, &full_from_diag(&stage2_cov, k))
}

fn full_from_diag(d: &[f64], k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = d[i];
    }
    m
}

/// Shared assembly for conditional and posterior-predictive laws: `cov_ybar2`
/// is the (k×k, row-major) covariance of the stage-2 arm means.
pub(crate) fn predictive_law(
    n2: f64,
    delta: &[f64],
    interim: &InterimState,
    design: &TwoStageDesign,
    cov_ybar2: &[f64],
) -> Result<MvnSpec> {
    if !(n2 > 0.0) {
        return domain(format!("stage-2 size must be positive, got {n2}"));
    }
    crate::design::check_effect_len(design, delta)?;
    let (w1, w2) = (design.w1(), design.w2());
    let w2_tilde = design.weights(n2, &design.alloc2);
    let sigma = design.sigma;
    let m = w1.len();
    let k = design.arms();
    let t1 = interim.t1();
    let mean: Vec<f64> = (0..m)
        .map(|r| {
            let drift = n2 / sigma * w2[r].sqrt() / w2_tilde[r].sqrt() * delta[r];
            (w1[r].sqrt() * t1[r] + drift) / (w1[r] + w2[r]).sqrt()
        })
        .collect();
    let rows = design.contrasts.rows();
    let a: Vec<f64> = (0..m)
        .map(|r| (w2[r] / (w1[r] + w2[r])).sqrt() / w2_tilde[r].sqrt())
        .collect();
    let mut cov = vec![0.0; m * m];
    for r in 0..m {
        for s in 0..m {
            let mut ccov = 0.0;
            for i in 0..k {
                for j in 0..k {
                    ccov += rows[r][i] * cov_ybar2[i * k + j] * rows[s][j];
                }
            }
            cov[r * m + s] = n2 * n2 / (sigma * sigma) * a[r] * a[s] * ccov;
        }
    }
    MvnSpec::new(mean, cov)
}

/// Multiple-contrast conditional power `1 − Ψ_{n₂,δ}(U_α)`.
pub fn conditional_power_multi(
    n2: f64,
    delta: &[f64],
    interim: &InterimState,
    design: &TwoStageDesign,
    u_alpha: f64,
    cfg: &QmcConfig,
) -> Result<f64> {
    let law = conditional_law(n2, delta, interim, design)?;
    Ok(1.0 - mvn_equicoordinate_cdf(&law, u_alpha, cfg)?.estimate)
}

/// A design together with its critical value and the QMC settings used for
/// multivariate probabilities.
#[derive(Debug, Clone)]
pub struct AnalysisPlan {
    pub design: TwoStageDesign,
    /// Z_α for one contrast, U_α for several.
    pub critical: f64,
    pub cfg: QmcConfig,
}

impl AnalysisPlan {
    pub fn new(design: TwoStageDesign, cfg: QmcConfig) -> Result<Self> {
        design.validate()?;
        cfg.validate()?;
        let critical = if design.contrasts.len() == 1 {
            design.z_alpha()
        } else {
            mcp_critical_value(&design, &cfg)?
        };
        Ok(Self {
            design,
            critical,
            cfg,
        })
    }

    /// Uses a known critical value instead of recomputing it.
    pub fn with_critical(design: TwoStageDesign, critical: f64, cfg: QmcConfig) -> Result<Self> {
        design.validate()?;
        cfg.validate()?;
        Ok(Self {
            design,
            critical,
            cfg,
        })
    }

    pub fn is_multi(&self) -> bool {
        self.design.contrasts.len() > 1
    }

    /// Whether conditional power at `n2` is at least `level`.
    pub fn conditional_power_reaches(&self, n2: f64, delta: &[f64], interim: &InterimState, level: f64) -> Result<bool> {
        if self.is_multi() {
            let law = conditional_law(n2, delta, interim, &self.design)?;
            exceedance_reaches(&law, self.critical, level, &self.cfg)
        } else {
            Ok(self.conditional_power(n2, delta, interim)? >= level)
        }
    }

    /// Copy whose QMC seed is mixed with `salt`.
    pub fn salted(&self, salt: u64) -> Self {
        Self {
            cfg: self.cfg.salted(salt),
            ..self.clone()
        }
    }

    /// Conditional power for effects `delta` (one per contrast).
    pub fn conditional_power(&self, n2: f64, delta: &[f64], interim: &InterimState) -> Result<f64> {
        if self.is_multi() {
            conditional_power_multi(n2, delta, interim, &self.design, self.critical, &self.cfg)
        } else {
            crate::design::check_effect_len(&self.design, delta)?;
            let s2 = contrast_variance_factor(self.design.contrasts.row(0), &self.design.alloc2);
            let drift = delta[0] * n2.sqrt() / (self.design.sigma * s2.sqrt());
            Ok(phi(
                drift - stage2_hurdle(&self.design, interim, self.critical)
            ))
        }
    }
}

/// Whether `1 − Pr(max T ≤ critical)` under `law` reaches `level`, sampling
/// only as much as the comparison needs.
pub(crate) fn exceedance_reaches(law: &MvnSpec, critical: f64, level: f64, cfg: &QmcConfig) -> Result<bool> {
    let below = mvn_equicoordinate_cdf_versus(law, critical, 1.0 - level, cfg)?;
    Ok(1.0 - below.estimate >= level)
}

/// Interim zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Unfavorable,
    Favorable,
    Promising,
}

impl Zone {
    pub fn as_str(&self) -> &'static str {
        match self {
            Zone::Unfavorable => "unfavorable",
            Zone::Favorable => "favorable",
            Zone::Promising => "promising",
        }
    }
}

/// Outcome of an interim sample size review.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsrDecision {
    pub zone: Zone,
    /// Stage-2 size to run (continuous; rounding happens downstream).
    pub n2_new: f64,
    /// CP(N₂) or PP(N₂).
    pub metric_at_n2: f64,
    /// PP(0), Bayesian rules only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_at_zero: Option<f64>,
}

/// Where the assumed effect for conditional power comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSource {
    /// Interim estimate `C ȳ⁽¹⁾`.
    Observed,
    /// Effects implied by an anticipated arm-mean profile, `C μ`.
    AssumedMeans(Vec<f64>),
    /// Effects given directly, one per contrast.
    Fixed(Vec<f64>),
}

impl DeltaSource {
    pub fn effects(&self, interim: &InterimState, contrasts: &ContrastSet) -> Result<Vec<f64>> {
        match self {
            DeltaSource::Observed => Ok(contrasts.apply(interim.ybar1())),
            DeltaSource::AssumedMeans(mu) => {
                if mu.len() != contrasts.arms() {
                    return invalid(format!(
                        "assumed profile has {} arms, contrasts have {}",
                        mu.len(),
                        contrasts.arms()
                    ));
                }
                Ok(contrasts.apply(mu))
            }
            DeltaSource::Fixed(d) => {
                if d.len() != contrasts.len() {
                    return invalid(format!(
                        "fixed effect has {} entries, expected {}",
                        d.len(),
                        contrasts.len()
                    ));
                }
                Ok(d.clone())
            }
        }
    }
}

/// Closed-form stage-2 size solving CP(n₂) = 1 − β for one contrast.
pub fn single_contrast_n2(delta: f64, interim: &InterimState, design: &TwoStageDesign) -> f64 {
    let s2 = contrast_variance_factor(design.contrasts.row(0), &design.alloc2);
    let root = design.z_beta() + stage2_hurdle(design, interim, design.z_alpha());
    s2 * design.sigma * design.sigma / (delta * delta) * root * root
}

/// Promising-zone decision based on conditional power.
pub fn cp_ssr_decide(
    interim: &InterimState,
    plan: &AnalysisPlan,
    source: &DeltaSource,
) -> Result<SsrDecision> {
    let design = &plan.design;
    let delta = source.effects(interim, &design.contrasts)?;
    let cp = plan.conditional_power(design.n2, &delta, interim)?;
    let target = design.target_power();
    let no_effect = if plan.is_multi() {
        delta.iter().all(|d| *d <= 0.0)
    } else {
        delta[0] < 0.0
    };
    let keep = |zone| SsrDecision {
        zone,
        n2_new: design.n2,
        metric_at_n2: cp,
        metric_at_zero: None,
    };
    if cp < design.promising_min || no_effect {
        return Ok(keep(Zone::Unfavorable));
    }
    if cp >= target {
        return Ok(keep(Zone::Favorable));
    }
    let n2_new = if plan.is_multi() {
        let hit = bisect_first(
            |n| plan.conditional_power_reaches(n, &delta, interim, target),
            design.n2,
            design.n_max,
            1e-2,
        )?;
        hit.unwrap_or(design.n_max)
    } else {
        single_contrast_n2(delta[0], interim, design).min(design.n_max)
    };
    Ok(SsrDecision {
        zone: Zone::Promising,
        n2_new: n2_new.clamp(design.n2, design.n_max),
        metric_at_n2: cp,
        metric_at_zero: None,
    })
}

/// Checks a stage-2 sample size request against the design.
pub fn check_n2(design: &TwoStageDesign, n2: f64) -> Result<()> {
    if n2 < design.n2 || n2 > design.n_max {
        return Err(SsrError::Invalid(format!(
            "stage-2 size {n2} outside [{}, {}]",
            design.n2, design.n_max
        )));
    }
    Ok(())
}
