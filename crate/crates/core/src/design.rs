//! Dose-response shapes, optimal contrasts, stage weights, and fixed-design
//! power / sample size for single and multiple contrast tests.

use crate::error::{domain, invalid, Result, SsrError};
use crate::gaussian::{
    mvn_equicoordinate_cdf, mvn_equicoordinate_quantile, z_upper, MvnSpec, QmcConfig,
};
use serde::{Deserialize, Serialize};

const SUM_TOL: f64 = 1e-12;
const CONTRAST_TOL: f64 = 1e-10;

/// Candidate dose-response model. Parameters are in dose units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ShapeModel {
    Linear,
    Emax { ed50: f64 },
    Exponential { delta: f64 },
    SigmoidEmax { ed50: f64, hill: f64 },
    Custom { means: Vec<f64> },
}

impl ShapeModel {
    pub fn label(&self) -> String {
        match self {
            ShapeModel::Linear => "linear".into(),
            ShapeModel::Emax { ed50 } => format!("emax(ed50={ed50})"),
            ShapeModel::Exponential { delta } => format!("exponential(delta={delta})"),
            ShapeModel::SigmoidEmax { ed50, hill } => {
                format!("sigmoid_emax(ed50={ed50},h={hill})")
            }
            ShapeModel::Custom { .. } => "custom".into(),
        }
    }
}

/// Mean response per arm at the given doses.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseResponseProfile {
    pub doses: Vec<f64>,
    pub means: Vec<f64>,
    pub label: String,
}

impl DoseResponseProfile {
    pub fn new(doses: Vec<f64>, means: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        validate_doses(&doses)?;
        if means.len() != doses.len() {
            return invalid(format!(
                "profile has {} means for {} doses",
                means.len(),
                doses.len()
            ));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return invalid("profile means must be finite");
        }
        Ok(Self {
            doses,
            means,
            label: label.into(),
        })
    }

    pub fn arms(&self) -> usize {
        self.doses.len()
    }
}

pub(crate) fn validate_doses(doses: &[f64]) -> Result<()> {
    if doses.len() < 3 {
        return invalid(format!("need at least 3 arms, got {}", doses.len()));
    }
    if doses.iter().any(|d| !d.is_finite()) {
        return invalid("doses must be finite");
    }
    if doses.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("doses must be strictly increasing");
    }
    Ok(())
}

/// Evaluates a standardized shape at the doses.
pub fn shape_profile(model: &ShapeModel, doses: &[f64]) -> Result<DoseResponseProfile> {
    validate_doses(doses)?;
    let positive = |name: &str, v: f64| -> Result<()> {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            domain(format!("{name} must be positive, got {v}"))
        }
    };
    let means: Vec<f64> = match model {
        ShapeModel::Linear => doses.to_vec(),
        ShapeModel::Emax { ed50 } => {
            positive("ed50", *ed50)?;
            doses.iter().map(|d| d / (ed50 + d)).collect()
        }
        ShapeModel::Exponential { delta } => {
            positive("delta", *delta)?;
            doses.iter().map(|d| (d / delta).exp_m1()).collect()
        }
        ShapeModel::SigmoidEmax { ed50, hill } => {
            positive("ed50", *ed50)?;
            positive("hill", *hill)?;
            doses
                .iter()
                .map(|d| {
                    let dh = d.powf(*hill);
                    dh / (ed50.powf(*hill) + dh)
                })
                .collect()
        }
        ShapeModel::Custom { means } => means.clone(),
    };
    DoseResponseProfile::new(doses.to_vec(), means, model.label())
}

/// Allocation proportions across arms (positive, summing to one).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation(Vec<f64>);

impl Allocation {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() {
            return invalid("allocation must not be empty");
        }
        if phi.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return invalid("allocation entries must be strictly positive");
        }
        let total: f64 = phi.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return invalid(format!("allocation must sum to 1, sums to {total}"));
        }
        Ok(Self(phi))
    }

    pub fn equal(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn arms(&self) -> usize {
        self.0.len()
    }
}

/// Contrast vectors, one per row; each sums to zero with unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSet {
    rows: Vec<Vec<f64>>,
}

impl ContrastSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(k) = rows.first().map(Vec::len) else {
            return invalid("contrast set needs at least one row");
        };
        for (r, row) in rows.iter().enumerate() {
            if row.len() != k {
                return invalid(format!(
                    "contrast row {r} has {} entries, expected {k}",
                    row.len()
                ));
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > CONTRAST_TOL {
                return invalid(format!("contrast row {r} sums to {sum}, not 0"));
            }
            let norm = row.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > CONTRAST_TOL {
                return invalid(format!("contrast row {r} has norm {norm}, not 1"));
            }
        }
        Ok(Self { rows })
    }

    /// Normalizes rows to unit length (after centering) before validating.
    pub fn normalized(rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|row| {
                let mean = row.iter().sum::<f64>() / row.len().max(1) as f64;
                let centered: Vec<f64> = row.iter().map(|c| c - mean).collect();
                let norm = centered.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return invalid("zero contrast row");
                }
                Ok(centered.iter().map(|c| c / norm).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    /// Optimal contrasts for each profile.
    pub fn optimal(profiles: &[DoseResponseProfile], phi: &Allocation) -> Result<Self> {
        let rows = profiles
            .iter()
            .map(|p| optimal_contrast(p, phi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.rows[r]
    }

    /// Number of contrasts.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn arms(&self) -> usize {
        self.rows[0].len()
    }

    /// C·v for a length-k vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| dot(row, v)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `c_i ∝ φ_i (μ⁰_i − Σ_j φ_j μ⁰_j)`, normalized and oriented so `c·μ⁰ > 0`.
pub fn optimal_contrast(mu0: &DoseResponseProfile, phi: &Allocation) -> Result<Vec<f64>> {
    let k = mu0.arms();
    if phi.arms() != k {
        return invalid(format!(
            "allocation has {} arms, profile has {k}",
            phi.arms()
        ));
    }
    let p = phi.as_slice();
    let mbar = dot(p, &mu0.means);
    let raw: Vec<f64> = p
        .iter()
        .zip(&mu0.means)
        .map(|(pi, mi)| pi * (mi - mbar))
        .collect();
    let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
    let scale = mu0
        .means
        .iter()
        .fold(0.0_f64, |a, m| a.max(m.abs()))
        .max(1.0);
    if norm <= 1e-12 * scale {
        return Err(SsrError::DegenerateProfile(format!(
            "profile '{}' is constant across arms",
            mu0.label
        )));
    }
    let mut c: Vec<f64> = raw.iter().map(|v| v / norm).collect();
    if dot(&c, &mu0.means) < 0.0 {
        c.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(c)
}

/// Σ c_i²/φ_i.
pub fn contrast_variance_factor(c: &[f64], phi: &Allocation) -> f64 {
    c.iter()
        .zip(phi.as_slice())
        .map(|(ci, pi)| ci * ci / pi)
        .sum()
}

/// Stage weight `w = n Σ c_i²/φ_i`.
pub fn stage_weight(c: &[f64], n: f64, phi: &Allocation) -> f64 {
    n * contrast_variance_factor(c, phi)
}

/// Power of the one-sided single contrast test at total size `n`.
pub fn single_power(
    delta: f64,
    c: &[f64],
    phi: &Allocation,
    sigma: f64,
    n: f64,
    alpha: f64,
) -> Result<f64> {
    if !(n > 0.0) {
        return domain(format!("sample size must be positive, got {n}"));
    }
    let z = z_upper(alpha)?;
    let s = contrast_variance_factor(c, phi);
    Ok(crate::gaussian::phi(
        delta * n.sqrt() / (sigma * s.sqrt()) - z,
    ))
}

/// How a continuous sample size is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    None,
    /// Round the total up to a multiple of the number of arms.
    PerArmEqual,
}

impl Rounding {
    pub fn apply(self, n: f64, arms: usize) -> f64 {
        match self {
            Rounding::None => n,
            Rounding::PerArmEqual => {
                let per_arm = n / arms as f64;
                // guard against 45.000000001 style noise
                let up = (per_arm - 1e-9).ceil().max(1.0);
                up * arms as f64
            }
        }
    }
}

/// Smallest total size reaching power `1 − beta` for a single contrast.
pub fn single_sample_size(
    delta: f64,
    c: &[f64],
    phi: &Allocation,
    sigma: f64,
    alpha: f64,
    beta: f64,
    rounding: Rounding,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(SsrError::Infeasible(format!(
            "effect {delta} is not positive; no sample size reaches the target power"
        )));
    }
    let z = z_upper(alpha)? + z_upper(beta)?;
    let n = contrast_variance_factor(c, phi) * sigma * sigma * z * z / (delta * delta);
    Ok(rounding.apply(n, phi.arms()))
}

/// A pre-declared two-stage design.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageDesign {
    pub doses: Vec<f64>,
    pub sigma: f64,
    pub alloc1: Allocation,
    pub alloc2: Allocation,
    pub n1: f64,
    pub n2: f64,
    pub contrasts: ContrastSet,
    pub alpha: f64,
    pub beta: f64,
    /// Cap on the stage-2 sample size.
    pub n_max: f64,
    /// Lower bound of the promising zone (CP_min or PP_min).
    pub promising_min: f64,
}

impl TwoStageDesign {
    pub fn validate(&self) -> Result<()> {
        validate_doses(&self.doses)?;
        let k = self.doses.len();
        if self.alloc1.arms() != k || self.alloc2.arms() != k || self.contrasts.arms() != k {
            return invalid(format!(
                "allocations and contrasts must have {k} arms to match the doses"
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.n1 > 0.0 && self.n2 > 0.0) {
            return invalid("stage sizes must be positive");
        }
        if !(self.n_max >= self.n2) {
            return invalid(format!(
                "n_max ({}) must be at least n2 ({})",
                self.n_max, self.n2
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return invalid(format!("alpha must be in (0, 0.5), got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return invalid(format!("beta must be in (0, 0.5), got {}", self.beta));
        }
        if !(self.promising_min > 0.0 && self.promising_min < 1.0 - self.beta) {
            return invalid(format!(
                "promising-zone bound must be in (0, {}), got {}",
                1.0 - self.beta,
                self.promising_min
            ));
        }
        Ok(())
    }

    pub fn arms(&self) -> usize {
        self.doses.len()
    }

    pub fn target_power(&self) -> f64 {
        1.0 - self.beta
    }

    pub fn z_alpha(&self) -> f64 {
        phi_inv_upper(self.alpha)
    }

    pub fn z_beta(&self) -> f64 {
        phi_inv_upper(self.beta)
    }

    /// Diagonal of W₁ (one entry per contrast).
    pub fn w1(&self) -> Vec<f64> {
        self.weights(self.n1, &self.alloc1)
    }

    /// Diagonal of W₂ at the pre-declared stage-2 size.
    pub fn w2(&self) -> Vec<f64> {
        self.weights(self.n2, &self.alloc2)
    }

    pub fn weights(&self, n: f64, phi: &Allocation) -> Vec<f64> {
        self.contrasts
            .rows()
            .iter()
            .map(|c| stage_weight(c, n, phi))
            .collect()
    }

    /// Correlation of the stage-j contrast statistics:
    /// `W^{-1/2} (N²/σ²) C Σ Cᵀ W^{-1/2}` with `Σ = (σ²/N) diag(1/φ)`.
    pub fn stage_correlation(&self, n: f64, phi: &Allocation) -> Vec<Vec<f64>> {
        let w = self.weights(n, phi);
        let rows = self.contrasts.rows();
        let sigma2 = self.sigma * self.sigma;
        let p = phi.as_slice();
        rows.iter()
            .enumerate()
            .map(|(r, cr)| {
                rows.iter()
                    .enumerate()
                    .map(|(s, cs)| {
                        let ccov: f64 = (0..p.len())
                            .map(|i| cr[i] * cs[i] * sigma2 / (n * p[i]))
                            .sum();
                        n * n / sigma2 * ccov / (w[r] * w[s]).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    /// Null covariance of the combined statistic vector:
    /// `(W₁+W₂)^{-1/2} (W₁^{1/2} R₁ W₁^{1/2} + W₂^{1/2} R₂ W₂^{1/2}) (W₁+W₂)^{-1/2}`.
    pub fn null_covariance(&self) -> Vec<Vec<f64>> {
        let (w1, w2) = (self.w1(), self.w2());
        let r1 = self.stage_correlation(self.n1, &self.alloc1);
        let r2 = self.stage_correlation(self.n2, &self.alloc2);
        let m = w1.len();
        (0..m)
            .map(|r| {
                (0..m)
                    .map(|s| {
                        let inner =
                            (w1[r] * w1[s]).sqrt() * r1[r][s] + (w2[r] * w2[s]).sqrt() * r2[r][s];
                        inner / ((w1[r] + w2[r]) * (w1[s] + w2[s])).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    /// Mean of the combined statistic vector under arm means `mu` when the
    /// two stages run at `n1`, `n2` with the design allocations.
    pub fn combined_mean(&self, mu: &[f64], n1: f64, n2: f64) -> Vec<f64> {
        let delta = self.contrasts.apply(mu);
        let (w1, w2) = (self.w1(), self.w2());
        self.contrasts
            .rows()
            .iter()
            .enumerate()
            .map(|(r, c)| {
                let s1 = contrast_variance_factor(c, &self.alloc1);
                let s2 = contrast_variance_factor(c, &self.alloc2);
                let m1 = delta[r] * n1.sqrt() / (self.sigma * s1.sqrt());
                let m2 = delta[r] * n2.sqrt() / (self.sigma * s2.sqrt());
                (w1[r].sqrt() * m1 + w2[r].sqrt() * m2) / (w1[r] + w2[r]).sqrt()
            })
            .collect()
    }
}

fn phi_inv_upper(a: f64) -> f64 {
    crate::gaussian::phi_inv(1.0 - a)
}

/// Familywise critical value U_α: the `1 − α` equicoordinate quantile of the
/// null combined statistic.
pub fn mcp_critical_value(design: &TwoStageDesign, cfg: &QmcConfig) -> Result<f64> {
    design.validate()?;
    let spec = MvnSpec::centered(&design.null_covariance())?;
    mvn_equicoordinate_quantile(&spec, 1.0 - design.alpha, cfg)
}

/// Power `Pr(max T > U_α)` of the (non-adaptive) multiple contrast test at
/// total size `n`, split between the stages in the design's proportion.
pub fn mcp_power(
    mu: &[f64],
    design: &TwoStageDesign,
    u_alpha: f64,
    n: f64,
    cfg: &QmcConfig,
) -> Result<f64> {
    if mu.len() != design.arms() {
        return invalid(format!(
            "mean profile has {} arms, design has {}",
            mu.len(),
            design.arms()
        ));
    }
    if !(n > 0.0) {
        return domain(format!("sample size must be positive, got {n}"));
    }
    let frac = design.n1 / (design.n1 + design.n2);
    let mean = design.combined_mean(mu, n * frac, n * (1.0 - frac));
    let spec = MvnSpec::from_rows(mean, &design.null_covariance())?;
    Ok(1.0 - mvn_equicoordinate_cdf(&spec, u_alpha, cfg)?.estimate)
}

/// Smallest total size with multiple-contrast power ≥ `1 − β`.
///
/// Doubling bracket, then bisection on continuous `n` to 0.5.
pub fn mcp_sample_size(
    mu: &[f64],
    design: &TwoStageDesign,
    u_alpha: f64,
    rounding: Rounding,
    cfg: &QmcConfig,
) -> Result<f64> {
    let delta = design.contrasts.apply(mu);
    if delta.iter().all(|d| *d <= 0.0) {
        return Err(SsrError::Infeasible(
            "no contrast has a positive effect under the given profile".into(),
        ));
    }
    let target = design.target_power();
    let power = |n: f64| mcp_power(mu, design, u_alpha, n, cfg);
    let mut lo = 0.0;
    let mut hi = design.arms() as f64;
    let mut doublings = 0;
    while power(hi)? < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(SsrError::Convergence(
                "power never reached the target while doubling the sample size".into(),
            ));
        }
    }
    while hi - lo > 0.5 {
        let mid = 0.5 * (lo + hi);
        if power(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(rounding.apply(hi, design.arms()))
}

/// Continuous sample size is fine for the power calculation; this helper
/// checks the design's contrast dimension against an effect vector.
pub(crate) fn check_effect_len(design: &TwoStageDesign, delta: &[f64]) -> Result<()> {
    if delta.len() != design.contrasts.len() {
        return invalid(format!(
            "effect vector has {} entries, design has {} contrasts",
            delta.len(),
            design.contrasts.len()
        ));
    }
    Ok(())
}
