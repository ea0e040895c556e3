//! Multivariate normal orthant probabilities.
//!
//! `Pr(X₁ ≤ u₁, …, X_m ≤ u_m)` is estimated with the separation-of-variables
//! transform: a pivoted Cholesky factor (greedy ordering, smallest expected
//! conditional probability first) turns the integral into an expectation over
//! the unit cube, which is then integrated with randomly shifted Kronecker
//! lattice rules. Shifts come from a ChaCha stream keyed by the config seed,
//! so the same inputs always give the same bits back.
//!
//! Rank-deficient covariances are factored to their numerical rank; the
//! remaining coordinates are exact linear functions of the earlier ones and
//! become extra (possibly lower) limits on the integration variables.

use super::{pdf, phi, phi_inv, z_upper};
use crate::error::{domain, invalid, Result, SsrError};
use crate::roots::brent;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest supported dimension.
pub const MAX_DIM: usize = 16;

const PRIMES: [f64; MAX_DIM] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
];

/// A multivariate normal law given by its mean and (row-major) covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnSpec {
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl MvnSpec {
    /// Validates symmetry (1e-12 relative) and positive semi-definiteness
    /// (smallest eigenvalue ≥ −1e-10 × largest). The stored matrix is
    /// symmetrized.
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 {
            return invalid("multivariate normal needs at least one coordinate");
        }
        if cov.len() != m * m {
            return invalid(format!(
                "covariance has {} entries, expected {m}x{m}",
                cov.len()
            ));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return invalid("mean and covariance must be finite");
        }
        let scale = cov.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut sym = cov;
        for i in 0..m {
            for j in (i + 1)..m {
                let (a, b) = (sym[i * m + j], sym[j * m + i]);
                if (a - b).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(SsrError::Numeric(format!(
                        "covariance is not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                sym[i * m + j] = avg;
                sym[j * m + i] = avg;
            }
        }
        if m > 1 {
            let eig = SymmetricEigen::new(DMatrix::from_row_slice(m, m, &sym)).eigenvalues;
            let hi = eig.max();
            let lo = eig.min();
            if lo < -1e-10 * hi.abs().max(f64::MIN_POSITIVE) {
                return Err(SsrError::Numeric(format!(
                    "covariance is not positive semi-definite (eigenvalues {lo:e} .. {hi:e})"
                )));
            }
        } else if sym[0] < 0.0 {
            return Err(SsrError::Numeric("negative variance".into()));
        }
        Ok(Self { mean, cov: sym })
    }

    /// Builds from row vectors.
    pub fn from_rows(mean: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let cov = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(mean, cov)
    }

    /// Zero-mean law with the given covariance.
    pub fn centered(cov_rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_rows(vec![0.0; cov_rows.len()], cov_rows)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.dim() + j]
    }

    /// Row-major covariance.
    pub fn cov_matrix(&self) -> &[f64] {
        &self.cov
    }

    /// Same covariance, different mean.
    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.dim() {
            return invalid("mean length does not match covariance");
        }
        Ok(Self {
            mean,
            cov: self.cov.clone(),
        })
    }
}

/// Controls the randomized quasi-Monte Carlo estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcConfig {
    /// Maximum lattice points per randomization.
    pub sample_budget: usize,
    /// Number of independent random shifts.
    pub randomizations: usize,
    pub seed: u64,
    /// Target absolute accuracy; sampling stops early once three standard
    /// errors fall below it.
    pub abs_tol: f64,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self {
            sample_budget: 4096,
            randomizations: 8,
            seed: 0x5eed_0f_a11,
            abs_tol: 1e-4,
        }
    }
}

impl QmcConfig {
    pub fn new(
        sample_budget: usize,
        randomizations: usize,
        seed: u64,
        abs_tol: f64,
    ) -> Result<Self> {
        let cfg = Self {
            sample_budget,
            randomizations,
            seed,
            abs_tol,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) {
            return invalid(format!("abs_tol must be positive, got {}", self.abs_tol));
        }
        if self.sample_budget < 128 {
            return invalid(format!(
                "sample_budget must be at least 128, got {}",
                self.sample_budget
            ));
        }
        if self.randomizations < 4 {
            return invalid(format!(
                "randomizations must be at least 4, got {}",
                self.randomizations
            ));
        }
        Ok(())
    }

    /// Same settings with a seed mixed with `salt`.
    pub fn salted(&self, salt: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(salt)),
            ..*self
        }
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A probability estimate with its across-randomization standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// One linear limit `bound − Σ coef_l y_l` on an integration variable.
#[derive(Debug, Clone)]
struct Limit {
    upper: bool,
    bound: f64,
    coef: Vec<f64>,
}

/// The integrand after factorization. Variable `i` always has the upper
/// limit `bound_i − Σ_{l<i} coef_il y_l`; rank-deficient coordinates add
/// further limits in `extra`.
#[derive(Debug)]
struct Integrand {
    rank: usize,
    bound: Vec<f64>,
    /// Packed lower triangle; row `i` starts at `i(i−1)/2`.
    coef: Vec<f64>,
    extra: Vec<Vec<Limit>>,
    /// `(Φ(lo), Φ(hi) − Φ(lo))` for variable 0, which is fixed.
    first: (f64, f64),
}

enum Prepared {
    Exact(f64),
    Integrand(Integrand),
}

impl Integrand {
    fn new(limits: Vec<Vec<Limit>>) -> Self {
        let rank = limits.len();
        let mut bound = Vec::with_capacity(rank);
        let mut coef = Vec::with_capacity(rank * rank.saturating_sub(1) / 2);
        let mut extra = Vec::with_capacity(rank);
        for mut lims in limits {
            let main = lims.remove(0);
            bound.push(main.bound);
            coef.extend_from_slice(&main.coef);
            extra.push(lims);
        }
        let mut f = Self {
            rank,
            bound,
            coef,
            extra,
            first: (0.0, 0.0),
        };
        let (lo, hi) = f.interval(0, &[]);
        f.first = if lo >= hi {
            (0.0, 0.0)
        } else {
            let a = phi(lo);
            (a, (phi(hi) - a).max(0.0))
        };
        f
    }

    fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    fn interval(&self, i: usize, y: &[f64]) -> (f64, f64) {
        let off = i * i.saturating_sub(1) / 2;
        let mut hi = self.bound[i];
        for (c, yl) in self.coef[off..off + i].iter().zip(y) {
            hi -= c * yl;
        }
        let mut lo = f64::NEG_INFINITY;
        for lim in &self.extra[i] {
            let mut v = lim.bound;
            for (c, yl) in lim.coef.iter().zip(y) {
                v -= c * yl;
            }
            if lim.upper {
                hi = hi.min(v);
            } else {
                lo = lo.max(v);
            }
        }
        (lo, hi)
    }
}

impl Integrand {
    /// Evaluates `out.len()` points in lockstep; `w` is point-major with
    /// `rank − 1` coordinates per point and `y` is scratch of `rank` per point.
    fn eval_batch(&self, w: &[f64], y: &mut [f64], out: &mut [f64]) {
        let rank = self.rank;
        let dim = rank - 1;
        let (a0, d0) = self.first;
        if d0 <= 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        for (p, o) in out.iter_mut().enumerate() {
            *o = d0;
            let t = (a0 + w[p * dim] * d0).clamp(1e-300, 1.0 - f64::EPSILON / 2.0);
            y[p * rank] = phi_inv(t);
        }
        for i in 1..rank {
            for (p, o) in out.iter_mut().enumerate() {
                if *o == 0.0 {
                    continue;
                }
                let yp = &mut y[p * rank..(p + 1) * rank];
                let (lo, hi) = self.interval(i, &yp[..i]);
                if lo >= hi {
                    *o = 0.0;
                    continue;
                }
                let a = if lo == f64::NEG_INFINITY { 0.0 } else { phi(lo) };
                let d = phi(hi) - a;
                if d <= 0.0 {
                    *o = 0.0;
                    continue;
                }
                *o *= d;
                if i + 1 < rank {
                    let t = (a + w[p * dim + i] * d).clamp(1e-300, 1.0 - f64::EPSILON / 2.0);
                    yp[i] = phi_inv(t);
                }
            }
        }
    }
}

/// Mean of a standard normal truncated to `(lo, hi)`.
fn truncated_mean(lo: f64, hi: f64) -> f64 {
    let p = phi(hi) - phi(lo);
    if p <= 1e-300 {
        // interval far in a tail: its nearest endpoint is a fine proxy
        return if hi.is_finite() && (!lo.is_finite() || hi.abs() < lo.abs()) {
            hi
        } else if lo.is_finite() {
            lo
        } else {
            0.0
        };
    }
    let dl = if lo.is_finite() { pdf(lo) } else { 0.0 };
    let dh = if hi.is_finite() { pdf(hi) } else { 0.0 };
    (dl - dh) / p
}

/// Pivoted Cholesky with greedy reordering; folds deterministic coordinates
/// into limits on the integration variables.
fn prepare(spec: &MvnSpec, upper: &[f64]) -> Result<Prepared> {
    let m = spec.dim();
    if upper.len() != m {
        return invalid(format!(
            "upper limits have length {}, distribution has {m}",
            upper.len()
        ));
    }
    if m > MAX_DIM {
        return Err(SsrError::UnsupportedDimension {
            got: m,
            max: MAX_DIM,
        });
    }
    if upper.iter().any(|u| u.is_nan()) {
        return domain("upper limits must not be NaN");
    }
    if upper.iter().any(|&u| u == f64::NEG_INFINITY) {
        return Ok(Prepared::Exact(0.0));
    }
    // +∞ limits impose nothing: marginalize those coordinates away
    let keep: Vec<usize> = (0..m).filter(|&i| upper[i].is_finite()).collect();
    let n = keep.len();
    if n == 0 {
        return Ok(Prepared::Exact(1.0));
    }
    let mut a = vec![0.0; n * n];
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            a[r * n + c] = spec.cov(i, j);
        }
    }
    let mut b: Vec<f64> = keep.iter().map(|&i| upper[i] - spec.mean[i]).collect();

    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0_f64, f64::max);
    let tol = 1e-10 * max_diag.max(f64::MIN_POSITIVE);
    let coef_tol = 1e-8 * max_diag.sqrt().max(f64::MIN_POSITIVE);

    let mut l = vec![0.0; n * n];
    let mut y = vec![0.0; n];
    let mut rank = n;

    for i in 0..n {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in i..n {
            let mut d = a[j * n + j];
            let mut s = 0.0;
            for k in 0..i {
                d -= l[j * n + k] * l[j * n + k];
                s += l[j * n + k] * y[k];
            }
            if d <= tol {
                continue;
            }
            let sd = d.sqrt();
            let h = (b[j] - s) / sd;
            let p = phi(h);
            if best.map_or(true, |(_, bp, _)| p < bp) {
                best = Some((j, p, d));
            }
        }
        let Some((p, _, d)) = best else {
            rank = i;
            break;
        };
        if p != i {
            for k in 0..n {
                a.swap(i * n + k, p * n + k);
            }
            for k in 0..n {
                a.swap(k * n + i, k * n + p);
            }
            for k in 0..i {
                l.swap(i * n + k, p * n + k);
            }
            b.swap(i, p);
        }
        let lii = d.sqrt();
        l[i * n + i] = lii;
        for j in (i + 1)..n {
            let mut v = a[j * n + i];
            for k in 0..i {
                v -= l[j * n + k] * l[i * n + k];
            }
            l[j * n + i] = v / lii;
        }
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = truncated_mean(f64::NEG_INFINITY, (b[i] - s) / lii);
    }

    let mut limits: Vec<Vec<Limit>> = (0..rank)
        .map(|i| {
            let lii = l[i * n + i];
            vec![Limit {
                upper: true,
                bound: b[i] / lii,
                coef: (0..i).map(|k| l[i * n + k] / lii).collect(),
            }]
        })
        .collect();

    for j in rank..n {
        let last = (0..rank).rev().find(|&k| l[j * n + k].abs() > coef_tol);
        match last {
            None => {
                if b[j] < -coef_tol {
                    return Ok(Prepared::Exact(0.0));
                }
            }
            Some(k) => {
                let c = l[j * n + k];
                limits[k].push(Limit {
                    upper: c > 0.0,
                    bound: b[j] / c,
                    coef: (0..k).map(|q| l[j * n + q] / c).collect(),
                });
            }
        }
    }

    if rank == 0 {
        return Ok(Prepared::Exact(1.0));
    }
    let integrand = Integrand::new(limits);
    if rank == 1 {
        let (lo, hi) = integrand.interval(0, &[]);
        let p = if lo >= hi {
            0.0
        } else {
            (phi(hi) - phi(lo)).max(0.0)
        };
        return Ok(Prepared::Exact(p));
    }
    Ok(Prepared::Integrand(integrand))
}

/// When the point count stops doubling.
#[derive(Debug, Clone, Copy)]
enum Stop {
    /// Spend the whole budget.
    Budget,
    /// Stop once 3·SE ≤ abs_tol.
    Tolerance,
    /// Stop once 3·SE ≤ abs_tol or the estimate is more than 3·SE from
    /// `level`, whichever comes first.
    Versus(f64),
}

/// Randomized Kronecker-lattice integration with antithetic baker-folded
/// points. Unless the whole budget is requested, the point count doubles
/// until the stopping rule is met or the budget is spent.
fn integrate(f: &Integrand, cfg: &QmcConfig, stop: Stop) -> MvnEstimate {
    let dim = f.rank() - 1;
    let reps = cfg.randomizations;
    let alpha: Vec<f64> = PRIMES[..dim].iter().map(|p| p.sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shifts: Vec<f64> = (0..reps * dim).map(|_| rng.gen::<f64>()).collect();

    let mut sums = vec![0.0; reps];
    let batch = 2 * reps;
    let mut w = vec![0.0; batch * dim];
    let mut y = vec![0.0; batch * f.rank()];
    let mut out = vec![0.0; batch];
    let mut done = 0usize;
    let mut target = match stop {
        Stop::Budget => cfg.sample_budget,
        Stop::Tolerance => 128,
        Stop::Versus(_) => 32,
    }
    .min(cfg.sample_budget);
    loop {
        for n in done..target {
            let nf = (n + 1) as f64;
            for r in 0..reps {
                let shift = &shifts[r * dim..(r + 1) * dim];
                for d in 0..dim {
                    let x = (nf * alpha[d] + shift[d]).fract();
                    let t = (2.0 * x - 1.0).abs();
                    w[2 * r * dim + d] = t;
                    w[(2 * r + 1) * dim + d] = 1.0 - t;
                }
            }
            f.eval_batch(&w, &mut y, &mut out);
            for (r, sum) in sums.iter_mut().enumerate() {
                *sum += 0.5 * (out[2 * r] + out[2 * r + 1]);
            }
        }
        done = target;
        let (est, se) = summarize(&sums, done);
        let settled = match stop {
            Stop::Budget => true,
            Stop::Tolerance => 3.0 * se <= cfg.abs_tol,
            Stop::Versus(level) => 3.0 * se <= cfg.abs_tol || (est - level).abs() > 3.0 * se,
        };
        if settled || done >= cfg.sample_budget {
            return MvnEstimate {
                estimate: est.clamp(0.0, 1.0),
                std_error: se,
            };
        }
        target = (2 * target).min(cfg.sample_budget);
    }
}

fn summarize(sums: &[f64], npts: usize) -> (f64, f64) {
    let r = sums.len() as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / npts as f64).collect();
    let est = means.iter().sum::<f64>() / r;
    let var = means.iter().map(|m| (m - est).powi(2)).sum::<f64>() / (r - 1.0);
    (est, (var / r).sqrt())
}

fn orthant(spec: &MvnSpec, upper: &[f64], cfg: &QmcConfig, stop: Stop) -> Result<MvnEstimate> {
    cfg.validate()?;
    match prepare(spec, upper)? {
        Prepared::Exact(p) => Ok(MvnEstimate {
            estimate: p,
            std_error: 0.0,
        }),
        Prepared::Integrand(f) => Ok(integrate(&f, cfg, stop)),
    }
}

/// `Pr(X ≤ upper)` componentwise. Deterministic given `cfg.seed`.
pub fn mvn_upper_orthant_cdf(
    spec: &MvnSpec,
    upper: &[f64],
    cfg: &QmcConfig,
) -> Result<MvnEstimate> {
    orthant(spec, upper, cfg, Stop::Tolerance)
}

/// `Pr(max_i X_i ≤ u)`.
pub fn mvn_equicoordinate_cdf(spec: &MvnSpec, u: f64, cfg: &QmcConfig) -> Result<MvnEstimate> {
    let upper = vec![u; spec.dim()];
    mvn_upper_orthant_cdf(spec, &upper, cfg)
}

/// `Pr(max_i X_i ≤ u)` estimated only as precisely as needed to tell it
/// apart from `level`: sampling stops once the estimate is three standard
/// errors away from `level` or within tolerance. The returned estimate is
/// therefore coarse when it is far from `level`.
pub fn mvn_equicoordinate_cdf_versus(
    spec: &MvnSpec,
    u: f64,
    level: f64,
    cfg: &QmcConfig,
) -> Result<MvnEstimate> {
    let upper = vec![u; spec.dim()];
    orthant(spec, &upper, cfg, Stop::Versus(level))
}

/// The `u` with `Pr(max_i X_i ≤ u) = p`.
///
/// Every root iteration evaluates the CDF with the full point budget and the
/// same shifts, so the objective is a fixed deterministic function of `u`.
pub fn mvn_equicoordinate_quantile(spec: &MvnSpec, p: f64, cfg: &QmcConfig) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("quantile level must be in (0, 1), got {p}"));
    }
    let m = spec.dim();
    let sd: Vec<f64> = (0..m).map(|i| spec.cov(i, i).sqrt()).collect();
    let sd_max = sd.iter().cloned().fold(0.0, f64::max);
    if sd_max == 0.0 {
        return Err(SsrError::Convergence(
            "all coordinates are degenerate; the quantile is not unique".into(),
        ));
    }
    let mu_max = spec.mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mu_min = spec.mean.iter().cloned().fold(f64::INFINITY, f64::min);
    let upper = vec![0.0; m];
    let f = |u: f64| -> Result<f64> {
        let lim: Vec<f64> = upper.iter().map(|_| u).collect();
        Ok(orthant(spec, &lim, cfg, Stop::Budget)?.estimate - p)
    };

    // Pr(max ≤ u) ≤ Pr(X_i ≤ u) gives a lower start; Bonferroni an upper one.
    let z_lo = z_upper(1.0 - p)?;
    let z_hi = z_upper((1.0 - p) / m as f64)?;
    let mut lo = mu_min + z_lo * sd_max - 0.5 * sd_max;
    let mut hi = mu_max + z_hi.max(0.0) * sd_max + 0.5 * sd_max;
    let limit_lo = mu_min - 12.0 * sd_max;
    let limit_hi = mu_max + 12.0 * sd_max;
    let mut flo = f(lo)?;
    while flo > 0.0 {
        if lo <= limit_lo {
            return Err(SsrError::Convergence(format!(
                "could not bracket the {p} equicoordinate quantile from below"
            )));
        }
        lo = (lo - sd_max).max(limit_lo);
        flo = f(lo)?;
    }
    let mut fhi = f(hi)?;
    while fhi < 0.0 {
        if hi >= limit_hi {
            return Err(SsrError::Convergence(format!(
                "could not bracket the {p} equicoordinate quantile from above"
            )));
        }
        hi = (hi + sd_max).min(limit_hi);
        fhi = f(hi)?;
    }
    brent(f, lo, hi, 1e-5, 200)
}
