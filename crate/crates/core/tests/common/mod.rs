#![allow(dead_code)]

use adaptive_ssr::design::{shape_profile, Allocation, ContrastSet, ShapeModel, TwoStageDesign};
use adaptive_ssr::freqpower::AnalysisPlan;
use adaptive_ssr::gaussian::{MvnSpec, QmcConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const DOSES: [f64; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];
pub const OPTIMISTIC: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const UNDER: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];
pub const NULL: [f64; 5] = [0.0; 5];
pub const SUPER: [f64; 5] = [0.0, 0.3, 0.6, 0.9, 1.2];
pub const SEED: u64 = 20240917;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    Early,
    Late,
}

pub fn shapes(multi: bool) -> Vec<ShapeModel> {
    if multi {
        vec![
            ShapeModel::Linear,
            ShapeModel::Emax { ed50: 0.3 },
            ShapeModel::Exponential { delta: 0.3 },
            ShapeModel::SigmoidEmax { ed50: 1.0, hill: 3.0 },
        ]
    } else {
        vec![ShapeModel::Linear]
    }
}

pub fn contrasts(multi: bool) -> ContrastSet {
    let profiles: Vec<_> = shapes(multi)
        .iter()
        .map(|m| shape_profile(m, &DOSES).unwrap())
        .collect();
    ContrastSet::optimal(&profiles, &Allocation::equal(5)).unwrap()
}

/// The simulation-study designs: σ = 2, α = 0.1, target power 0.8,
/// promising bound 0.3.
pub fn study_design(multi: bool, timing: Timing) -> TwoStageDesign {
    let (n1, n2, extra) = match (multi, timing) {
        (false, Timing::Early) => (60.0, 90.0, 80.0),
        (false, Timing::Late) => (105.0, 45.0, 80.0),
        (true, Timing::Early) => (70.0, 100.0, 95.0),
        (true, Timing::Late) => (120.0, 50.0, 95.0),
    };
    let phi = Allocation::equal(5);
    TwoStageDesign {
        doses: DOSES.to_vec(),
        sigma: 2.0,
        alloc1: phi.clone(),
        alloc2: phi,
        n1,
        n2,
        contrasts: contrasts(multi),
        alpha: 0.1,
        beta: 0.2,
        n_max: n2 + extra,
        promising_min: 0.3,
    }
}

pub fn study_plan(multi: bool, timing: Timing) -> AnalysisPlan {
    AnalysisPlan::new(study_design(multi, timing), QmcConfig::default()).unwrap()
}

/// Random symmetric positive semi-definite matrix `A Aᵀ`, rank-deficient
/// when `rank < m`.
pub fn random_psd(rng: &mut ChaCha8Rng, m: usize, rank: usize) -> Vec<f64> {
    let a = DMatrix::<f64>::from_fn(m, rank, |_, _| rng.sample(StandardNormal));
    let s = &a * a.transpose();
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            out.push(s[(i, j)]);
        }
    }
    out
}

/// Plain Monte Carlo estimate of `Pr(X ≤ upper)` and its standard error.
pub fn mc_orthant(spec: &MvnSpec, upper: &[f64], draws: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let m = spec.dim();
    let cov = DMatrix::from_row_slice(m, m, spec.cov_matrix());
    // eigen factor handles singular matrices
    let eig = cov.symmetric_eigen();
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let mean = DVector::from_column_slice(spec.mean());
    let mut hits = 0usize;
    let mut z = DVector::zeros(m);
    for _ in 0..draws {
        for i in 0..m {
            z[i] = rng.sample(StandardNormal);
        }
        let x = &mean + &root * &z;
        if (0..m).all(|i| x[i] <= upper[i]) {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

/// Draws from `N(mean, cov)` with `cov` row-major.
pub fn gaussian_draws(mean: &[f64], cov: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = mean.len();
    let l = DMatrix::from_row_slice(k, k, cov).cholesky().expect("positive definite").l();
    (0..count)
        .map(|_| {
            let z = DVector::from_fn(k, |_, _| rng.sample(StandardNormal));
            let x = &l * z;
            (0..k).map(|i| mean[i] + x[i]).collect()
        })
        .collect()
}

pub fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}
