//! Laplace approximation: BFGS mode search and a finite-difference Hessian.

use super::PosteriorNormal;
use crate::error::{Result, SsrError};
use nalgebra::{DMatrix, DVector};

/// Iteration cap for the mode search.
pub const LAPLACE_MAX_ITER: usize = 500;

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], g: &mut [f64]) {
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
}

fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(k, k);
    let mut xp = x.to_vec();
    for i in 0..k {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Maximizes `log_post` by BFGS from `start` and returns the Gaussian
/// approximation `N(μ̂, [−∇² log_post(μ̂)]⁻¹)`. `scale` gives the expected
/// curvature per coordinate and sets the gradient tolerance.
pub fn laplace_posterior<F>(log_post: F, start: &[f64], scale: &[f64]) -> Result<PosteriorNormal>
where
    F: Fn(&[f64]) -> f64,
{
    let k = start.len();
    let neg = |x: &[f64]| -log_post(x);
    let mut x = DVector::from_column_slice(start);
    let mut fx = neg(x.as_slice());
    if !fx.is_finite() {
        return Err(SsrError::Domain(
            "log posterior is not finite at the stage-1 means".into(),
        ));
    }
    let gtol = 1e-9 * scale.iter().cloned().fold(1.0, f64::max);
    let mut g = DVector::zeros(k);
    gradient(&neg, x.as_slice(), g.as_mut_slice());
    let mut hinv = DMatrix::from_diagonal(&DVector::from_iterator(k, scale.iter().map(|s| 1.0 / s.max(1e-12))));
    let mut converged = false;
    for _ in 0..LAPLACE_MAX_ITER {
        if g.amax() <= gtol {
            converged = true;
            break;
        }
        let mut p = -(&hinv * &g);
        let mut slope = g.dot(&p);
        if slope >= 0.0 {
            hinv = DMatrix::identity(k, k);
            p = -g.clone();
            slope = g.dot(&p);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + step * &p;
            let fnew = neg(xn.as_slice());
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // no descent left at this resolution
            converged = g.amax() <= 1e3 * gtol;
            break;
        };
        let mut gn = DVector::zeros(k);
        gradient(&neg, xn.as_slice(), gn.as_mut_slice());
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(k, k);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
    if !converged && g.amax() > gtol {
        return Err(SsrError::Convergence(format!(
            "posterior mode search did not converge in {LAPLACE_MAX_ITER} iterations"
        )));
    }
    // curvature of −log posterior at the mode
    let h = hessian(&neg, x.as_slice());
    let h = (&h + h.transpose()) * 0.5;
    let chol = h.clone().cholesky().ok_or_else(|| {
        SsrError::Curvature("log posterior is not locally concave at the mode".into())
    })?;
    let omega = chol.inverse();
    let mut cov = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            cov.push(0.5 * (omega[(i, j)] + omega[(j, i)]));
        }
    }
    PosteriorNormal::new(x.as_slice().to_vec(), cov)
}
