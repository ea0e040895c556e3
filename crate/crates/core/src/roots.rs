//! Bracketed scalar root finding.

use crate::error::{Result, SsrError};

/// Brent's method on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite sign.
///
/// Combines inverse quadratic interpolation and secant steps with bisection
/// as a fallback, so every iterate stays inside the current bracket.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(SsrError::Convergence(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(SsrError::Convergence(format!(
        "Brent iteration did not reach tolerance {xtol} in {max_iter} steps"
    )))
}

/// Smallest `x` in `[lo, hi]` (to within `xtol`) where the nondecreasing
/// predicate `reached` turns true. Returns `None` when it is false at `hi`.
pub fn bisect_first<F>(mut reached: F, lo: f64, hi: f64, xtol: f64) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<bool>,
{
    if reached(lo)? {
        return Ok(Some(lo));
    }
    if !reached(hi)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if reached(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let root = brent(|x| Ok(x * x * x - 2.0 * x - 5.0), 2.0, 3.0, 1e-14, 100).unwrap();
        assert!((root - 2.094_551_481_542_326_5).abs() < 1e-12);
    }

    #[test]
    fn brent_rejects_unbracketed() {
        let err = brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-10, 50).unwrap_err();
        assert!(matches!(err, SsrError::Convergence(_)));
    }

    #[test]
    fn bisect_first_threshold() {
        let got = bisect_first(|x| Ok(x >= 3.3), 0.0, 10.0, 1e-6)
            .unwrap()
            .unwrap();
        assert!((got - 3.3).abs() < 1e-6);
        assert_eq!(
            bisect_first(|x| Ok(x > 20.0), 0.0, 10.0, 1e-6).unwrap(),
            None
        );
    }
}
