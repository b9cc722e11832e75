//! Scalar root finding on a sign-changing bracket.

use crate::error::{Error, Result};

const MAX_BISECTIONS: usize = 400;

/// Plain bisection until the bracket is narrower than `xtol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64, what: &'static str) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.signum() * fb.signum() < 0.0) {
        return Err(Error::NoBracket { what, lo, hi });
    }
    for _ in 0..MAX_BISECTIONS {
        let m = 0.5 * (a + b);
        if b - a <= xtol || m == a || m == b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bisection on the first sign change met while halving `x` down from `hi`
/// toward `lo`, which picks the largest root when `f` turns unreliable near `lo`.
pub fn bisect_from_above<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, xtol: f64, what: &'static str) -> Result<f64> {
    let f_hi = f(hi);
    if f_hi == 0.0 {
        return Ok(hi);
    }
    let mut upper = hi;
    loop {
        let x = (0.5 * upper).max(lo);
        let fx = f(x);
        if fx.signum() * f_hi.signum() <= 0.0 {
            return bisect(&f, x, upper, xtol, what);
        }
        if x <= lo {
            return Err(Error::NoBracket { what, lo, hi });
        }
        upper = x;
    }
}

/// Bisection down to a relative width of 1e-6, then Newton steps with a
/// central-difference slope, falling back to bisection whenever a step leaves
/// the bracket or fails to shrink the residual.
pub fn safeguarded_newton<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, what: &'static str) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.signum() * fb.signum() < 0.0) {
        return Err(Error::NoBracket { what, lo, hi });
    }
    while (b - a) > 1e-6 * a.abs().max(b.abs()) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let mut x = 0.5 * (a + b);
    let mut fx = f(x);
    let (mut best, mut best_f) = (x, fx.abs());
    for _ in 0..100 {
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        let h = 1e-7 * x.abs().max(1e-12);
        let slope = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut next = x - fx / slope;
        if !(slope.is_finite() && next > a && next < b) {
            next = 0.5 * (a + b);
        }
        let step = (next - x).abs();
        x = next;
        fx = f(x);
        if fx.abs() < best_f {
            best = x;
            best_f = fx.abs();
        }
        if step <= 4.0 * f64::EPSILON * x.abs() || b - a <= 4.0 * f64::EPSILON * x.abs() {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, "sqrt").unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let n = safeguarded_newton(|x| x * x - 2.0, 0.0, 2.0, "sqrt").unwrap();
        assert!((n - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn reports_missing_bracket() {
        assert!(matches!(
            bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, "none"),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn steep_function() {
        let r = safeguarded_newton(|x: f64| x.powf(9.0) - 1e-3, 0.0, 10.0, "steep").unwrap();
        assert!((r.powf(9.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn scan_from_above_takes_largest_root() {
        // spurious sign change below 1e-3, true root at 0.3
        let f = |x: f64| if x < 1e-3 { -1.0 } else { 0.3 - x };
        let r = bisect_from_above(f, 1e-6, 2.0, 1e-14, "scan").unwrap();
        assert!((r - 0.3).abs() < 1e-13);
        assert!(matches!(
            bisect_from_above(|x| x + 1.0, 1e-6, 2.0, 1e-12, "none"),
            Err(Error::NoBracket { .. })
        ));
    }
}
