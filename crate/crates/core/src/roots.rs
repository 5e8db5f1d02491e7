//! Monotone root finding: geometric bracket expansion followed by a
//! safeguarded Newton / secant iteration that falls back to bisection.

use crate::error::{Error, Result};

/// Maximum number of bracket doublings before giving up.
pub const MAX_DOUBLINGS: usize = 400;

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            rel_tol: 1e-13,
            abs_tol: 1e-300,
            max_iter: 300,
        }
    }
}

/// Grow `hi` geometrically until the increasing function `f` is
/// non-negative there. `lo` must satisfy `f(lo) <= 0`.
pub fn expand_up<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, start: f64, limit: f64) -> Result<(f64, f64)> {
    let mut lo = lo;
    let mut hi = start.max(lo);
    for _ in 0..MAX_DOUBLINGS {
        if hi > limit {
            hi = limit;
        }
        let v = f(hi)?;
        if v >= 0.0 {
            return Ok((lo, hi));
        }
        if hi >= limit {
            break;
        }
        lo = hi;
        hi = if hi > 0.0 { hi * 2.0 } else { start.max(f64::MIN_POSITIVE) };
    }
    Err(Error::numeric(format!(
        "bracket expansion failed after {MAX_DOUBLINGS} doublings (last hi = {hi:e})"
    )))
}

/// Shrink `lo` geometrically towards zero until the increasing function
/// `f` is non-positive there.
pub fn expand_down<F: FnMut(f64) -> Result<f64>>(mut f: F, start: f64, hi: f64) -> Result<(f64, f64)> {
    let mut hi = hi;
    let mut lo = start.min(hi);
    for _ in 0..MAX_DOUBLINGS {
        let v = f(lo)?;
        if v <= 0.0 {
            return Ok((lo, hi));
        }
        hi = lo;
        lo *= 0.5;
        if lo == 0.0 {
            break;
        }
    }
    Err(Error::numeric(format!(
        "downward bracket expansion failed after {MAX_DOUBLINGS} halvings"
    )))
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 && hi > 4.0 * lo {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}

fn converged(lo: f64, hi: f64, opts: &RootOptions) -> bool {
    hi - lo <= opts.abs_tol.max(opts.rel_tol * lo.abs().max(hi.abs()))
}

/// Root of an increasing function inside `[lo, hi]` using Illinois-style
/// secant steps with bisection safeguarding.
pub fn solve_increasing<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64, opts: &RootOptions) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::numeric(format!(
            "root not bracketed: f({lo:e}) = {f_lo:e}, f({hi:e}) = {f_hi:e}"
        )));
    }
    let mut side = 0i8;
    for _ in 0..opts.max_iter {
        if converged(lo, hi, opts) {
            return Ok(0.5 * (lo + hi));
        }
        let secant = lo - f_lo * (hi - lo) / (f_hi - f_lo);
        let width = hi - lo;
        let x = if secant.is_finite() && secant > lo && secant < hi {
            secant
        } else {
            midpoint(lo, hi)
        };
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo > 0.5 * width {
            // secant stalled: force a bisection
            let m = midpoint(lo, hi);
            let fm = f(m)?;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm < 0.0 {
                lo = m;
                f_lo = fm;
            } else {
                hi = m;
                f_hi = fm;
            }
            side = 0;
        }
    }
    Err(Error::numeric(format!(
        "root finder did not converge in {} iterations (bracket [{lo:e}, {hi:e}])",
        opts.max_iter
    )))
}

/// Safeguarded Newton iteration for an increasing function with known
/// derivative. `fdf` returns `(f(x), f'(x))`.
pub fn solve_increasing_newton<F: FnMut(f64) -> Result<(f64, f64)>>(
    mut fdf: F,
    lo: f64,
    hi: f64,
    guess: f64,
    opts: &RootOptions,
) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut x = if guess > lo && guess < hi { guess } else { midpoint(lo, hi) };
    for _ in 0..opts.max_iter {
        let (fx, dfx) = fdf(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = fx / dfx;
        let candidate = x - step;
        let newton_ok = dfx > 0.0 && candidate.is_finite() && candidate > lo && candidate < hi;
        let next = if newton_ok { candidate } else { midpoint(lo, hi) };
        let tol = opts.abs_tol.max(opts.rel_tol * next.abs());
        if (next - x).abs() <= tol || converged(lo, hi, opts) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::numeric(format!(
        "Newton iteration did not converge in {} iterations (bracket [{lo:e}, {hi:e}])",
        opts.max_iter
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secant_finds_cube_root() {
        let r = solve_increasing(|x| Ok(x * x * x - 2.0), 0.0, 2.0, &RootOptions::default()).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn newton_finds_log_root() {
        let r = solve_increasing_newton(
            |x| Ok((x.ln() - 3.0, 1.0 / x)),
            1e-3,
            1e6,
            1.0,
            &RootOptions::default(),
        )
        .unwrap();
        assert!((r - 3f64.exp()).abs() < 1e-11 * 3f64.exp());
    }

    #[test]
    fn expansion_reaches_far_roots() {
        let (lo, hi) = expand_up(|x| Ok(x - 1e30), 0.0, 1.0, f64::INFINITY).unwrap();
        assert!(lo <= 1e30 && hi >= 1e30);
        let (lo, hi) = expand_down(|x| Ok(x - 1e-30), 1.0, 1.0).unwrap();
        assert!(lo <= 1e-30 && hi >= 1e-30);
    }

    #[test]
    fn unbracketed_root_is_an_error() {
        assert!(solve_increasing(|x| Ok(x + 1.0), 0.0, 1.0, &RootOptions::default()).is_err());
    }
}
