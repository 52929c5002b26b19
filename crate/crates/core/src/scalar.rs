//! Safeguarded Newton for scalar increasing equations.

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

/// Absolute residual tolerance for the innermost scalar solves.
pub const SCALAR_TOL: f64 = 1e-12;

/// Finds `x` with `f(x) = 0` for a continuous, strictly increasing `f`.
///
/// `eval` returns `(f(x), f'(x))`. The search starts from `guess` and widens
/// a bracket geometrically until the sign changes; Newton steps that leave
/// the bracket are replaced by bisection.
pub fn solve_increasing<F>(eval: F, guess: f64, target: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let (f0, _) = eval(guess);
    if f0 == 0.0 {
        return Ok(guess);
    }
    let (mut lo, mut hi) = bracket(&eval, guess, f0, target)?;
    let mut x = guess.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let (fx, dfx) = eval(x);
        if fx.abs() <= SCALAR_TOL {
            // one more Newton step is nearly free and removes the last digits of error
            let polished = x - fx / dfx;
            let keep = dfx > 0.0 && polished.is_finite() && eval(polished).0.abs() <= fx.abs();
            return Ok(if keep { polished } else { x });
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // interval collapsed to adjacent floats: best attainable
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let newton = x - fx / dfx;
        x = if dfx > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::ScalarNonConvergence {
        target,
        iterations: MAX_ITER,
    })
}

fn bracket<F>(eval: &F, guess: f64, f0: f64, target: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut step = 1.0_f64.max(guess.abs());
    let mut anchor = guess;
    for _ in 0..MAX_ITER {
        let probe = if f0 > 0.0 { anchor - step } else { anchor + step };
        let (fp, _) = eval(probe);
        if fp.is_nan() {
            break;
        }
        if (fp <= 0.0) == (f0 > 0.0) || fp == 0.0 {
            return Ok(if f0 > 0.0 { (probe, guess) } else { (guess, probe) });
        }
        anchor = probe;
        step *= 2.0;
    }
    Err(Error::ScalarNonConvergence {
        target,
        iterations: MAX_ITER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let x = solve_increasing(|x| (x + x * x * x - 2.0, 1.0 + 3.0 * x * x), 0.0, 2.0).unwrap();
        assert!((x - 1.0).abs() < 1e-13);
    }

    #[test]
    fn far_guess_is_bracketed() {
        let x = solve_increasing(|x| (x.exp() - 1e6, x.exp()), -50.0, 1e6).unwrap();
        assert!((x - 1e6_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn steep_function_falls_back_to_bisection() {
        // tanh is nearly flat away from 0, Newton from far out overshoots
        let x = solve_increasing(|x| ((x - 0.3).tanh(), 1.0 / (x - 0.3).cosh().powi(2)), 8.0, 0.0)
            .unwrap();
        assert!((x - 0.3).abs() < 1e-12);
    }
}
