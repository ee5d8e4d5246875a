//! Bracketed scalar root finding: bisection safeguarded by Newton steps.

use crate::error::GameError;

/// Finds a root of `f` in `(lo, hi)` given `f(lo) < 0 < f(hi)`.
///
/// Takes Newton steps from the current estimate whenever they stay inside the
/// bracket and shrink it fast enough, otherwise bisects. The bracket is
/// maintained throughout, so the iteration cannot diverge. Convergence is
/// declared when the step or the bracket width drops below `xtol`; one last
/// Newton step then polishes the estimate so the residual lands near the
/// floating-point floor rather than at `xtol` scale.
pub fn solve_bracketed<F>(
    mut f_df: F,
    lo: f64,
    hi: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64, GameError>
where
    F: FnMut(f64) -> (f64, f64),
{
    debug_assert!(lo < hi && xtol > 0.0);
    let (flo, _) = f_df(lo);
    let (fhi, _) = f_df(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    debug_assert!(flo < 0.0 && fhi > 0.0, "bracket must straddle the root");

    // a keeps f < 0, b keeps f > 0
    let mut a = lo;
    let mut b = hi;
    let mut x = 0.5 * (lo + hi);
    let mut step = (hi - lo).abs();
    let mut fx = 0.0;

    for _ in 0..max_iter {
        let (v, dv) = f_df(x);
        fx = v;
        if v == 0.0 {
            return Ok(x);
        }
        if v < 0.0 {
            a = x;
        } else {
            b = x;
        }

        let newton = if dv != 0.0 { x - v / dv } else { f64::NAN };
        let prev_step = step;
        if newton.is_finite() && newton > a && newton < b {
            step = (newton - x).abs();
            x = newton;
            // Newton stalling inside a wide bracket: force a bisection
            if step < 1e-3 * (b - a) && (b - a) > 64.0 * xtol {
                x = 0.5 * (a + b);
                step = 0.5 * (b - a);
            }
        } else {
            x = 0.5 * (a + b);
            step = 0.5 * (b - a);
        }

        if step < xtol || (b - a) < xtol {
            // polish: the quadratic contraction of one extra Newton step takes
            // the residual essentially to machine precision
            for _ in 0..2 {
                let (v, dv) = f_df(x);
                if v == 0.0 || dv == 0.0 {
                    break;
                }
                let xn = x - v / dv;
                if xn.is_finite() && xn > lo && xn < hi {
                    x = xn;
                } else {
                    break;
                }
            }
            return Ok(x);
        }
        let _ = prev_step;
    }
    Err(GameError::RootFind {
        iterations: max_iter,
        residual: fx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let root = solve_bracketed(|x| (x * x * x - x - 2.0, 3.0 * x * x - 1.0), 1.0, 2.0, 1e-12, 200)
            .unwrap();
        assert!((root - 1.521_379_706_804_57).abs() < 1e-12);
    }

    #[test]
    fn steep_boundary_root() {
        // x - 2 (1-x)^(1-b) with b close to 1: root numerically indistinguishable from 1
        let b: f64 = 1.0 - 1e-6;
        let root = solve_bracketed(
            |x: f64| {
                let q = (1.0 - x).powf(1.0 - b);
                (x - 2.0 * q, 1.0 + 2.0 * (1.0 - b) * (1.0 - x).powf(-b))
            },
            0.0,
            1.0,
            1e-12,
            200,
        )
        .unwrap();
        assert!((root - 1.0).abs() < 1e-6);
    }

    #[test]
    fn endpoint_root() {
        let root = solve_bracketed(|x| (x, 1.0), 0.0, 1.0, 1e-12, 200).unwrap();
        assert_eq!(root, 0.0);
    }

    #[test]
    fn iteration_cap_reported() {
        // triple root: Newton contracts linearly, so a tiny tolerance with a
        // small cap cannot be met
        let f = |x: f64| {
            let d = x - 0.3;
            (d * d * d, 3.0 * d * d)
        };
        let err = solve_bracketed(f, 0.0, 1.0, 1e-300, 3).unwrap_err();
        assert!(matches!(err, GameError::RootFind { iterations: 3, .. }));
    }
}
