//! Scalar root finding for implicit relations.

use crate::expr::{eval_numeric, Env, Expr, Symbol};

use super::NumericError;

const TOL: f64 = 1e-12;
const MAX_ITER: usize = 100;

/// Solve `res = 0` for `unknown`: damped Newton with a numeric derivative
/// from `guess`, then bisection on a sign bracket (given, or found along
/// the Newton path).
pub fn solve_implicit(
    res: &Expr,
    unknown: &Symbol,
    env: &Env,
    guess: f64,
    bracket: Option<(f64, f64)>,
) -> Result<f64, NumericError> {
    let mut env = env.clone();
    let mut f = |x: f64| -> Option<f64> {
        env.set(unknown.clone(), x);
        eval_numeric(res, &env).ok().filter(|v| v.is_finite())
    };
    let mut x = guess;
    let mut fx = f(x);
    let mut found: Option<(f64, f64)> = None;
    let mut last = (x, fx.unwrap_or(f64::NAN));
    for _ in 0..MAX_ITER {
        let Some(v) = fx else { break };
        last = (x, v);
        if v.abs() < TOL {
            return Ok(x);
        }
        let h = 1e-7 * (1.0 + x.abs());
        let (Some(fp), Some(fm)) = (f(x + h), f(x - h)) else { break };
        let d = (fp - fm) / (2.0 * h);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let step = v / d;
        let mut lambda = 1.0;
        let mut next = None;
        while lambda > 1e-4 {
            let y = x - lambda * step;
            if let Some(fy) = f(y) {
                if fy.signum() != v.signum() {
                    found = Some((x.min(y), x.max(y)));
                }
                if fy.abs() < v.abs() {
                    next = Some((y, fy));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((y, fy)) = next else { break };
        x = y;
        fx = Some(fy);
    }
    if let Some((x, v)) = fx.map(|v| (x, v)) {
        if v.abs() < TOL {
            return Ok(x);
        }
    }
    let Some((mut a, mut b)) = bracket.or(found) else {
        return Err(NumericError::NoConvergence {
            last: last.0,
            residual: last.1,
        });
    };
    let (Some(mut fa), Some(fb)) = (f(a), f(b)) else {
        return Err(NumericError::NoConvergence {
            last: last.0,
            residual: last.1,
        });
    };
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericError::NoConvergence {
            last: last.0,
            residual: last.1,
        });
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let Some(fm) = f(m) else {
            return Err(NumericError::NoConvergence { last: m, residual: f64::NAN });
        };
        if fm.abs() < TOL || (b - a) <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Err(NumericError::NoConvergence {
        last: 0.5 * (a + b),
        residual: f(0.5 * (a + b)).unwrap_or(f64::NAN),
    })
}
