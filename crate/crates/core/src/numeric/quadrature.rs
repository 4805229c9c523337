//! Adaptive Gauss-Kronrod (7/15) quadrature.

use std::collections::{BTreeMap, BinaryHeap};
use std::sync::{Arc, Mutex};

use crate::expr::{eval_numeric, Env, EvalError, Expr, ExprFunction, OpaqueFunction, Symbol};

use super::NumericError;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            max_intervals: 1 << 14,
        }
    }
}

fn gk15(f: &mut impl FnMut(f64) -> Result<f64, EvalError>, a: f64, b: f64) -> Result<(f64, f64), EvalError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx)? + f(c + dx)?;
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((kron * h, ((kron - gauss) * h).abs()))
}

struct Piece {
    err: f64,
    a: f64,
    b: f64,
    val: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Integrate a closure over [a, b]; the interval with the largest error is
/// bisected until the summed error estimate meets the tolerance.
pub fn integrate(
    mut f: impl FnMut(f64) -> Result<f64, EvalError>,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<Quadrature, NumericError> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let (val, err) = gk15(&mut f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { err, a, b, val });
    let (mut total, mut total_err) = (val, err);
    while total_err > cfg.abs_tol {
        if heap.len() >= cfg.max_intervals {
            return Err(NumericError::ToleranceNotMet {
                value: total,
                error: total_err,
            });
        }
        let p = heap.pop().unwrap();
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&mut f, p.a, m)?;
        let (v2, e2) = gk15(&mut f, m, p.b)?;
        total += v1 + v2 - p.val;
        total_err += e1 + e2 - p.err;
        heap.push(Piece { err: e1, a: p.a, b: m, val: v1 });
        heap.push(Piece { err: e2, a: m, b: p.b, val: v2 });
        if heap.len() % 64 == 0 {
            // Re-sum to keep rounding drift out of the running totals.
            total = heap.iter().map(|p| p.val).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
    Ok(Quadrature {
        value: total,
        error: total_err,
        intervals: heap.len(),
    })
}

/// Integral of an expression in `var` over [a, b].
pub fn quadrature(integrand: &Expr, var: &Symbol, a: f64, b: f64, env: &Env) -> Result<Quadrature, NumericError> {
    let mut env = env.clone();
    integrate(
        |x| {
            env.set(var.clone(), x);
            eval_numeric(integrand, &env)
        },
        a,
        b,
        &QuadratureConfig::default(),
    )
}

/// x -> integral from `lower` to x of the integrand, usable as an opaque
/// function; derivatives of order k >= 1 are derivatives of the integrand.
#[derive(Debug)]
pub struct QuadratureFunction {
    body: ExprFunction,
    env: Env,
    lower: f64,
    cache: Mutex<BTreeMap<u64, f64>>,
}

impl QuadratureFunction {
    pub fn new(integrand: Expr, var: Symbol, lower: f64, env: Env) -> Arc<Self> {
        Arc::new(QuadratureFunction {
            body: ExprFunction::new(var, integrand),
            env,
            lower,
            cache: Mutex::new(BTreeMap::new()),
        })
    }
}

impl OpaqueFunction for QuadratureFunction {
    fn eval(&self, order: u32, x: f64) -> Result<f64, EvalError> {
        if order > 0 {
            let mut env = self.env.clone();
            env.set(self.body.var().clone(), x);
            return eval_numeric(&self.body.derivative(order - 1), &env);
        }
        if let Some(v) = self.cache.lock().unwrap().get(&x.to_bits()) {
            return Ok(*v);
        }
        let q = quadrature(&self.body.derivative(0), self.body.var(), self.lower, x, &self.env)
            .map_err(|e| EvalError::DomainFault(e.to_string()))?;
        self.cache.lock().unwrap().insert(x.to_bits(), q.value);
        Ok(q.value)
    }
}
