//! IEEE double evaluation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use num_traits::ToPrimitive;
use rand::Rng;
use thiserror::Error;

use super::{Expr, Func, Name, Node, Symbol};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("unbound function `{0}`")]
    UnboundFunction(String),
    #[error("domain fault: {0}")]
    DomainFault(String),
}

/// A concrete one-argument function usable in place of an opaque symbol.
pub trait OpaqueFunction: Send + Sync + fmt::Debug {
    /// Value of the `order`-th derivative at `x`.
    fn eval(&self, order: u32, x: f64) -> Result<f64, EvalError>;
}

/// Opaque function instantiated by an expression in one variable.
#[derive(Debug)]
pub struct ExprFunction {
    var: Symbol,
    derivatives: Mutex<Vec<Expr>>,
}

impl ExprFunction {
    pub fn new(var: Symbol, body: Expr) -> Self {
        ExprFunction {
            var,
            derivatives: Mutex::new(vec![body]),
        }
    }

    pub fn var(&self) -> &Symbol {
        &self.var
    }

    pub fn derivative(&self, order: u32) -> Expr {
        let mut ds = self.derivatives.lock().unwrap();
        while ds.len() <= order as usize {
            let next = ds.last().unwrap().diff(&self.var);
            ds.push(next);
        }
        ds[order as usize].clone()
    }
}

impl OpaqueFunction for ExprFunction {
    fn eval(&self, order: u32, x: f64) -> Result<f64, EvalError> {
        let d = self.derivative(order);
        let mut env = Env::default();
        env.set(self.var.clone(), x);
        eval_numeric(&d, &env)
    }
}

/// Random smooth function: quartic polynomial plus a sinusoid. Every
/// derivative is available in closed form.
#[derive(Debug, Clone)]
pub struct RandomSmooth {
    poly: [f64; 5],
    amp: f64,
    freq: f64,
    phase: f64,
}

impl RandomSmooth {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let mut poly = [0.0; 5];
        for c in poly.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        RandomSmooth {
            poly,
            amp: rng.gen_range(0.5..1.5),
            freq: rng.gen_range(0.5..1.5),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        }
    }
}

impl OpaqueFunction for RandomSmooth {
    fn eval(&self, order: u32, x: f64) -> Result<f64, EvalError> {
        let n = order as usize;
        let mut p = 0.0;
        let mut fact = 1.0;
        for (k, c) in self.poly.iter().enumerate().skip(n) {
            // c_k x^(k-n) / (k-n)!
            let j = k - n;
            if j > 0 {
                fact *= j as f64;
            }
            p += c * x.powi(j as i32) / fact;
        }
        let s = self.amp
            * self.freq.powi(order as i32)
            * (self.freq * x + self.phase + order as f64 * std::f64::consts::FRAC_PI_2).sin();
        Ok(p + s)
    }
}

/// Numeric instances for opaque functions, keyed by name.
pub type FunctionBinding = BTreeMap<Name, Arc<dyn OpaqueFunction>>;

/// Numeric values for parameters plus concrete instances for opaque
/// function symbols.
#[derive(Debug, Clone, Default)]
pub struct ParameterBinding {
    pub params: BTreeMap<Name, f64>,
    pub functions: FunctionBinding,
}

impl ParameterBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, p: &str, v: f64) -> Self {
        self.params.insert(Name::from(p), v);
        self
    }

    pub fn with_function(mut self, f: &str, inst: Arc<dyn OpaqueFunction>) -> Self {
        self.functions.insert(Name::from(f), inst);
        self
    }
}

/// Evaluation environment: every symbol value and every function instance.
#[derive(Debug, Clone, Default)]
pub struct Env {
    values: HashMap<Symbol, f64>,
    functions: HashMap<Name, Arc<dyn OpaqueFunction>>,
}

impl Env {
    pub fn new(point: &HashMap<Symbol, f64>, binding: &ParameterBinding) -> Self {
        let mut env = Env {
            values: point.clone(),
            functions: HashMap::new(),
        };
        env.bind(binding);
        env
    }

    pub fn bind(&mut self, binding: &ParameterBinding) {
        for (p, v) in &binding.params {
            self.values.entry(Symbol::Param(p.clone())).or_insert(*v);
        }
        for (f, inst) in &binding.functions {
            self.functions.insert(f.clone(), inst.clone());
        }
    }

    pub fn set(&mut self, s: Symbol, v: f64) {
        self.values.insert(s, v);
    }

    pub fn get(&self, s: &Symbol) -> Option<f64> {
        self.values.get(s).copied()
    }

    pub fn set_function(&mut self, name: Name, f: Arc<dyn OpaqueFunction>) {
        self.functions.insert(name, f);
    }

    pub fn has_function(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    pub fn values(&self) -> &HashMap<Symbol, f64> {
        &self.values
    }
}

/// Evaluate `e`; any non-finite intermediate is a [`EvalError::DomainFault`].
pub fn eval_numeric(e: &Expr, env: &Env) -> Result<f64, EvalError> {
    eval_scaled(e, env).map(|(v, _)| v)
}

/// Evaluate and also return the largest magnitude of any subterm.
pub fn eval_scaled(e: &Expr, env: &Env) -> Result<(f64, f64), EvalError> {
    let mut scale = 0.0f64;
    let mut memo: HashMap<*const Node, f64> = HashMap::new();
    let v = eval_rec(e, env, &mut scale, &mut memo)?;
    Ok((v, scale))
}

fn fault(msg: impl Into<String>) -> EvalError {
    EvalError::DomainFault(msg.into())
}

fn eval_rec(
    e: &Expr,
    env: &Env,
    scale: &mut f64,
    memo: &mut HashMap<*const Node, f64>,
) -> Result<f64, EvalError> {
    let key = e.node() as *const Node;
    if let Some(v) = memo.get(&key) {
        return Ok(*v);
    }
    let v = match e.node() {
        Node::Num(r) => r.to_f64().ok_or_else(|| fault("unrepresentable constant"))?,
        Node::Sym(s) => env
            .values
            .get(s)
            .copied()
            .ok_or_else(|| EvalError::UnboundSymbol(s.to_string()))?,
        Node::Add(xs) => {
            let mut acc = 0.0;
            for x in xs {
                acc += eval_rec(x, env, scale, memo)?;
            }
            acc
        }
        Node::Mul(xs) => {
            let mut acc = 1.0;
            for x in xs {
                acc *= eval_rec(x, env, scale, memo)?;
            }
            acc
        }
        Node::Pow(b, x) => {
            let bv = eval_rec(b, env, scale, memo)?;
            let int_exp = x.as_integer().and_then(|i| i.to_i32());
            match int_exp {
                Some(n) => {
                    if bv == 0.0 && n < 0 {
                        return Err(fault(format!("division by zero in {e}")));
                    }
                    bv.powi(n)
                }
                None => {
                    let xv = eval_rec(x, env, scale, memo)?;
                    if bv < 0.0 && xv.fract() != 0.0 {
                        return Err(fault("fractional power of negative base"));
                    }
                    if bv == 0.0 && xv < 0.0 {
                        return Err(fault("division by zero"));
                    }
                    bv.powf(xv)
                }
            }
        }
        Node::Func(f, a) => {
            let av = eval_rec(a, env, scale, memo)?;
            match f {
                Func::Sin => av.sin(),
                Func::Cos => av.cos(),
                Func::Tan => av.tan(),
                Func::Atan => av.atan(),
                Func::Exp => av.exp(),
                Func::Ln => {
                    if av <= 0.0 {
                        return Err(fault("ln of non-positive value"));
                    }
                    av.ln()
                }
                Func::Sqrt => {
                    if av < 0.0 {
                        return Err(fault("sqrt of negative value"));
                    }
                    av.sqrt()
                }
                Func::Abs => av.abs(),
            }
        }
        Node::Apply { name, order, arg } => {
            let av = eval_rec(arg, env, scale, memo)?;
            let f = env
                .functions
                .get(name)
                .ok_or_else(|| EvalError::UnboundFunction(name.to_string()))?;
            f.eval(*order, av)?
        }
    };
    if !v.is_finite() {
        return Err(fault(format!("non-finite value in {e}")));
    }
    *scale = scale.max(v.abs());
    memo.insert(key, v);
    Ok(v)
}
