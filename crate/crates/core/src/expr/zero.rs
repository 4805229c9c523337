//! Seeded probabilistic zero-testing.
//!
//! The symbolic normal form decides the easy cases; everything else is
//! arbitrated by evaluation at random in-domain points.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{eval_scaled, simplify, Env, Expr, Name, OpaqueFunction, RandomSmooth, Symbol};

/// Relation an expression must satisfy at every sample point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    /// expr > 0
    Positive,
    /// expr >= 0
    NonNegative,
    /// expr != 0
    NonZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub expr: Expr,
    pub relation: Relation,
}

impl Constraint {
    pub fn positive(expr: Expr) -> Self {
        Constraint {
            expr,
            relation: Relation::Positive,
        }
    }
    pub fn non_negative(expr: Expr) -> Self {
        Constraint {
            expr,
            relation: Relation::NonNegative,
        }
    }
    pub fn non_zero(expr: Expr) -> Self {
        Constraint {
            expr,
            relation: Relation::NonZero,
        }
    }

    /// Whether the constraint holds at `env`, with a safety margin away
    /// from the boundary for strict relations.
    pub fn holds(&self, env: &Env, margin: f64) -> bool {
        match super::eval_numeric(&self.expr, env) {
            Ok(v) => match self.relation {
                Relation::Positive => v > margin,
                Relation::NonNegative => v >= 0.0,
                Relation::NonZero => v.abs() > margin,
            },
            Err(_) => false,
        }
    }

    /// Natural-domain constraints of an expression: positive logarithm
    /// arguments, nonnegative radicands, nonzero denominators.
    pub fn natural_domain(e: &Expr) -> Vec<Constraint> {
        use super::{Func, Node};
        let mut out: Vec<Constraint> = Vec::new();
        e.visit(&mut |x| {
            let c = match x.node() {
                Node::Func(Func::Ln, a) => Some(Constraint::positive(a.clone())),
                Node::Func(Func::Sqrt, a) => Some(Constraint::positive(a.clone())),
                Node::Pow(b, p) if p.looks_negative() && b.as_num().is_none() => {
                    Some(Constraint::non_zero(b.clone()))
                }
                _ => None,
            };
            if let Some(c) = c {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        });
        out
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.relation {
            Relation::Positive => ">",
            Relation::NonNegative => ">=",
            Relation::NonZero => "!=",
        };
        write!(f, "{} {op} 0", self.expr)
    }
}

/// Tolerances and budgets of the zero test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroTestConfig {
    pub samples: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_draws: usize,
    /// Keep strict constraints this far from their boundary.
    pub margin: f64,
}

impl Default for ZeroTestConfig {
    fn default() -> Self {
        ZeroTestConfig {
            samples: 64,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_draws: 1024,
            margin: 1e-4,
        }
    }
}

/// Where to draw sample points from.
#[derive(Debug, Clone, Default)]
pub struct SampleDomain {
    pub constraints: Vec<Constraint>,
    /// Sampling boxes per symbol; unlisted symbols use `default_box`.
    pub boxes: BTreeMap<Symbol, (f64, f64)>,
    /// Symbols held at fixed values.
    pub fixed: BTreeMap<Symbol, f64>,
    /// Concrete instances for opaque functions; unbound ones get a fresh
    /// random smooth instance at every point.
    pub functions: BTreeMap<Name, Arc<dyn OpaqueFunction>>,
    pub default_box: Option<(f64, f64)>,
}

impl SampleDomain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_constraints(mut self, cs: impl IntoIterator<Item = Constraint>) -> Self {
        for c in cs {
            if !self.constraints.contains(&c) {
                self.constraints.push(c);
            }
        }
        self
    }

    pub fn add_constraint(&mut self, c: Constraint) {
        if !self.constraints.contains(&c) {
            self.constraints.push(c);
        }
    }

    pub fn merge(&mut self, other: &SampleDomain) {
        for c in &other.constraints {
            self.add_constraint(c.clone());
        }
        for (s, b) in &other.boxes {
            self.boxes.entry(s.clone()).or_insert(*b);
        }
        for (s, v) in &other.fixed {
            self.fixed.entry(s.clone()).or_insert(*v);
        }
        for (f, i) in &other.functions {
            self.functions.entry(f.clone()).or_insert_with(|| i.clone());
        }
        if self.default_box.is_none() {
            self.default_box = other.default_box;
        }
    }

    fn box_for(&self, s: &Symbol) -> (f64, f64) {
        self.boxes
            .get(s)
            .copied()
            .or(self.default_box)
            .unwrap_or((-2.0, 2.0))
    }

    /// Draw one candidate point covering `symbols` and `functions`.
    pub fn draw(
        &self,
        symbols: &[Symbol],
        functions: &[Name],
        rng: &mut ChaCha8Rng,
    ) -> Env {
        let mut env = Env::default();
        for s in symbols {
            let v = match self.fixed.get(s) {
                Some(v) => *v,
                None => {
                    let (lo, hi) = self.box_for(s);
                    if hi > lo {
                        rng.gen_range(lo..hi)
                    } else {
                        lo
                    }
                }
            };
            env.set(s.clone(), v);
        }
        for f in functions {
            let inst: Arc<dyn OpaqueFunction> = match self.functions.get(f) {
                Some(i) => i.clone(),
                None => Arc::new(RandomSmooth::sample(rng)),
            };
            env.set_function(f.clone(), inst);
        }
        env
    }

    /// Free symbols and opaque functions needed to evaluate `e` and every
    /// constraint.
    pub fn free_of(&self, e: &Expr) -> (Vec<Symbol>, Vec<Name>) {
        let mut syms = e.symbols();
        let mut funcs = e.opaque_functions();
        for c in &self.constraints {
            syms.extend(c.expr.symbols());
            funcs.extend(c.expr.opaque_functions());
        }
        (syms.into_iter().collect(), funcs.into_iter().collect())
    }
}

/// How a `Zero` verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Symbolic,
    Probabilistic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Symbolic => write!(f, "symbolic"),
            Provenance::Probabilistic => write!(f, "probabilistic"),
        }
    }
}

/// A point where an expression was observed to be nonzero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub point: Vec<(String, f64)>,
    pub value: f64,
}

impl Witness {
    fn from_env(env: &Env, value: f64) -> Self {
        let mut point: Vec<(String, f64)> =
            env.values().iter().map(|(s, v)| (s.to_string(), *v)).collect();
        point.sort_by(|a, b| a.0.cmp(&b.0));
        Witness { point, value }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "value {:.6e} at {{", self.value)?;
        for (i, (n, v)) in self.point.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}={v:.6}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZeroOutcome {
    Zero {
        provenance: Provenance,
        /// Largest |value| seen at accepted points.
        max_abs: f64,
        points: usize,
    },
    NonZero(Witness),
    Inconclusive {
        reason: String,
        accepted: usize,
    },
}

impl ZeroOutcome {
    pub fn is_zero(&self) -> bool {
        matches!(self, ZeroOutcome::Zero { .. })
    }
}

/// Mix a master seed with an index (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Decide whether `e` vanishes identically on `domain`.
pub fn is_zero(e: &Expr, domain: &SampleDomain, seed: u64, cfg: &ZeroTestConfig) -> ZeroOutcome {
    let e = simplify(e);
    if e.is_zero() {
        return ZeroOutcome::Zero {
            provenance: Provenance::Symbolic,
            max_abs: 0.0,
            points: 0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (symbols, functions) = domain.free_of(&e);
    let mut accepted = 0usize;
    let mut max_abs = 0.0f64;
    let mut faults: HashMap<String, usize> = HashMap::new();
    for _ in 0..cfg.max_draws {
        let env = domain.draw(&symbols, &functions, &mut rng);
        if !domain.constraints.iter().all(|c| c.holds(&env, cfg.margin)) {
            continue;
        }
        match eval_scaled(&e, &env) {
            Ok((v, scale)) => {
                if v.abs() > cfg.abs_tol + cfg.rel_tol * scale {
                    return ZeroOutcome::NonZero(Witness::from_env(&env, v));
                }
                max_abs = max_abs.max(v.abs());
                accepted += 1;
                if accepted >= cfg.samples {
                    return ZeroOutcome::Zero {
                        provenance: Provenance::Probabilistic,
                        max_abs,
                        points: accepted,
                    };
                }
            }
            Err(err) => *faults.entry(err.to_string()).or_insert(0) += 1,
        }
    }
    let mut reason = format!(
        "only {accepted} of {} points accepted within {} draws",
        cfg.samples, cfg.max_draws
    );
    if let Some((msg, n)) = faults.iter().max_by_key(|(_, n)| **n) {
        reason.push_str(&format!("; most frequent failure ({n}x): {msg}"));
    }
    ZeroOutcome::Inconclusive { reason, accepted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{add, func, int, mul, sym, Func};

    fn v(s: &str) -> Expr {
        sym(Symbol::var(s))
    }

    #[test]
    fn addition_identity_is_zero() {
        let (a, b) = (v("a"), v("b"));
        let e = add([
            func(Func::Sin, add([a.clone(), b.clone()])),
            mul([func(Func::Sin, a.clone()), func(Func::Cos, b.clone())]).neg(),
            mul([func(Func::Cos, a), func(Func::Sin, b)]).neg(),
        ]);
        let out = is_zero(&e, &SampleDomain::new(), 0, &ZeroTestConfig::default());
        assert!(matches!(
            out,
            ZeroOutcome::Zero {
                provenance: Provenance::Probabilistic,
                ..
            }
        ));
    }

    #[test]
    fn nonzero_has_witness() {
        let e = add([func(Func::Exp, sym(Symbol::jet("v1", &[]))), sym(Symbol::param("C")).neg()]);
        match is_zero(&e, &SampleDomain::new(), 7, &ZeroTestConfig::default()) {
            ZeroOutcome::NonZero(w) => {
                assert!(w.value.abs() > 1e-9);
                assert!(w.point.iter().any(|(n, _)| n == "C"));
            }
            other => panic!("expected NonZero, got {other:?}"),
        }
    }

    #[test]
    fn literal_zero_is_symbolic() {
        let x = v("x");
        let out = is_zero(&(&x - &x), &SampleDomain::new(), 0, &ZeroTestConfig::default());
        assert!(matches!(
            out,
            ZeroOutcome::Zero {
                provenance: Provenance::Symbolic,
                ..
            }
        ));
    }

    #[test]
    fn empty_domain_is_inconclusive() {
        let x = v("x");
        let dom = SampleDomain::new().with_constraints([
            Constraint::positive(x.clone()),
            Constraint::positive(x.neg()),
        ]);
        let out = is_zero(&func(Func::Sin, x), &dom, 0, &ZeroTestConfig::default());
        assert!(matches!(out, ZeroOutcome::Inconclusive { .. }));
    }

    #[test]
    fn opaque_functions_get_random_instances() {
        // F(x) - F(x) is zero, F(x) - F(y) is not.
        let f = |a: Expr| crate::expr::apply(crate::expr::name("F"), 0, a);
        let same = add([f(v("x")), f(v("x")).neg(), int(0)]);
        assert!(is_zero(&same, &SampleDomain::new(), 1, &ZeroTestConfig::default()).is_zero());
        let diff = add([f(v("x")), f(v("y")).neg()]);
        assert!(matches!(
            is_zero(&diff, &SampleDomain::new(), 1, &ZeroTestConfig::default()),
            ZeroOutcome::NonZero(_)
        ));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}
