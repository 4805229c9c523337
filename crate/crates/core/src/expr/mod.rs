//! Immutable symbolic expressions over jet-space coordinates.
//!
//! Every [`Expr`] is built through the normalizing constructors in
//! [`build`], so a value in hand is always in normal form: sums and
//! products are flattened and sorted, numeric constants are folded into a
//! single coefficient, and trivial powers never appear.

mod build;
mod diff;
mod eval;
mod rewrite;
mod subst;
mod zero;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub use build::{add, apply, func, int, mul, num, pow, rational, sym};
pub use eval::{
    eval_numeric, eval_scaled, Env, EvalError, ExprFunction, FunctionBinding, OpaqueFunction,
    ParameterBinding, RandomSmooth,
};
pub use rewrite::{expand, numerator_denominator, simplify};
pub use subst::{
    instantiate_function, rename_symbols, substitute, substitute_fixed_point, SubstError,
};
pub use zero::{
    derive_seed, is_zero, Constraint, Provenance, Relation, SampleDomain, Witness, ZeroOutcome,
    ZeroTestConfig,
};

/// Interned-ish name shared between symbols.
pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

/// A dependent variable together with a derivative multi-index.
///
/// The multi-index is stored as the sorted list of independent-variable
/// names, so `u[x1,x2]` and `u[x2,x1]` are the same coordinate.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JetCoord {
    pub dep: Name,
    index: Vec<Name>,
}

impl JetCoord {
    pub fn new(dep: impl Into<Name>, index: impl IntoIterator<Item = Name>) -> Self {
        let mut index: Vec<Name> = index.into_iter().collect();
        index.sort();
        JetCoord {
            dep: dep.into(),
            index,
        }
    }

    /// The order-zero coordinate, i.e. the dependent variable itself.
    pub fn base(dep: impl Into<Name>) -> Self {
        JetCoord {
            dep: dep.into(),
            index: Vec::new(),
        }
    }

    pub fn index(&self) -> &[Name] {
        &self.index
    }

    pub fn order(&self) -> usize {
        self.index.len()
    }

    /// Differentiate once more with respect to `var`.
    pub fn with(&self, var: &Name) -> JetCoord {
        let mut index = self.index.clone();
        let pos = index.partition_point(|v| v <= var);
        index.insert(pos, var.clone());
        JetCoord {
            dep: self.dep.clone(),
            index,
        }
    }

    /// How many times `var` appears in the multi-index.
    pub fn count(&self, var: &str) -> usize {
        self.index.iter().filter(|v| &***v == var).count()
    }

    /// If `self` is a derivative of `other` (same dependent, multi-index
    /// contains `other`'s), return the remaining multi-index.
    pub fn quotient(&self, other: &JetCoord) -> Option<Vec<Name>> {
        if self.dep != other.dep || other.index.len() > self.index.len() {
            return None;
        }
        let mut rest = self.index.clone();
        for v in &other.index {
            let pos = rest.iter().position(|r| r == v)?;
            rest.remove(pos);
        }
        Some(rest)
    }

    /// Least common multiple of two multi-indices on the same dependent.
    pub fn lcm(&self, other: &JetCoord) -> Option<JetCoord> {
        if self.dep != other.dep {
            return None;
        }
        let vars: BTreeSet<&Name> = self.index.iter().chain(other.index.iter()).collect();
        let mut index = Vec::new();
        for v in vars {
            let n = self.count(v).max(other.count(v));
            index.extend(std::iter::repeat_n(v.clone(), n));
        }
        Some(JetCoord::new(self.dep.clone(), index))
    }

    pub fn rename_vars(&self, f: &impl Fn(&Name) -> Name) -> JetCoord {
        JetCoord::new(self.dep.clone(), self.index.iter().map(f))
    }
}

impl fmt::Display for JetCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.index.is_empty() {
            write!(f, "{}", self.dep)
        } else {
            write!(f, "{}[", self.dep)?;
            for (i, v) in self.index.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, "]")
        }
    }
}

impl fmt::Debug for JetCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Leaf symbols.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// Independent variable (x1, x2, t, w, ...).
    Var(Name),
    /// Constant parameter (C, k, alpha, ...).
    Param(Name),
    /// Jet coordinate; order zero is the dependent variable itself.
    Jet(JetCoord),
}

impl Symbol {
    pub fn var(s: &str) -> Self {
        Symbol::Var(name(s))
    }
    pub fn param(s: &str) -> Self {
        Symbol::Param(name(s))
    }
    pub fn jet(dep: &str, index: &[&str]) -> Self {
        Symbol::Jet(JetCoord::new(name(dep), index.iter().map(|v| name(v))))
    }

    pub fn as_jet(&self) -> Option<&JetCoord> {
        match self {
            Symbol::Jet(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Var(n) | Symbol::Param(n) => write!(f, "{n}"),
            Symbol::Jet(c) => write!(f, "{c}"),
        }
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Built-in unary functions.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Atan,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "atan" | "arctan" => Func::Atan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// Expression node. Construct through [`build`] functions, never directly.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Num(BigRational),
    Sym(Symbol),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, Expr),
    Func(Func, Expr),
    /// Opaque one-argument function symbol, differentiated `order` times.
    Apply {
        name: Name,
        order: u32,
        arg: Expr,
    },
}

/// Shared, immutable expression handle.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub(crate) fn from_node(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn zero() -> Expr {
        int(0)
    }

    pub fn one() -> Expr {
        int(1)
    }

    pub fn as_num(&self) -> Option<&BigRational> {
        match self.node() {
            Node::Num(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<&Symbol> {
        match self.node() {
            Node::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<BigInt> {
        self.as_num().filter(|r| r.is_integer()).map(|r| r.to_integer())
    }

    pub fn is_zero(&self) -> bool {
        self.as_num().is_some_and(|r| r.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_num().is_some_and(|r| r.is_one())
    }

    pub fn neg(&self) -> Expr {
        mul([int(-1), self.clone()])
    }

    /// Children in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Num(_) | Node::Sym(_) => Vec::new(),
            Node::Add(xs) | Node::Mul(xs) => xs.iter().collect(),
            Node::Pow(b, e) => vec![b, e],
            Node::Func(_, a) | Node::Apply { arg: a, .. } => vec![a],
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        if let Node::Sym(s) = self.node() {
            out.insert(s.clone());
        }
        for c in self.children() {
            c.collect_symbols(out);
        }
    }

    pub fn jet_coords(&self) -> BTreeSet<JetCoord> {
        self.symbols()
            .into_iter()
            .filter_map(|s| match s {
                Symbol::Jet(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    /// Names of opaque function symbols, with the highest derivative order used.
    pub fn opaque_functions(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Apply { name, .. } = e.node() {
                out.insert(name.clone());
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn contains_symbol(&self, s: &Symbol) -> bool {
        match self.node() {
            Node::Sym(t) => t == s,
            _ => self.children().iter().any(|c| c.contains_symbol(s)),
        }
    }

    pub fn contains_any(&self, pred: &impl Fn(&Symbol) -> bool) -> bool {
        match self.node() {
            Node::Sym(t) => pred(t),
            _ => self.children().iter().any(|c| c.contains_any(pred)),
        }
    }

    /// Rebuild bottom-up, letting `f` replace any node first.
    pub fn map(&self, f: &impl Fn(&Expr) -> Option<Expr>) -> Expr {
        if let Some(r) = f(self) {
            return r;
        }
        match self.node() {
            Node::Num(_) | Node::Sym(_) => self.clone(),
            Node::Add(xs) => add(xs.iter().map(|x| x.map(f))),
            Node::Mul(xs) => mul(xs.iter().map(|x| x.map(f))),
            Node::Pow(b, e) => pow(b.map(f), e.map(f)),
            Node::Func(g, a) => func(*g, a.map(f)),
            Node::Apply { name, order, arg } => apply(name.clone(), *order, arg.map(f)),
        }
    }

    /// Split into numeric coefficient and the remaining product.
    pub fn coeff_rest(&self) -> (BigRational, Expr) {
        match self.node() {
            Node::Num(r) => (r.clone(), Expr::one()),
            Node::Mul(xs) => match xs[0].node() {
                Node::Num(r) => {
                    let rest = if xs.len() == 2 {
                        xs[1].clone()
                    } else {
                        Expr::from_node(Node::Mul(xs[1..].to_vec()))
                    };
                    (r.clone(), rest)
                }
                _ => (BigRational::one(), self.clone()),
            },
            _ => (BigRational::one(), self.clone()),
        }
    }

    /// Base and exponent view of a factor.
    pub fn base_exp(&self) -> (Expr, Expr) {
        match self.node() {
            Node::Pow(b, e) => (b.clone(), e.clone()),
            _ => (self.clone(), Expr::one()),
        }
    }

    /// Heuristic sign: negative numeric coefficient on the leading
    /// non-constant term.
    pub fn looks_negative(&self) -> bool {
        match self.node() {
            Node::Num(r) => r.is_negative(),
            Node::Mul(_) => self.coeff_rest().0.is_negative(),
            Node::Add(xs) => xs
                .iter()
                .find(|t| t.as_num().is_none())
                .is_some_and(|t| t.coeff_rest().0.is_negative()),
            _ => false,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::parser::print_expression(self))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::parser::print_expression(self))
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        int(v)
    }
}

impl From<Symbol> for Expr {
    fn from(s: Symbol) -> Self {
        sym(s)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl std::ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl std::ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs.clone())
            }
        }
        impl std::ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs.clone())
            }
        }
        impl std::ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| add([a, b]));
binop!(Sub, sub, |a, b| add([a, b.neg()]));
binop!(Mul, mul, |a, b| mul([a, b]));
binop!(Div, div, |a, b| mul([a, pow(b, int(-1))]));

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}
