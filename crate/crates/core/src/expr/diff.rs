//! Explicit partial differentiation.

use super::{add, apply, func, int, mul, pow, rational, Expr, Func, Node, Symbol};

impl Expr {
    /// Partial derivative with respect to `s`, treating every other symbol
    /// (including jet coordinates) as independent.
    pub fn diff(&self, s: &Symbol) -> Expr {
        if !self.contains_symbol(s) {
            return Expr::zero();
        }
        match self.node() {
            Node::Num(_) => Expr::zero(),
            Node::Sym(t) => {
                if t == s {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(xs) => add(xs.iter().map(|x| x.diff(s))),
            Node::Mul(xs) => {
                let mut terms = Vec::with_capacity(xs.len());
                for (i, xi) in xs.iter().enumerate() {
                    let d = xi.diff(s);
                    if d.is_zero() {
                        continue;
                    }
                    let mut fs: Vec<Expr> = Vec::with_capacity(xs.len());
                    fs.push(d);
                    fs.extend(xs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x.clone()));
                    terms.push(mul(fs));
                }
                add(terms)
            }
            Node::Pow(b, e) => {
                let db = b.diff(s);
                if !e.contains_symbol(s) {
                    mul([e.clone(), pow(b.clone(), add([e.clone(), int(-1)])), db])
                } else {
                    let de = e.diff(s);
                    let ln_b = func(Func::Ln, b.clone());
                    mul([
                        self.clone(),
                        add([mul([de, ln_b]), mul([e.clone(), db, pow(b.clone(), int(-1))])]),
                    ])
                }
            }
            Node::Func(f, a) => {
                let da = a.diff(s);
                let outer = match f {
                    Func::Sin => func(Func::Cos, a.clone()),
                    Func::Cos => func(Func::Sin, a.clone()).neg(),
                    Func::Tan => add([int(1), pow(func(Func::Tan, a.clone()), int(2))]),
                    Func::Atan => pow(add([int(1), pow(a.clone(), int(2))]), int(-1)),
                    Func::Exp => self.clone(),
                    Func::Ln => pow(a.clone(), int(-1)),
                    Func::Sqrt => mul([rational(1, 2), pow(self.clone(), int(-1))]),
                    Func::Abs => mul([self.clone(), pow(a.clone(), int(-1))]),
                };
                mul([outer, da])
            }
            Node::Apply { name, order, arg } => {
                mul([apply(name.clone(), order + 1, arg.clone()), arg.diff(s)])
            }
        }
    }
}
