//! Whole-tree rewrites: normalization, expansion, rational combination.

use std::collections::BTreeMap;

use num_traits::{Signed, ToPrimitive};

use super::{add, func, int, mul, pow, Expr, Node};

/// Cap on multinomial expansion of `(a + b + ...)^n`.
const MAX_EXPAND_POWER: i64 = 12;

/// Normal form of `e`. Idempotent.
pub fn simplify(e: &Expr) -> Expr {
    e.map(&|_| None)
}

/// Distribute products over sums and expand positive integer powers of sums.
pub fn expand(e: &Expr) -> Expr {
    match e.node() {
        Node::Num(_) | Node::Sym(_) => e.clone(),
        Node::Add(xs) => add(xs.iter().map(expand)),
        Node::Mul(xs) => {
            let mut acc: Vec<Expr> = vec![int(1)];
            for x in xs {
                let xe = expand(x);
                let parts: Vec<Expr> = match xe.node() {
                    Node::Add(ts) => ts.clone(),
                    _ => vec![xe],
                };
                let mut next = Vec::with_capacity(acc.len() * parts.len());
                for a in &acc {
                    for p in &parts {
                        next.push(mul([a.clone(), p.clone()]));
                    }
                }
                acc = next;
            }
            add(acc)
        }
        Node::Pow(b, x) => {
            let be = expand(b);
            if let Some(n) = x.as_integer().and_then(|i| i.to_i64()) {
                if n > 1 && n <= MAX_EXPAND_POWER && matches!(be.node(), Node::Add(_)) {
                    let factors: Vec<Expr> = (0..n).map(|_| be.clone()).collect();
                    return expand(&Expr::from_node(Node::Mul(factors)));
                }
            }
            pow(be, expand(x))
        }
        Node::Func(f, a) => func(*f, expand(a)),
        Node::Apply { name, order, arg } => super::apply(name.clone(), *order, expand(arg)),
    }
}

/// Denominator as a multiset of bases with positive integer multiplicity.
type Denom = BTreeMap<Expr, u64>;

fn denom_expr(d: &Denom) -> Expr {
    mul(d.iter().map(|(b, n)| pow(b.clone(), int(*n as i64))))
}

fn together(e: &Expr) -> (Expr, Denom) {
    match e.node() {
        Node::Num(r) => {
            let mut d = Denom::new();
            if !r.is_integer() {
                d.insert(super::num(r.denom().clone().into()), 1);
            }
            (super::num(r.numer().clone().into()), d)
        }
        Node::Sym(_) | Node::Func(..) | Node::Apply { .. } => (e.clone(), Denom::new()),
        Node::Mul(xs) => {
            let mut numer = Vec::new();
            let mut den = Denom::new();
            for x in xs {
                let (n, d) = together(x);
                numer.push(n);
                for (b, k) in d {
                    *den.entry(b).or_insert(0) += k;
                }
            }
            (mul(numer), den)
        }
        Node::Add(xs) => {
            let parts: Vec<(Expr, Denom)> = xs.iter().map(together).collect();
            let mut lcm = Denom::new();
            for (_, d) in &parts {
                for (b, k) in d {
                    let slot = lcm.entry(b.clone()).or_insert(0);
                    *slot = (*slot).max(*k);
                }
            }
            let terms = parts.into_iter().map(|(n, d)| {
                let mut missing = Vec::new();
                for (b, k) in &lcm {
                    let have = d.get(b).copied().unwrap_or(0);
                    if *k > have {
                        missing.push(pow(b.clone(), int((*k - have) as i64)));
                    }
                }
                missing.push(n);
                mul(missing)
            });
            (add(terms), lcm)
        }
        Node::Pow(b, x) => {
            let n = match x.as_integer().and_then(|i| i.to_i64()) {
                Some(n) => n,
                None => return (e.clone(), Denom::new()),
            };
            let (bn, bd) = together(b);
            if n > 0 {
                let den = bd.into_iter().map(|(b, k)| (b, k * n as u64)).collect();
                (pow(bn, int(n)), den)
            } else {
                let m = n.unsigned_abs();
                let numer = pow(denom_expr(&bd), int(m as i64));
                let mut den = Denom::new();
                // Split a product numerator into separate denominator bases.
                let (c, rest) = bn.coeff_rest();
                let mut bases: Vec<Expr> = match rest.node() {
                    Node::Mul(fs) => fs.clone(),
                    _ if rest.is_one() => Vec::new(),
                    _ => vec![rest.clone()],
                };
                if c.abs() != num_rational::BigRational::from_integer(1.into()) {
                    bases.push(super::num(c.abs()));
                }
                let sign = if c.is_negative() && m % 2 == 1 { -1 } else { 1 };
                for f in bases {
                    let (fb, fe) = f.base_exp();
                    match fe.as_integer().and_then(|i| i.to_u64()) {
                        Some(k) if k > 0 => *den.entry(fb).or_insert(0) += k * m,
                        _ => *den.entry(f).or_insert(0) += m,
                    }
                }
                (mul([int(sign), numer]), den)
            }
        }
    }
}

/// Combine over a common denominator. Returns `(numerator, denominator)`
/// with `e == numerator / denominator` wherever `e` is defined.
pub fn numerator_denominator(e: &Expr) -> (Expr, Expr) {
    let (n, d) = together(e);
    (n, denom_expr(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{sym, Symbol};

    fn x() -> Expr {
        sym(Symbol::var("x"))
    }
    fn y() -> Expr {
        sym(Symbol::var("y"))
    }

    #[test]
    fn expand_square() {
        let e = pow(add([x(), y()]), int(2));
        let expected = add([
            pow(x(), int(2)),
            mul([int(2), x(), y()]),
            pow(y(), int(2)),
        ]);
        assert_eq!(expand(&e), expected);
    }

    #[test]
    fn together_sum_of_fractions() {
        // 1/x + 1/y = (x + y)/(x y)
        let e = add([pow(x(), int(-1)), pow(y(), int(-1))]);
        let (n, d) = numerator_denominator(&e);
        assert_eq!(n, add([x(), y()]));
        assert_eq!(d, mul([x(), y()]));
    }

    #[test]
    fn together_nested_reciprocal() {
        // 1/(1/x - c) = x/(1 - c x)
        let c = sym(Symbol::param("c"));
        let e = pow(add([pow(x(), int(-1)), c.neg()]), int(-1));
        let (n, d) = numerator_denominator(&e);
        assert_eq!(mul([n, pow(d, int(-1))]), mul([x(), pow(add([int(1), mul([int(-1), c, x()])]), int(-1))]));
    }

    #[test]
    fn simplify_is_identity_on_normal_forms() {
        let e = add([pow(x(), int(-1)), mul([int(3), y()])]);
        assert_eq!(simplify(&e), e);
    }
}
