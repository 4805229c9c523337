//! Normalizing constructors.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{Expr, Func, Name, Node, Symbol};

/// Largest integer exponent folded exactly on rational bases.
const MAX_EXACT_EXPONENT: u32 = 512;
/// Largest bit size of an exactly folded numeric power.
const MAX_EXACT_BITS: u64 = 1 << 16;

pub fn num(r: BigRational) -> Expr {
    Expr::from_node(Node::Num(r))
}

pub fn int(v: i64) -> Expr {
    num(BigRational::from_integer(BigInt::from(v)))
}

pub fn rational(n: i64, d: i64) -> Expr {
    num(BigRational::new(BigInt::from(n), BigInt::from(d)))
}

pub fn sym(s: Symbol) -> Expr {
    Expr::from_node(Node::Sym(s))
}

pub fn apply(name: Name, order: u32, arg: Expr) -> Expr {
    Expr::from_node(Node::Apply { name, order, arg })
}

fn sort_key(term: &Expr) -> (Expr, BigRational) {
    let (c, r) = term.coeff_rest();
    (r, c)
}

pub fn add(terms: impl IntoIterator<Item = Expr>) -> Expr {
    let mut constant = BigRational::zero();
    let mut collected: BTreeMap<Expr, BigRational> = BTreeMap::new();
    let mut push = |t: Expr, constant: &mut BigRational| match t.node() {
        Node::Num(r) => *constant += r,
        _ => {
            let (c, rest) = t.coeff_rest();
            *collected.entry(rest).or_insert_with(BigRational::zero) += c;
        }
    };
    for t in terms {
        match t.node() {
            Node::Add(xs) => {
                for x in xs {
                    push(x.clone(), &mut constant);
                }
            }
            _ => push(t, &mut constant),
        }
    }
    let mut out: Vec<Expr> = collected
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|(rest, c)| scale(c, rest))
        .collect();
    // Scaling can only produce an Add when distributing over a sum, which
    // never survives as a collected term; flatten defensively anyway.
    if out.iter().any(|t| matches!(t.node(), Node::Add(_))) {
        let mut flat = vec![num(constant)];
        for t in out {
            flat.push(t);
        }
        return add(flat);
    }
    out.sort_by_cached_key(sort_key);
    if !constant.is_zero() {
        out.insert(0, num(constant));
    }
    match out.len() {
        0 => Expr::zero(),
        1 => out.pop().unwrap(),
        _ => Expr::from_node(Node::Add(out)),
    }
}

/// `c * rest` where `rest` carries no numeric coefficient.
fn scale(c: BigRational, rest: Expr) -> Expr {
    if c.is_one() {
        return rest;
    }
    if rest.is_one() {
        return num(c);
    }
    match rest.node() {
        Node::Mul(xs) => {
            let mut v = Vec::with_capacity(xs.len() + 1);
            v.push(num(c));
            v.extend(xs.iter().cloned());
            Expr::from_node(Node::Mul(v))
        }
        Node::Add(_) => mul([num(c), rest]),
        _ => Expr::from_node(Node::Mul(vec![num(c), rest])),
    }
}

pub fn mul(factors: impl IntoIterator<Item = Expr>) -> Expr {
    let mut coeff = BigRational::one();
    let mut powers: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
    let mut exp_args: Vec<Expr> = Vec::new();
    let mut stack: Vec<Expr> = factors.into_iter().collect();
    while let Some(f) = stack.pop() {
        match f.node() {
            Node::Num(r) => {
                if r.is_zero() {
                    return Expr::zero();
                }
                coeff *= r;
            }
            Node::Mul(xs) => stack.extend(xs.iter().cloned()),
            Node::Func(Func::Exp, a) => exp_args.push(a.clone()),
            Node::Pow(b, e) if matches!(b.node(), Node::Func(Func::Exp, _)) && e.as_num().is_some() => {
                if let Node::Func(_, a) = b.node() {
                    exp_args.push(mul([e.clone(), a.clone()]));
                }
            }
            _ => {
                let (b, e) = f.base_exp();
                powers.entry(b).or_default().push(e);
            }
        }
    }
    let mut out: Vec<Expr> = Vec::new();
    let mut redo = false;
    for (b, es) in powers {
        let p = pow(b, add(es));
        match p.node() {
            Node::Num(r) => {
                if r.is_zero() {
                    return Expr::zero();
                }
                coeff *= r;
            }
            Node::Mul(_) | Node::Func(Func::Exp, _) => {
                redo = true;
                out.push(p);
            }
            _ => out.push(p),
        }
    }
    if !exp_args.is_empty() {
        let e = func(Func::Exp, add(exp_args));
        match e.node() {
            Node::Num(r) => coeff *= r,
            _ => out.push(e),
        }
    }
    if redo {
        out.push(num(coeff));
        return mul(out);
    }
    if coeff.is_zero() {
        return Expr::zero();
    }
    out.sort();
    if out.is_empty() {
        return num(coeff);
    }
    if out.len() == 1 {
        let only = out.pop().unwrap();
        if coeff.is_one() {
            return only;
        }
        if let Node::Add(ts) = only.node() {
            let c = num(coeff);
            return add(ts.iter().map(|t| mul([c.clone(), t.clone()])));
        }
        return Expr::from_node(Node::Mul(vec![num(coeff), only]));
    }
    if !coeff.is_one() {
        out.insert(0, num(coeff));
    }
    Expr::from_node(Node::Mul(out))
}

fn small_int(e: &Expr) -> Option<i64> {
    e.as_integer().and_then(|i| i.to_i64())
}

/// Exact rational power when cheap and exact.
fn rational_pow(b: &BigRational, e: &BigRational) -> Option<BigRational> {
    let p = e.numer().to_i64()?;
    let q = e.denom().to_u32()?;
    if p.unsigned_abs() > MAX_EXACT_EXPONENT as u64 || q > 64 {
        return None;
    }
    let bits = b.numer().bits().max(b.denom().bits());
    if bits.saturating_mul(p.unsigned_abs()) > MAX_EXACT_BITS {
        return None;
    }
    if b.is_zero() {
        return if p > 0 { Some(BigRational::zero()) } else { None };
    }
    let root = if q == 1 {
        b.clone()
    } else {
        if b.is_negative() {
            return None;
        }
        let n = b.numer().nth_root(q);
        let d = b.denom().nth_root(q);
        if num_traits::pow(n.clone(), q as usize) != *b.numer()
            || num_traits::pow(d.clone(), q as usize) != *b.denom()
        {
            return None;
        }
        BigRational::new(n, d)
    };
    let mag = num_traits::pow(root, p.unsigned_abs() as usize);
    Some(if p < 0 { mag.recip() } else { mag })
}

pub fn pow(base: Expr, exp: Expr) -> Expr {
    if exp.is_zero() {
        return Expr::one();
    }
    if exp.is_one() {
        return base;
    }
    if base.is_one() {
        return Expr::one();
    }
    if let (Some(b), Some(e)) = (base.as_num(), exp.as_num()) {
        if let Some(r) = rational_pow(b, e) {
            return num(r);
        }
        return Expr::from_node(Node::Pow(base, exp));
    }
    let int_exp = exp.as_num().filter(|r| r.is_integer()).is_some();
    match base.node() {
        Node::Pow(b2, e2) if int_exp => return pow(b2.clone(), mul([e2.clone(), exp])),
        Node::Mul(fs) if int_exp => {
            return mul(fs.iter().map(|f| pow(f.clone(), exp.clone())));
        }
        Node::Func(Func::Sqrt, a) => {
            if let Some(n) = small_int(&exp) {
                if n % 2 == 0 {
                    return pow(a.clone(), int(n / 2));
                }
            }
        }
        Node::Func(Func::Exp, a) if exp.as_num().is_some() => {
            return func(Func::Exp, mul([a.clone(), exp]));
        }
        _ => {}
    }
    Expr::from_node(Node::Pow(base, exp))
}

fn is_odd(f: Func) -> bool {
    matches!(f, Func::Sin | Func::Tan | Func::Atan)
}

fn is_even(f: Func) -> bool {
    matches!(f, Func::Cos | Func::Abs)
}

pub fn func(f: Func, arg: Expr) -> Expr {
    if let Some(r) = arg.as_num() {
        if let Some(v) = exact_func(f, r) {
            return v;
        }
    }
    if (is_odd(f) || is_even(f)) && arg.looks_negative() {
        let inner = func(f, arg.neg());
        return if is_odd(f) { inner.neg() } else { inner };
    }
    match (f, arg.node()) {
        // Both sides are defined on the same set, so these never widen a domain.
        (Func::Ln, Node::Func(Func::Exp, a)) => return a.clone(),
        (Func::Ln, Node::Pow(b, e)) => {
            if let Some(n) = small_int(e) {
                if n % 2 != 0 {
                    return mul([int(n), func(Func::Ln, b.clone())]);
                }
            }
        }
        (Func::Abs, Node::Func(Func::Exp | Func::Sqrt | Func::Abs, _)) => return arg,
        _ => {}
    }
    Expr::from_node(Node::Func(f, arg))
}

fn exact_func(f: Func, r: &BigRational) -> Option<Expr> {
    match f {
        Func::Sin | Func::Tan | Func::Atan if r.is_zero() => Some(Expr::zero()),
        Func::Cos | Func::Exp if r.is_zero() => Some(Expr::one()),
        Func::Ln if r.is_one() => Some(Expr::zero()),
        Func::Abs => Some(num(r.abs())),
        Func::Sqrt => rational_pow(r, &BigRational::new(1.into(), 2.into())).map(num),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        sym(Symbol::var("x1"))
    }

    #[test]
    fn additive_identity() {
        assert_eq!(add([x(), int(0)]), x());
    }

    #[test]
    fn like_terms_fold() {
        let u1 = sym(Symbol::jet("u", &["x1"]));
        let e = add([mul([int(2), u1.clone()]), mul([int(3), u1.clone()])]);
        assert_eq!(e, mul([int(5), u1]));
    }

    #[test]
    fn zero_power_folds_to_one() {
        assert_eq!(pow(x(), int(0)), int(1));
        assert_eq!(mul([x(), pow(x(), int(-1))]), int(1));
    }

    #[test]
    fn exp_ln_is_kept() {
        let e = func(Func::Exp, func(Func::Ln, x()));
        assert!(matches!(e.node(), Node::Func(Func::Exp, _)));
    }

    #[test]
    fn ln_of_reciprocal() {
        let a = add([x(), int(1)]);
        assert_eq!(
            func(Func::Ln, pow(a.clone(), int(-1))),
            func(Func::Ln, a).neg()
        );
    }

    #[test]
    fn sqrt_of_perfect_square_rational() {
        assert_eq!(func(Func::Sqrt, rational(9, 4)), rational(3, 2));
        assert!(matches!(func(Func::Sqrt, int(2)).node(), Node::Func(..)));
    }

    #[test]
    fn odd_functions_pull_out_sign() {
        let a = sym(Symbol::var("a"));
        let b = sym(Symbol::var("b"));
        let s1 = func(Func::Sin, add([a.clone(), b.neg()]));
        let s2 = func(Func::Sin, add([b, a.neg()]));
        assert_eq!(add([s1, s2]), int(0));
    }

    #[test]
    fn exponentials_merge() {
        let p = sym(Symbol::param("p"));
        let e = mul([func(Func::Exp, p.clone()), func(Func::Exp, p.neg())]);
        assert_eq!(e, int(1));
    }

    #[test]
    fn numeric_coefficient_distributes_over_sum() {
        let y = sym(Symbol::var("y"));
        let e = mul([int(2), add([x(), y.clone()])]);
        assert_eq!(e, add([mul([int(2), x()]), mul([int(2), y])]));
    }

    #[test]
    fn huge_numeric_powers_stay_symbolic() {
        let e = pow(int(3), int(1_000_000));
        assert!(matches!(e.node(), Node::Pow(..)));
    }
}
