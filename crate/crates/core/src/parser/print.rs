//! Printer whose output parses back to the same normal form.

use num_rational::BigRational;
use num_traits::{One, Signed};

use crate::expr::{int, mul, pow, Expr, Node};

const ADD: u8 = 10;
const MUL: u8 = 20;
const ATOM: u8 = 40;

pub fn print_expression(e: &Expr) -> String {
    render(e).0
}

fn wrap(s: (String, u8), min: u8) -> String {
    if s.1 >= min {
        s.0
    } else {
        format!("({})", s.0)
    }
}

fn render(e: &Expr) -> (String, u8) {
    match e.node() {
        Node::Num(r) => {
            let s = r.to_string();
            let p = if r.is_negative() {
                ADD
            } else if r.is_integer() {
                ATOM
            } else {
                MUL
            };
            (s, p)
        }
        Node::Sym(s) => (s.to_string(), ATOM),
        Node::Func(f, a) => (format!("{}({})", f.name(), render(a).0), ATOM),
        Node::Apply { name, order, arg } => (
            format!("{name}{}({})", "'".repeat(*order as usize), render(arg).0),
            ATOM,
        ),
        Node::Add(terms) => {
            let (pos, neg): (Vec<&Expr>, Vec<&Expr>) =
                terms.iter().partition(|t| !t.looks_negative());
            let mut out = String::new();
            for (i, t) in pos.iter().enumerate() {
                if i > 0 {
                    out.push_str(" + ");
                }
                out.push_str(&wrap(render(t), ADD + 1));
            }
            for (i, t) in neg.iter().enumerate() {
                let body = wrap(render(&t.neg()), MUL);
                if i == 0 && pos.is_empty() {
                    out.push('-');
                } else {
                    out.push_str(" - ");
                }
                out.push_str(&body);
            }
            (out, ADD)
        }
        Node::Mul(_) => {
            let (c, rest) = e.coeff_rest();
            product(&c, factors(&rest))
        }
        Node::Pow(b, x) => {
            if x.looks_negative() {
                return product(&BigRational::one(), vec![e.clone()]);
            }
            let base = wrap(render(b), ATOM);
            let exp = wrap(render(x), ATOM);
            (format!("{base}^{exp}"), 30)
        }
    }
}

fn factors(e: &Expr) -> Vec<Expr> {
    match e.node() {
        Node::Mul(xs) => xs.clone(),
        _ if e.is_one() => Vec::new(),
        _ => vec![e.clone()],
    }
}

fn product(c: &BigRational, fs: Vec<Expr>) -> (String, u8) {
    let mut numer: Vec<String> = Vec::new();
    let mut denom: Vec<(String, u8)> = Vec::new();
    let p = c.numer().abs();
    let q = c.denom().clone();
    let mut num_factors = Vec::new();
    for f in fs {
        match f.node() {
            Node::Pow(b, x) if x.looks_negative() => {
                let inv = pow(b.clone(), mul([int(-1), x.clone()]));
                denom.push(render(&inv));
            }
            _ => num_factors.push(f),
        }
    }
    if !p.is_one() || num_factors.is_empty() {
        numer.push(p.to_string());
    }
    for f in &num_factors {
        numer.push(wrap(render(f), MUL + 1));
    }
    if !q.is_one() {
        denom.insert(0, (q.to_string(), ATOM));
    }
    let mut s = numer.join("*");
    if !denom.is_empty() {
        s.push('/');
        if denom.len() == 1 {
            s.push_str(&wrap(denom.pop().unwrap(), MUL + 1));
        } else {
            let parts: Vec<String> = denom.into_iter().map(|d| wrap(d, MUL + 1)).collect();
            s.push_str(&format!("({})", parts.join("*")));
        }
    }
    if c.is_negative() {
        (format!("-{s}"), ADD)
    } else {
        (s, MUL)
    }
}
