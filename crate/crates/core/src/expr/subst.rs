use std::collections::HashMap;

use thiserror::Error;

use super::{add, apply, func, mul, pow, sym, Expr, Node, Symbol};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SubstError {
    #[error("substitution did not stabilize within {0} passes (cyclic rule set?)")]
    IterationCapExceeded(usize),
}

/// Simultaneous substitution of symbols; the result is normalized.
pub fn substitute(e: &Expr, rules: &HashMap<Symbol, Expr>) -> Expr {
    if rules.is_empty() {
        return e.clone();
    }
    let mut memo: HashMap<*const Node, Expr> = HashMap::new();
    subst_memo(e, rules, &mut memo)
}

fn subst_memo(e: &Expr, rules: &HashMap<Symbol, Expr>, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    let key = e.node() as *const Node;
    if let Some(r) = memo.get(&key) {
        return r.clone();
    }
    let out = match e.node() {
        Node::Num(_) => e.clone(),
        Node::Sym(s) => rules.get(s).cloned().unwrap_or_else(|| e.clone()),
        Node::Add(xs) => add(xs.iter().map(|x| subst_memo(x, rules, memo))),
        Node::Mul(xs) => mul(xs.iter().map(|x| subst_memo(x, rules, memo))),
        Node::Pow(b, x) => pow(subst_memo(b, rules, memo), subst_memo(x, rules, memo)),
        Node::Func(f, a) => func(*f, subst_memo(a, rules, memo)),
        Node::Apply { name, order, arg } => apply(name.clone(), *order, subst_memo(arg, rules, memo)),
    };
    memo.insert(key, out.clone());
    out
}

/// Re-apply `rules` until nothing changes or `cap` passes have run.
pub fn substitute_fixed_point(
    e: &Expr,
    rules: &HashMap<Symbol, Expr>,
    cap: usize,
) -> Result<Expr, SubstError> {
    let mut cur = e.clone();
    for _ in 0..cap {
        if !cur.contains_any(&|s| rules.contains_key(s)) {
            return Ok(cur);
        }
        let next = substitute(&cur, rules);
        if next == cur {
            return Ok(cur);
        }
        cur = next;
    }
    if cur.contains_any(&|s| rules.contains_key(s)) {
        Err(SubstError::IterationCapExceeded(cap))
    } else {
        Ok(cur)
    }
}

/// Replace every application of the opaque function `fname` (and its
/// formal derivatives) by `body` with `var` bound to the argument.
pub fn instantiate_function(e: &Expr, fname: &str, var: &Symbol, body: &Expr) -> Expr {
    let mut derivs: Vec<Expr> = vec![body.clone()];
    instantiate_rec(e, fname, var, &mut derivs)
}

fn instantiate_rec(e: &Expr, fname: &str, var: &Symbol, derivs: &mut Vec<Expr>) -> Expr {
    match e.node() {
        Node::Num(_) | Node::Sym(_) => e.clone(),
        Node::Add(xs) => add(xs.iter().map(|x| instantiate_rec(x, fname, var, derivs))),
        Node::Mul(xs) => mul(xs.iter().map(|x| instantiate_rec(x, fname, var, derivs))),
        Node::Pow(b, x) => pow(
            instantiate_rec(b, fname, var, derivs),
            instantiate_rec(x, fname, var, derivs),
        ),
        Node::Func(f, a) => func(*f, instantiate_rec(a, fname, var, derivs)),
        Node::Apply { name, order, arg } => {
            let arg = instantiate_rec(arg, fname, var, derivs);
            if &**name != fname {
                return apply(name.clone(), *order, arg);
            }
            while derivs.len() <= *order as usize {
                let next = derivs.last().unwrap().diff(var);
                derivs.push(next);
            }
            let mut rules = HashMap::new();
            rules.insert(var.clone(), arg);
            substitute(&derivs[*order as usize], &rules)
        }
    }
}

/// Rename symbols by a total mapping function.
pub fn rename_symbols(e: &Expr, f: &impl Fn(&Symbol) -> Symbol) -> Expr {
    e.map(&|x| x.as_symbol().map(|s| sym(f(s))))
}
