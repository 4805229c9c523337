//! Constructive reduction: split ansatz residuals along monomials in the
//! eliminable quantities and solve the coefficient equations.

use std::collections::BTreeMap;

use crate::expr::{
    add, expand, func, int, is_zero, mul, num, numerator_denominator, pow, Constraint, Expr, Func,
    Node, Relation, SampleDomain, Symbol, ZeroOutcome,
};
use crate::manifold::EquationSystem;
use crate::report::CheckContext;

use super::frame::Frame;
use super::reduced::ReducedSystem;
use super::{frame_residuals, Ansatz, ReductionError};

/// Why a reduction could not be derived.
#[derive(Debug, Clone)]
pub struct ReductionFailure {
    pub equation: String,
    pub term: Expr,
    pub message: String,
}

#[derive(Debug, Clone)]
pub enum Derivation {
    Reduced {
        system: ReducedSystem,
        /// Monomials in the eliminable quantities whose coefficients were
        /// set to zero; assumed linearly independent.
        basis: Vec<Expr>,
    },
    Failure(ReductionFailure),
}

struct Classifier<'a> {
    frame: &'a Frame<'a>,
}

impl Classifier<'_> {
    fn eliminable(&self, s: &Symbol) -> bool {
        let a = self.frame.ansatz;
        match s {
            Symbol::Var(x) => {
                a.space.is_independent(x)
                    && !a.over.contains(x)
                    && !self.frame.eliminated.contains_key(s)
            }
            Symbol::Jet(c) => a.space.hosts(c),
            Symbol::Param(_) => false,
        }
    }

    /// Built from eliminable symbols, parameters and numbers only.
    fn pure(&self, e: &Expr) -> bool {
        e.symbols()
            .iter()
            .all(|s| self.eliminable(s) || matches!(s, Symbol::Param(_)))
            && e.opaque_functions().is_empty()
    }

    fn touches(&self, e: &Expr) -> bool {
        e.contains_any(&|s| self.eliminable(s))
    }
}

/// sqrt(X) -> Y where an assumption says Y >= 0 and X = Y^2.
fn branch_rewrite(e: &Expr, cs: &[Constraint], ctx: &CheckContext) -> Expr {
    let candidates: Vec<&Expr> = cs
        .iter()
        .filter(|c| matches!(c.relation, Relation::Positive | Relation::NonNegative))
        .map(|c| &c.expr)
        .collect();
    if candidates.is_empty() {
        return e.clone();
    }
    let dom = SampleDomain::new().with_constraints(cs.iter().cloned());
    e.map(&|x| match x.node() {
        Node::Func(Func::Sqrt, arg) => {
            for y in &candidates {
                let diff = add([arg.clone(), pow((*y).clone(), int(2)).neg()]);
                if let ZeroOutcome::Zero { .. } = is_zero(&diff, &dom, ctx.seed, &ctx.zero) {
                    return Some((*y).clone());
                }
            }
            None
        }
        _ => None,
    })
}

/// ln(a*b) -> ln a + ln b and ln(a^p) -> p ln a.
fn assume_positive(e: &Expr) -> Expr {
    fn split(arg: &Expr) -> Expr {
        match arg.node() {
            Node::Mul(fs) => add(fs.iter().map(split)),
            Node::Pow(b, p) => mul([p.clone(), split(b)]),
            Node::Func(Func::Exp, a) => a.clone(),
            _ => func(Func::Ln, arg.clone()),
        }
    }
    let once = e.map(&|x| match x.node() {
        Node::Func(Func::Ln, a) => Some(split(&assume_positive(a))),
        _ => None,
    });
    once
}

/// exp(a + b) -> exp(a) exp(b) and exp(c ln X) -> X^c. The logarithm
/// already carries X > 0 as a domain constraint.
fn exp_split(e: &Expr) -> Expr {
    fn one(t: &Expr) -> Expr {
        let (c, rest) = t.coeff_rest();
        match rest.node() {
            Node::Func(Func::Ln, x) => pow(x.clone(), num(c)),
            _ => func(Func::Exp, t.clone()),
        }
    }
    e.map(&|x| match x.node() {
        Node::Func(Func::Exp, a) => {
            let a = exp_split(a);
            Some(match a.node() {
                Node::Add(ts) => mul(ts.iter().map(one)),
                _ => one(&a),
            })
        }
        _ => None,
    })
}

/// sin/cos of (eliminable part + rest) expanded by the addition formulas.
fn trig_split(e: &Expr, cl: &Classifier) -> Expr {
    e.map(&|x| match x.node() {
        Node::Func(f @ (Func::Sin | Func::Cos), a) => {
            let a = trig_split(a, cl);
            let Node::Add(terms) = a.node() else { return None };
            let (el, rest): (Vec<Expr>, Vec<Expr>) =
                terms.iter().cloned().partition(|t| cl.pure(t) && cl.touches(t));
            if el.is_empty() || rest.is_empty() {
                return Some(func(*f, a.clone()));
            }
            let (p, q) = (add(el), add(rest));
            let (sp, cp) = (func(Func::Sin, p.clone()), func(Func::Cos, p));
            let (sq, cq) = (func(Func::Sin, q.clone()), func(Func::Cos, q));
            Some(match f {
                Func::Sin => add([mul([sp, cq.clone()]), mul([cp, sq])]),
                _ => add([mul([cp, cq]), mul([sp, sq]).neg()]),
            })
        }
        _ => None,
    })
}

/// cos(a)^n -> cos(a)^(n-2) (1 - sin(a)^2) for eliminable a, repeatedly.
fn pythagorean(e: &Expr, cl: &Classifier) -> Expr {
    let mut cur = e.clone();
    for _ in 0..32 {
        let mut hit = false;
        let next = cur.map(&|x| match x.node() {
            Node::Pow(b, n) => match (b.node(), n.as_integer()) {
                (Node::Func(Func::Cos, a), Some(k)) if k >= 2.into() && cl.pure(a) => {
                    let k: i64 = k.try_into().unwrap_or(2);
                    let s = func(Func::Sin, a.clone());
                    Some(mul([
                        pow(b.clone(), int(k - 2)),
                        add([int(1), pow(s, int(2)).neg()]),
                    ]))
                }
                _ => None,
            },
            _ => None,
        });
        if next != cur {
            hit = true;
        }
        cur = expand(&next);
        if !hit {
            break;
        }
    }
    cur
}

/// Group the terms of an expanded numerator by their eliminable monomial.
fn split_monomials(
    n: &Expr,
    cl: &Classifier,
) -> Result<BTreeMap<Expr, Vec<Expr>>, Expr> {
    let terms: Vec<Expr> = match n.node() {
        Node::Add(ts) => ts.clone(),
        _ => vec![n.clone()],
    };
    let mut groups: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
    for t in terms {
        let factors: Vec<Expr> = match t.node() {
            Node::Mul(fs) => fs.clone(),
            _ => vec![t.clone()],
        };
        let mut key = Vec::new();
        let mut coeff = Vec::new();
        for f in factors {
            if !cl.touches(&f) {
                coeff.push(f);
            } else if cl.pure(&f) {
                key.push(f);
            } else {
                return Err(f);
            }
        }
        groups.entry(mul(key)).or_default().push(mul(coeff));
    }
    Ok(groups)
}

/// Derive the reduced system implied by an ansatz, or report the term
/// that cannot be matched by any unknown.
pub fn derive_reduction(
    a: &Ansatz,
    original: &EquationSystem,
    ctx: &CheckContext,
) -> Result<Derivation, ReductionError> {
    let frame = Frame::new(a, ctx)?;
    let cl = Classifier { frame: &frame };
    let (residuals, cs) = frame_residuals(&frame, original)?;
    let cs: Vec<Constraint> = cs
        .into_iter()
        .map(|c| Constraint {
            expr: frame.eliminate(&c.expr),
            relation: c.relation,
        })
        .collect();
    let mut eqs = Vec::new();
    let mut basis: Vec<Expr> = Vec::new();
    for (label, r) in residuals {
        let left = frame.unresolved(&r);
        if !left.is_empty() {
            let names: Vec<String> = left.iter().map(|c| c.to_string()).collect();
            return Err(ReductionError::UnreducedVariable(format!(
                "`{label}` still contains {}",
                names.join(", ")
            )));
        }
        let mut r = frame.eliminate(&r);
        r = branch_rewrite(&r, &cs, ctx);
        if a.assume_positive {
            r = assume_positive(&r);
        }
        r = exp_split(&r);
        r = trig_split(&r, &cl);
        let (n, _) = numerator_denominator(&r);
        let n = pythagorean(&expand(&n), &cl);
        let groups = match split_monomials(&n, &cl) {
            Ok(g) => g,
            Err(term) => {
                return Ok(Derivation::Failure(ReductionFailure {
                    equation: label,
                    message: format!("term {term} mixes eliminable quantities with unknowns"),
                    term,
                }))
            }
        };
        let single = groups.len() == 1;
        for (key, coeffs) in groups {
            if !basis.contains(&key) {
                basis.push(key.clone());
            }
            let name = if single {
                label.clone()
            } else {
                format!("{label}[{key}]")
            };
            eqs.push((name, add(coeffs), None));
        }
    }
    let mut sub = ctx.clone();
    for c in &cs {
        sub.domain.add_constraint(c.clone());
    }
    let system = match ReducedSystem::from_residuals(
        format!("{}.derived", a.name),
        a.reduced_space(),
        eqs,
        &sub,
    ) {
        Ok(s) => s,
        Err(ReductionError::NoUnknown { equation, term }) => {
            return Ok(Derivation::Failure(ReductionFailure {
                message: format!("non-eliminable term {term} in `{equation}`"),
                equation,
                term,
            }))
        }
        Err(ReductionError::NotLinear { equation, lead }) => {
            return Ok(Derivation::Failure(ReductionFailure {
                message: format!("`{equation}` is not linear in {lead}"),
                equation,
                term: Expr::zero(),
            }))
        }
        Err(e) => return Err(e),
    };
    let mut system = system.with_constraints(cs);
    system
        .notes
        .push("basis monomials assumed linearly independent".to_string());
    if system.len() > a.unknowns.len() {
        system.notes.push(format!(
            "internal error: {} equations for {} unknowns",
            system.len(),
            a.unknowns.len()
        ));
    }
    Ok(Derivation::Reduced { system, basis })
}

impl ReducedSystem {
    fn with_constraints(mut self, cs: Vec<Constraint>) -> Self {
        self.system = self.system.with_constraints(cs);
        self
    }
}
