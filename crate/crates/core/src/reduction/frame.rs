//! Original jet coordinates expressed through an ansatz.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use crate::expr::{
    add, int, is_zero, mul, pow, substitute, sym, Constraint, Expr, JetCoord, Name, SampleDomain,
    Symbol, ZeroOutcome,
};
use crate::jet::JetSpace;
use crate::report::CheckContext;

use super::{Ansatz, ReductionError};

/// An implicitly defined invariant w = W~(x, w, phi) with its total
/// derivatives.
struct Definition {
    var: Name,
    /// D_i w for each original independent.
    derivatives: BTreeMap<Name, Expr>,
}

pub(crate) struct Frame<'a> {
    pub ansatz: &'a Ansatz,
    pub reduced: JetSpace,
    defs: Vec<Definition>,
    /// Original independents solved from a definition, x_j = expr.
    pub eliminated: HashMap<Symbol, Expr>,
    pub constraints: Vec<Constraint>,
    values: RefCell<HashMap<JetCoord, Expr>>,
}

impl<'a> Frame<'a> {
    pub fn new(a: &'a Ansatz, ctx: &CheckContext) -> Result<Self, ReductionError> {
        let reduced = a.reduced_space();
        let mut frame = Frame {
            ansatz: a,
            reduced,
            defs: Vec::new(),
            eliminated: HashMap::new(),
            constraints: a.constraints.clone(),
            values: RefCell::new(HashMap::new()),
        };
        for (_, rhs) in &a.targets {
            for c in Constraint::natural_domain(rhs) {
                push_unique(&mut frame.constraints, c);
            }
        }
        let exact: HashMap<Symbol, Expr> = a
            .targets
            .iter()
            .map(|(c, e)| (Symbol::Jet(c.clone()), e.clone()))
            .collect();
        for (w, def) in &a.definitions {
            let wt = substitute(def, &exact);
            if a.definitions.iter().any(|(o, _)| o != w && wt.contains_symbol(&Symbol::Var(o.clone()))) {
                return Err(ReductionError::Malformed(format!(
                    "definition of `{w}` refers to another implicit variable"
                )));
            }
            // 1 - dW~/dw along the reduced jets.
            let det = add([int(1), frame.hat(&wt, w).neg()]);
            if det.as_num().is_some_and(|r| r == &num_rational::BigRational::from_integer(0.into())) {
                return Err(ReductionError::SingularImplicitSystem(format!(
                    "1 - d({wt})/d{w} vanishes identically"
                )));
            }
            if det.as_num().is_none() {
                let dom = SampleDomain::new().with_constraints(frame.constraints.clone());
                if let ZeroOutcome::Zero { .. } = is_zero(&det, &dom, ctx.seed, &ctx.zero) {
                    return Err(ReductionError::SingularImplicitSystem(format!(
                        "determinant {det} vanishes identically"
                    )));
                }
                push_unique(&mut frame.constraints, Constraint::non_zero(det.clone()));
            }
            let inv = pow(det, int(-1));
            let mut derivatives = BTreeMap::new();
            for x in &a.space.independents {
                let d = frame.partial(&wt, x)?;
                derivatives.insert(x.clone(), mul([d, inv.clone()]));
            }
            frame.defs.push(Definition {
                var: w.clone(),
                derivatives,
            });
            if let Some((x, e)) = solve_for_independent(&wt, w, a) {
                frame.eliminated.insert(x, e);
            }
        }
        Ok(frame)
    }

    /// d/dw plus the chain through reduced jets.
    fn hat(&self, f: &Expr, w: &Name) -> Expr {
        let mut terms = vec![f.diff(&Symbol::Var(w.clone()))];
        for c in f.jet_coords() {
            if self.reduced.hosts(&c) {
                let d = f.diff(&Symbol::Jet(c.clone()));
                if !d.is_zero() {
                    terms.push(mul([sym(Symbol::Jet(c.with(w))), d]));
                }
            }
        }
        add(terms)
    }

    /// Derivative along x holding implicit invariants fixed.
    fn partial(&self, f: &Expr, x: &Name) -> Result<Expr, ReductionError> {
        let mut terms = vec![f.diff(&Symbol::Var(x.clone()))];
        let x_is_over = self.reduced.is_independent(x);
        for c in f.jet_coords() {
            let d = f.diff(&Symbol::Jet(c.clone()));
            if d.is_zero() {
                continue;
            }
            if self.reduced.hosts(&c) {
                if x_is_over {
                    terms.push(mul([sym(Symbol::Jet(c.with(x))), d]));
                }
            } else if self.ansatz.space.hosts(&c) {
                terms.push(mul([self.value(&c.with(x))?, d]));
            }
        }
        Ok(add(terms))
    }

    /// Total derivative along an original independent variable.
    pub fn total(&self, f: &Expr, x: &Name) -> Result<Expr, ReductionError> {
        let mut terms = vec![self.partial(f, x)?];
        for def in &self.defs {
            let h = self.hat(f, &def.var);
            if !h.is_zero() {
                terms.push(mul([h, def.derivatives[x].clone()]));
            }
        }
        Ok(add(terms))
    }

    /// Value of an original coordinate in frame variables; coordinates not
    /// covered by any target stay as themselves.
    pub fn value(&self, c: &JetCoord) -> Result<Expr, ReductionError> {
        if let Some(v) = self.values.borrow().get(c) {
            return Ok(v.clone());
        }
        let targets = &self.ansatz.targets;
        let v = if let Some((_, rhs)) = targets.iter().find(|(l, _)| l == c) {
            rhs.clone()
        } else {
            let mut best: Option<(&JetCoord, Vec<Name>)> = None;
            for (l, _) in targets {
                if let Some(rest) = c.quotient(l) {
                    if best.as_ref().is_none_or(|(b, _)| l.order() > b.order()) {
                        best = Some((l, rest));
                    }
                }
            }
            match best {
                None => sym(Symbol::Jet(c.clone())),
                Some((_, rest)) => {
                    if c.order() > self.ansatz.space.order.max(8) + 2 {
                        return Err(ReductionError::Malformed(format!(
                            "derivative {c} exceeds the order cap"
                        )));
                    }
                    let v = &rest[0];
                    let parent = remove_one(c, v);
                    let pv = self.value(&parent)?;
                    self.total(&pv, v)?
                }
            }
        };
        self.values.borrow_mut().insert(c.clone(), v.clone());
        Ok(v)
    }

    /// Replace every original coordinate of `e` by its frame value.
    pub fn express(&self, e: &Expr) -> Result<Expr, ReductionError> {
        let mut map = HashMap::new();
        for c in e.jet_coords() {
            if self.ansatz.space.hosts(&c) {
                map.insert(Symbol::Jet(c.clone()), self.value(&c)?);
            }
        }
        Ok(substitute(e, &map))
    }

    /// Cross-derivative conditions between targets on the same dependent.
    pub fn compatibility(&self) -> Result<Vec<(String, Expr)>, ReductionError> {
        let t = &self.ansatz.targets;
        let mut out = Vec::new();
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                let (a, ra) = &t[i];
                let (b, rb) = &t[j];
                let Some(l) = a.lcm(b) else { continue };
                let da = self.along(ra, &l.quotient(a).unwrap())?;
                let db = self.along(rb, &l.quotient(b).unwrap())?;
                out.push((format!("compat({a},{b})"), da - db));
            }
        }
        Ok(out)
    }

    fn along(&self, e: &Expr, vars: &[Name]) -> Result<Expr, ReductionError> {
        let mut cur = e.clone();
        for v in vars {
            cur = self.total(&cur, v)?;
        }
        Ok(cur)
    }

    /// Original coordinates of order >= 1 left in `e`.
    pub fn unresolved(&self, e: &Expr) -> Vec<JetCoord> {
        e.jet_coords()
            .into_iter()
            .filter(|c| self.ansatz.space.hosts(c) && c.order() >= 1)
            .collect()
    }

    pub fn eliminate(&self, e: &Expr) -> Expr {
        substitute(e, &self.eliminated)
    }
}

fn remove_one(c: &JetCoord, v: &Name) -> JetCoord {
    let mut idx: Vec<Name> = c.index().to_vec();
    let pos = idx.iter().position(|x| x == v).unwrap();
    idx.remove(pos);
    JetCoord::new(c.dep.clone(), idx)
}

pub(crate) fn push_unique(v: &mut Vec<Constraint>, c: Constraint) {
    if !v.contains(&c) {
        v.push(c);
    }
}

/// If w = W~ is linear in an original independent x not in `over`, solve it.
fn solve_for_independent(wt: &Expr, w: &Name, a: &Ansatz) -> Option<(Symbol, Expr)> {
    let mut fallback = None;
    for x in a.space.independents.iter().rev() {
        if a.over.contains(x) {
            continue;
        }
        let s = Symbol::Var(x.clone());
        let coef = wt.diff(&s);
        if coef.is_zero() || coef.contains_symbol(&s) {
            continue;
        }
        let mut zero = HashMap::new();
        zero.insert(s.clone(), Expr::zero());
        let rest = substitute(wt, &zero);
        let sol = mul([
            add([sym(Symbol::Var(w.clone())), rest.neg()]),
            pow(coef.clone(), int(-1)),
        ]);
        if coef.as_num().is_some() {
            return Some((s, sol));
        }
        if fallback.is_none() {
            fallback = Some((s, sol));
        }
    }
    fallback
}
