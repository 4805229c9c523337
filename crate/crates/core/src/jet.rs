//! Total derivatives, prolongation of point operators, and canonical
//! Lie-Backlund operators.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use thiserror::Error;

use crate::expr::{add, int, mul, sym, Expr, JetCoord, Name, Symbol};
use crate::parser::Scope;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("insufficient prolongation order: `{coord}` needs order {needed}, field is prolonged to {available}")]
    InsufficientProlongationOrder {
        coord: String,
        needed: usize,
        available: usize,
    },
}

/// Independent and dependent variables with the tracked derivative order.
#[derive(Debug, Clone, PartialEq)]
pub struct JetSpace {
    pub independents: Vec<Name>,
    pub dependents: Vec<Name>,
    pub order: usize,
    /// Promoted coordinates that still vary along other independents:
    /// `chains[x3][x2] = v2` means D_{x2} x3 = v2.
    pub chains: BTreeMap<Name, BTreeMap<Name, Expr>>,
}

impl JetSpace {
    pub fn new(independents: &[&str], dependents: &[&str], order: usize) -> Self {
        JetSpace {
            independents: independents.iter().map(|s| Name::from(*s)).collect(),
            dependents: dependents.iter().map(|s| Name::from(*s)).collect(),
            order,
            chains: BTreeMap::new(),
        }
    }

    pub fn with_chain(mut self, var: &str, along: &str, e: Expr) -> Self {
        self.chains
            .entry(Name::from(var))
            .or_default()
            .insert(Name::from(along), e);
        self
    }

    pub fn is_independent(&self, n: &str) -> bool {
        self.independents.iter().any(|v| &**v == n)
    }

    pub fn is_dependent(&self, n: &str) -> bool {
        self.dependents.iter().any(|v| &**v == n)
    }

    /// Whether `c` is a coordinate of this space.
    pub fn hosts(&self, c: &JetCoord) -> bool {
        self.is_dependent(&c.dep) && c.index().iter().all(|v| self.is_independent(v))
    }

    pub fn scope(&self) -> Scope {
        Scope {
            independents: self.independents.clone(),
            dependents: self.dependents.clone(),
            ..Default::default()
        }
    }
}

/// D_var e = de/dvar + sum over hosted jet coordinates u_J of u_{J+var} de/du_J.
/// Promoted coordinates count as independent here.
pub fn total_derivative(e: &Expr, var: &Name, js: &JetSpace) -> Expr {
    let mut terms = vec![e.diff(&Symbol::Var(var.clone()))];
    for c in e.jet_coords() {
        if !js.hosts(&c) {
            continue;
        }
        let d = e.diff(&Symbol::Jet(c.clone()));
        if !d.is_zero() {
            terms.push(mul([sym(Symbol::Jet(c.with(var))), d]));
        }
    }
    add(terms)
}

/// Total derivative that also follows promoted coordinates back to the
/// original dependent: D_var e plus D_p e times D_var p for every p chained
/// to var.
pub fn chained_derivative(e: &Expr, var: &Name, js: &JetSpace) -> Expr {
    let mut terms = vec![total_derivative(e, var, js)];
    for (p, along) in &js.chains {
        if let Some(dp) = along.get(var) {
            let d = total_derivative(e, p, js);
            if !d.is_zero() {
                terms.push(mul([dp.clone(), d]));
            }
        }
    }
    add(terms)
}

/// Apply D_{v1} D_{v2} ... for the listed variables.
pub fn total_derivative_multi(e: &Expr, vars: &[Name], js: &JetSpace) -> Expr {
    vars.iter().fold(e.clone(), |acc, v| total_derivative(&acc, v, js))
}

/// Point vector field sum xi_j d/dx_j + sum eta_a d/du_a. Missing
/// components are zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorField {
    pub xi: BTreeMap<Name, Expr>,
    pub eta: BTreeMap<Name, Expr>,
}

impl VectorField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_xi(mut self, var: &str, e: Expr) -> Self {
        self.xi.insert(Name::from(var), e);
        self
    }

    pub fn with_eta(mut self, dep: &str, e: Expr) -> Self {
        self.eta.insert(Name::from(dep), e);
        self
    }

    pub fn xi(&self, var: &str) -> Expr {
        self.xi.get(var).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn eta(&self, dep: &str) -> Expr {
        self.eta.get(dep).cloned().unwrap_or_else(Expr::zero)
    }

    /// Linear combination with constant coefficients.
    pub fn combine(parts: &[(Expr, &VectorField)]) -> VectorField {
        let mut out = VectorField::new();
        for (c, vf) in parts {
            for (k, v) in &vf.xi {
                let cur = out.xi(k);
                out.xi.insert(k.clone(), cur + mul([c.clone(), v.clone()]));
            }
            for (k, v) in &vf.eta {
                let cur = out.eta(k);
                out.eta.insert(k.clone(), cur + mul([c.clone(), v.clone()]));
            }
        }
        out.xi.retain(|_, v| !v.is_zero());
        out.eta.retain(|_, v| !v.is_zero());
        out
    }

    /// A point field has no derivative coordinates in its components.
    pub fn is_point(&self) -> bool {
        self.xi
            .values()
            .chain(self.eta.values())
            .all(|e| e.jet_coords().iter().all(|c| c.order() == 0))
    }

    /// Characteristic eta_a - xi_j u_{a,j}.
    pub fn characteristic(&self, js: &JetSpace) -> CanonicalOperator {
        let mut ch = BTreeMap::new();
        for a in &js.dependents {
            let mut terms = vec![self.eta(a)];
            for (j, x) in &self.xi {
                terms.push(mul([
                    int(-1),
                    x.clone(),
                    sym(Symbol::Jet(JetCoord::new(a.clone(), [j.clone()]))),
                ]));
            }
            ch.insert(a.clone(), add(terms));
        }
        CanonicalOperator::new(ch)
    }
}

/// Lie-Backlund operator U_a d/du_a in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalOperator {
    pub characteristic: BTreeMap<Name, Expr>,
}

impl CanonicalOperator {
    pub fn new(characteristic: BTreeMap<Name, Expr>) -> Self {
        CanonicalOperator { characteristic }
    }

    pub fn single(dep: &str, u: Expr) -> Self {
        let mut m = BTreeMap::new();
        m.insert(Name::from(dep), u);
        CanonicalOperator::new(m)
    }

    /// Highest jet order appearing in the characteristic.
    pub fn order(&self) -> usize {
        self.characteristic
            .values()
            .flat_map(|e| e.jet_coords())
            .map(|c| c.order())
            .max()
            .unwrap_or(0)
    }

    pub fn is_trivial(&self) -> bool {
        self.characteristic.values().all(|e| e.is_zero())
    }

    pub fn scaled(&self, c: &Expr) -> Self {
        CanonicalOperator::new(
            self.characteristic
                .iter()
                .map(|(k, v)| (k.clone(), mul([c.clone(), v.clone()])))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Point(VectorField),
    Canonical(CanonicalOperator),
}

/// Operator extended to derivative coordinates. Coefficients are computed
/// on first use and memoized.
#[derive(Debug)]
pub struct ProlongedField {
    op: Operator,
    space: JetSpace,
    order: Option<usize>,
    cache: Mutex<HashMap<JetCoord, Expr>>,
}

impl ProlongedField {
    pub fn point(vf: &VectorField, order: usize, js: &JetSpace) -> Self {
        ProlongedField {
            op: Operator::Point(vf.clone()),
            space: js.clone(),
            order: Some(order),
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Canonical operators prolong to any order on demand.
    pub fn canonical(op: &CanonicalOperator, js: &JetSpace) -> Self {
        ProlongedField {
            op: Operator::Canonical(op.clone()),
            space: js.clone(),
            order: None,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn new(op: &Operator, order: usize, js: &JetSpace) -> Self {
        match op {
            Operator::Point(vf) => Self::point(vf, order, js),
            Operator::Canonical(c) => Self::canonical(c, js),
        }
    }

    pub fn space(&self) -> &JetSpace {
        &self.space
    }

    pub fn order(&self) -> Option<usize> {
        self.order
    }

    /// Coefficient of d/d(c).
    pub fn coefficient(&self, c: &JetCoord) -> Result<Expr, JetError> {
        if let Some(avail) = self.order {
            if c.order() > avail {
                return Err(JetError::InsufficientProlongationOrder {
                    coord: c.to_string(),
                    needed: c.order(),
                    available: avail,
                });
            }
        }
        if let Some(e) = self.cache.lock().unwrap().get(c) {
            return Ok(e.clone());
        }
        let value = if c.order() == 0 {
            match &self.op {
                Operator::Point(vf) => vf.eta(&c.dep),
                Operator::Canonical(op) => op
                    .characteristic
                    .get(&c.dep)
                    .cloned()
                    .unwrap_or_else(Expr::zero),
            }
        } else {
            let i = c.index().last().unwrap().clone();
            let parent = JetCoord::new(c.dep.clone(), c.index()[..c.order() - 1].iter().cloned());
            let prev = self.coefficient(&parent)?;
            let mut terms = vec![total_derivative(&prev, &i, &self.space)];
            if let Operator::Point(vf) = &self.op {
                for (j, x) in &vf.xi {
                    let dx = total_derivative(x, &i, &self.space);
                    if !dx.is_zero() {
                        terms.push(mul([int(-1), sym(Symbol::Jet(parent.with(j))), dx]));
                    }
                }
            }
            add(terms)
        };
        self.cache.lock().unwrap().insert(c.clone(), value.clone());
        Ok(value)
    }

    /// Lie derivative of `e` along the prolonged operator.
    pub fn apply(&self, e: &Expr) -> Result<Expr, JetError> {
        let mut terms = Vec::new();
        if let Operator::Point(vf) = &self.op {
            for (j, x) in &vf.xi {
                let d = e.diff(&Symbol::Var(j.clone()));
                if !d.is_zero() {
                    terms.push(mul([x.clone(), d]));
                }
            }
        }
        for c in e.jet_coords() {
            if !self.space.hosts(&c) {
                continue;
            }
            let d = e.diff(&Symbol::Jet(c.clone()));
            if d.is_zero() {
                continue;
            }
            let k = self.coefficient(&c)?;
            if !k.is_zero() {
                terms.push(mul([k, d]));
            }
        }
        Ok(add(terms))
    }
}

/// Prolong a point field to `order`.
pub fn prolong(vf: &VectorField, order: usize, js: &JetSpace) -> ProlongedField {
    ProlongedField::point(vf, order, js)
}

/// Apply an operator, prolonging as far as `e` requires.
pub fn apply_operator(op: &Operator, e: &Expr, js: &JetSpace) -> Result<Expr, JetError> {
    let order = e.jet_coords().iter().map(|c| c.order()).max().unwrap_or(0);
    ProlongedField::new(op, order, js).apply(e)
}
