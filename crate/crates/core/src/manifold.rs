//! Equation systems in solved form and rewriting modulo their manifold.

use std::collections::HashMap;

use thiserror::Error;

use crate::expr::{substitute, sym, Constraint, Expr, JetCoord, Name, Symbol};
use crate::jet::{total_derivative, JetSpace};

pub const DEFAULT_ITERATION_CAP: usize = 64;
pub const DEFAULT_ORDER_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    #[error("conflicting constraints: {0}")]
    ConflictingConstraints(String),
    #[error("rewrite did not terminate: {0}")]
    IterationCapExceeded(String),
}

/// `lead = rhs` with `lead` a jet coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub name: String,
    pub lead: JetCoord,
    pub rhs: Expr,
}

impl Equation {
    pub fn new(name: impl Into<String>, lead: JetCoord, rhs: Expr) -> Self {
        Equation {
            name: name.into(),
            lead,
            rhs,
        }
    }

    /// lead - rhs
    pub fn residual(&self) -> Expr {
        sym(Symbol::Jet(self.lead.clone())) - &self.rhs
    }

    pub fn order(&self) -> usize {
        self.rhs
            .jet_coords()
            .iter()
            .map(|c| c.order())
            .chain([self.lead.order()])
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquationSystem {
    pub space: JetSpace,
    pub equations: Vec<Equation>,
    pub constraints: Vec<Constraint>,
}

impl EquationSystem {
    /// Validate leads and attach the natural domain of every right side.
    pub fn new(space: JetSpace, equations: Vec<Equation>) -> Result<Self, ManifoldError> {
        for (i, eq) in equations.iter().enumerate() {
            if eq.rhs.contains_symbol(&Symbol::Jet(eq.lead.clone())) {
                return Err(ManifoldError::ConflictingConstraints(format!(
                    "right side of `{}` contains its own leading coordinate {}",
                    eq.name, eq.lead
                )));
            }
            if let Some(other) = equations[..i].iter().find(|o| o.lead == eq.lead) {
                return Err(ManifoldError::ConflictingConstraints(format!(
                    "`{}` and `{}` share the leading coordinate {}",
                    other.name, eq.name, eq.lead
                )));
            }
        }
        let mut constraints: Vec<Constraint> = Vec::new();
        for eq in &equations {
            for c in Constraint::natural_domain(&eq.rhs) {
                if !constraints.contains(&c) {
                    constraints.push(c);
                }
            }
        }
        Ok(EquationSystem {
            space,
            equations,
            constraints,
        })
    }

    pub fn with_constraints(mut self, cs: impl IntoIterator<Item = Constraint>) -> Self {
        for c in cs {
            if !self.constraints.contains(&c) {
                self.constraints.push(c);
            }
        }
        self
    }

    pub fn order(&self) -> usize {
        self.equations.iter().map(|e| e.order()).max().unwrap_or(0)
    }

    pub fn rules(&self) -> Vec<(JetCoord, Expr)> {
        self.equations
            .iter()
            .map(|e| (e.lead.clone(), e.rhs.clone()))
            .collect()
    }

    pub fn equation(&self, name: &str) -> Option<&Equation> {
        self.equations.iter().find(|e| e.name == name)
    }
}

/// Limits for [`restrict_with`].
#[derive(Debug, Clone, Copy)]
pub struct RestrictLimits {
    pub iterations: usize,
    pub order: usize,
}

impl Default for RestrictLimits {
    fn default() -> Self {
        RestrictLimits {
            iterations: DEFAULT_ITERATION_CAP,
            order: DEFAULT_ORDER_CAP,
        }
    }
}

/// Rewrite every coordinate of `e` that is a derivative of a leading
/// coordinate of `sys` or `extra`, until none is left.
pub fn restrict_to_manifold(
    e: &Expr,
    sys: &EquationSystem,
    extra: &[(JetCoord, Expr)],
) -> Result<Expr, ManifoldError> {
    for (lead, _) in extra {
        if let Some(eq) = sys.equations.iter().find(|q| &q.lead == lead) {
            return Err(ManifoldError::ConflictingConstraints(format!(
                "extra rule for {lead} conflicts with equation `{}`",
                eq.name
            )));
        }
    }
    let mut rules = sys.rules();
    rules.extend(extra.iter().cloned());
    restrict_with(e, &sys.space, &rules, RestrictLimits::default())
}

/// Rewriting engine shared by all manifolds. Among applicable rules the one
/// with the highest-order lead wins; ties go to the first listed.
pub fn restrict_with(
    e: &Expr,
    space: &JetSpace,
    rules: &[(JetCoord, Expr)],
    limits: RestrictLimits,
) -> Result<Expr, ManifoldError> {
    let mut cache: HashMap<(usize, Vec<Name>), Expr> = HashMap::new();
    let mut cur = e.clone();
    for _ in 0..limits.iterations {
        let mut map: HashMap<Symbol, Expr> = HashMap::new();
        for c in cur.jet_coords() {
            let mut best: Option<(usize, Vec<Name>)> = None;
            for (i, (lead, _)) in rules.iter().enumerate() {
                if let Some(rest) = c.quotient(lead) {
                    let better = match &best {
                        None => true,
                        Some((j, _)) => lead.order() > rules[*j].0.order(),
                    };
                    if better {
                        best = Some((i, rest));
                    }
                }
            }
            if let Some((i, rest)) = best {
                if c.order() > limits.order {
                    return Err(ManifoldError::IterationCapExceeded(format!(
                        "coordinate {c} exceeds the order cap {}",
                        limits.order
                    )));
                }
                let r = derived_rule(i, &rest, rules, space, &mut cache);
                map.insert(Symbol::Jet(c), r);
            }
        }
        if map.is_empty() {
            return Ok(cur);
        }
        cur = substitute(&cur, &map);
    }
    Err(ManifoldError::IterationCapExceeded(format!(
        "still rewriting after {} passes",
        limits.iterations
    )))
}

/// D_K applied to the right side of rule `i`, memoized along the path.
fn derived_rule(
    i: usize,
    k: &[Name],
    rules: &[(JetCoord, Expr)],
    space: &JetSpace,
    cache: &mut HashMap<(usize, Vec<Name>), Expr>,
) -> Expr {
    if k.is_empty() {
        return rules[i].1.clone();
    }
    let key = (i, k.to_vec());
    if let Some(e) = cache.get(&key) {
        return e.clone();
    }
    let prev = derived_rule(i, &k[..k.len() - 1], rules, space, cache);
    let out = total_derivative(&prev, &k[k.len() - 1], space);
    cache.insert(key, out.clone());
    out
}
