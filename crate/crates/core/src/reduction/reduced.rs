//! Reduced systems: solved-form equations for the unknown functions.

use std::collections::HashMap;

use crate::expr::{
    expand, int, is_zero, mul, numerator_denominator, pow, substitute, Constraint, Expr, JetCoord,
    Symbol, ZeroOutcome,
};
use crate::jet::JetSpace;
use crate::manifold::{restrict_with, Equation, EquationSystem, RestrictLimits};
use crate::report::{zero_test_all, CheckContext, CheckReport};

use super::frame::push_unique;
use super::ReductionError;

/// Equations for the unknowns phi_k over the reduced variables.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub name: String,
    pub system: EquationSystem,
    pub notes: Vec<String>,
}

impl ReducedSystem {
    pub fn new(name: impl Into<String>, system: EquationSystem) -> Self {
        ReducedSystem {
            name: name.into(),
            system,
            notes: Vec::new(),
        }
    }

    pub fn space(&self) -> &JetSpace {
        &self.system.space
    }

    pub fn len(&self) -> usize {
        self.system.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.equations.is_empty()
    }

    /// Triangularize residual equations `residual = 0`. A preferred leading
    /// coordinate may be given per equation.
    pub fn from_residuals(
        name: impl Into<String>,
        space: JetSpace,
        eqs: Vec<(String, Expr, Option<JetCoord>)>,
        ctx: &CheckContext,
    ) -> Result<Self, ReductionError> {
        let (equations, constraints, notes) = triangularize(&space, eqs, ctx)?;
        let system = EquationSystem::new(space, equations)
            .map_err(ReductionError::Manifold)?
            .with_constraints(constraints);
        Ok(ReducedSystem {
            name: name.into(),
            system,
            notes,
        })
    }

    /// Print the system one equation per line in parser syntax.
    pub fn display(&self) -> String {
        self.system
            .equations
            .iter()
            .map(|e| format!("{} = {}", e.lead, e.rhs))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// n/d with the numerator expanded.
pub(crate) fn tidy(e: &Expr) -> Expr {
    let (n, d) = numerator_denominator(e);
    mul([expand(&n), pow(d, int(-1))])
}

/// Ranking: higher order first, then declared unknown order, then index.
fn rank(space: &JetSpace, c: &JetCoord) -> (usize, usize, Vec<String>) {
    let dep = space
        .dependents
        .iter()
        .position(|d| *d == c.dep)
        .unwrap_or(usize::MAX);
    let idx = c.index().iter().map(|v| v.to_string()).collect();
    (usize::MAX - c.order(), dep, idx)
}

/// Solve `e = 0` for `c`, assuming linearity; returns the right side and
/// the coefficient of `c`.
pub(crate) fn solve_linear(e: &Expr, c: &JetCoord) -> Option<(Expr, Expr)> {
    let s = Symbol::Jet(c.clone());
    let a = e.diff(&s);
    if a.is_zero() || a.contains_symbol(&s) {
        return None;
    }
    let mut zero = HashMap::new();
    zero.insert(s, Expr::zero());
    let b = substitute(e, &zero);
    Some((tidy(&mul([int(-1), b, pow(a.clone(), int(-1))])), a))
}

type Triangular = (Vec<Equation>, Vec<Constraint>, Vec<String>);

fn triangularize(
    space: &JetSpace,
    eqs: Vec<(String, Expr, Option<JetCoord>)>,
    ctx: &CheckContext,
) -> Result<Triangular, ReductionError> {
    let mut rules: Vec<Equation> = Vec::new();
    let mut constraints: Vec<Constraint> = Vec::new();
    let mut notes = Vec::new();
    let mut queue: std::collections::VecDeque<(String, Expr, Option<JetCoord>)> = eqs.into();
    let mut steps = 0;
    while let Some((name, e, prefer)) = queue.pop_front() {
        steps += 1;
        if steps > 256 {
            return Err(ReductionError::Malformed("triangularization did not settle".into()));
        }
        let pairs: Vec<(JetCoord, Expr)> =
            rules.iter().map(|r| (r.lead.clone(), r.rhs.clone())).collect();
        let r = restrict_with(&e, space, &pairs, RestrictLimits::default())
            .map_err(ReductionError::Manifold)?;
        let (n, _) = numerator_denominator(&r);
        let n = expand(&n);
        if n.is_zero() {
            notes.push(format!("`{name}` holds identically on the remaining equations"));
            continue;
        }
        let mut dom = ctx.domain.clone();
        for c in constraints.iter().cloned().chain(Constraint::natural_domain(&r)) {
            dom.add_constraint(c);
        }
        if let ZeroOutcome::Zero { .. } = is_zero(&n, &dom, ctx.seed, &ctx.zero) {
            notes.push(format!("`{name}` holds identically on the remaining equations"));
            continue;
        }
        let jets: Vec<JetCoord> = n.jet_coords().into_iter().filter(|c| space.hosts(c)).collect();
        if jets.is_empty() {
            return Err(ReductionError::NoUnknown { equation: name, term: n });
        }
        let lead = match prefer.filter(|p| jets.contains(p)) {
            Some(p) => p,
            None => jets
                .iter()
                .min_by_key(|c| rank(space, c))
                .cloned()
                .unwrap(),
        };
        let Some((rhs, coeff)) = solve_linear(&n, &lead) else {
            return Err(ReductionError::NotLinear {
                equation: name,
                lead: lead.to_string(),
            });
        };
        if coeff.as_num().is_none() {
            push_unique(&mut constraints, Constraint::non_zero(coeff));
        }
        // Rules whose lead is a derivative of the new lead must be redone.
        let (keep, redo): (Vec<Equation>, Vec<Equation>) =
            rules.into_iter().partition(|r| r.lead.quotient(&lead).is_none());
        rules = keep;
        for r in redo {
            queue.push_back((r.name.clone(), r.residual(), Some(r.lead.clone())));
        }
        rules.push(Equation::new(name, lead, rhs));
    }
    // Right sides in terms of the final rule set.
    let pairs: Vec<(JetCoord, Expr)> = rules.iter().map(|r| (r.lead.clone(), r.rhs.clone())).collect();
    for (i, r) in rules.iter_mut().enumerate() {
        let others: Vec<(JetCoord, Expr)> = pairs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p.clone())
            .collect();
        let rhs = restrict_with(&r.rhs, space, &others, RestrictLimits::default())
            .map_err(ReductionError::Manifold)?;
        r.rhs = tidy(&rhs);
    }
    Ok((rules, constraints, notes))
}

/// Cross-check two reduced systems over the same space: each equation of
/// one must hold on the manifold of the other.
pub fn systems_equivalent(a: &ReducedSystem, b: &ReducedSystem, ctx: &CheckContext) -> CheckReport {
    let mut residuals = Vec::new();
    let mut cs = a.system.constraints.clone();
    for c in &b.system.constraints {
        push_unique(&mut cs, c.clone());
    }
    for (from, to) in [(a, b), (b, a)] {
        let rules = to.system.rules();
        for eq in &from.system.equations {
            let label = format!("{}:{} on {}", from.name, eq.name, to.name);
            match restrict_with(&eq.residual(), to.space(), &rules, RestrictLimits::default()) {
                Ok(r) => residuals.push((label, r)),
                Err(e) => {
                    return CheckReport::inconclusive(format!("{label}: {e}"), ctx.seed, ctx.zero)
                }
            }
        }
    }
    zero_test_all(residuals, &cs, ctx)
}
