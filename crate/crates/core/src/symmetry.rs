//! Invariance criteria: classical, conditional, Lie-Backlund, and the
//! novelty diagnostic for conditionally invariant solutions.

use thiserror::Error;

use crate::expr::{mul, pow, int, sym, Constraint, Expr, JetCoord, Symbol};
use crate::jet::{CanonicalOperator, JetError, JetSpace, ProlongedField, VectorField};
use crate::manifold::{restrict_to_manifold, Equation, EquationSystem, ManifoldError};
use crate::report::{zero_test_all, CheckContext, CheckReport, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymmetryError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

fn run(
    pf: &ProlongedField,
    sys: &EquationSystem,
    extra: &[(JetCoord, Expr)],
    constraints: &[Constraint],
    ctx: &CheckContext,
) -> Result<CheckReport, SymmetryError> {
    let mut residuals = Vec::new();
    for eq in &sys.equations {
        let applied = pf.apply(&eq.residual())?;
        let r = restrict_to_manifold(&applied, sys, extra)?;
        residuals.push((eq.name.clone(), r));
    }
    let mut cs = sys.constraints.clone();
    for c in constraints {
        if !cs.contains(c) {
            cs.push(c.clone());
        }
    }
    Ok(zero_test_all(residuals, &cs, ctx))
}

/// Point symmetry of a system: the prolonged field annihilates every
/// equation on its solution manifold.
pub fn check_classical(
    vf: &VectorField,
    sys: &EquationSystem,
    ctx: &CheckContext,
) -> Result<CheckReport, SymmetryError> {
    let pf = ProlongedField::point(vf, sys.order().max(1), &sys.space);
    run(&pf, sys, &[], &[], ctx)
}

/// Solved invariant-surface conditions xi_j u^a_j = eta_a of `vf`, using
/// the first independent variable with nonzero xi as the leading direction.
pub fn invariant_surface(
    vf: &VectorField,
    space: &JetSpace,
) -> Result<(Vec<(JetCoord, Expr)>, Vec<Constraint>), SymmetryError> {
    let lead = space
        .independents
        .iter()
        .find(|x| !vf.xi(x).is_zero())
        .ok_or_else(|| SymmetryError::Precondition("operator has no xi component".into()))?;
    let xl = vf.xi(lead);
    let mut constraints = Vec::new();
    if xl.as_num().is_none() {
        constraints.push(Constraint::non_zero(xl.clone()));
    }
    let inv = pow(xl, int(-1));
    let mut rules = Vec::new();
    for a in &space.dependents {
        let mut terms = vec![vf.eta(a)];
        for (j, x) in &vf.xi {
            if j != lead {
                terms.push(mul([
                    int(-1),
                    x.clone(),
                    sym(Symbol::Jet(JetCoord::new(a.clone(), [j.clone()]))),
                ]));
            }
        }
        rules.push((
            JetCoord::new(a.clone(), [lead.clone()]),
            mul([inv.clone(), crate::expr::add(terms)]),
        ));
    }
    Ok((rules, constraints))
}

/// Conditional symmetry: invariance on the manifold of the system together
/// with the operator's own invariant-surface conditions.
pub fn check_conditional(
    vf: &VectorField,
    sys: &EquationSystem,
    ctx: &CheckContext,
) -> Result<CheckReport, SymmetryError> {
    let (extra, cs) = invariant_surface(vf, &sys.space)?;
    let pf = ProlongedField::point(vf, sys.order().max(1), &sys.space);
    run(&pf, sys, &extra, &cs, ctx)
}

/// Lie-Backlund symmetry of an ODE in x1, possibly with parametric
/// variables; consequences in all variables are used.
pub fn check_lie_backlund(
    op: &CanonicalOperator,
    ode: &EquationSystem,
    ctx: &CheckContext,
) -> Result<CheckReport, SymmetryError> {
    if ode.equations.len() != 1 {
        return Err(SymmetryError::Precondition(
            "expected a single ordinary differential equation".into(),
        ));
    }
    let lead = &ode.equations[0].lead;
    let first = lead.index().first().cloned();
    if lead.order() == 0 || lead.index().iter().any(|v| Some(v) != first.as_ref()) {
        return Err(SymmetryError::Precondition(format!(
            "leading coordinate {lead} is not a pure derivative in one variable"
        )));
    }
    if op.is_trivial() {
        return Err(SymmetryError::Precondition("characteristic is identically zero".into()));
    }
    let pf = ProlongedField::canonical(op, &ode.space);
    run(&pf, ode, &[], &[], ctx)
}

/// Outcome of the novelty diagnostic.
#[derive(Debug, Clone)]
pub struct NoveltyDiagnostic {
    /// Dimension of the algebra.
    pub s: usize,
    /// Number of constants in the reduced equation's general solution.
    pub t: usize,
    pub constraint_system: EquationSystem,
    /// Per algebra operator: invariance of the constraint system.
    pub verdicts: Vec<(String, CheckReport)>,
    /// Per algebra operator: invariance of the equation itself.
    pub equation_verdicts: Vec<(String, CheckReport)>,
    pub conclusion: bool,
    /// Hypotheses taken on trust.
    pub assumptions: Vec<String>,
}

/// Build xi_aj u_{x_j} = eta_a from a family of operators in solved form.
pub fn constraint_system(
    family: &[VectorField],
    space: &JetSpace,
) -> Result<EquationSystem, SymmetryError> {
    let mut eqs = Vec::new();
    let mut cs = Vec::new();
    for (i, q) in family.iter().enumerate() {
        let (rules, c) = invariant_surface(q, space)?;
        cs.extend(c);
        for (j, (lead, rhs)) in rules.into_iter().enumerate() {
            eqs.push(Equation::new(format!("Q{}.{}", i + 1, j + 1), lead, rhs));
        }
    }
    Ok(EquationSystem::new(space.clone(), eqs)?.with_constraints(cs))
}

/// Checks whether the algebra leaves both the equation and the family's
/// constraint system invariant, and whether s >= t + 1. Involutivity of the
/// family is assumed, not verified.
pub fn novelty_diagnostic(
    algebra: &[(String, VectorField)],
    family: &[VectorField],
    t: usize,
    sys: &EquationSystem,
    ctx: &CheckContext,
) -> Result<NoveltyDiagnostic, SymmetryError> {
    let cons = constraint_system(family, &sys.space)?;
    let mut verdicts = Vec::new();
    let mut equation_verdicts = Vec::new();
    for (i, (name, op)) in algebra.iter().enumerate() {
        let sub = CheckContext {
            seed: crate::expr::derive_seed(ctx.seed, i as u64),
            ..ctx.clone()
        };
        verdicts.push((name.clone(), check_classical(op, &cons, &sub)?));
        equation_verdicts.push((name.clone(), check_classical(op, sys, &sub)?));
    }
    let s = algebra.len();
    let all_pass = verdicts
        .iter()
        .chain(equation_verdicts.iter())
        .all(|(_, r)| r.verdict == Verdict::Pass);
    Ok(NoveltyDiagnostic {
        s,
        t,
        constraint_system: cons,
        verdicts,
        equation_verdicts,
        conclusion: s > t && all_pass,
        assumptions: vec!["the operator family is involutive (not verified)".into()],
    })
}
