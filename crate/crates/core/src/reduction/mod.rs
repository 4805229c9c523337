//! Ansatz substitution, reduction checks, Backlund compatibility and
//! overdetermined systems.

mod backlund;
mod derive;
mod frame;
mod reduced;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{Constraint, Expr, JetCoord, Name};
use crate::jet::JetSpace;
use crate::manifold::{restrict_with, EquationSystem, ManifoldError, RestrictLimits};
use crate::report::{zero_test_all, CheckContext, CheckReport};

pub use backlund::{verify_backlund, BacklundRelation};
pub use derive::{derive_reduction, Derivation, ReductionFailure};
pub use reduced::{systems_equivalent, ReducedSystem};

use frame::{push_unique, Frame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("singular implicit system: {0}")]
    SingularImplicitSystem(String),
    #[error("unreduced variable: {0}")]
    UnreducedVariable(String),
    #[error("malformed ansatz: {0}")]
    Malformed(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error("non-eliminable term in `{equation}`: {term} = 0 involves no unknown function")]
    NoUnknown { equation: String, term: Expr },
    #[error("`{equation}` is not linear in {lead}")]
    NotLinear { equation: String, lead: String },
}

/// Substitution of targets (a dependent variable or some of its
/// derivatives) by expressions in x, the reduced variables and unknown
/// functions phi_k of the reduced variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    pub name: String,
    /// Space of the equation being reduced.
    pub space: JetSpace,
    /// Reduced independent variables: original ones kept as-is, or
    /// invariants introduced by `definitions`.
    pub over: Vec<Name>,
    pub unknowns: Vec<Name>,
    pub targets: Vec<(JetCoord, Expr)>,
    /// Invariants defined by w = W(x, u, derivatives); may be implicit.
    pub definitions: Vec<(Name, Expr)>,
    pub constraints: Vec<Constraint>,
    /// Opt in to domain-unsafe logarithm rewrites in derive_reduction.
    pub assume_positive: bool,
}

impl Ansatz {
    pub fn new(name: impl Into<String>, space: JetSpace, over: &[&str], unknowns: &[&str]) -> Self {
        Ansatz {
            name: name.into(),
            space,
            over: over.iter().map(|s| Name::from(*s)).collect(),
            unknowns: unknowns.iter().map(|s| Name::from(*s)).collect(),
            targets: Vec::new(),
            definitions: Vec::new(),
            constraints: Vec::new(),
            assume_positive: false,
        }
    }

    pub fn target(mut self, lead: JetCoord, rhs: Expr) -> Self {
        self.targets.push((lead, rhs));
        self
    }

    pub fn define(mut self, var: &str, e: Expr) -> Self {
        self.definitions.push((Name::from(var), e));
        self
    }

    pub fn assume(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    /// The unknowns as dependents over the reduced variables.
    pub fn reduced_space(&self) -> JetSpace {
        JetSpace {
            independents: self.over.clone(),
            dependents: self.unknowns.clone(),
            order: self.space.order,
            chains: BTreeMap::new(),
        }
    }
}

/// Derivatives of the targets up to `order`, in ansatz variables, together
/// with the domain constraints they need (solvability determinants of
/// implicit invariants among them).
#[derive(Debug, Clone)]
pub struct AnsatzDerivatives {
    pub values: BTreeMap<JetCoord, Expr>,
    pub constraints: Vec<Constraint>,
}

pub fn ansatz_derivatives(
    a: &Ansatz,
    order: usize,
    ctx: &CheckContext,
) -> Result<AnsatzDerivatives, ReductionError> {
    let frame = Frame::new(a, ctx)?;
    let mut values = BTreeMap::new();
    let deps: Vec<&Name> = a.targets.iter().map(|(c, _)| &c.dep).collect();
    let mut layer: Vec<JetCoord> = deps.iter().map(|d| JetCoord::base((*d).clone())).collect();
    layer.dedup();
    for _ in 0..=order {
        let mut next = Vec::new();
        for c in &layer {
            if values.contains_key(c) {
                continue;
            }
            let v = frame.value(c)?;
            if frame.unresolved(&v).is_empty() && !v.contains_any(&|s| s.as_jet() == Some(c)) {
                values.insert(c.clone(), frame.eliminate(&v));
            }
            for x in &a.space.independents {
                next.push(c.with(x));
            }
        }
        next.sort();
        next.dedup();
        layer = next;
    }
    Ok(AnsatzDerivatives {
        values,
        constraints: frame.constraints.iter().map(|c| eliminate_constraint(&frame, c)).collect(),
    })
}

fn eliminate_constraint(frame: &Frame, c: &Constraint) -> Constraint {
    Constraint {
        expr: frame.eliminate(&c.expr),
        relation: c.relation,
    }
}

/// Residuals of the original equations and of the ansatz compatibility
/// conditions, in ansatz variables.
fn frame_residuals(
    frame: &Frame,
    original: &EquationSystem,
) -> Result<(Vec<(String, Expr)>, Vec<Constraint>), ReductionError> {
    let mut residuals = Vec::new();
    for eq in &original.equations {
        residuals.push((eq.name.clone(), frame.express(&eq.residual())?));
    }
    residuals.extend(frame.compatibility()?);
    let mut cs = frame.constraints.clone();
    for c in &original.constraints {
        push_unique(
            &mut cs,
            Constraint {
                expr: frame.express(&c.expr)?,
                relation: c.relation,
            },
        );
    }
    Ok((residuals, cs))
}

/// Check "candidate + ansatz => original": every original equation and every
/// compatibility condition of the ansatz vanishes on the candidate manifold.
pub fn verify_reduction(
    a: &Ansatz,
    original: &EquationSystem,
    candidate: &ReducedSystem,
    ctx: &CheckContext,
) -> Result<CheckReport, ReductionError> {
    if let Some(u) = candidate
        .space()
        .dependents
        .iter()
        .find(|d| !a.unknowns.contains(d))
    {
        return Err(ReductionError::Malformed(format!(
            "candidate unknown `{u}` is not an unknown of the ansatz"
        )));
    }
    let frame = Frame::new(a, ctx)?;
    let (residuals, cs) = frame_residuals(&frame, original)?;
    let rules = candidate.system.rules();
    let space = a.reduced_space();
    let on = |e: &Expr| -> Result<Expr, ReductionError> {
        let r = restrict_with(e, &space, &rules, RestrictLimits::default())?;
        Ok(frame.eliminate(&r))
    };
    let mut out = Vec::new();
    for (label, r) in residuals {
        let r = on(&r)?;
        let left = frame.unresolved(&r);
        if !left.is_empty() {
            let names: Vec<String> = left.iter().map(|c| c.to_string()).collect();
            return Err(ReductionError::UnreducedVariable(format!(
                "`{label}` still contains {}",
                names.join(", ")
            )));
        }
        out.push((label, r));
    }
    let mut constraints = Vec::new();
    for c in cs.iter().chain(candidate.system.constraints.iter()) {
        push_unique(
            &mut constraints,
            Constraint {
                expr: on(&c.expr)?,
                relation: c.relation,
            },
        );
    }
    let mut report = zero_test_all(out, &constraints, ctx);
    report.notes.extend(candidate.notes.iter().cloned());
    Ok(report)
}

/// Formal compatibility of an overdetermined first-order system
/// u_{x_i} = R_i, optionally through implicit invariants w = W.
pub fn check_overdetermined(
    space: &JetSpace,
    assignments: &[(JetCoord, Expr)],
    definitions: &[(Name, Expr)],
    constraints: &[Constraint],
    ctx: &CheckContext,
) -> Result<CheckReport, ReductionError> {
    let Some((first, _)) = assignments.first() else {
        return Err(ReductionError::Malformed("no assignments".into()));
    };
    let dep = first.dep.clone();
    for x in &space.independents {
        let c = JetCoord::new(dep.clone(), [x.clone()]);
        if !assignments.iter().any(|(l, _)| *l == c) {
            return Err(ReductionError::Malformed(format!("{c} is not assigned")));
        }
    }
    if let Some((l, _)) = assignments.iter().find(|(l, _)| l.dep != dep || l.order() != 1) {
        return Err(ReductionError::Malformed(format!(
            "{l} is not a first derivative of `{dep}`"
        )));
    }
    let a = Ansatz {
        name: "overdetermined".into(),
        space: space.clone(),
        over: definitions.iter().map(|(w, _)| w.clone()).collect(),
        unknowns: Vec::new(),
        targets: assignments.to_vec(),
        definitions: definitions.to_vec(),
        constraints: constraints.to_vec(),
        assume_positive: false,
    };
    let frame = Frame::new(&a, ctx)?;
    let residuals: Vec<(String, Expr)> = frame
        .compatibility()?
        .into_iter()
        .map(|(l, r)| (l, frame.eliminate(&r)))
        .collect();
    let cs: Vec<Constraint> = frame
        .constraints
        .iter()
        .map(|c| eliminate_constraint(&frame, c))
        .collect();
    Ok(zero_test_all(residuals, &cs, ctx))
}
