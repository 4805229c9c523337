//! Backlund relations between solutions of two equations.

use crate::expr::{Constraint, Expr, JetCoord};
use crate::jet::{total_derivative, JetSpace};
use crate::manifold::{restrict_with, Equation, ManifoldError, RestrictLimits};
use crate::report::{zero_test_all, CheckContext, CheckReport};

/// u_{x_i} = R_i(x, u, w, w-derivatives) linking solutions w of `source`
/// to solutions u of `target`.
#[derive(Debug, Clone)]
pub struct BacklundRelation {
    pub name: String,
    pub space: JetSpace,
    pub relations: Vec<(JetCoord, Expr)>,
    pub source: Vec<Equation>,
    pub target: Vec<Equation>,
    /// Branch choices honoured by the sampler.
    pub constraints: Vec<Constraint>,
}

/// Cross-derivative compatibility of the relations and the target residual,
/// both modulo the source equations and the relations themselves.
pub fn verify_backlund(bt: &BacklundRelation, ctx: &CheckContext) -> Result<CheckReport, ManifoldError> {
    let mut rules = bt.relations.clone();
    rules.extend(bt.source.iter().map(|e| (e.lead.clone(), e.rhs.clone())));
    let on = |e: &Expr| restrict_with(e, &bt.space, &rules, RestrictLimits::default());
    let mut residuals = Vec::new();
    for i in 0..bt.relations.len() {
        for j in i + 1..bt.relations.len() {
            let (a, ra) = &bt.relations[i];
            let (b, rb) = &bt.relations[j];
            let Some(l) = a.lcm(b) else { continue };
            let mut da = ra.clone();
            for v in l.quotient(a).unwrap() {
                da = total_derivative(&da, &v, &bt.space);
            }
            let mut db = rb.clone();
            for v in l.quotient(b).unwrap() {
                db = total_derivative(&db, &v, &bt.space);
            }
            residuals.push((format!("compat({a},{b})"), on(&(da - db))?));
        }
    }
    for eq in &bt.target {
        residuals.push((format!("target {}", eq.name), on(&eq.residual())?));
    }
    let mut cs = bt.constraints.clone();
    for e in bt.source.iter().chain(bt.target.iter()) {
        for c in Constraint::natural_domain(&e.rhs) {
            if !cs.contains(&c) {
                cs.push(c);
            }
        }
    }
    let cs: Vec<Constraint> = cs
        .into_iter()
        .map(|c| -> Result<Constraint, ManifoldError> {
            Ok(Constraint {
                expr: on(&c.expr)?,
                relation: c.relation,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(zero_test_all(residuals, &cs, ctx))
}
