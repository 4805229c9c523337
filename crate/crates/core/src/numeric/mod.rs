//! Floating-point validation of closed-form and implicit solutions.

mod quadrature;
mod residual;
mod solve;

use thiserror::Error;

use crate::expr::{Constraint, EvalError, Expr, Name};

pub use quadrature::{integrate, quadrature, Quadrature, QuadratureConfig, QuadratureFunction};
pub use residual::{
    residual_explicit, residual_implicit, solution_values, NumericReport, PointResidual,
    ResidualMode, SampleLayout, SamplePlan,
};
pub use solve::solve_implicit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("tolerance not met: value {value}, error estimate {error:e}")]
    ToleranceNotMet { value: f64, error: f64 },
    #[error("no convergence: last iterate {last}, residual {residual:e}")]
    NoConvergence { last: f64, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// An integral term: `symbol(x)` stands for the integral of `integrand`
/// (in `var`) from `lower` to x.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTerm {
    pub symbol: Name,
    pub integrand: Expr,
    pub var: Name,
    pub lower: f64,
}

/// A scalar relation solved numerically for `unknown`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitRelation {
    pub unknown: Name,
    pub residual: Expr,
    pub guess: Expr,
    pub bracket: Option<(Expr, Expr)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolutionForm {
    /// Dependent variables as expressions in the independents.
    Explicit(Vec<(Name, Expr)>),
    QuadratureBacked {
        assignments: Vec<(Name, Expr)>,
        integrals: Vec<QuadratureTerm>,
    },
    /// Relations solved in order, then outputs evaluated with the solved
    /// unknowns in scope.
    Implicit {
        relations: Vec<ImplicitRelation>,
        outputs: Vec<(Name, Expr)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub name: String,
    pub form: SolutionForm,
    pub constraints: Vec<Constraint>,
}

impl Solution {
    pub fn new(name: impl Into<String>, form: SolutionForm) -> Self {
        Solution {
            name: name.into(),
            form,
            constraints: Vec::new(),
        }
    }

    pub fn with_constraints(mut self, cs: impl IntoIterator<Item = Constraint>) -> Self {
        self.constraints.extend(cs);
        self
    }

    pub fn outputs(&self) -> &[(Name, Expr)] {
        match &self.form {
            SolutionForm::Explicit(a) => a,
            SolutionForm::QuadratureBacked { assignments, .. } => assignments,
            SolutionForm::Implicit { outputs, .. } => outputs,
        }
    }
}
