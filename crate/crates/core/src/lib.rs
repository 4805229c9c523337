//! Symmetry reduction toolkit for nonlinear PDEs.

pub mod expr;
pub mod jet;
pub mod manifold;
pub mod numeric;
pub mod parser;
pub mod reduction;
pub mod report;
pub mod symmetry;
