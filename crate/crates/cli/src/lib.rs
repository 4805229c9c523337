//! Command-line front end for symred: configuration, case execution and
//! report rendering. The binary is a thin wrapper over this crate.

pub mod app;
pub mod run;

pub use app::{main_with_args, Format, SeedSpec};
pub use run::{exit_code, CaseKind, CaseResult, Overrides, RunError, Runner, Tolerances};
