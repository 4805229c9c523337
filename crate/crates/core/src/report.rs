//! Verdicts and the shared zero-testing harness used by every check.

use std::fmt;

use serde::Serialize;

use crate::expr::{
    derive_seed, is_zero, Constraint, Expr, Provenance, SampleDomain, Witness, ZeroOutcome,
    ZeroTestConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Pass < Inconclusive < Fail.
    pub fn worst(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Seed, tolerances and sampling domain for a check.
#[derive(Debug, Clone, Default)]
pub struct CheckContext {
    pub seed: u64,
    pub zero: ZeroTestConfig,
    pub domain: SampleDomain,
}

impl CheckContext {
    pub fn new(seed: u64) -> Self {
        CheckContext {
            seed,
            ..Default::default()
        }
    }

    pub fn with_domain(mut self, domain: SampleDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_tolerance(mut self, abs: f64, rel: f64) -> Self {
        self.zero.abs_tol = abs;
        self.zero.rel_tol = rel;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub label: String,
    pub residual: Expr,
    pub outcome: ZeroOutcome,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub residuals: Vec<ResidualReport>,
    /// Present whenever the verdict is Fail.
    pub witness: Option<Witness>,
    pub provenance: Option<Provenance>,
    pub seed: u64,
    pub tolerances: ZeroTestConfig,
    pub notes: Vec<String>,
}

impl CheckReport {
    /// Largest |residual| observed at accepted sample points.
    pub fn residual_max(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| match &r.outcome {
                ZeroOutcome::Zero { max_abs, .. } => *max_abs,
                ZeroOutcome::NonZero(w) => w.value.abs(),
                ZeroOutcome::Inconclusive { .. } => 0.0,
            })
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Combine several reports into one, keeping every residual.
    pub fn merge(parts: Vec<CheckReport>, seed: u64, tolerances: ZeroTestConfig) -> CheckReport {
        let mut out = CheckReport {
            verdict: Verdict::Pass,
            residuals: Vec::new(),
            witness: None,
            provenance: Some(Provenance::Symbolic),
            seed,
            tolerances,
            notes: Vec::new(),
        };
        for p in parts {
            out.verdict = out.verdict.worst(p.verdict);
            if out.witness.is_none() {
                out.witness = p.witness;
            }
            out.provenance = match (out.provenance, p.provenance) {
                (Some(Provenance::Symbolic), Some(Provenance::Symbolic)) => Some(Provenance::Symbolic),
                (Some(_), Some(_)) => Some(Provenance::Probabilistic),
                _ => None,
            };
            out.residuals.extend(p.residuals);
            out.notes.extend(p.notes);
        }
        if out.verdict != Verdict::Pass {
            out.provenance = None;
        }
        out
    }

    /// A report for a check that could not be run to a verdict.
    pub fn inconclusive(reason: impl Into<String>, seed: u64, tolerances: ZeroTestConfig) -> Self {
        CheckReport {
            verdict: Verdict::Inconclusive,
            residuals: Vec::new(),
            witness: None,
            provenance: None,
            seed,
            tolerances,
            notes: vec![reason.into()],
        }
    }
}

/// Zero-test each labelled residual on the context domain extended by
/// `constraints` and the residual's own natural domain.
pub fn zero_test_all(
    residuals: Vec<(String, Expr)>,
    constraints: &[Constraint],
    ctx: &CheckContext,
) -> CheckReport {
    let mut verdict = Verdict::Pass;
    let mut witness = None;
    let mut provenance = Provenance::Symbolic;
    let mut out = Vec::new();
    for (i, (label, res)) in residuals.into_iter().enumerate() {
        let mut domain = ctx.domain.clone();
        for c in constraints {
            domain.add_constraint(c.clone());
        }
        for c in Constraint::natural_domain(&res) {
            domain.add_constraint(c);
        }
        let outcome = is_zero(&res, &domain, derive_seed(ctx.seed, i as u64), &ctx.zero);
        match &outcome {
            ZeroOutcome::Zero { provenance: p, .. } => {
                if *p == Provenance::Probabilistic {
                    provenance = Provenance::Probabilistic;
                }
            }
            ZeroOutcome::NonZero(w) => {
                verdict = Verdict::Fail;
                if witness.is_none() {
                    witness = Some(w.clone());
                }
            }
            ZeroOutcome::Inconclusive { .. } => verdict = verdict.worst(Verdict::Inconclusive),
        }
        out.push(ResidualReport {
            label,
            residual: res,
            outcome,
        });
    }
    CheckReport {
        verdict,
        residuals: out,
        witness,
        provenance: (verdict == Verdict::Pass).then_some(provenance),
        seed: ctx.seed,
        tolerances: ctx.zero,
        notes: Vec::new(),
    }
}
