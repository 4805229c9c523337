//! Executes the checks named in a problem bundle and collects results.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use symred::expr::{derive_seed, ParameterBinding};
use symred::jet::Operator;
use symred::numeric::{residual_explicit, residual_implicit, NumericError, NumericReport};
use symred::parser::{CheckMode, NamedSolution, ProblemBundle};
use symred::reduction::{
    check_overdetermined, derive_reduction, systems_equivalent, verify_backlund, verify_reduction,
    Derivation, ReductionError,
};
use symred::report::{CheckContext, CheckReport, Verdict};
use symred::symmetry::{
    check_classical, check_conditional, check_lie_backlund, novelty_diagnostic, SymmetryError,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Manifold(#[from] symred::manifold::ManifoldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Classical,
    Conditional,
    LieBacklund,
    Reduction,
    Derivation,
    Solution,
    Backlund,
    Overdetermined,
    Novelty,
}

impl CaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Classical => "classical",
            CaseKind::Conditional => "conditional",
            CaseKind::LieBacklund => "lie_backlund",
            CaseKind::Reduction => "reduction",
            CaseKind::Derivation => "derivation",
            CaseKind::Solution => "solution",
            CaseKind::Backlund => "backlund",
            CaseKind::Overdetermined => "overdetermined",
            CaseKind::Novelty => "novelty",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Tolerances {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

impl std::fmt::Display for Tolerances {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        for (k, v) in [("abs", self.abs), ("rel", self.rel), ("residual", self.residual), ("h", self.h)] {
            if let Some(v) = v {
                parts.push(format!("{k}={v:e}"));
            }
        }
        write!(f, "{}", parts.join(","))
    }
}

/// One executed check. The serialized fields form the json-lines schema.
#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    pub case: String,
    pub kind: CaseKind,
    pub verdict: Verdict,
    pub expected: Verdict,
    pub residual_max: f64,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub provenance: Option<String>,
    #[serde(skip)]
    pub details: Vec<String>,
}

impl CaseResult {
    pub fn ok(&self) -> bool {
        self.verdict == self.expected
    }

    fn from_check(case: String, kind: CaseKind, expected: Verdict, r: &CheckReport) -> Self {
        let mut details = Vec::new();
        for res in &r.residuals {
            if !res.outcome.is_zero() {
                details.push(format!("residual {}: {}", res.label, res.residual));
            }
        }
        if let Some(w) = &r.witness {
            let pt: Vec<String> = w.point.iter().map(|(s, v)| format!("{s}={v:.6}")).collect();
            details.push(format!("witness value {:e} at {}", w.value, pt.join(", ")));
        }
        details.extend(r.notes.iter().cloned());
        CaseResult {
            case,
            kind,
            verdict: r.verdict,
            expected,
            residual_max: r.residual_max(),
            seed: r.seed,
            tolerances: Tolerances {
                abs: Some(r.tolerances.abs_tol),
                rel: Some(r.tolerances.rel_tol),
                ..Default::default()
            },
            provenance: r.provenance.map(|p| p.to_string()),
            details,
        }
    }

    /// Human-readable rendering; no stability guarantee.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<13} {:<28} {:<14} residual_max={:.3e} seed={} tol[{}]",
            self.verdict.to_string(),
            self.case,
            self.kind.as_str(),
            self.residual_max,
            self.seed,
            self.tolerances
        );
        if let Some(p) = &self.provenance {
            let _ = write!(s, " provenance={p}");
        }
        if self.expected != Verdict::Pass {
            let _ = write!(s, " expected={}", self.expected);
        }
        for d in &self.details {
            for line in d.lines() {
                let _ = write!(s, "\n    {line}");
            }
        }
        s
    }
}

/// Overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub fd: bool,
    pub mode: Option<CheckMode>,
}

pub struct Runner<'a> {
    pub bundle: &'a ProblemBundle,
    /// Prefix for case names, usually the bundle's file stem.
    pub prefix: String,
    pub seed: u64,
    pub overrides: Overrides,
}

impl<'a> Runner<'a> {
    pub fn new(bundle: &'a ProblemBundle, prefix: impl Into<String>, seed: u64) -> Self {
        Runner {
            bundle,
            prefix: prefix.into(),
            seed,
            overrides: Overrides::default(),
        }
    }

    pub fn with_overrides(mut self, o: Overrides) -> Self {
        self.overrides = o;
        self
    }

    fn ctx(&self) -> CheckContext {
        let c = CheckContext::new(self.seed);
        match self.overrides.tol {
            Some(t) => c.with_tolerance(t, t),
            None => c,
        }
    }

    fn case(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}/{name}", self.prefix)
        }
    }

    pub fn operator(&self, name: &str) -> Result<CaseResult, RunError> {
        let op = self.bundle.operator(name).ok_or_else(|| RunError::UnknownName {
            kind: "operator",
            name: name.into(),
        })?;
        let (mode, sys) = match &op.check {
            Some((m, s)) => (self.overrides.mode.unwrap_or(*m), s.clone()),
            None => {
                return Err(RunError::Usage(format!(
                    "operator `{name}` names no system to check against"
                )))
            }
        };
        let sys = &self.bundle.system(&sys).expect("validated by the loader").system;
        let ctx = self.ctx();
        let (kind, report) = match (mode, &op.operator) {
            (CheckMode::Classical, Operator::Point(vf)) => (CaseKind::Classical, check_classical(vf, sys, &ctx)?),
            (CheckMode::Conditional, Operator::Point(vf)) => {
                (CaseKind::Conditional, check_conditional(vf, sys, &ctx)?)
            }
            (CheckMode::LieBacklund, Operator::Canonical(c)) => {
                (CaseKind::LieBacklund, check_lie_backlund(c, sys, &ctx)?)
            }
            (CheckMode::LieBacklund, Operator::Point(vf)) => {
                let c = vf.characteristic(&sys.space);
                (CaseKind::LieBacklund, check_lie_backlund(&c, sys, &ctx)?)
            }
            (m, Operator::Canonical(_)) => {
                return Err(RunError::Usage(format!(
                    "operator `{name}` is canonical; mode {} needs a point operator",
                    m.as_str()
                )))
            }
        };
        Ok(CaseResult::from_check(self.case(name), kind, op.expect, &report))
    }

    /// With a candidate: verify it. Without: derive the reduced system.
    pub fn reduction(&self, ansatz: &str, candidate: Option<&str>) -> Result<CaseResult, RunError> {
        let a = self.bundle.ansatz(ansatz).ok_or_else(|| RunError::UnknownName {
            kind: "ansatz",
            name: ansatz.into(),
        })?;
        let eq = a
            .equation
            .as_ref()
            .ok_or_else(|| RunError::Usage(format!("ansatz `{ansatz}` names no equation")))?;
        let original = &self.bundle.system(eq).expect("validated by the loader").system;
        let ctx = self.ctx();
        if let Some(c) = candidate {
            let cand = self.bundle.reduced_system(c).ok_or_else(|| RunError::UnknownName {
                kind: "reduced system",
                name: c.into(),
            })?;
            if cand.ansatz != ansatz {
                return Err(RunError::Usage(format!(
                    "reduced system `{c}` belongs to ansatz `{}`",
                    cand.ansatz
                )));
            }
            let r = verify_reduction(&a.ansatz, original, &cand.reduced, &ctx)?;
            return Ok(CaseResult::from_check(self.case(c), CaseKind::Reduction, cand.expect, &r));
        }
        let expected = a.derive.unwrap_or(Verdict::Pass);
        let case = self.case(ansatz);
        match derive_reduction(&a.ansatz, original, &ctx)? {
            Derivation::Reduced { system, basis } => {
                let mut parts = Vec::new();
                let mut details = vec![format!("derived system `{}`:", system.name)];
                for e in &system.system.equations {
                    details.push(format!("  {} = {}", e.lead, e.rhs));
                }
                let basis: Vec<String> = basis.iter().map(|b| b.to_string()).collect();
                details.push(format!("basis: {}", basis.join(", ")));
                // Cross-checks: the derived system reduces the original, and
                // agrees with the shipped candidate both ways.
                parts.push(verify_reduction(&a.ansatz, original, &system, &ctx)?);
                if let Some(c) = &a.compare {
                    let cand = self.bundle.reduced_system(c).expect("validated by the loader");
                    let eqv = systems_equivalent(&system, &cand.reduced, &ctx);
                    details.push(format!("equivalent to `{c}`: {}", eqv.verdict));
                    parts.push(eqv);
                }
                let merged = CheckReport::merge(parts, ctx.seed, ctx.zero);
                let mut out = CaseResult::from_check(case, CaseKind::Derivation, expected, &merged);
                for d in out.details {
                    if !details.contains(&d) {
                        details.push(d);
                    }
                }
                out.details = details;
                Ok(out)
            }
            Derivation::Failure(f) => Ok(CaseResult {
                case,
                kind: CaseKind::Derivation,
                verdict: Verdict::Fail,
                expected,
                residual_max: 0.0,
                seed: ctx.seed,
                tolerances: Tolerances {
                    abs: Some(ctx.zero.abs_tol),
                    rel: Some(ctx.zero.rel_tol),
                    ..Default::default()
                },
                provenance: None,
                details: vec![f.message],
            }),
        }
    }

    pub fn solution(&self, name: &str) -> Result<CaseResult, RunError> {
        let s = self.bundle.solution(name).ok_or_else(|| RunError::UnknownName {
            kind: "solution",
            name: name.into(),
        })?;
        let sys = &self.bundle.system(&s.equation).expect("validated by the loader").system;
        let fd = s.fd || self.overrides.fd;
        let mut worst: Option<NumericReport> = None;
        let mut verdict = Verdict::Pass;
        let mut details = Vec::new();
        for (k, binding) in bindings(s, self.seed).into_iter().enumerate() {
            let mut plan = s.plan.clone();
            plan.seed = derive_seed(self.seed, k as u64);
            if let Some(t) = self.overrides.tol {
                plan.tolerance = t;
            }
            if fd && !s.fd && self.overrides.tol.is_none() {
                plan.tolerance = plan.tolerance.max(1e-4);
            }
            let r = if fd {
                residual_implicit(&s.solution, sys, &plan, &binding.1)?
            } else {
                residual_explicit(&s.solution, sys, &plan, &binding.1)?
            };
            verdict = verdict.worst(r.verdict);
            details.push(format!(
                "binding {}: {} max={:.3e} points={} skipped={}/{}",
                binding.0,
                r.verdict,
                r.max_residual,
                r.points.len(),
                r.skipped,
                r.attempted
            ));
            for n in &r.notes {
                details.push(format!("  {n}"));
            }
            if worst.as_ref().is_none_or(|w| r.max_residual > w.max_residual) {
                worst = Some(r);
            }
        }
        let w = worst.expect("at least one binding");
        if fd {
            details.push(format!(
                "finite-difference residuals: stencil error O(h^2) with h={:e}",
                w.h.unwrap_or(s.plan.h)
            ));
        }
        Ok(CaseResult {
            case: self.case(name),
            kind: CaseKind::Solution,
            verdict,
            expected: s.expect,
            residual_max: w.max_residual,
            seed: self.seed,
            tolerances: Tolerances {
                residual: Some(w.tolerance),
                h: w.h,
                ..Default::default()
            },
            provenance: (verdict == Verdict::Pass)
                .then(|| if fd { "finite_difference" } else { "numeric" }.to_string()),
            details,
        })
    }

    pub fn backlund(&self, name: &str) -> Result<CaseResult, RunError> {
        let b = self.bundle.backlund_relation(name).ok_or_else(|| RunError::UnknownName {
            kind: "Backlund relation",
            name: name.into(),
        })?;
        let r = verify_backlund(&b.relation, &self.ctx())?;
        Ok(CaseResult::from_check(self.case(name), CaseKind::Backlund, b.expect, &r))
    }

    pub fn overdetermined(&self, name: &str) -> Result<CaseResult, RunError> {
        let o = self.bundle.overdetermined_system(name).ok_or_else(|| RunError::UnknownName {
            kind: "overdetermined system",
            name: name.into(),
        })?;
        let r = check_overdetermined(&o.space, &o.assignments, &o.definitions, &o.constraints, &self.ctx())?;
        Ok(CaseResult::from_check(self.case(name), CaseKind::Overdetermined, o.expect, &r))
    }

    pub fn novelty(&self, name: &str) -> Result<CaseResult, RunError> {
        let n = self.bundle.novelty_case(name).ok_or_else(|| RunError::UnknownName {
            kind: "novelty case",
            name: name.into(),
        })?;
        let point = |op: &str| match &self.bundle.operator(op).expect("validated by the loader").operator {
            Operator::Point(vf) => vf.clone(),
            Operator::Canonical(_) => unreachable!("the loader admits point operators only"),
        };
        let algebra: Vec<_> = n.algebra.iter().map(|a| (a.clone(), point(a))).collect();
        let family: Vec<_> = n.family.iter().map(|f| point(f)).collect();
        let sys = &self.bundle.system(&n.equation).expect("validated by the loader").system;
        let ctx = self.ctx();
        let d = novelty_diagnostic(&algebra, &family, n.t, sys, &ctx)?;
        let parts: Vec<CheckReport> = d
            .verdicts
            .iter()
            .chain(d.equation_verdicts.iter())
            .map(|(_, r)| r.clone())
            .collect();
        let merged = CheckReport::merge(parts, ctx.seed, ctx.zero);
        let mut out = CaseResult::from_check(self.case(name), CaseKind::Novelty, n.expect, &merged);
        out.verdict = if d.conclusion { Verdict::Pass } else { Verdict::Fail };
        out.provenance = if d.conclusion { merged.provenance.map(|p| p.to_string()) } else { None };
        let mut details = vec![format!("s = {}, t = {}, conclusion = {}", d.s, d.t, d.conclusion)];
        for (op, r) in &d.verdicts {
            details.push(format!("{op} preserves the constraint system: {}", r.verdict));
        }
        for (op, r) in &d.equation_verdicts {
            details.push(format!("{op} preserves the equation: {}", r.verdict));
        }
        for a in &d.assumptions {
            details.push(format!("assumed: {a}"));
        }
        details.extend(out.details);
        out.details = details;
        Ok(out)
    }

    /// Every check a bundle declares, in a fixed order.
    pub fn all(&self) -> Result<Vec<CaseResult>, RunError> {
        let b = self.bundle;
        let mut out = Vec::new();
        for op in b.operators.iter().filter(|o| o.check.is_some()) {
            out.push(self.operator(&op.name)?);
        }
        for n in &b.novelty {
            out.push(self.novelty(&n.name)?);
        }
        for a in b.ansatze.iter().filter(|a| a.derive.is_some()) {
            out.push(self.reduction(&a.ansatz.name, None)?);
        }
        for r in &b.reduced {
            out.push(self.reduction(&r.ansatz, Some(&r.reduced.name))?);
        }
        for s in &b.solutions {
            out.push(self.solution(&s.solution.name)?);
        }
        for bt in &b.backlund {
            out.push(self.backlund(&bt.relation.name)?);
        }
        for o in &b.overdetermined {
            out.push(self.overdetermined(&o.name)?);
        }
        Ok(out)
    }
}

/// Parameter bindings for a solution: the fixed values plus, per binding,
/// draws from the declared ranges (sign shared across `flip`).
pub fn bindings(s: &NamedSolution, seed: u64) -> Vec<(String, ParameterBinding)> {
    if s.ranges.is_empty() {
        return vec![("fixed".into(), s.binding.clone())];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0b1d));
    (0..s.bindings)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let mut b = s.binding.clone();
            let mut label = Vec::new();
            for (p, (lo, hi)) in &s.ranges {
                let mut v = rng.gen_range(*lo..*hi);
                if s.flip.contains(p) {
                    v *= sign;
                }
                label.push(format!("{p}={v:.4}"));
                b = b.with(p, v);
            }
            (label.join(","), b)
        })
        .collect()
}

/// 0 all Pass, 1 any Fail, 2 otherwise any Inconclusive.
pub fn exit_code<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> i32 {
    let v = verdicts.into_iter().fold(Verdict::Pass, |a, b| a.worst(*b));
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    }
}
