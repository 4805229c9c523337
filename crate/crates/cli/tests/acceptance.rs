//! One line per acceptance criterion. Runs without the libtest harness so the
//! lines always reach the output; exits non-zero if any criterion fails.

#[path = "../../core/tests/props/mod.rs"]
mod props;

use std::path::Path;
use std::time::{Duration, Instant};

use symred::jet::Operator;
use symred::numeric::{SampleLayout, SolutionForm};
use symred::parser::{parse_problem, ProblemBundle};
use symred::report::Verdict;
use symred_cli::{CaseResult, Runner};

const ZERO_TOL: f64 = 1e-9;
const PROPERTY_CASES: u32 = 128;

fn load(file: &str) -> ProblemBundle {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(file);
    let src = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_problem(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn runner<'a>(b: &'a ProblemBundle, file: &str, seed: u64) -> Runner<'a> {
    Runner::new(b, file.trim_end_matches(".prob"), seed)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

struct Outcome {
    ok: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { ok: true, notes: Vec::new() }
    }

    fn require(&mut self, cond: bool, what: impl Into<String>) {
        if !cond {
            self.ok = false;
            self.notes.push(format!("NOT {}", what.into()));
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    /// Verdict, residual bound and runtime bound for one case.
    fn case(&mut self, r: &CaseResult, want: Verdict, bound: Option<f64>, limit: Duration, took: Duration) {
        self.require(r.verdict == want, format!("{} is {} (got {})", r.case, want, r.verdict));
        if let Some(b) = bound {
            self.require(r.residual_max < b, format!("{} residual {:.3e} < {b:e}", r.case, r.residual_max));
        }
        self.require(took < limit, format!("{} ran in {took:.2?} < {limit:?}", r.case));
        self.note(format!("{} {} res={:.1e} {took:.2?}", r.case, r.verdict, r.residual_max));
    }
}

fn printed(op: &Operator, which: &str, var: &str) -> String {
    match op {
        Operator::Point(vf) => match which {
            "xi" => vf.xi(var).to_string(),
            _ => vf.eta(var).to_string(),
        },
        Operator::Canonical(c) => c.characteristic.get(var).map(|e| e.to_string()).unwrap_or_default(),
    }
}

fn criterion1() -> Outcome {
    let mut o = Outcome::new();
    let b = load("eq3.prob");
    let op = &b.operator("halfQminusD").unwrap().operator;
    // (Q - D)/2 with D = 2x1 d1 + x2 d2 + v2 dv2, Q = (x2 + 2C v2) d2 + 2 dv1 - v2 dv2.
    for (which, var, want) in [("xi", "x1", "-x1"), ("xi", "x2", "C*v2"), ("eta", "v1", "1"), ("eta", "v2", "-v2")] {
        let got = printed(op, which, var);
        o.require(got == want, format!("{which} {var} = {want} (got {got})"));
    }
    let (r, t) = timed(|| runner(&b, "eq3.prob", 0).operator("halfQminusD").unwrap());
    o.require(r.tolerances.abs == Some(ZERO_TOL), "zero-test tolerance 1e-9");
    o.case(&r, Verdict::Pass, Some(ZERO_TOL), Duration::from_secs(1), t);
    o
}

fn criterion2() -> Outcome {
    let mut o = Outcome::new();
    let b = load("sg_deformed.prob");
    let q = &b.operator("Qcond").unwrap().operator;
    o.require(printed(q, "eta", "v1") == "k*cos(x3)", "Qcond eta v1 = k cos x3");
    o.require(printed(q, "eta", "v2") == "sqrt(1 - k^2*v2^2)/k", "Qcond eta v2 = sqrt(1 - k^2 v2^2)/k");
    let p = &b.operator("QcondC1").unwrap().operator;
    o.require(printed(p, "eta", "v1") == "1 + k*cos(x3)", "perturbed operator adds C1 = 1");
    let run = runner(&b, "sg_deformed.prob", 0);
    let (r, t) = timed(|| run.operator("Qcond").unwrap());
    o.require(r.kind.as_str() == "conditional", "Qcond checked as conditional");
    o.case(&r, Verdict::Pass, Some(ZERO_TOL), Duration::from_secs(1), t);
    let (r, t) = timed(|| run.operator("QcondC1").unwrap());
    o.case(&r, Verdict::Fail, None, Duration::from_secs(1), t);
    o.require(r.details.iter().any(|d| d.starts_with("witness")), "numeric witness reported");
    o
}

fn criterion3() -> Outcome {
    let mut o = Outcome::new();
    let b = load("ode32.prob");
    o.require(printed(&b.operator("Q2").unwrap().operator, "", "u") == "F(u + ln(u[x1]))", "Q2 = F(u + ln u_1)");
    o.require(b.functions.iter().any(|f| &**f == "F"), "F is opaque");
    o.require(
        printed(&b.operator("Q2mutant").unwrap().operator, "", "u") == "F(u + u[x1])",
        "mutant = F(u + u_1)",
    );
    let run = runner(&b, "ode32.prob", 0);
    let (rs, t) = timed(|| ["Q1", "Q2", "Q2mutant"].map(|n| run.operator(n).unwrap()));
    for (r, want) in rs.iter().zip([Verdict::Pass, Verdict::Pass, Verdict::Fail]) {
        o.require(r.kind.as_str() == "lie_backlund", format!("{} checked as Lie-Backlund", r.case));
        o.case(r, want, None, Duration::from_secs(2), t);
    }
    o
}

fn criterion4() -> Outcome {
    let mut o = Outcome::new();
    let limit = Duration::from_secs(5);
    for (file, ansatz, candidate) in [
        ("eq3.prob", "derivative", "system4"),
        ("sg_deformed.prob", "eq16", "eq17"),
        ("ode32.prob", "logAnsatz", "eq36"),
    ] {
        let b = load(file);
        let run = runner(&b, file, 0);
        let (r, t) = timed(|| run.reduction(ansatz, Some(candidate)).unwrap());
        o.case(&r, Verdict::Pass, Some(ZERO_TOL), limit, t);
        if ansatz == "derivative" {
            continue;
        }
        // Derivation, then equivalence with the candidate in both directions.
        let (r, t) = timed(|| run.reduction(ansatz, None).unwrap());
        o.require(
            b.ansatz(ansatz).unwrap().compare.as_deref() == Some(candidate),
            format!("{ansatz} compared against {candidate}"),
        );
        o.require(
            r.details.iter().any(|d| d == &format!("equivalent to `{candidate}`: PASS")),
            format!("derived {ansatz} system equivalent to {candidate}"),
        );
        o.case(&r, Verdict::Pass, Some(ZERO_TOL), limit, t);
    }
    o
}

fn criterion5() -> Outcome {
    let mut o = Outcome::new();
    let b = load("eq4.prob");
    let s = b.solution("eq5").unwrap();
    o.require(s.bindings == 8, "8 parameter bindings");
    o.require(s.plan.count == 64, "64 points per binding");
    let (r, t) = timed(|| runner(&b, "eq4.prob", 0).solution("eq5").unwrap());
    let per_binding: Vec<&String> = r.details.iter().filter(|d| d.starts_with("binding")).collect();
    o.require(per_binding.len() == 8, "8 bindings reported");
    o.require(
        per_binding.iter().all(|d| d.contains("points=64 skipped=0/64")),
        "64 in-domain points per binding",
    );
    o.case(&r, Verdict::Pass, Some(1e-9), Duration::from_secs(5), t);

    let b = load("eq38.prob");
    let run = runner(&b, "eq38.prob", 0);
    for (name, bound) in [("eq38", 1e-8), ("eq38unit", 1e-12)] {
        let form = &b.solution(name).unwrap().solution.form;
        o.require(matches!(form, SolutionForm::QuadratureBacked { .. }), format!("{name} quadrature-backed"));
        let (r, t) = timed(|| run.solution(name).unwrap());
        o.case(&r, Verdict::Pass, Some(bound), Duration::from_secs(5), t);
    }
    o
}

fn criterion6() -> Outcome {
    let mut o = Outcome::new();
    let b = load("eq6.prob");
    let s = b.solution("implicitTheta").unwrap();
    o.require(s.plan.h == 1e-4 && s.plan.tolerance == 1e-4, "h = tol = 1e-4");
    o.require(s.plan.layout == SampleLayout::Grid { per_axis: 5 }, "5x5 grid");
    o.require(s.plan.boxes.get("x") == Some(&(0.0, 1.0)), "x in [0, 1]");
    o.require(s.plan.boxes.get("t") == Some(&(0.5, 1.0)), "t in [0.5, 1]");
    for (p, v) in [("alpha", 1.0), ("C", 0.5), ("C1", 2.0)] {
        o.require(s.binding.params.get(p) == Some(&v), format!("{p} = {v}"));
    }
    let run = runner(&b, "eq6.prob", 0);
    let (r, t) = timed(|| run.solution("implicitTheta").unwrap());
    o.case(&r, Verdict::Pass, Some(1e-4), Duration::from_secs(5), t);
    let skip = r
        .details
        .iter()
        .find_map(|d| d.trim().strip_prefix("finite differences with h = 1e-4; skip rate "))
        .and_then(|p| p.trim_end_matches('%').parse::<f64>().ok());
    o.require(skip.is_some_and(|p| p < 20.0), format!("stencil skips < 20% (got {skip:?})"));
    o.require(r.details.iter().any(|d| d.contains("points=25")), "25 grid points");
    let (neg, t) = timed(|| run.solution("flippedTheta").unwrap());
    o.case(&neg, Verdict::Fail, None, Duration::from_secs(5), t);
    o.require(neg.residual_max >= 1e3 * 1e-4, "negative control >= 1e3 x tolerance");
    o
}

fn criterion7() -> Outcome {
    let mut o = Outcome::new();
    let b = load("sg_deformed.prob");
    let run = runner(&b, "sg_deformed.prob", 0);
    let (r, t) = timed(|| run.backlund("eq18").unwrap());
    o.require(r.details.iter().all(|d| !d.starts_with("residual")), "compatibility and target residuals zero");
    o.case(&r, Verdict::Pass, Some(ZERO_TOL), Duration::from_secs(2), t);
    let (r, t) = timed(|| run.backlund("eq18mutant").unwrap());
    o.case(&r, Verdict::Fail, None, Duration::from_secs(2), t);
    o
}

fn criterion8() -> Outcome {
    let mut o = Outcome::new();
    let b = load("eq3.prob");
    let (r, t) = timed(|| runner(&b, "eq3.prob", 0).overdetermined("afterEq5").unwrap());
    o.case(&r, Verdict::Pass, Some(ZERO_TOL), Duration::from_secs(5), t);
    o
}

fn criterion9() -> Outcome {
    let mut o = Outcome::new();
    let b = load("eq2.prob");
    for seed in 0..=4 {
        let run = runner(&b, "eq2.prob", seed);
        let good = run.novelty("scaling").unwrap();
        let bad = run.novelty("broken").unwrap();
        o.require(
            good.verdict == Verdict::Pass && good.details.iter().any(|d| d.contains("conclusion = true")),
            format!("seed {seed}: s = t + 1 instance concludes true"),
        );
        o.require(
            bad.verdict == Verdict::Fail && bad.details.iter().any(|d| d.contains("conclusion = false")),
            format!("seed {seed}: broken instance concludes false"),
        );
    }
    o.note("seeds 0-4 agree");
    o
}

fn criterion10() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    for (name, suite) in props::SUITES {
        let (res, t) = timed(|| suite(PROPERTY_CASES));
        match res {
            Ok(()) => o.note(format!("{name} {t:.2?}")),
            Err(e) => o.require(false, format!("{name}: {e}")),
        }
    }
    let total = start.elapsed();
    o.require(total < Duration::from_secs(60), format!("total {total:.2?} < 60s"));
    o.note(format!("{} suites x {PROPERTY_CASES} cases, total {total:.2?}", props::SUITES.len()));
    o
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("classical symmetry", criterion1),
        ("conditional symmetry", criterion2),
        ("Lie-Backlund symmetry", criterion3),
        ("reductions", criterion4),
        ("explicit and quadrature solutions", criterion5),
        ("implicit solution", criterion6),
        ("Backlund transformation", criterion7),
        ("overdetermined compatibility", criterion8),
        ("novelty diagnostic", criterion9),
        ("engine properties", criterion10),
    ];
    let mut failed = 0;
    for (i, (title, run)) in criteria.iter().enumerate() {
        let out = run();
        if !out.ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} [{}]",
            i + 1,
            if out.ok { "PASS" } else { "FAIL" },
            title,
            out.notes.join("; ")
        );
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
