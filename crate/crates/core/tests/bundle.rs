use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use symred::jet::Operator;
use symred::numeric::SolutionForm;
use symred::parser::{parse_problem, ParseError, ProblemBundle};

fn problems_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn load(name: &str) -> ProblemBundle {
    let src = std::fs::read_to_string(problems_dir().join(name)).unwrap();
    parse_problem(&src).unwrap_or_else(|e| panic!("{name}: {e}"))
}

// A canonical text dump: every resolved item with printed expressions.
fn describe(b: &ProblemBundle) -> String {
    let mut s = String::new();
    for (n, sp) in &b.spaces {
        let _ = writeln!(
            s,
            "space {n}: ({}; {}) order {}",
            sp.independents.join(", "),
            sp.dependents.join(", "),
            sp.order
        );
        for (p, along) in &sp.chains {
            for (x, e) in along {
                let _ = writeln!(s, "  D[{x}] {p} = {e}");
            }
        }
    }
    let _ = writeln!(s, "params: {}", b.params.join(", "));
    for c in &b.param_constraints {
        let _ = writeln!(s, "  assume {c}");
    }
    let _ = writeln!(s, "functions: {}", b.functions.join(", "));
    for sys in &b.systems {
        let _ = writeln!(s, "equation {} on {}", sys.name, sys.space);
        for e in &sys.system.equations {
            let _ = writeln!(s, "  {}: {} = {}", e.name, e.lead, e.rhs);
        }
    }
    for op in &b.operators {
        let check = op
            .check
            .as_ref()
            .map(|(m, sys)| format!(" check {} on {sys}", m.as_str()))
            .unwrap_or_default();
        let _ = writeln!(s, "operator {}{check} expect {}", op.name, op.expect);
        match &op.operator {
            Operator::Point(vf) => {
                for (x, e) in &vf.xi {
                    let _ = writeln!(s, "  xi {x} = {e}");
                }
                for (u, e) in &vf.eta {
                    let _ = writeln!(s, "  eta {u} = {e}");
                }
            }
            Operator::Canonical(c) => {
                for (u, e) in &c.characteristic {
                    let _ = writeln!(s, "  char {u} = {e}");
                }
            }
        }
    }
    for a in &b.ansatze {
        let an = &a.ansatz;
        let _ = writeln!(
            s,
            "ansatz {} over ({}) unknowns ({})",
            an.name,
            an.over.join(", "),
            an.unknowns.join(", ")
        );
        for (c, e) in &an.targets {
            let _ = writeln!(s, "  {c} = {e}");
        }
        for (w, e) in &an.definitions {
            let _ = writeln!(s, "  where {w} = {e}");
        }
        for c in &an.constraints {
            let _ = writeln!(s, "  assume {c}");
        }
    }
    for r in &b.reduced {
        let _ = writeln!(s, "reduced {} for {} expect {}", r.reduced.name, r.ansatz, r.expect);
        for e in &r.reduced.system.equations {
            let _ = writeln!(s, "  {}: {} = {}", e.name, e.lead, e.rhs);
        }
    }
    for sol in &b.solutions {
        let _ = writeln!(s, "solution {} of {} expect {}", sol.solution.name, sol.equation, sol.expect);
        match &sol.solution.form {
            SolutionForm::Explicit(v) => {
                for (u, e) in v {
                    let _ = writeln!(s, "  {u} = {e}");
                }
            }
            SolutionForm::QuadratureBacked { assignments, integrals } => {
                for q in integrals {
                    let _ = writeln!(s, "  {}(x) = int from {} of {} d{}", q.symbol, q.lower, q.integrand, q.var);
                }
                for (u, e) in assignments {
                    let _ = writeln!(s, "  {u} = {e}");
                }
            }
            SolutionForm::Implicit { relations, outputs } => {
                for r in relations {
                    let _ = writeln!(s, "  solve {}: {} = 0", r.unknown, r.residual);
                }
                for (u, e) in outputs {
                    let _ = writeln!(s, "  {u} = {e}");
                }
            }
        }
        let _ = writeln!(
            s,
            "  tolerance {:e} h {:e} bindings {} fd {}",
            sol.plan.tolerance, sol.plan.h, sol.bindings, sol.fd
        );
    }
    for bt in &b.backlund {
        let _ = writeln!(s, "backlund {} expect {}", bt.relation.name, bt.expect);
        for (c, e) in &bt.relation.relations {
            let _ = writeln!(s, "  {c} = {e}");
        }
    }
    for o in &b.overdetermined {
        let _ = writeln!(s, "overdetermined {} expect {}", o.name, o.expect);
        for (c, e) in &o.assignments {
            let _ = writeln!(s, "  {c} = {e}");
        }
    }
    for n in &b.novelty {
        let _ = writeln!(
            s,
            "novelty {} algebra ({}) family ({}) t {} expect {}",
            n.name,
            n.algebra.join(", "),
            n.family.join(", "),
            n.t,
            n.expect
        );
    }
    s
}

const BUNDLES: &[&str] = &[
    "eq2.prob",
    "eq3.prob",
    "eq4.prob",
    "eq6.prob",
    "eq38.prob",
    "ode32.prob",
    "sg_deformed.prob",
];

#[test]
fn shipped_bundles_match_golden_dumps() {
    let update = std::env::var_os("SYMRED_UPDATE_GOLDEN").is_some();
    for name in BUNDLES {
        let got = describe(&load(name));
        let path = golden_dir().join(format!("{name}.txt"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &got).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(got, want, "{name} no longer matches {}", path.display());
    }
}

#[test]
fn every_shipped_bundle_is_listed() {
    let mut found: Vec<String> = std::fs::read_dir(problems_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".prob"))
        .collect();
    found.sort();
    let mut listed: Vec<String> = BUNDLES.iter().map(|s| s.to_string()).collect();
    listed.sort();
    assert_eq!(found, listed);
}

#[test]
fn eq2_bundle_contents() {
    let b = load("eq2.prob");
    let e = &b.system("eq2").unwrap().system.equations[0];
    assert_eq!(format!("{} = {}", e.lead, e.rhs), "u[x2,x2] = 1/(exp(u[x1]) - C)");
    assert!(b.operator("D").is_some() && b.operator("Q").is_some());
}

#[test]
fn sg_bundle_promotes_u() {
    let b = load("sg_deformed.prob");
    let sp = b.space("promoted").unwrap();
    assert_eq!(sp.independents.join(","), "x1,x2,x3");
    assert_eq!(sp.dependents.join(","), "v1,v2");
    let op = b.operator("Qcond").unwrap();
    let Operator::Point(vf) = &op.operator else { panic!() };
    assert_eq!(vf.eta["v2"].to_string(), "sqrt(1 - k^2*v2^2)/k");
}

#[test]
fn crlf_and_lf_agree() {
    let src = std::fs::read_to_string(problems_dir().join("eq3.prob")).unwrap();
    let crlf = src.replace('\n', "\r\n");
    assert_eq!(describe(&parse_problem(&src).unwrap()), describe(&parse_problem(&crlf).unwrap()));
}

fn err(src: &str) -> ParseError {
    parse_problem(src).expect_err(src)
}

const SPACE: &str = "[space]\nindependent = x1, x2\ndependent = u\norder = 2\n";

#[test]
fn empty_file_is_malformed() {
    assert!(matches!(err(""), ParseError::MalformedSection { .. }));
    assert!(matches!(err("# only a comment\n"), ParseError::MalformedSection { .. }));
}

#[test]
fn undeclared_symbols_carry_positions() {
    let src = format!("{SPACE}[equation e]\neq = u[x1,x1] = q*u\n");
    match err(&src) {
        ParseError::UndeclaredSymbol { name, line, col } => {
            assert_eq!(name, "q");
            assert_eq!(line, 6);
            assert_eq!(col, 17);
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn duplicates_are_rejected() {
    let src = format!("{SPACE}[equation e]\neq = u[x1,x1] = u\n[equation e]\neq = u[x2,x2] = u\n");
    assert!(matches!(err(&src), ParseError::DuplicateName { .. }));
    let src = format!("{SPACE}[params]\nnames = a, a\n");
    assert!(matches!(err(&src), ParseError::DuplicateName { .. }));
    let src = format!("{SPACE}[equation e]\neq a = u[x1,x1] = u\neq a = u[x2,x2] = u\n");
    assert!(matches!(err(&src), ParseError::DuplicateName { .. }));
}

#[test]
fn structural_errors() {
    for src in [
        format!("{SPACE}[mystery m]\n"),
        format!("{SPACE}[equation e]\nfoo = 1\n"),
        format!("{SPACE}[equation e]\n"),
        format!("{SPACE}[equation e]\neq = u = u[x1]\n"),
        format!("{SPACE}[operator P]\nxi x1 = 1\ncheck = classical\nsystem = nowhere\n"),
        format!("{SPACE}[operator P]\nxi x1 = 1\nchar u = 1\n"),
        format!("{SPACE}[operator P]\ncombine = 1: Nope\n"),
        format!("{SPACE}[reduced r]\nansatz = none\neq = u[x1] = 0\n"),
        "independent = x\n".to_string(),
    ] {
        assert!(matches!(err(&src), ParseError::MalformedSection { .. }), "{src}");
    }
    let src = format!("{SPACE}[equation e]\neq = u[x1,x1] = (u\n");
    assert!(matches!(err(&src), ParseError::SyntaxError { line: 6, .. }));
    assert!(matches!(err("[space\n"), ParseError::SyntaxError { line: 1, .. }));
}

#[test]
fn combine_builds_linear_combinations() {
    let b = load("eq3.prob");
    let Operator::Point(vf) = &b.operator("halfQminusD").unwrap().operator else { panic!() };
    assert_eq!(vf.xi["x1"].to_string(), "-x1");
    assert_eq!(vf.eta["v1"].to_string(), "1");
    assert_eq!(vf.eta["v2"].to_string(), "-v2");
}

#[test]
fn parameter_assumptions_reach_every_system() {
    let b = load("sg_deformed.prob");
    for sys in &b.systems {
        assert!(sys.system.constraints.iter().any(|c| c.to_string() == "k != 0"), "{}", sys.name);
    }
    assert!(b.backlund[0].relation.constraints.iter().any(|c| c.to_string() == "k != 0"));
}
