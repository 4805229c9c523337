use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use symred_cli::main_with_args;

fn problems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn bundle(name: &str) -> String {
    problems().join(name).to_string_lossy().into_owned()
}

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["symred"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn temp_bundle(tag: &str, src: &str) -> String {
    let p = std::env::temp_dir().join(format!("symred-{}-{tag}.prob", std::process::id()));
    std::fs::write(&p, src).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn check_half_q_minus_d() {
    let r = run(&["check", &bundle("eq3.prob"), "--operator", "halfQminusD"]);
    assert_eq!(r.code, 0, "{}{}", r.out, r.err);
    assert!(r.out.contains("PASS"));
    assert!(r.out.contains("seed=0") && r.out.contains("abs=1e-9"));
}

#[test]
fn unknown_operator_is_a_usage_error() {
    let r = run(&["check", &bundle("eq3.prob"), "--operator", "bogus"]);
    assert_eq!(r.code, 3);
    assert!(r.err.contains("unknown operator"), "{}", r.err);
    assert!(r.out.is_empty());
}

#[test]
fn conditional_mode_on_deformed_system() {
    let r = run(&["check", &bundle("sg_deformed.prob"), "--operator", "Qcond", "--mode", "conditional"]);
    assert_eq!(r.code, 0, "{}", r.out);
    let r = run(&["check", &bundle("sg_deformed.prob"), "--operator", "QcondC1"]);
    assert_eq!(r.code, 1);
    assert!(r.out.contains("witness"));
}

#[test]
fn reduce_with_candidate() {
    let r = run(&["reduce", &bundle("ode32.prob"), "--ansatz", "logAnsatz", "--candidate", "eq36"]);
    assert_eq!(r.code, 0, "{}", r.out);
    let r = run(&["reduce", &bundle("ode32.prob"), "--ansatz", "logAnsatz", "--candidate", "eq36flip"]);
    assert_eq!(r.code, 1);
}

#[test]
fn reduce_derives_the_sine_gordon_pair() {
    let r = run(&["reduce", &bundle("sg_deformed.prob"), "--ansatz", "eq16"]);
    assert_eq!(r.code, 0, "{}", r.out);
    assert!(r.out.contains("phi2[x2] = sin(phi1)"), "{}", r.out);
    assert!(r.out.contains("phi1[x1] = phi2"), "{}", r.out);
}

#[test]
fn degenerate_reduction_reports_the_term() {
    let r = run(&["reduce", &bundle("eq2.prob"), "--ansatz", "degenerate"]);
    assert_eq!(r.code, 1);
    assert!(r.out.contains("non-eliminable term"), "{}", r.out);
}

#[test]
fn verify_solutions_and_backlund() {
    let r = run(&["verify", &bundle("eq4.prob"), "--solution", "eq5"]);
    assert_eq!(r.code, 0, "{}", r.out);
    assert!(r.out.contains("residual_max="));
    let r = run(&["verify", &bundle("sg_deformed.prob"), "--backlund", "eq18"]);
    assert_eq!(r.code, 0, "{}", r.out);
    let r = run(&["verify", &bundle("eq6.prob"), "--solution", "implicitTheta", "--fd"]);
    assert_eq!(r.code, 0, "{}", r.out);
    assert!(r.out.contains("finite-difference"));
    let r = run(&["verify", &bundle("sg_deformed.prob"), "--backlund", "nope"]);
    assert_eq!(r.code, 3);
}

#[test]
fn fd_flag_on_explicit_solution() {
    let r = run(&["verify", &bundle("eq38.prob"), "--solution", "eq38fd"]);
    assert_eq!(r.code, 0, "{}", r.out);
    assert!(r.out.contains("provenance=finite_difference"));
    assert!(r.out.contains("residual=1e-4"), "{}", r.out);
}

#[test]
fn parse_errors_exit_3() {
    let p = temp_bundle("bad", "[space]\nindependent = x\ndependent = u\n[equation e]\neq = u[x] = y\n");
    let r = run(&["check", &p]);
    assert_eq!(r.code, 3);
    assert!(r.err.contains("undeclared symbol `y`"), "{}", r.err);
    let r = run(&["check", "/nonexistent/file.prob"]);
    assert_eq!(r.code, 3);
    let r = run(&["frobnicate"]);
    assert_eq!(r.code, 3);
    let r = run(&["check", &bundle("eq3.prob"), "--seed", "5..1"]);
    assert_eq!(r.code, 3);
}

#[test]
fn inconclusive_exit_code() {
    // The assumptions leave no admissible sample points.
    let p = temp_bundle(
        "empty",
        "[space]\nindependent = x\ndependent = u\n[params]\nnames = k\nassume = k > 1\nassume = k < -1\n\
         [equation e]\neq = u[x] = k*sqrt(u)\n[operator P]\neta u = 1\ncheck = classical\nsystem = e\n",
    );
    let r = run(&["check", &p]);
    assert_eq!(r.code, 2, "{}", r.out);
    assert!(r.out.contains("INCONCLUSIVE"));
}

#[test]
fn help_exits_zero() {
    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("paper-suite"));
}

#[test]
fn paper_suite_passes() {
    let r = run(&["paper-suite", &problems().to_string_lossy()]);
    assert_eq!(r.code, 0, "{}\n{}", r.out, r.err);
    assert!(r.out.contains("0 not as expected"));
}

fn json_lines(out: &str) -> Vec<serde_json::Value> {
    out.lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l}: {e}")))
        .collect()
}

#[test]
fn json_lines_schema_is_stable() {
    let r = run(&["paper-suite", &problems().to_string_lossy(), "--format", "json-lines"]);
    assert_eq!(r.code, 0);
    let rows = json_lines(&r.out);
    assert!(rows.len() >= 30);
    let keys: BTreeSet<&str> = ["case", "kind", "verdict", "expected", "residual_max", "seed", "tolerances", "provenance"]
        .into_iter()
        .collect();
    let mut summary = String::new();
    for row in &rows {
        let obj = row.as_object().unwrap();
        assert_eq!(obj.keys().map(|k| k.as_str()).collect::<BTreeSet<_>>(), keys);
        assert!(obj["residual_max"].is_number());
        summary.push_str(&format!(
            "{} {} {} {} {} {}\n",
            obj["case"].as_str().unwrap(),
            obj["kind"].as_str().unwrap(),
            obj["verdict"].as_str().unwrap(),
            obj["expected"].as_str().unwrap(),
            obj["seed"],
            obj["tolerances"]
        ));
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/paper_suite.jsonl.txt");
    if std::env::var_os("SYMRED_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &summary).unwrap();
    }
    assert_eq!(summary, std::fs::read_to_string(&golden).unwrap());
}

#[test]
fn verdicts_are_stable_across_seeds() {
    let r = run(&["paper-suite", &problems().to_string_lossy(), "--seed", "1..5", "--format", "json-lines"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let rows = json_lines(&r.out);
    let per_seed = rows.len() / 5;
    assert_eq!(rows.len(), per_seed * 5);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row["seed"].as_u64().unwrap(), 1 + (i / per_seed) as u64);
        let first = &rows[i % per_seed];
        assert_eq!(row["case"], first["case"]);
        assert_eq!(row["verdict"], first["verdict"], "{}", row["case"]);
    }
}

#[test]
fn seed_from_environment() {
    let exe = env!("CARGO_BIN_EXE_symred");
    let out = Command::new(exe)
        .args(["check", &bundle("eq3.prob"), "--operator", "D", "--format", "json-lines"])
        .env("SYMRED_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows = json_lines(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0]["seed"], 7);
    // The flag wins over the environment.
    let out = Command::new(exe)
        .args(["check", &bundle("eq3.prob"), "--operator", "D", "--seed", "2", "--format", "json-lines"])
        .env("SYMRED_SEED", "7")
        .output()
        .unwrap();
    let rows = json_lines(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0]["seed"], 2);
}

#[test]
fn reports_are_reproducible() {
    let a = run(&["verify", &bundle("eq4.prob"), "--seed", "3", "--format", "json-lines"]);
    let b = run(&["verify", &bundle("eq4.prob"), "--seed", "3", "--format", "json-lines"]);
    assert_eq!(a.out, b.out);
}
