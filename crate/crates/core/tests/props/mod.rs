//! Engine property suites, shared by the core tests and the acceptance run.

#![allow(dead_code)]

use std::collections::HashMap;
use std::fmt::Debug;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use symred::expr::{
    add, apply, eval_numeric, func, int, is_zero, mul, name, pow, rational, simplify, sym, Constraint, Env,
    Expr, Func, ParameterBinding, SampleDomain, Symbol, ZeroTestConfig,
};
use symred::jet::{total_derivative, JetSpace};
use symred::parser::{parse_expression, print_expression, Scope};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(sym(Symbol::var("x"))),
        Just(sym(Symbol::var("y"))),
        Just(sym(Symbol::param("a"))),
        Just(sym(Symbol::jet("u", &[]))),
        Just(sym(Symbol::jet("u", &["x"]))),
        Just(sym(Symbol::jet("u", &["y"]))),
        (-5i64..=5).prop_map(int),
        (-4i64..=4, 2i64..=5).prop_map(|(n, d)| rational(n, d)),
    ]
}

// Finite everywhere, so every sample point is usable.
pub fn smooth() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(add),
            prop::collection::vec(inner.clone(), 2..3).prop_map(mul),
            (inner.clone(), 0i64..=3).prop_map(|(b, n)| pow(b, int(n))),
            inner.clone().prop_map(|e| pow(add([int(1), pow(e, int(2))]), int(-1))),
            inner.clone().prop_map(|e| func(Func::Sin, e)),
            inner.clone().prop_map(|e| func(Func::Cos, e)),
            inner.clone().prop_map(|e| func(Func::Atan, e)),
            inner.clone().prop_map(|e| func(Func::Exp, func(Func::Sin, e))),
            inner.clone().prop_map(|e| func(Func::Sqrt, add([int(2), pow(e, int(2))]))),
            inner.clone().prop_map(|e| func(Func::Ln, add([int(1), pow(e, int(2))]))),
        ]
    })
}

// Anything the builders produce, opaque functions included.
pub fn any_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(add),
            prop::collection::vec(inner.clone(), 2..4).prop_map(mul),
            (inner.clone(), -3i64..=3).prop_map(|(b, n)| pow(b, int(n))),
            (inner.clone(), inner.clone()).prop_map(|(b, e)| pow(b, e)),
            (inner.clone(), -3i64..=3, 2i64..=3).prop_map(|(b, n, d)| pow(b, rational(n, d))),
            (inner.clone(), 0..Func::ALL.len()).prop_map(|(e, i)| func(Func::ALL[i], e)),
            (inner.clone(), 0u32..3).prop_map(|(e, k)| apply(name("F"), k, e)),
        ]
    })
}

pub fn scope() -> Scope {
    Scope::new(&["x", "y"], &["u"]).with_params(&["a"]).with_functions(&["F"])
}

fn space() -> JetSpace {
    JetSpace::new(&["x", "y"], &["u"], 6)
}

fn vanishes(e: &Expr, seed: u64) -> bool {
    let e = simplify(e);
    if e.is_zero() {
        return true;
    }
    let domain = SampleDomain::new().with_constraints(Constraint::natural_domain(&e));
    is_zero(&e, &domain, seed, &ZeroTestConfig::default()).is_zero()
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub fn simplify_idempotent(cases: u32) -> Result<(), String> {
    check(cases, any_expr(), |e| {
        let once = simplify(&e);
        prop_assert_eq!(simplify(&once), once);
        Ok(())
    })
}

pub fn parser_round_trip(cases: u32) -> Result<(), String> {
    check(cases, any_expr(), |e| {
        let text = print_expression(&e);
        let back = parse_expression(&text, &scope()).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e, "{}", text);
        Ok(())
    })
}

/// d/dx against a Richardson-extrapolated central difference; relative
/// error at most 1e-6 (absolute below magnitude 1).
pub fn diff_matches_fd(cases: u32) -> Result<(), String> {
    let point = (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0);
    check(cases, (smooth(), point), |(e, (x, y, a, u, ux, uy))| {
        let xs = Symbol::var("x");
        let d = e.diff(&xs);
        let mut values = HashMap::new();
        values.insert(Symbol::var("y"), y);
        values.insert(Symbol::param("a"), a);
        values.insert(Symbol::jet("u", &[]), u);
        values.insert(Symbol::jet("u", &["x"]), ux);
        values.insert(Symbol::jet("u", &["y"]), uy);
        let at = |xv: f64, f: &Expr| {
            let mut env = Env::new(&values, &ParameterBinding::new());
            env.set(xs.clone(), xv);
            eval_numeric(f, &env).unwrap()
        };
        let central = |h: f64| (at(x + h, &e) - at(x - h, &e)) / (2.0 * h);
        let h = 1e-3;
        let fd = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        let exact = at(x, &d);
        prop_assert!(
            (exact - fd).abs() <= 1e-6 * exact.abs().max(1.0),
            "{} at x={}: d={} fd={}",
            e,
            x,
            exact,
            fd
        );
        Ok(())
    })
}

pub fn total_derivatives_commute(cases: u32) -> Result<(), String> {
    check(cases, (smooth(), 0u64..1000), |(e, seed)| {
        let js = space();
        let (x, y) = (name("x"), name("y"));
        let xy = total_derivative(&total_derivative(&e, &x, &js), &y, &js);
        let yx = total_derivative(&total_derivative(&e, &y, &js), &x, &js);
        prop_assert!(vanishes(&add([xy, yx.neg()]), seed), "{}", e);
        Ok(())
    })
}

pub fn leibniz(cases: u32) -> Result<(), String> {
    check(cases, (smooth(), smooth(), 0u64..1000), |(f, g, seed)| {
        let js = space();
        let x = name("x");
        let lhs = total_derivative(&mul([f.clone(), g.clone()]), &x, &js);
        let rhs = add([
            mul([f.clone(), total_derivative(&g, &x, &js)]),
            mul([g.clone(), total_derivative(&f, &x, &js)]),
        ]);
        prop_assert!(vanishes(&add([lhs, rhs.neg()]), seed), "f={} g={}", f, g);
        Ok(())
    })
}

const TOKENS: &[&str] = &[
    "x", "y", "u", "u[x]", "u[x,y]", "a", "F", "F'", "sin", "ln", "(", ")", "[", "]", "+", "-", "*", "/", "^", ",",
    "1", "2.5", "1e-4", "0", "'", "zz", "=", "!=",
];

/// Random character noise and random token sequences; parsing may fail
/// but must not panic.
pub fn parser_fuzz(cases: u32) -> Result<(), String> {
    check(cases, "[xyuaFq0-9+*/^(), .'e\\[\\]-]{0,48}", |src| {
        let _ = parse_expression(&src, &scope());
        Ok(())
    })?;
    let soup = prop::collection::vec(prop::sample::select(TOKENS), 0..40);
    check(cases, soup, |toks| {
        let _ = parse_expression(&toks.join(" "), &scope());
        Ok(())
    })
}

pub type Suite = (&'static str, fn(u32) -> Result<(), String>);

pub const SUITES: &[Suite] = &[
    ("simplify idempotence", simplify_idempotent),
    ("diff vs finite differences", diff_matches_fd),
    ("D_i D_j commutativity", total_derivatives_commute),
    ("Leibniz rule", leibniz),
    ("parser round-trip", parser_round_trip),
    ("parser fuzz", parser_fuzz),
];
