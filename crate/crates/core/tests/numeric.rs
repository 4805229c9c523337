use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symred::expr::{int, name, Env, ExprFunction, JetCoord, ParameterBinding, Symbol};
use symred::jet::JetSpace;
use symred::manifold::{Equation, EquationSystem};
use symred::numeric::{
    quadrature, residual_explicit, residual_implicit, solve_implicit, ImplicitRelation,
    NumericError, QuadratureTerm, SamplePlan, Solution, SolutionForm,
};
use symred::parser::{parse_expression, Scope};
use symred::report::Verdict;

fn coord(dep: &str, idx: &[&str]) -> JetCoord {
    JetCoord::new(name(dep), idx.iter().map(|v| name(v)))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    while b - a > 1e-13 {
        let m = 0.5 * (a + b);
        if f(m).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn var(s: &str) -> Symbol {
    Symbol::Var(name(s))
}

#[test]
fn quadrature_basics() {
    let sc = Scope::new(&["x"], &[]);
    let p = |s: &str| parse_expression(s, &sc).unwrap();
    let env = Env::default();
    let q = quadrature(&int(1), &var("x"), 0.0, 1.0, &env).unwrap();
    assert!((q.value - 1.0).abs() < 1e-14);
    let q = quadrature(&p("sin(x)"), &var("x"), 0.0, std::f64::consts::PI, &env).unwrap();
    assert!((q.value - 2.0).abs() < 1e-10);
    let q = quadrature(&p("sin(cos(x))"), &var("x"), 0.0, 1.0, &env).unwrap();
    let oracle = simpson(|x| x.cos().sin(), 0.0, 1.0, 1_000_000);
    assert!((q.value - oracle).abs() < 1e-8);
    assert!(q.error >= 0.0 && (q.value - oracle).abs() <= q.error.max(1e-12));
}

#[test]
fn quadrature_domain_fault() {
    let sc = Scope::new(&["x"], &[]);
    let e = parse_expression("ln(x)", &sc).unwrap();
    assert!(matches!(
        quadrature(&e, &var("x"), -1.0, 1.0, &Env::default()),
        Err(NumericError::Eval(_))
    ));
}

fn theta_scope() -> Scope {
    Scope::new(&["x", "t"], &["w"])
        .with_params(&["C", "C1", "alpha"])
        .with_locals(&["theta", "W"])
}

const THETA: &str = "theta - alpha*t*(C1*exp(alpha*(x + C*theta)) - 1)/(C1*exp(alpha*(x + C*theta)) + 1)";

#[test]
fn implicit_scalar_solves() {
    let sc = theta_scope();
    let p = |s: &str| parse_expression(s, &sc).unwrap();
    let env = Env::default();
    let v = solve_implicit(&p("theta - 1/2"), &var("theta"), &env, 0.0, None).unwrap();
    assert_eq!(v, 0.5);

    let mut env = Env::default();
    for (s, v) in [("x", 0.3), ("t", 0.7)] {
        env.set(var(s), v);
    }
    for (s, v) in [("alpha", 1.0), ("C", 0.5), ("C1", 2.0)] {
        env.set(Symbol::Param(name(s)), v);
    }
    let got = solve_implicit(&p(THETA), &var("theta"), &env, 0.0, Some((-1.7, 1.7))).unwrap();
    let f = |th: f64| {
        let e = 2.0 * (0.3 + 0.5 * th).exp();
        th - 0.7 * (e - 1.0) / (e + 1.0)
    };
    let oracle = bisect(f, -0.7, 0.7);
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");

    let r = solve_implicit(&p("exp(theta) + 1"), &var("theta"), &Env::default(), 0.0, None);
    assert!(matches!(r, Err(NumericError::NoConvergence { .. })), "{r:?}");
}

fn eq35() -> (EquationSystem, Scope) {
    let js = JetSpace::new(&["x1", "x2"], &["u"], 2);
    let sc = js.scope().with_functions(&["F", "phi2", "I"]);
    let rhs = parse_expression("u[x1]^2*F(u + ln(u[x1]))", &sc).unwrap();
    let sys = EquationSystem::new(js, vec![Equation::new("wave", coord("u", &["x1", "x2"]), rhs)]).unwrap();
    (sys, sc)
}

fn func(body: &str) -> Arc<ExprFunction> {
    let sc = Scope::new(&["s"], &[]);
    Arc::new(ExprFunction::new(var("s"), parse_expression(body, &sc).unwrap()))
}

#[test]
fn explicit_identity_instance() {
    let (sys, sc) = eq35();
    let u = parse_expression("ln(x1 - x2) + phi2(x2)", &sc).unwrap();
    let sol = Solution::new("f1", SolutionForm::Explicit(vec![(name("u"), u)]));
    let b = ParameterBinding::new()
        .with_function("F", func("1"))
        .with_function("phi2", func("sin(3*s) + s^2"));
    let r = residual_explicit(&sol, &sys, &SamplePlan::new(0).with_tolerance(1e-12), &b).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{}", r.max_residual);
    assert_eq!(r.points.len(), 64);
}

#[test]
fn quadrature_backed_general_solution() {
    let (sys, sc) = eq35();
    let u = parse_expression("ln(x1 - I(x2)) + phi2(x2)", &sc).unwrap();
    let isc = Scope::new(&["s"], &[]).with_functions(&["F", "phi2"]);
    let sol = Solution::new(
        "general",
        SolutionForm::QuadratureBacked {
            assignments: vec![(name("u"), u)],
            integrals: vec![QuadratureTerm {
                symbol: name("I"),
                integrand: parse_expression("F(phi2(s))", &isc).unwrap(),
                var: name("s"),
                lower: 0.0,
            }],
        },
    );
    let b = ParameterBinding::new()
        .with_function("F", func("sin(s)"))
        .with_function("phi2", func("cos(s)"));
    let plan = SamplePlan::new(3).with_tolerance(1e-8);
    let r = residual_explicit(&sol, &sys, &plan, &b).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{}", r.max_residual);

    // The opposite sign on the integral is not a solution.
    let bad = Solution::new(
        "bad",
        SolutionForm::QuadratureBacked {
            assignments: vec![(name("u"), parse_expression("ln(x1 + I(x2)) + phi2(x2)", &sc).unwrap())],
            integrals: match sol.form {
                SolutionForm::QuadratureBacked { integrals, .. } => integrals,
                _ => unreachable!(),
            },
        },
    );
    assert_eq!(residual_explicit(&bad, &sys, &plan, &b).unwrap().verdict, Verdict::Fail);
}

fn ode_pair() -> (EquationSystem, Solution) {
    let js = JetSpace::new(&["w"], &["phi1", "phi2"], 1);
    let sc = js.scope().with_params(&["C1", "alpha"]);
    let p = |s: &str| parse_expression(s, &sc).unwrap();
    let sys = EquationSystem::new(
        js,
        vec![
            Equation::new("first", coord("phi2", &["w"]), p("phi2*exp(-phi1)")),
            Equation::new("second", coord("phi1", &["w"]), p("exp(-phi1) + phi2")),
        ],
    )
    .unwrap();
    let sol = Solution::new(
        "closed",
        SolutionForm::Explicit(vec![
            (
                name("phi1"),
                p("ln((C1^2*exp(2*alpha*w) - 1)/(2*alpha*C1*exp(alpha*w)))"),
            ),
            (
                name("phi2"),
                p("alpha*(C1*exp(alpha*w) - 1)/(C1*exp(alpha*w) + 1)"),
            ),
        ]),
    );
    (sys, sol)
}

#[test]
fn closed_form_solves_ode_pair() {
    let (sys, sol) = ode_pair();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..8 {
        // alpha*C1 > 0 keeps the logarithm's domain nonempty in the box.
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let alpha: f64 = sign * rng.gen_range(0.3..2.0);
        let c1: f64 = sign * rng.gen_range(0.5..3.0);
        let b = ParameterBinding::new().with("alpha", alpha).with("C1", c1);
        let plan = SamplePlan::new(k).with_box("w", -2.0, 2.0);
        let r = residual_explicit(&sol, &sys, &plan, &b).unwrap();
        assert_eq!(r.points.len(), 64, "{} {:?}", r.attempted, r.notes);
        assert_eq!(r.verdict, Verdict::Pass, "alpha {alpha} C1 {c1}: {}", r.max_residual);
    }
}

fn eq6(flip: bool) -> (EquationSystem, Solution, ParameterBinding, SamplePlan) {
    let js = JetSpace::new(&["x", "t"], &["w"], 2);
    let sc = theta_scope();
    let p = |s: &str| parse_expression(s, &sc).unwrap();
    let sys = EquationSystem::new(
        js,
        vec![Equation::new(
            "eq6",
            coord("w", &["t"]),
            p("-(w[x,x]/(w*(C*w + 1)) - (2*C*w + 1)*w[x]^2/(w*(C*w + 1))^2)"),
        )],
    )
    .unwrap();
    let theta = if flip { THETA.replacen("theta - ", "theta + ", 1) } else { THETA.to_string() };
    let r = "(C1*exp(alpha*(x + C*theta)) + 1)^2/(2*alpha^2*t*C1*exp(alpha*(x + C*theta)))";
    let sol = Solution::new(
        "implicit",
        SolutionForm::Implicit {
            relations: vec![
                ImplicitRelation {
                    unknown: name("theta"),
                    residual: p(&theta),
                    guess: int(0),
                    bracket: Some((p("-abs(alpha*t) - 1"), p("abs(alpha*t) + 1"))),
                },
                ImplicitRelation {
                    unknown: name("W"),
                    residual: p(&format!("C*W + 1 - W*{r}")),
                    guess: int(1),
                    bracket: None,
                },
            ],
            outputs: vec![(name("w"), p("W"))],
        },
    );
    let b = ParameterBinding::new().with("alpha", 1.0).with("C", 0.5).with("C1", 2.0);
    let plan = SamplePlan::new(0)
        .with_box("x", 0.0, 1.0)
        .with_box("t", 0.5, 1.0)
        .with_grid(5)
        .with_tolerance(1e-4)
        .with_step(1e-4);
    (sys, sol, b, plan)
}

#[test]
fn implicit_solution_of_eq6() {
    let (sys, sol, b, plan) = eq6(false);
    let r = residual_implicit(&sol, &sys, &plan, &b).unwrap();
    assert_eq!(r.attempted, 25);
    assert!(r.skip_rate() < 0.2);
    assert_eq!(r.verdict, Verdict::Pass, "{}", r.max_residual);
}

#[test]
fn corrupted_implicit_relation_fails_by_far() {
    let (sys, sol, b, plan) = eq6(true);
    let r = residual_implicit(&sol, &sys, &plan, &b).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.max_residual >= 1e3 * plan.tolerance, "{}", r.max_residual);
}

#[test]
fn constant_implicit_solution() {
    let js = JetSpace::new(&["x", "t"], &["u"], 1);
    let sc = js.scope().with_locals(&["c"]);
    let p = |s: &str| parse_expression(s, &sc).unwrap();
    let sys = EquationSystem::new(js, vec![Equation::new("static", coord("u", &["t"]), int(0))]).unwrap();
    let sol = Solution::new(
        "const",
        SolutionForm::Implicit {
            relations: vec![ImplicitRelation {
                unknown: name("c"),
                residual: p("c - 3/7"),
                guess: int(0),
                bracket: None,
            }],
            outputs: vec![(name("u"), p("c"))],
        },
    );
    let r = residual_implicit(&sol, &sys, &SamplePlan::new(0).with_tolerance(1e-4), &ParameterBinding::new()).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!(r.max_residual < 1e-10);
}

#[test]
fn explicit_and_fd_agree() {
    let (sys, sc) = eq35();
    let u = parse_expression("ln(x1 - x2) + phi2(x2)", &sc).unwrap();
    let sol = Solution::new("f1", SolutionForm::Explicit(vec![(name("u"), u)]));
    let b = ParameterBinding::new()
        .with_function("F", func("1"))
        .with_function("phi2", func("sin(s)"));
    let plan = SamplePlan::new(5)
        .with_box("x1", 2.0, 3.0)
        .with_box("x2", -1.0, 1.0)
        .with_tolerance(1e-4);
    let fd = residual_implicit(&sol, &sys, &plan, &b).unwrap();
    let ex = residual_explicit(&sol, &sys, &plan, &b).unwrap();
    assert_eq!(fd.points.len(), ex.points.len());
    let h = plan.h;
    for (a, e) in fd.points.iter().zip(&ex.points) {
        assert_eq!(a.point, e.point);
        assert!((a.residual - e.residual).abs() <= 100.0 * h * h, "{} {}", a.residual, e.residual);
    }
}

#[test]
fn reports_are_reproducible() {
    let (sys, sol) = ode_pair();
    let b = ParameterBinding::new().with("alpha", 0.7).with("C1", 1.5);
    let plan = SamplePlan::new(9);
    let a = residual_explicit(&sol, &sys, &plan, &b).unwrap();
    let c = residual_explicit(&sol, &sys, &plan, &b).unwrap();
    assert_eq!(
        a.points.iter().map(|p| p.residual.to_bits()).collect::<Vec<_>>(),
        c.points.iter().map(|p| p.residual.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn symbols_must_be_bound() {
    let (sys, sol) = ode_pair();
    let r = residual_explicit(&sol, &sys, &SamplePlan::new(0), &ParameterBinding::new());
    assert!(r.is_err());
}

