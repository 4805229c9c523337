//! Sampled PDE residuals of solutions: exact symbolic derivatives for
//! explicit forms, central finite differences for implicit ones.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::{
    eval_numeric, substitute, Constraint, Env, EvalError, Expr, JetCoord, Name, ParameterBinding,
    Symbol,
};
use crate::manifold::EquationSystem;
use crate::report::Verdict;

use super::{solve_implicit, NumericError, QuadratureFunction, Solution, SolutionForm};


#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleLayout {
    Random,
    /// `per_axis` evenly spaced values per independent, endpoints included.
    Grid { per_axis: usize },
}

#[derive(Debug, Clone)]
pub struct SamplePlan {
    pub boxes: BTreeMap<Name, (f64, f64)>,
    pub default_box: (f64, f64),
    pub count: usize,
    pub layout: SampleLayout,
    pub seed: u64,
    pub max_draws: usize,
    pub h: f64,
    pub tolerance: f64,
    /// Strict constraints must hold by at least this much.
    pub margin: f64,
    pub constraints: Vec<Constraint>,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            boxes: BTreeMap::new(),
            default_box: (-1.0, 1.0),
            count: 64,
            layout: SampleLayout::Random,
            seed: 0,
            max_draws: 1024,
            h: 1e-4,
            tolerance: 1e-9,
            margin: 1e-4,
            constraints: Vec::new(),
        }
    }
}

impl SamplePlan {
    pub fn new(seed: u64) -> Self {
        SamplePlan {
            seed,
            ..Default::default()
        }
    }

    pub fn with_box(mut self, var: &str, lo: f64, hi: f64) -> Self {
        self.boxes.insert(Name::from(var), (lo, hi));
        self
    }

    pub fn with_grid(mut self, per_axis: usize) -> Self {
        self.layout = SampleLayout::Grid { per_axis };
        self
    }

    pub fn with_count(mut self, n: usize) -> Self {
        self.count = n;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn with_constraint(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    fn bounds(&self, v: &Name) -> (f64, f64) {
        self.boxes.get(v).copied().unwrap_or(self.default_box)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    Symbolic,
    FiniteDifference,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointResidual {
    pub index: usize,
    pub point: Vec<(String, f64)>,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NumericReport {
    pub solution: String,
    pub mode: ResidualMode,
    pub verdict: Verdict,
    pub max_residual: f64,
    pub tolerance: f64,
    pub points: Vec<PointResidual>,
    pub attempted: usize,
    pub skipped: usize,
    pub seed: u64,
    pub h: Option<f64>,
    pub notes: Vec<String>,
}

impl NumericReport {
    pub fn skip_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.skipped as f64 / self.attempted as f64
        }
    }
}

/// Evaluates a solution's dependent values at a point.
struct Evaluator<'a> {
    sol: &'a Solution,
    base: Env,
}

impl<'a> Evaluator<'a> {
    fn new(sol: &'a Solution, binding: &ParameterBinding) -> Self {
        let mut base = Env::default();
        base.bind(binding);
        if let SolutionForm::QuadratureBacked { integrals, .. } = &sol.form {
            for q in integrals {
                let f = QuadratureFunction::new(
                    q.integrand.clone(),
                    Symbol::Var(q.var.clone()),
                    q.lower,
                    base.clone(),
                );
                base.set_function(q.symbol.clone(), f);
            }
        }
        Evaluator { sol, base }
    }

    fn env_at(&self, point: &[(Symbol, f64)]) -> Env {
        let mut env = self.base.clone();
        for (s, v) in point {
            env.set(s.clone(), *v);
        }
        env
    }

    fn values(&self, env: &Env) -> Result<HashMap<Name, f64>, NumericError> {
        let mut env = env.clone();
        if let SolutionForm::Implicit { relations, .. } = &self.sol.form {
            for r in relations {
                let guess = eval_numeric(&r.guess, &env)?;
                let bracket = match &r.bracket {
                    Some((a, b)) => Some((eval_numeric(a, &env)?, eval_numeric(b, &env)?)),
                    None => None,
                };
                let s = Symbol::Var(r.unknown.clone());
                let v = solve_implicit(&r.residual, &s, &env, guess, bracket)?;
                env.set(s, v);
            }
        }
        let mut out = HashMap::new();
        for (dep, e) in self.sol.outputs() {
            out.insert(dep.clone(), eval_numeric(e, &env)?);
        }
        Ok(out)
    }
}

/// Dependent values of a solution at one point.
pub fn solution_values(
    sol: &Solution,
    point: &[(Symbol, f64)],
    binding: &ParameterBinding,
) -> Result<HashMap<Name, f64>, NumericError> {
    let ev = Evaluator::new(sol, binding);
    ev.values(&ev.env_at(point))
}

/// Parameters and opaque functions must be bound before sampling.
fn check_bound(sol: &Solution, exprs: &[Expr], binding: &ParameterBinding) -> Result<(), NumericError> {
    let mut all: Vec<&Expr> = exprs.iter().collect();
    all.extend(sol.outputs().iter().map(|(_, e)| e));
    let mut local_fns: Vec<&Name> = Vec::new();
    match &sol.form {
        SolutionForm::QuadratureBacked { integrals, .. } => {
            for q in integrals {
                all.push(&q.integrand);
                local_fns.push(&q.symbol);
            }
        }
        SolutionForm::Implicit { relations, .. } => all.extend(relations.iter().map(|r| &r.residual)),
        SolutionForm::Explicit(_) => {}
    }
    for e in all {
        for s in e.symbols() {
            if let Symbol::Param(p) = &s {
                if !binding.params.contains_key(p) {
                    return Err(EvalError::UnboundSymbol(p.to_string()).into());
                }
            }
        }
        for f in e.opaque_functions() {
            if !binding.functions.contains_key(&f) && !local_fns.contains(&&f) {
                return Err(EvalError::UnboundFunction(f.to_string()).into());
            }
        }
    }
    Ok(())
}

fn fatal(e: &NumericError) -> bool {
    matches!(
        e,
        NumericError::Eval(EvalError::UnboundSymbol(_)) | NumericError::Eval(EvalError::UnboundFunction(_))
    )
}

#[derive(Default)]
struct Tally {
    points: Vec<PointResidual>,
    attempted: usize,
    skipped: usize,
    notes: Vec<String>,
}

impl Tally {
    fn run(
        &mut self,
        p: Vec<(Symbol, f64)>,
        attempt: &mut impl FnMut(&[(Symbol, f64)]) -> Result<f64, NumericError>,
    ) -> Result<(), NumericError> {
        self.attempted += 1;
        match attempt(&p) {
            Ok(r) if r.is_finite() => self.points.push(PointResidual {
                index: self.attempted - 1,
                point: p.iter().map(|(s, v)| (s.to_string(), *v)).collect(),
                residual: r,
            }),
            Ok(_) => self.skipped += 1,
            Err(e) if fatal(&e) => return Err(e),
            Err(_) => self.skipped += 1,
        }
        Ok(())
    }
}

/// Sample points per the plan; `attempt` returns the residual at a point,
/// or an error that counts the point as skipped.
fn sample(
    plan: &SamplePlan,
    vars: &[Name],
    admissible: impl Fn(&[(Symbol, f64)]) -> bool,
    mut attempt: impl FnMut(&[(Symbol, f64)]) -> Result<f64, NumericError>,
) -> Result<Tally, NumericError> {
    let mut t = Tally::default();
    match plan.layout {
        SampleLayout::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            let mut draws = 0;
            while t.attempted < plan.count {
                if draws >= plan.max_draws {
                    t.notes.push(format!("draw budget of {} exhausted", plan.max_draws));
                    break;
                }
                draws += 1;
                let p: Vec<(Symbol, f64)> = vars
                    .iter()
                    .map(|v| {
                        let (lo, hi) = plan.bounds(v);
                        (Symbol::Var(v.clone()), rng.gen_range(lo..=hi))
                    })
                    .collect();
                if admissible(&p) {
                    t.run(p, &mut attempt)?;
                }
            }
        }
        SampleLayout::Grid { per_axis } => {
            let n = per_axis.max(1);
            let total = n.pow(vars.len() as u32);
            for k in 0..total {
                let mut rem = k;
                let p: Vec<(Symbol, f64)> = vars
                    .iter()
                    .map(|v| {
                        let i = rem % n;
                        rem /= n;
                        let (lo, hi) = plan.bounds(v);
                        let s = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
                        (Symbol::Var(v.clone()), lo + s * (hi - lo))
                    })
                    .collect();
                if admissible(&p) {
                    t.run(p, &mut attempt)?;
                } else {
                    t.attempted += 1;
                    t.skipped += 1;
                }
            }
        }
    }
    Ok(t)
}

fn verdict(points: &[PointResidual], attempted: usize, skipped: usize, tol: f64) -> (Verdict, f64) {
    let max = points.iter().map(|p| p.residual).fold(0.0, f64::max);
    if points.is_empty() || skipped as f64 > 0.2 * attempted as f64 {
        return (Verdict::Inconclusive, max);
    }
    (if max < tol { Verdict::Pass } else { Verdict::Fail }, max)
}

fn derivative(e: &Expr, c: &JetCoord) -> Expr {
    c.index()
        .iter()
        .fold(e.clone(), |acc, x| acc.diff(&Symbol::Var(x.clone())))
}

/// Substitute exact derivatives of an explicit (or quadrature-backed)
/// solution into the equations and evaluate at sampled points.
pub fn residual_explicit(
    sol: &Solution,
    eq: &EquationSystem,
    plan: &SamplePlan,
    binding: &ParameterBinding,
) -> Result<NumericReport, NumericError> {
    if matches!(sol.form, SolutionForm::Implicit { .. }) {
        return Err(NumericError::Unsupported(format!(
            "`{}` is implicit; use the finite-difference residual",
            sol.name
        )));
    }
    let values: HashMap<&Name, &Expr> = sol.outputs().iter().map(|(d, e)| (d, e)).collect();
    let mut residuals = Vec::new();
    for e in &eq.equations {
        let r = e.residual();
        let mut map = HashMap::new();
        for c in r.jet_coords() {
            let Some(u) = values.get(&c.dep) else {
                return Err(NumericError::Unsupported(format!(
                    "solution `{}` does not assign `{}`",
                    sol.name, c.dep
                )));
            };
            map.insert(Symbol::Jet(c.clone()), derivative(u, &c));
        }
        residuals.push(substitute(&r, &map));
    }
    check_bound(sol, &residuals, binding)?;
    let mut constraints = plan.constraints.clone();
    constraints.extend(sol.constraints.iter().cloned());
    constraints.extend(eq.constraints.iter().filter(|c| c.expr.jet_coords().is_empty()).cloned());
    for r in residuals.iter().chain(values.values().copied()) {
        constraints.extend(Constraint::natural_domain(r));
    }
    let ev = Evaluator::new(sol, binding);
    let admissible = |p: &[(Symbol, f64)]| {
        let env = ev.env_at(p);
        constraints.iter().all(|c| c.holds(&env, plan.margin))
    };
    let attempt = |p: &[(Symbol, f64)]| -> Result<f64, NumericError> {
        let env = ev.env_at(p);
        let mut worst = 0.0f64;
        for r in &residuals {
            worst = worst.max(eval_numeric(r, &env)?.abs());
        }
        Ok(worst)
    };
    let Tally { points, attempted, skipped, notes } =
        sample(plan, &eq.space.independents, admissible, attempt)?;
    let (verdict, max_residual) = verdict(&points, attempted, skipped, plan.tolerance);
    Ok(NumericReport {
        solution: sol.name.clone(),
        mode: ResidualMode::Symbolic,
        verdict,
        max_residual,
        tolerance: plan.tolerance,
        points,
        attempted,
        skipped,
        seed: plan.seed,
        h: None,
        notes,
    })
}

/// Finite-difference stencil weights for one coordinate, as
/// (offsets per independent, weight) pairs, unscaled by h.
fn stencil(c: &JetCoord, vars: &[Name]) -> Result<(Vec<(Vec<i32>, f64)>, i32), NumericError> {
    let pos = |v: &Name| vars.iter().position(|x| x == v).unwrap();
    let zero = vec![0i32; vars.len()];
    let at = |pairs: &[(usize, i32)]| {
        let mut o = zero.clone();
        for (i, k) in pairs {
            o[*i] += k;
        }
        o
    };
    match c.index() {
        [] => Ok((vec![(zero.clone(), 1.0)], 0)),
        [a] => {
            let i = pos(a);
            let w = [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)];
            Ok((w.iter().map(|(k, w)| (at(&[(i, *k)]), w / 12.0)).collect(), 1))
        }
        [a, b] if a == b => {
            let i = pos(a);
            let w = [(-2, -1.0), (-1, 16.0), (0, -30.0), (1, 16.0), (2, -1.0)];
            Ok((w.iter().map(|(k, w)| (at(&[(i, *k)]), w / 12.0)).collect(), 2))
        }
        [a, b] => {
            let (i, j) = (pos(a), pos(b));
            let w = [(1, 1, 0.25), (1, -1, -0.25), (-1, 1, -0.25), (-1, -1, 0.25)];
            Ok((w.iter().map(|(p, q, w)| (at(&[(i, *p), (j, *q)]), *w)).collect(), 2))
        }
        _ => Err(NumericError::Unsupported(format!(
            "finite differences only to second order, {c} requested"
        ))),
    }
}

/// Evaluate the equations with derivatives from central finite differences
/// of the solution on a stencil around each sample point.
pub fn residual_implicit(
    sol: &Solution,
    eq: &EquationSystem,
    plan: &SamplePlan,
    binding: &ParameterBinding,
) -> Result<NumericReport, NumericError> {
    let vars = &eq.space.independents;
    let residuals: Vec<Expr> = eq.equations.iter().map(|e| e.residual()).collect();
    let mut coords: Vec<JetCoord> = residuals.iter().flat_map(|r| r.jet_coords()).collect();
    coords.sort();
    coords.dedup();
    let mut stencils = Vec::new();
    for c in &coords {
        if !sol.outputs().iter().any(|(d, _)| *d == c.dep) {
            return Err(NumericError::Unsupported(format!(
                "solution `{}` does not assign `{}`",
                sol.name, c.dep
            )));
        }
        stencils.push((c.clone(), stencil(c, vars)?));
    }
    check_bound(sol, &residuals, binding)?;
    let mut constraints = plan.constraints.clone();
    constraints.extend(sol.constraints.iter().cloned());
    let ev = Evaluator::new(sol, binding);
    let h = plan.h;
    let admissible = |p: &[(Symbol, f64)]| {
        let env = ev.env_at(p);
        constraints.iter().all(|c| c.holds(&env, plan.margin))
    };
    let attempt = |p: &[(Symbol, f64)]| -> Result<f64, NumericError> {
        let mut cache: HashMap<Vec<i32>, HashMap<Name, f64>> = HashMap::new();
        let mut env = ev.env_at(p);
        for (c, (weights, order)) in &stencils {
            let mut acc = 0.0;
            for (off, w) in weights {
                if !cache.contains_key(off) {
                    let shifted: Vec<(Symbol, f64)> = p
                        .iter()
                        .zip(off)
                        .map(|((s, v), k)| (s.clone(), v + *k as f64 * h))
                        .collect();
                    let vals = ev.values(&ev.env_at(&shifted))?;
                    cache.insert(off.clone(), vals);
                }
                acc += w * cache[off][&c.dep];
            }
            env.set(Symbol::Jet(c.clone()), acc / h.powi(*order));
        }
        let mut worst = 0.0f64;
        for r in &residuals {
            worst = worst.max(eval_numeric(r, &env)?.abs());
        }
        Ok(worst)
    };
    let Tally { points, attempted, skipped, mut notes } = sample(plan, vars, admissible, attempt)?;
    notes.push(format!(
        "finite differences with h = {h:e}; skip rate {:.1}%",
        if attempted == 0 { 0.0 } else { 100.0 * skipped as f64 / attempted as f64 }
    ));
    let (verdict, max_residual) = verdict(&points, attempted, skipped, plan.tolerance);
    Ok(NumericReport {
        solution: sol.name.clone(),
        mode: ResidualMode::FiniteDifference,
        verdict,
        max_residual,
        tolerance: plan.tolerance,
        points,
        attempted,
        skipped,
        seed: plan.seed,
        h: Some(h),
        notes,
    })
}
