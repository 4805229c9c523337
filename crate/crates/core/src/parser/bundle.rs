//! Problem bundles: line-oriented `.prob` files with bracketed sections.
//!
//! See `docs/format.md` for the grammar.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use crate::expr::{eval_numeric, Constraint, Env, Expr, ExprFunction, JetCoord, Name, ParameterBinding, Symbol};
use crate::jet::{CanonicalOperator, JetSpace, Operator, VectorField};
use crate::manifold::{Equation, EquationSystem};
use crate::numeric::{ImplicitRelation, QuadratureTerm, SamplePlan, Solution, SolutionForm};
use crate::reduction::{Ansatz, BacklundRelation, ReducedSystem};
use crate::report::Verdict;

use super::expr::{parse_equation_at, parse_expression_at, Parser, Scope};
use super::lexer::Tok;
use super::ParseError;

pub const MAIN_SPACE: &str = "main";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    Classical,
    Conditional,
    LieBacklund,
}

impl CheckMode {
    pub fn parse(s: &str) -> Option<CheckMode> {
        match s {
            "classical" => Some(CheckMode::Classical),
            "conditional" => Some(CheckMode::Conditional),
            "lb" | "lie-backlund" => Some(CheckMode::LieBacklund),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CheckMode::Classical => "classical",
            CheckMode::Conditional => "conditional",
            CheckMode::LieBacklund => "lb",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedSystem {
    pub name: String,
    pub space: String,
    pub system: EquationSystem,
}

#[derive(Debug, Clone)]
pub struct NamedOperator {
    pub name: String,
    pub space: String,
    pub operator: Operator,
    /// Check run by the suite: mode and target system.
    pub check: Option<(CheckMode, String)>,
    pub expect: Verdict,
}

#[derive(Debug, Clone)]
pub struct NamedAnsatz {
    pub ansatz: Ansatz,
    /// The system the ansatz is meant to reduce.
    pub equation: Option<String>,
    /// Expected outcome of derive_reduction (Pass = a reduced system), if
    /// the suite should run it.
    pub derive: Option<Verdict>,
    /// Reduced system the derived one is cross-checked against.
    pub compare: Option<String>,
}

#[derive(Debug, Clone)]
pub struct NamedReduced {
    pub reduced: ReducedSystem,
    pub ansatz: String,
    pub expect: Verdict,
}

#[derive(Debug, Clone)]
pub struct NamedSolution {
    pub solution: Solution,
    pub equation: String,
    pub binding: ParameterBinding,
    /// Parameters drawn at random per binding.
    pub ranges: Vec<(Name, (f64, f64))>,
    pub bindings: usize,
    /// Parameters that share one random sign per binding.
    pub flip: Vec<Name>,
    pub plan: SamplePlan,
    pub fd: bool,
    pub expect: Verdict,
}

#[derive(Debug, Clone)]
pub struct NamedBacklund {
    pub relation: BacklundRelation,
    pub expect: Verdict,
}

#[derive(Debug, Clone)]
pub struct NamedOverdetermined {
    pub name: String,
    pub space: JetSpace,
    pub assignments: Vec<(JetCoord, Expr)>,
    pub definitions: Vec<(Name, Expr)>,
    pub constraints: Vec<Constraint>,
    pub expect: Verdict,
}

#[derive(Debug, Clone)]
pub struct NamedNovelty {
    pub name: String,
    pub equation: String,
    pub algebra: Vec<String>,
    pub family: Vec<String>,
    pub t: usize,
    pub expect: Verdict,
}

#[derive(Debug, Clone, Default)]
pub struct ProblemBundle {
    pub spaces: Vec<(String, JetSpace)>,
    pub params: Vec<Name>,
    pub param_constraints: Vec<Constraint>,
    pub functions: Vec<Name>,
    pub systems: Vec<NamedSystem>,
    pub operators: Vec<NamedOperator>,
    pub ansatze: Vec<NamedAnsatz>,
    pub reduced: Vec<NamedReduced>,
    pub solutions: Vec<NamedSolution>,
    pub backlund: Vec<NamedBacklund>,
    pub overdetermined: Vec<NamedOverdetermined>,
    pub novelty: Vec<NamedNovelty>,
}

impl ProblemBundle {
    pub fn space(&self, name: &str) -> Option<&JetSpace> {
        self.spaces.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn system(&self, name: &str) -> Option<&NamedSystem> {
        self.systems.iter().find(|s| s.name == name)
    }

    pub fn operator(&self, name: &str) -> Option<&NamedOperator> {
        self.operators.iter().find(|s| s.name == name)
    }

    pub fn ansatz(&self, name: &str) -> Option<&NamedAnsatz> {
        self.ansatze.iter().find(|s| s.ansatz.name == name)
    }

    pub fn reduced_system(&self, name: &str) -> Option<&NamedReduced> {
        self.reduced.iter().find(|s| s.reduced.name == name)
    }

    pub fn solution(&self, name: &str) -> Option<&NamedSolution> {
        self.solutions.iter().find(|s| s.solution.name == name)
    }

    pub fn backlund_relation(&self, name: &str) -> Option<&NamedBacklund> {
        self.backlund.iter().find(|s| s.relation.name == name)
    }

    pub fn overdetermined_system(&self, name: &str) -> Option<&NamedOverdetermined> {
        self.overdetermined.iter().find(|s| s.name == name)
    }

    pub fn novelty_case(&self, name: &str) -> Option<&NamedNovelty> {
        self.novelty.iter().find(|s| s.name == name)
    }

    fn scope(&self, space: &JetSpace) -> Scope {
        let mut sc = space.scope();
        sc.params.extend(self.params.iter().cloned());
        sc.functions.extend(self.functions.iter().cloned());
        sc
    }
}

// ---------------------------------------------------------------------------
// Raw structure

#[derive(Debug, Clone)]
struct Line {
    key: String,
    args: Vec<String>,
    value: Option<String>,
    line: usize,
    /// Column of the value's first character.
    col: usize,
}

#[derive(Debug, Clone)]
struct Section {
    kind: String,
    name: Option<String>,
    line: usize,
    lines: Vec<Line>,
}

impl Section {
    fn label(&self) -> String {
        match &self.name {
            Some(n) => format!("{} {n}", self.kind),
            None => self.kind.clone(),
        }
    }

    fn malformed(&self, message: impl Into<String>) -> ParseError {
        ParseError::MalformedSection {
            section: Some(self.label()),
            message: message.into(),
        }
    }

    fn name(&self) -> Result<&str, ParseError> {
        self.name.as_deref().ok_or_else(|| self.malformed("section needs a name"))
    }

    fn all(&self, key: &str) -> impl Iterator<Item = &Line> {
        let key = key.to_string();
        self.lines.iter().filter(move |l| l.key == key)
    }

    fn one(&self, key: &str) -> Result<Option<&Line>, ParseError> {
        let mut it = self.all(key);
        let first = it.next();
        if let Some(second) = it.next() {
            return Err(ParseError::DuplicateName {
                name: key.to_string(),
                line: second.line,
            });
        }
        Ok(first)
    }

    fn text(&self, key: &str) -> Result<Option<String>, ParseError> {
        match self.one(key)? {
            Some(l) => Ok(Some(l.val(self)?.trim().to_string())),
            None => Ok(None),
        }
    }

    fn require(&self, key: &str) -> Result<String, ParseError> {
        self.text(key)?
            .ok_or_else(|| self.malformed(format!("missing `{key}`")))
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ParseError> {
        for l in &self.lines {
            if !allowed.contains(&l.key.as_str()) {
                return Err(ParseError::MalformedSection {
                    section: Some(self.label()),
                    message: format!("unknown key `{}` at line {}", l.key, l.line),
                });
            }
        }
        Ok(())
    }

    fn expect(&self) -> Result<Verdict, ParseError> {
        match self.text("expect")?.as_deref() {
            None | Some("pass") => Ok(Verdict::Pass),
            Some("fail") => Ok(Verdict::Fail),
            Some("inconclusive") => Ok(Verdict::Inconclusive),
            Some(other) => Err(self.malformed(format!("expect must be pass, fail or inconclusive, not `{other}`"))),
        }
    }

    fn space_name(&self) -> Result<String, ParseError> {
        Ok(self.text("space")?.unwrap_or_else(|| MAIN_SPACE.to_string()))
    }
}

impl Line {
    fn val(&self, s: &Section) -> Result<&str, ParseError> {
        self.value
            .as_deref()
            .ok_or_else(|| s.malformed(format!("`{}` at line {} needs `= value`", self.key, self.line)))
    }

    fn arg(&self, s: &Section, i: usize) -> Result<&str, ParseError> {
        self.args.get(i).map(|a| a.as_str()).ok_or_else(|| {
            s.malformed(format!("`{}` at line {} is missing an argument", self.key, self.line))
        })
    }

    /// All arguments as one string, for keys whose argument may contain spaces.
    fn joined(&self, s: &Section) -> Result<String, ParseError> {
        self.arg(s, 0)?;
        Ok(self.args.join(" "))
    }

    fn no_args(&self, s: &Section) -> Result<(), ParseError> {
        if self.args.is_empty() {
            Ok(())
        } else {
            Err(s.malformed(format!("unexpected `{}` at line {}", self.args.join(" "), self.line)))
        }
    }

    fn expr(&self, s: &Section, scope: &Scope) -> Result<Expr, ParseError> {
        parse_expression_at(self.val(s)?, scope, self.line, self.col)
    }
}

fn split_sections(src: &str) -> Result<Vec<Section>, ParseError> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let text = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        if text.trim().is_empty() {
            continue;
        }
        let trimmed = text.trim();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let inner = rest.strip_suffix(']').ok_or_else(|| ParseError::SyntaxError {
                line,
                col: raw.len(),
                message: "section header must end with `]`".into(),
            })?;
            let words: Vec<&str> = inner.split_whitespace().collect();
            if words.is_empty() || words.len() > 2 {
                return Err(ParseError::MalformedSection {
                    section: None,
                    message: format!("bad section header at line {line}"),
                });
            }
            out.push(Section {
                kind: words[0].to_string(),
                name: words.get(1).map(|s| s.to_string()),
                line,
                lines: Vec::new(),
            });
            continue;
        }
        let Some(section) = out.last_mut() else {
            return Err(ParseError::MalformedSection {
                section: None,
                message: format!("line {line} is outside any section"),
            });
        };
        let (head, value, col) = match text.find('=') {
            Some(p) if !text[..p].ends_with(['!', '<', '>']) => {
                let v = &text[p + 1..];
                let lead = v.len() - v.trim_start().len();
                (&text[..p], Some(v.trim_end().to_string()), text[..p + 1 + lead].chars().count() + 1)
            }
            _ => (text, None, 0),
        };
        let mut words = head.split_whitespace().map(|s| s.to_string());
        let key = words.next().ok_or_else(|| ParseError::SyntaxError {
            line,
            col: 1,
            message: "missing key".into(),
        })?;
        if !key.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(ParseError::SyntaxError {
                line,
                col: text.find(|c: char| !c.is_whitespace()).unwrap_or(0) + 1,
                message: format!("bad key `{key}`"),
            });
        }
        section.lines.push(Line {
            key,
            args: words.collect(),
            value: value.map(|v| v.trim_start().to_string()),
            line,
            col,
        });
    }
    Ok(out)
}

/// Split at top-level commas (outside brackets).
fn split_list(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn names(s: &str) -> Vec<String> {
    split_list(s).into_iter().filter(|x| !x.is_empty()).collect()
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    c.next().is_some_and(|f| f.is_alphabetic() || f == '_') && c.all(|x| x.is_alphanumeric() || x == '_')
}

fn parse_constraint(src: &str, scope: &Scope, line: usize, col: usize) -> Result<Constraint, ParseError> {
    let mut p = Parser::new(src, scope, line, col)?;
    let lhs = p.expr()?;
    let rel = p.bump();
    let rhs = p.expr()?;
    p.finish()?;
    let diff = lhs.clone() - rhs.clone();
    let flip = rhs - lhs;
    match rel {
        Some(Tok::Gt) => Ok(Constraint::positive(diff)),
        Some(Tok::Ge) => Ok(Constraint::non_negative(diff)),
        Some(Tok::Lt) => Ok(Constraint::positive(flip)),
        Some(Tok::Le) => Ok(Constraint::non_negative(flip)),
        Some(Tok::Ne) => Ok(Constraint::non_zero(diff)),
        _ => Err(ParseError::SyntaxError {
            line,
            col,
            message: "expected a relation (>, >=, <, <=, !=)".into(),
        }),
    }
}

fn number(l: &Line, s: &Section) -> Result<f64, ParseError> {
    let e = parse_expression_at(l.val(s)?, &Scope::default(), l.line, l.col)?;
    eval_numeric(&e, &Env::default()).map_err(|e| ParseError::SyntaxError {
        line: l.line,
        col: l.col,
        message: format!("not a number: {e}"),
    })
}

fn numbers(l: &Line, s: &Section, n: usize) -> Result<Vec<f64>, ParseError> {
    let parts = split_list(l.val(s)?);
    if parts.len() != n {
        return Err(s.malformed(format!("line {} needs {n} comma-separated numbers", l.line)));
    }
    parts
        .iter()
        .map(|p| {
            let e = parse_expression_at(p, &Scope::default(), l.line, l.col)?;
            eval_numeric(&e, &Env::default()).map_err(|e| ParseError::SyntaxError {
                line: l.line,
                col: l.col,
                message: format!("not a number: {e}"),
            })
        })
        .collect()
}

fn positive_int(l: &Line, s: &Section) -> Result<usize, ParseError> {
    l.val(s)?
        .trim()
        .parse::<usize>()
        .map_err(|_| s.malformed(format!("line {} needs a nonnegative integer", l.line)))
}

fn flag(l: &Line, s: &Section) -> Result<bool, ParseError> {
    match l.val(s)?.trim() {
        "true" | "yes" => Ok(true),
        "false" | "no" => Ok(false),
        other => Err(s.malformed(format!("`{other}` is not true/false"))),
    }
}

/// A jet coordinate given as an expression, e.g. `u[x1]` or `v1`.
fn coordinate(src: &str, scope: &Scope, s: &Section, line: usize) -> Result<JetCoord, ParseError> {
    let e = parse_expression_at(src, scope, line, 1)?;
    match e.as_symbol() {
        Some(Symbol::Jet(c)) => Ok(c.clone()),
        _ => Err(s.malformed(format!("`{src}` at line {line} is not a jet coordinate"))),
    }
}

fn solved_equation(
    l: &Line,
    s: &Section,
    scope: &Scope,
    space: &JetSpace,
    label: String,
) -> Result<Equation, ParseError> {
    let (lhs, rhs) = parse_equation_at(l.val(s)?, scope, l.line, l.col)?;
    match lhs.as_symbol() {
        Some(Symbol::Jet(c)) if space.hosts(c) && c.order() > 0 => Ok(Equation::new(label, c.clone(), rhs)),
        _ => Err(s.malformed(format!(
            "equation at line {} is not in solved form (left side must be a derivative)",
            l.line
        ))),
    }
}

fn equations(s: &Section, scope: &Scope, space: &JetSpace, base: &str) -> Result<Vec<Equation>, ParseError> {
    let lines: Vec<&Line> = s.all("eq").collect();
    if lines.is_empty() {
        return Err(s.malformed("no `eq` lines"));
    }
    let single = lines.len() == 1;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        let label = match l.args.as_slice() {
            [] if single => base.to_string(),
            [] => format!("{base}.{}", i + 1),
            [name] => name.clone(),
            _ => return Err(s.malformed(format!("line {}: `eq [label] = lhs = rhs`", l.line))),
        };
        if !seen.insert(label.clone()) {
            return Err(ParseError::DuplicateName { name: label, line: l.line });
        }
        out.push(solved_equation(l, s, scope, space, label)?);
    }
    Ok(out)
}

fn constraints(s: &Section, scope: &Scope) -> Result<Vec<Constraint>, ParseError> {
    s.all("assume")
        .map(|l| {
            l.no_args(s)?;
            parse_constraint(l.val(s)?, scope, l.line, l.col)
        })
        .collect()
}

fn system_error(s: &Section, e: impl std::fmt::Display) -> ParseError {
    s.malformed(e.to_string())
}

// ---------------------------------------------------------------------------
// Loader

const KINDS: &[&str] = &[
    "space",
    "params",
    "equation",
    "operator",
    "ansatz",
    "reduced",
    "solution",
    "backlund",
    "overdetermined",
    "novelty",
];

/// Parse and fully resolve a problem bundle.
pub fn parse_problem(src: &str) -> Result<ProblemBundle, ParseError> {
    let sections = split_sections(src)?;
    let mut seen: HashSet<String> = HashSet::new();
    for s in &sections {
        if !KINDS.contains(&s.kind.as_str()) {
            return Err(ParseError::MalformedSection {
                section: Some(s.label()),
                message: format!("unknown section kind at line {}", s.line),
            });
        }
        if let Some(n) = &s.name {
            if !is_ident(n) {
                return Err(s.malformed("section names are identifiers"));
            }
            if !seen.insert(n.clone()) {
                return Err(ParseError::DuplicateName { name: n.clone(), line: s.line });
            }
        }
    }
    let of = |k: &'static str| sections.iter().filter(move |s| s.kind == k);
    let mut b = ProblemBundle::default();

    // Spaces: plain ones first, then promoted ones.
    for s in of("space") {
        s.check_keys(&["independent", "dependent", "order", "functions", "promote"])?;
        for l in s.all("functions") {
            for f in names(l.val(s)?) {
                if !is_ident(&f) {
                    return Err(s.malformed(format!("bad function name `{f}`")));
                }
                let f = Name::from(f.as_str());
                if !b.functions.contains(&f) {
                    b.functions.push(f);
                }
            }
        }
    }
    if of("space").next().is_none() {
        return Err(ParseError::MalformedSection {
            section: None,
            message: "a [space] section is mandatory".into(),
        });
    }
    for pass in [false, true] {
        for s in of("space") {
            let promoted = s.one("promote")?.is_some();
            if promoted != pass {
                continue;
            }
            let name = s.name.clone().unwrap_or_else(|| MAIN_SPACE.to_string());
            if b.space(&name).is_some() {
                return Err(ParseError::DuplicateName { name, line: s.line });
            }
            let order = match s.one("order")? {
                Some(l) => positive_int(l, s)?,
                None => 1,
            };
            let deps = names(&s.require("dependent")?);
            let space = if let Some(l) = s.one("promote")? {
                // promote u -> x3 [from base]
                let [dep, arrow, var, rest @ ..] = l.args.as_slice() else {
                    return Err(s.malformed("`promote <dependent> -> <variable>`"));
                };
                if arrow != "->" {
                    return Err(s.malformed("`promote <dependent> -> <variable>`"));
                }
                let base_name = match rest {
                    [] => MAIN_SPACE,
                    [from, base] if from == "from" => base.as_str(),
                    _ => return Err(s.malformed("`promote <dependent> -> <variable> [from <space>]`")),
                };
                let base = b
                    .space(base_name)
                    .ok_or_else(|| s.malformed(format!("unknown space `{base_name}`")))?
                    .clone();
                if !base.is_dependent(dep) {
                    return Err(s.malformed(format!("`{dep}` is not a dependent of `{base_name}`")));
                }
                if deps.len() != base.independents.len() {
                    return Err(s.malformed(format!(
                        "a promoted space needs one dependent per first derivative of `{dep}` ({})",
                        base.independents.len()
                    )));
                }
                let mut indep: Vec<&str> = base.independents.iter().map(|x| &**x).collect();
                indep.push(var);
                let dref: Vec<&str> = deps.iter().map(|x| x.as_str()).collect();
                let mut js = JetSpace::new(&indep, &dref, order);
                let sc = Scope::new(&indep, &dref);
                for (x, v) in base.independents.iter().zip(&deps) {
                    let e = parse_expression_at(v, &sc, l.line, 1)?;
                    js = js.with_chain(var, x, e);
                }
                js
            } else {
                let indep = names(&s.require("independent")?);
                let i: Vec<&str> = indep.iter().map(|x| x.as_str()).collect();
                let d: Vec<&str> = deps.iter().map(|x| x.as_str()).collect();
                JetSpace::new(&i, &d, order)
            };
            let mut all = HashSet::new();
            for n in space.independents.iter().chain(space.dependents.iter()) {
                if !is_ident(n) || !all.insert(n.clone()) {
                    return Err(ParseError::DuplicateName { name: n.to_string(), line: s.line });
                }
            }
            b.spaces.push((name, space));
        }
    }

    for s in of("params") {
        s.check_keys(&["names", "assume"])?;
        for l in s.all("names") {
            for p in names(l.val(s)?) {
                if !is_ident(&p) {
                    return Err(s.malformed(format!("bad parameter name `{p}`")));
                }
                let p = Name::from(p.as_str());
                if b.params.contains(&p) {
                    return Err(ParseError::DuplicateName { name: p.to_string(), line: l.line });
                }
                b.params.push(p);
            }
        }
    }
    let param_scope = {
        let mut sc = Scope::default();
        sc.params.extend(b.params.iter().cloned());
        sc
    };
    for s in of("params") {
        b.param_constraints.extend(constraints(s, &param_scope)?);
    }

    let space_of = |b: &ProblemBundle, s: &Section| -> Result<JetSpace, ParseError> {
        let n = s.space_name()?;
        b.space(&n)
            .cloned()
            .ok_or_else(|| s.malformed(format!("unknown space `{n}`")))
    };

    for s in of("equation") {
        s.check_keys(&["space", "eq", "assume"])?;
        let name = s.name()?.to_string();
        let space = space_of(&b, s)?;
        let scope = b.scope(&space);
        let eqs = equations(s, &scope, &space, &name)?;
        let mut cs = b.param_constraints.clone();
        cs.extend(constraints(s, &scope)?);
        let system = EquationSystem::new(space, eqs)
            .map_err(|e| system_error(s, e))?
            .with_constraints(cs);
        b.systems.push(NamedSystem {
            name,
            space: s.space_name()?,
            system,
        });
    }

    for s in of("operator") {
        s.check_keys(&["space", "xi", "eta", "char", "combine", "check", "system", "expect"])?;
        let name = s.name()?.to_string();
        let space = space_of(&b, s)?;
        let scope = b.scope(&space);
        let has_point = s.all("xi").chain(s.all("eta")).next().is_some();
        let has_char = s.all("char").next().is_some();
        let has_comb = s.one("combine")?.is_some();
        if [has_point, has_char, has_comb].iter().filter(|x| **x).count() != 1 {
            return Err(s.malformed("give xi/eta components, char components, or one combine line"));
        }
        let operator = if has_char {
            let mut ch = BTreeMap::new();
            for l in s.all("char") {
                let dep = l.arg(s, 0)?;
                if !space.is_dependent(dep) {
                    return Err(s.malformed(format!("`{dep}` is not a dependent variable")));
                }
                ch.insert(Name::from(dep), l.expr(s, &scope)?);
            }
            Operator::Canonical(CanonicalOperator::new(ch))
        } else if has_comb {
            let l = s.one("combine")?.unwrap();
            let mut parts = Vec::new();
            for part in split_list(l.val(s)?) {
                let (c, op) = part
                    .rsplit_once(':')
                    .ok_or_else(|| s.malformed("combine entries are `coefficient: operator`"))?;
                let coef = parse_expression_at(c.trim(), &scope, l.line, l.col)?;
                let op = op.trim();
                let Some(NamedOperator { operator: Operator::Point(vf), .. }) = b.operator(op) else {
                    return Err(s.malformed(format!("`{op}` is not an earlier point operator")));
                };
                parts.push((coef, vf.clone()));
            }
            let refs: Vec<(Expr, &VectorField)> = parts.iter().map(|(c, v)| (c.clone(), v)).collect();
            Operator::Point(VectorField::combine(&refs))
        } else {
            let mut vf = VectorField::new();
            for l in s.all("xi") {
                let x = l.arg(s, 0)?;
                if !space.is_independent(x) {
                    return Err(s.malformed(format!("`{x}` is not an independent variable")));
                }
                vf = vf.with_xi(x, l.expr(s, &scope)?);
            }
            for l in s.all("eta") {
                let d = l.arg(s, 0)?;
                if !space.is_dependent(d) {
                    return Err(s.malformed(format!("`{d}` is not a dependent variable")));
                }
                vf = vf.with_eta(d, l.expr(s, &scope)?);
            }
            Operator::Point(vf)
        };
        let check = match (s.text("check")?, s.text("system")?) {
            (None, None) => None,
            (Some(m), Some(sys)) => {
                let mode = CheckMode::parse(&m)
                    .ok_or_else(|| s.malformed(format!("unknown check mode `{m}`")))?;
                if b.system(&sys).is_none() {
                    return Err(s.malformed(format!("unknown equation `{sys}`")));
                }
                Some((mode, sys))
            }
            _ => return Err(s.malformed("`check` and `system` go together")),
        };
        b.operators.push(NamedOperator {
            name,
            space: s.space_name()?,
            operator,
            check,
            expect: s.expect()?,
        });
    }

    for s in of("ansatz") {
        s.check_keys(&[
            "space", "equation", "over", "unknowns", "target", "where", "assume", "assume_positive", "derive",
            "compare",
        ])?;
        let name = s.name()?.to_string();
        let space = space_of(&b, s)?;
        let over = names(&s.require("over")?);
        let unknowns = names(&s.require("unknowns")?);
        for n in over.iter().chain(unknowns.iter()) {
            if !is_ident(n) {
                return Err(s.malformed(format!("bad name `{n}`")));
            }
        }
        let o: Vec<&str> = over.iter().map(|x| x.as_str()).collect();
        let u: Vec<&str> = unknowns.iter().map(|x| x.as_str()).collect();
        let mut a = Ansatz::new(&name, space.clone(), &o, &u);
        let mut scope = b.scope(&space);
        for x in &over {
            if !space.is_independent(x) {
                scope.independents.push(Name::from(x.as_str()));
            }
        }
        scope.dependents.extend(unknowns.iter().map(|x| Name::from(x.as_str())));
        for l in s.all("target") {
            let c = coordinate(&l.joined(s)?, &scope, s, l.line)?;
            if !space.hosts(&c) {
                return Err(s.malformed(format!("target {c} is not a coordinate of the space")));
            }
            a = a.target(c, l.expr(s, &scope)?);
        }
        if a.targets.is_empty() {
            return Err(s.malformed("no `target` lines"));
        }
        for l in s.all("where") {
            let w = l.arg(s, 0)?;
            if !over.iter().any(|x| x == w) || space.is_independent(w) {
                return Err(s.malformed(format!("`{w}` must be a new reduced variable listed in `over`")));
            }
            a = a.define(w, l.expr(s, &scope)?);
        }
        for c in b.param_constraints.iter().cloned().chain(constraints(s, &scope)?) {
            a = a.assume(c);
        }
        if let Some(l) = s.one("assume_positive")? {
            a.assume_positive = flag(l, s)?;
        }
        let equation = s.text("equation")?;
        if let Some(e) = &equation {
            if b.system(e).is_none() {
                return Err(s.malformed(format!("unknown equation `{e}`")));
            }
        }
        let derive = match s.text("derive")?.as_deref() {
            None => None,
            Some("pass") => Some(Verdict::Pass),
            Some("fail") => Some(Verdict::Fail),
            Some(o) => return Err(s.malformed(format!("derive must be pass or fail, not `{o}`"))),
        };
        if derive.is_some() && equation.is_none() {
            return Err(s.malformed("`derive` needs `equation`"));
        }
        b.ansatze.push(NamedAnsatz {
            ansatz: a,
            equation,
            derive,
            compare: s.text("compare")?,
        });
    }

    for s in of("reduced") {
        s.check_keys(&["ansatz", "eq", "assume", "expect"])?;
        let name = s.name()?.to_string();
        let an = s.require("ansatz")?;
        let a = &b
            .ansatz(&an)
            .ok_or_else(|| s.malformed(format!("unknown ansatz `{an}`")))?
            .ansatz;
        let space = a.reduced_space();
        let mut scope = b.scope(&space);
        // Original variables may appear in partly reduced systems.
        for x in &a.space.independents {
            if !scope.independents.contains(x) {
                scope.locals.insert(x.clone());
            }
        }
        let eqs = equations(s, &scope, &space, &name)?;
        let mut cs = b.param_constraints.clone();
        cs.extend(constraints(s, &scope)?);
        let system = EquationSystem::new(space, eqs)
            .map_err(|e| system_error(s, e))?
            .with_constraints(cs);
        b.reduced.push(NamedReduced {
            reduced: ReducedSystem::new(name, system),
            ansatz: an,
            expect: s.expect()?,
        });
    }
    for a in &b.ansatze {
        if let Some(c) = &a.compare {
            if b.reduced_system(c).is_none() {
                return Err(ParseError::MalformedSection {
                    section: Some(format!("ansatz {}", a.ansatz.name)),
                    message: format!("unknown reduced system `{c}`"),
                });
            }
        }
    }

    for s in of("solution") {
        parse_solution(&mut b, s)?;
    }

    for s in of("backlund") {
        s.check_keys(&["space", "relation", "source", "target", "assume", "expect"])?;
        let name = s.name()?.to_string();
        let space = space_of(&b, s)?;
        let scope = b.scope(&space);
        let mut relations = Vec::new();
        for l in s.all("relation") {
            let c = coordinate(&l.joined(s)?, &scope, s, l.line)?;
            if c.order() != 1 {
                return Err(s.malformed(format!("relation for {c} must give a first derivative")));
            }
            relations.push((c, l.expr(s, &scope)?));
        }
        if relations.is_empty() {
            return Err(s.malformed("no `relation` lines"));
        }
        let fetch = |key: &str| -> Result<Vec<Equation>, ParseError> {
            let mut out = Vec::new();
            for n in names(&s.require(key)?) {
                let sys = b.system(&n).ok_or_else(|| s.malformed(format!("unknown equation `{n}`")))?;
                for e in &sys.system.equations {
                    if !space.hosts(&e.lead) {
                        return Err(s.malformed(format!("`{n}` does not live on this space")));
                    }
                }
                out.extend(sys.system.equations.iter().cloned());
            }
            Ok(out)
        };
        let source = fetch("source")?;
        let target = fetch("target")?;
        let mut cs = b.param_constraints.clone();
        cs.extend(constraints(s, &scope)?);
        b.backlund.push(NamedBacklund {
            relation: BacklundRelation {
                name,
                space,
                relations,
                source,
                target,
                constraints: cs,
            },
            expect: s.expect()?,
        });
    }

    for s in of("overdetermined") {
        s.check_keys(&["space", "assign", "where", "assume", "expect"])?;
        let name = s.name()?.to_string();
        let space = space_of(&b, s)?;
        let mut scope = b.scope(&space);
        for l in s.all("where") {
            let w = l.arg(s, 0)?;
            if !is_ident(w) || scope.is_declared(w) {
                return Err(s.malformed(format!("`{w}` must be a fresh name")));
            }
            scope.locals.insert(Name::from(w));
        }
        let mut assignments = Vec::new();
        for l in s.all("assign") {
            let c = coordinate(&l.joined(s)?, &scope, s, l.line)?;
            assignments.push((c, l.expr(s, &scope)?));
        }
        let mut definitions = Vec::new();
        for l in s.all("where") {
            definitions.push((Name::from(l.arg(s, 0)?), l.expr(s, &scope)?));
        }
        let mut cs = b.param_constraints.clone();
        cs.extend(constraints(s, &scope)?);
        b.overdetermined.push(NamedOverdetermined {
            name,
            space,
            assignments,
            definitions,
            constraints: cs,
            expect: s.expect()?,
        });
    }

    for s in of("novelty") {
        s.check_keys(&["equation", "algebra", "family", "t", "expect"])?;
        let name = s.name()?.to_string();
        let equation = s.require("equation")?;
        if b.system(&equation).is_none() {
            return Err(s.malformed(format!("unknown equation `{equation}`")));
        }
        let algebra = names(&s.text("algebra")?.unwrap_or_default());
        let family = names(&s.require("family")?);
        for n in algebra.iter().chain(family.iter()) {
            match b.operator(n) {
                Some(NamedOperator { operator: Operator::Point(_), .. }) => {}
                _ => return Err(s.malformed(format!("`{n}` is not a point operator"))),
            }
        }
        let t = positive_int(s.one("t")?.ok_or_else(|| s.malformed("missing `t`"))?, s)?;
        b.novelty.push(NamedNovelty {
            name,
            equation,
            algebra,
            family,
            t,
            expect: s.expect()?,
        });
    }
    Ok(b)
}

fn parse_solution(b: &mut ProblemBundle, s: &Section) -> Result<(), ParseError> {
    s.check_keys(&[
        "equation", "value", "integral", "solve", "guess", "bracket", "param", "function", "range", "flip", "bindings",
        "box", "grid", "count", "tolerance", "h", "margin", "fd", "assume", "expect",
    ])?;
    let name = s.name()?.to_string();
    let equation = s.require("equation")?;
    let space = b
        .system(&equation)
        .ok_or_else(|| s.malformed(format!("unknown equation `{equation}`")))?
        .system
        .space
        .clone();
    let mut scope = Scope::new(
        &space.independents.iter().map(|x| &**x).collect::<Vec<_>>(),
        &[],
    );
    scope.params.extend(b.params.iter().cloned());
    scope.functions.extend(b.functions.iter().cloned());

    // Integrals: `integral I(s) from 0 = integrand`.
    let mut integrals = Vec::new();
    for l in s.all("integral") {
        let head = l.arg(s, 0)?;
        let (sym, var) = head
            .strip_suffix(')')
            .and_then(|h| h.split_once('('))
            .filter(|(a, v)| is_ident(a) && is_ident(v))
            .ok_or_else(|| s.malformed("`integral F(s) from <a> = integrand`"))?;
        let lower = match l.args.get(1..) {
            Some([from, a]) if from == "from" => {
                let e = parse_expression_at(a, &Scope::default(), l.line, 1)?;
                eval_numeric(&e, &Env::default()).map_err(|e| s.malformed(e.to_string()))?
            }
            _ => return Err(s.malformed("`integral F(s) from <a> = integrand`")),
        };
        let mut isc = scope.clone();
        isc.locals.insert(Name::from(var));
        let integrand = l.expr(s, &isc)?;
        scope.functions.insert(Name::from(sym));
        integrals.push(QuadratureTerm {
            symbol: Name::from(sym),
            integrand,
            var: Name::from(var),
            lower,
        });
    }
    let solves: Vec<&Line> = s.all("solve").collect();
    for l in &solves {
        let u = l.arg(s, 0)?;
        if !is_ident(u) || scope.is_declared(u) {
            return Err(s.malformed(format!("`{u}` must be a fresh name")));
        }
        scope.locals.insert(Name::from(u));
    }
    let mut relations = Vec::new();
    for l in &solves {
        let u = l.arg(s, 0)?;
        let guess = match s.all("guess").find(|g| g.args.first().map(|a| a.as_str()) == Some(u)) {
            Some(g) => g.expr(s, &scope)?,
            None => Expr::zero(),
        };
        let bracket = match s.all("bracket").find(|g| g.args.first().map(|a| a.as_str()) == Some(u)) {
            Some(g) => {
                let parts = split_list(g.val(s)?);
                if parts.len() != 2 {
                    return Err(s.malformed(format!("bracket at line {} needs two bounds", g.line)));
                }
                Some((
                    parse_expression_at(&parts[0], &scope, g.line, g.col)?,
                    parse_expression_at(&parts[1], &scope, g.line, g.col)?,
                ))
            }
            None => None,
        };
        relations.push(ImplicitRelation {
            unknown: Name::from(u),
            residual: l.expr(s, &scope)?,
            guess,
            bracket,
        });
    }
    for l in s.all("guess").chain(s.all("bracket")) {
        if !solves.iter().any(|x| x.args.first() == l.args.first()) {
            return Err(s.malformed(format!("line {} refers to no `solve` unknown", l.line)));
        }
    }
    let mut outputs = Vec::new();
    for l in s.all("value") {
        let d = l.arg(s, 0)?;
        if !space.is_dependent(d) {
            return Err(s.malformed(format!("`{d}` is not a dependent variable")));
        }
        outputs.push((Name::from(d), l.expr(s, &scope)?));
    }
    if outputs.is_empty() {
        return Err(s.malformed("no `value` lines"));
    }
    let form = match (integrals.is_empty(), relations.is_empty()) {
        (true, true) => SolutionForm::Explicit(outputs),
        (false, true) => SolutionForm::QuadratureBacked {
            assignments: outputs,
            integrals,
        },
        (true, false) => SolutionForm::Implicit { relations, outputs },
        (false, false) => return Err(s.malformed("a solution is either quadrature-backed or implicit")),
    };

    let mut binding = ParameterBinding::new();
    for l in s.all("param") {
        let p = l.arg(s, 0)?;
        if !b.params.iter().any(|x| &**x == p) {
            return Err(s.malformed(format!("`{p}` is not a declared parameter")));
        }
        binding = binding.with(p, number(l, s)?);
    }
    for l in s.all("function") {
        let head = l.arg(s, 0)?;
        let (f, var) = head
            .strip_suffix(')')
            .and_then(|h| h.split_once('('))
            .filter(|(a, v)| is_ident(a) && is_ident(v))
            .ok_or_else(|| s.malformed("`function F(s) = body`"))?;
        if !b.functions.iter().any(|x| &**x == f) {
            return Err(s.malformed(format!("`{f}` is not a declared function")));
        }
        let fsc = Scope::default().with_locals(&[var]);
        let mut fsc = fsc;
        fsc.params.extend(b.params.iter().cloned());
        let body = l.expr(s, &fsc)?;
        if !body.opaque_functions().is_empty() {
            return Err(s.malformed("function bodies cannot use opaque functions"));
        }
        binding = binding.with_function(f, Arc::new(ExprFunction::new(Symbol::Var(Name::from(var)), body)));
    }
    let mut ranges = Vec::new();
    for l in s.all("range") {
        let p = l.arg(s, 0)?;
        if !b.params.iter().any(|x| &**x == p) {
            return Err(s.malformed(format!("`{p}` is not a declared parameter")));
        }
        let v = numbers(l, s, 2)?;
        ranges.push((Name::from(p), (v[0], v[1])));
    }
    let mut flip = Vec::new();
    if let Some(l) = s.one("flip")? {
        for p in names(l.val(s)?) {
            if !ranges.iter().any(|(n, _)| **n == *p) {
                return Err(s.malformed(format!("`{p}` in flip has no range")));
            }
            flip.push(Name::from(p.as_str()));
        }
    }
    let bindings = match s.one("bindings")? {
        Some(l) => positive_int(l, s)?.max(1),
        None => 1,
    };
    let mut plan = SamplePlan::default();
    for l in s.all("box") {
        let x = l.arg(s, 0)?;
        if !space.is_independent(x) {
            return Err(s.malformed(format!("`{x}` is not an independent variable")));
        }
        let v = numbers(l, s, 2)?;
        plan = plan.with_box(x, v[0], v[1]);
    }
    if let Some(l) = s.one("grid")? {
        plan = plan.with_grid(positive_int(l, s)?);
    }
    if let Some(l) = s.one("count")? {
        plan = plan.with_count(positive_int(l, s)?);
    }
    let fd = match s.one("fd")? {
        Some(l) => flag(l, s)?,
        None => matches!(form, SolutionForm::Implicit { .. }),
    };
    plan.tolerance = if fd { 1e-4 } else { 1e-9 };
    if let Some(l) = s.one("tolerance")? {
        plan.tolerance = number(l, s)?;
    }
    if let Some(l) = s.one("h")? {
        plan.h = number(l, s)?;
    }
    if let Some(l) = s.one("margin")? {
        plan.margin = number(l, s)?;
    }
    let mut csc = scope.clone();
    csc.locals.extend(relations_locals(&form));
    let mut cs = b.param_constraints.clone();
    cs.extend(constraints(s, &csc)?);
    b.solutions.push(NamedSolution {
        solution: Solution::new(name, form).with_constraints(cs),
        equation,
        binding,
        ranges,
        bindings,
        flip,
        plan,
        fd,
        expect: s.expect()?,
    });
    Ok(())
}

fn relations_locals(f: &SolutionForm) -> Vec<Name> {
    match f {
        SolutionForm::Implicit { relations, .. } => relations.iter().map(|r| r.unknown.clone()).collect(),
        _ => Vec::new(),
    }
}
