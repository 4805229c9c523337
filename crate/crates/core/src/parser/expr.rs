//! Pratt parser for expressions.

use std::collections::BTreeSet;

use crate::expr::{apply, func, int, mul, num, pow, sym, Expr, Func, JetCoord, Name, Symbol};

use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

const MAX_DEPTH: usize = 200;

/// Names visible to the expression parser.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    pub independents: Vec<Name>,
    pub dependents: Vec<Name>,
    pub params: BTreeSet<Name>,
    /// Opaque one-argument function symbols.
    pub functions: BTreeSet<Name>,
    /// Extra names read as plain variables (bound variables, auxiliaries).
    pub locals: BTreeSet<Name>,
}

impl Scope {
    pub fn new(independents: &[&str], dependents: &[&str]) -> Self {
        Scope {
            independents: independents.iter().map(|s| Name::from(*s)).collect(),
            dependents: dependents.iter().map(|s| Name::from(*s)).collect(),
            ..Default::default()
        }
    }

    pub fn with_params(mut self, ps: &[&str]) -> Self {
        self.params.extend(ps.iter().map(|s| Name::from(*s)));
        self
    }

    pub fn with_functions(mut self, fs: &[&str]) -> Self {
        self.functions.extend(fs.iter().map(|s| Name::from(*s)));
        self
    }

    pub fn with_locals(mut self, ls: &[&str]) -> Self {
        self.locals.extend(ls.iter().map(|s| Name::from(*s)));
        self
    }

    pub fn is_declared(&self, n: &str) -> bool {
        self.independents.iter().any(|v| &**v == n)
            || self.dependents.iter().any(|v| &**v == n)
            || self.params.contains(n)
            || self.functions.contains(n)
            || self.locals.contains(n)
    }

    fn resolve(&self, n: &str) -> Option<Symbol> {
        if self.locals.contains(n) {
            Some(Symbol::Var(n.into()))
        } else if self.dependents.iter().any(|v| &**v == n) {
            Some(Symbol::Jet(JetCoord::base(n)))
        } else if self.independents.iter().any(|v| &**v == n) {
            Some(Symbol::Var(n.into()))
        } else if self.params.contains(n) {
            Some(Symbol::Param(n.into()))
        } else {
            None
        }
    }
}

pub(crate) struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    depth: usize,
    scope: &'a Scope,
    end: (usize, usize),
}

impl<'a> Parser<'a> {
    pub fn new(src: &str, scope: &'a Scope, line: usize, col: usize) -> Result<Self, ParseError> {
        let toks = tokenize(src, line, col)?;
        Ok(Parser {
            toks,
            pos: 0,
            depth: 0,
            scope,
            end: (line, col + src.chars().count()),
        })
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or(self.end)
    }

    pub fn error(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError::SyntaxError {
            line,
            col,
            message: message.into(),
        }
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {}", t.describe())),
            None => self.error(format!("expected {wanted}, found end of input")),
        }
    }

    pub fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    pub fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    pub fn finish(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.unexpected("end of expression"))
        }
    }

    pub fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.expr_bp(0)
    }

    fn expr_bp(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("expression nested too deeply"));
        }
        let mut lhs = self.prefix()?;
        loop {
            let (l_bp, r_bp) = match self.peek() {
                Some(Tok::Plus) | Some(Tok::Minus) => (10, 11),
                Some(Tok::Star) | Some(Tok::Slash) => (20, 21),
                Some(Tok::Caret) => (31, 30),
                _ => break,
            };
            if l_bp < min_bp {
                break;
            }
            let op = self.bump().unwrap();
            let rhs = self.expr_bp(r_bp)?;
            lhs = match op {
                Tok::Plus => lhs + rhs,
                Tok::Minus => lhs - rhs,
                Tok::Star => lhs * rhs,
                Tok::Slash => lhs / rhs,
                Tok::Caret => pow(lhs, rhs),
                _ => unreachable!(),
            };
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(r)) => {
                self.pos += 1;
                Ok(num(r))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(mul([int(-1), self.expr_bp(25)?]))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.expr_bp(25)
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr_bp(0)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(n)) => {
                self.pos += 1;
                self.identifier(n)
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn identifier(&mut self, n: String) -> Result<Expr, ParseError> {
        let start = self.pos - 1;
        let undeclared = |p: &Self, n: &str| {
            let t = &p.toks[start];
            ParseError::UndeclaredSymbol {
                name: n.to_string(),
                line: t.line,
                col: t.col,
            }
        };
        match self.peek() {
            Some(Tok::LBracket) => {
                if !self.scope.dependents.iter().any(|d| **d == n) {
                    return Err(undeclared(self, &n));
                }
                self.pos += 1;
                let mut index = Vec::new();
                loop {
                    let at = self.pos;
                    let v = self.ident()?;
                    if !self.scope.independents.iter().any(|x| **x == *v) {
                        let t = &self.toks[at];
                        return Err(ParseError::UndeclaredSymbol {
                            name: v,
                            line: t.line,
                            col: t.col,
                        });
                    }
                    index.push(Name::from(v.as_str()));
                    match self.bump() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RBracket) => break,
                        _ => {
                            self.pos -= 1;
                            return Err(self.unexpected("`,` or `]`"));
                        }
                    }
                }
                Ok(sym(Symbol::Jet(JetCoord::new(n.as_str(), index))))
            }
            Some(Tok::Prime) | Some(Tok::LParen) => {
                let mut order = 0u32;
                while self.peek() == Some(&Tok::Prime) {
                    self.pos += 1;
                    order += 1;
                    if order > 16 {
                        return Err(self.error("too many primes"));
                    }
                }
                let builtin = Func::from_name(&n);
                if builtin.is_none() && !self.scope.functions.contains(n.as_str()) {
                    return Err(undeclared(self, &n));
                }
                if builtin.is_some() && order > 0 {
                    return Err(self.error(format!("primes are only allowed on opaque functions, not `{n}`")));
                }
                self.expect(Tok::LParen)?;
                let arg = self.expr_bp(0)?;
                self.expect(Tok::RParen)?;
                Ok(match builtin {
                    Some(f) => func(f, arg),
                    None => apply(Name::from(n.as_str()), order, arg),
                })
            }
            _ => match self.scope.resolve(&n) {
                Some(s) => Ok(sym(s)),
                None => Err(undeclared(self, &n)),
            },
        }
    }
}

/// Parse a complete expression.
pub fn parse_expression(src: &str, scope: &Scope) -> Result<Expr, ParseError> {
    parse_expression_at(src, scope, 1, 1)
}

pub(crate) fn parse_expression_at(
    src: &str,
    scope: &Scope,
    line: usize,
    col: usize,
) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src, scope, line, col)?;
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parse `lhs = rhs`.
pub fn parse_equation(src: &str, scope: &Scope) -> Result<(Expr, Expr), ParseError> {
    parse_equation_at(src, scope, 1, 1)
}

pub(crate) fn parse_equation_at(
    src: &str,
    scope: &Scope,
    line: usize,
    col: usize,
) -> Result<(Expr, Expr), ParseError> {
    let mut p = Parser::new(src, scope, line, col)?;
    let lhs = p.expr()?;
    p.expect(Tok::Eq)?;
    let rhs = p.expr()?;
    p.finish()?;
    Ok((lhs, rhs))
}
