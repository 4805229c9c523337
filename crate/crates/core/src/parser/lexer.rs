//! Tokenizer shared by expressions and problem files.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Pow;

use super::ParseError;

/// Largest decimal exponent accepted in a numeric literal.
const MAX_LITERAL_EXPONENT: i64 = 400;
const MAX_LITERAL_DIGITS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Num(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Prime,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    DotDot,
    Arrow,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Num(_) => "number".into(),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Prime => "`'`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::DotDot => "`..`".into(),
            Tok::Arrow => "`->`".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

/// Tokenize `src`; positions are reported relative to (`line`, `col`).
pub fn tokenize(src: &str, line: usize, col: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |i: usize, message: String| ParseError::SyntaxError {
        line,
        col: col + i,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let simple = match c {
            '+' => Some(Tok::Plus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '\'' => Some(Tok::Prime),
            '=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token {
                tok,
                line,
                col: col + start,
            });
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).copied();
        let two = match (c, next) {
            ('-', Some('>')) => Some(Tok::Arrow),
            ('!', Some('=')) => Some(Tok::Ne),
            ('<', Some('=')) => Some(Tok::Le),
            ('>', Some('=')) => Some(Tok::Ge),
            ('.', Some('.')) => Some(Tok::DotDot),
            _ => None,
        };
        if let Some(tok) = two {
            out.push(Token {
                tok,
                line,
                col: col + start,
            });
            i += 2;
            continue;
        }
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '-' => {
                i += 1;
                Tok::Minus
            }
            '<' => {
                i += 1;
                Tok::Lt
            }
            '>' => {
                i += 1;
                Tok::Gt
            }
            c if c.is_ascii_digit() || (c == '.' && next.is_some_and(|d| d.is_ascii_digit())) => {
                let (value, len) = number(&chars[i..]).map_err(|m| err(start, m))?;
                i += len;
                Tok::Num(value)
            }
            c if c.is_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                Tok::Ident(chars[start..i].iter().collect())
            }
            other => return Err(err(start, format!("unexpected character {other:?}"))),
        };
        out.push(Token {
            tok,
            line,
            col: col + start,
        });
    }
    Ok(out)
}

/// Scan a decimal literal into an exact rational.
fn number(chars: &[char]) -> Result<(BigRational, usize), String> {
    let mut i = 0;
    let mut digits = String::new();
    let mut frac_len: i64 = 0;
    while i < chars.len() && chars[i].is_ascii_digit() {
        digits.push(chars[i]);
        i += 1;
    }
    // A single dot followed by a digit is a fraction; `..` is a range.
    if i < chars.len() && chars[i] == '.' && chars.get(i + 1) != Some(&'.') {
        i += 1;
        while i < chars.len() && chars[i].is_ascii_digit() {
            digits.push(chars[i]);
            frac_len += 1;
            i += 1;
        }
    }
    let mut exp: i64 = 0;
    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
        let mut j = i + 1;
        let mut sign = 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            if chars[j] == '-' {
                sign = -1;
            }
            j += 1;
        }
        let s = j;
        while j < chars.len() && chars[j].is_ascii_digit() {
            j += 1;
        }
        if j > s {
            let text: String = chars[s..j].iter().collect();
            let v: i64 = text
                .parse()
                .ok()
                .filter(|v| *v <= MAX_LITERAL_EXPONENT)
                .ok_or_else(|| format!("exponent in literal exceeds {MAX_LITERAL_EXPONENT}"))?;
            exp = sign * v;
            i = j;
        }
    }
    if digits.len() > MAX_LITERAL_DIGITS {
        return Err("numeric literal too long".into());
    }
    if digits.is_empty() {
        digits.push('0');
    }
    let mantissa: BigInt = digits.parse().map_err(|_| "malformed number".to_string())?;
    let scale = exp - frac_len;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        BigRational::from_integer(mantissa * Pow::pow(&ten, scale as u64))
    } else {
        BigRational::new(mantissa, Pow::pow(&ten, (-scale) as u64))
    };
    Ok((value, i))
}
