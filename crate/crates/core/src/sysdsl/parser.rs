use std::collections::BTreeSet;
use std::fmt;

use super::expr::{BinOp, Expr, Func, Var};

pub const MAX_DEPTH: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub enum ParseErrorKind {
    Syntax { expected: &'static str, found: String },
    UnknownIdentifier(String),
    DimensionMismatch { name: String, dim: usize },
    ForbiddenVariable(String),
    TooDeep,
    Json(String),
    Schema(String),
    Invalid(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax { expected, found } => {
                write!(f, "syntax error: expected {expected}, found {found}")
            }
            ParseErrorKind::UnknownIdentifier(n) => write!(f, "unknown identifier '{n}'"),
            ParseErrorKind::DimensionMismatch { name, dim } => {
                write!(f, "dimension mismatch: '{name}' exceeds dimension {dim}")
            }
            ParseErrorKind::ForbiddenVariable(n) => write!(f, "variable '{n}' is not allowed here"),
            ParseErrorKind::TooDeep => write!(f, "expression nested deeper than {MAX_DEPTH}"),
            ParseErrorKind::Json(m) => write!(f, "invalid JSON: {m}"),
            ParseErrorKind::Schema(m) => write!(f, "schema error: {m}"),
            ParseErrorKind::Invalid(m) => write!(f, "invalid system: {m}"),
        }
    }
}

/// A located diagnostic. `line` and `col` are one-based and refer to the
/// expression text of `field` (or to the document for JSON errors).
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ParseError {
    pub field: String,
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.field, self.line, self.col, self.kind)
    }
}

impl ParseError {
    pub fn new(field: &str, line: usize, col: usize, kind: ParseErrorKind) -> Self {
        ParseError { field: field.to_string(), line, col, kind }
    }

    /// Short name of the diagnostic class.
    pub fn class(&self) -> &'static str {
        match self.kind {
            ParseErrorKind::Syntax { .. } => "SyntaxError",
            ParseErrorKind::UnknownIdentifier(_) => "UnknownIdentifier",
            ParseErrorKind::DimensionMismatch { .. } => "DimensionMismatch",
            ParseErrorKind::ForbiddenVariable(_) => "ForbiddenVariable",
            ParseErrorKind::TooDeep => "TooDeep",
            ParseErrorKind::Json(_) => "JsonError",
            ParseErrorKind::Schema(_) => "SchemaError",
            ParseErrorKind::Invalid(_) => "InvalidSpec",
        }
    }
}

/// What an expression may refer to.
#[derive(Clone, Debug)]
pub struct Context {
    pub field: String,
    pub dim: usize,
    pub allow_x: bool,
    pub allow_v: bool,
    pub allow_p: bool,
    pub allow_t: bool,
    pub params: BTreeSet<String>,
}

impl Context {
    /// Expressions over `x1..x{dim}` only.
    pub fn positions(field: &str, dim: usize) -> Self {
        Context {
            field: field.to_string(),
            dim,
            allow_x: true,
            allow_v: false,
            allow_p: false,
            allow_t: false,
            params: BTreeSet::new(),
        }
    }

    /// Lagrangian context: positions, velocities and time.
    pub fn lagrangian(field: &str, dim: usize) -> Self {
        Context { allow_v: true, allow_t: true, ..Context::positions(field, dim) }
    }

    /// Phase-space functions over positions and momenta.
    pub fn phase(field: &str, dim: usize) -> Self {
        Context { allow_p: true, ..Context::positions(field, dim) }
    }

    pub fn with_time(mut self) -> Self {
        self.allow_t = true;
        self
    }

    pub fn with_params<I: IntoIterator<Item = S>, S: Into<String>>(mut self, it: I) -> Self {
        self.params.extend(it.into_iter().map(Into::into));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::End => "end of input".to_string(),
        }
    }
}

struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str, field: &str) -> Result<Vec<Lexed>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        let start = (line, col);
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j < chars.len() && chars[j] == '.' {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let v: f64 = text.parse().map_err(|_| {
                ParseError::new(
                    field,
                    start.0,
                    start.1,
                    ParseErrorKind::Syntax { expected: "a number", found: format!("'{text}'") },
                )
            })?;
            if !v.is_finite() {
                return Err(ParseError::new(
                    field,
                    start.0,
                    start.1,
                    ParseErrorKind::Syntax { expected: "a finite number", found: format!("'{text}'") },
                ));
            }
            out.push(Lexed { tok: Tok::Num(v), line: start.0, col: start.1 });
            col += j - i;
            i = j;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            out.push(Lexed { tok: Tok::Ident(chars[i..j].iter().collect()), line: start.0, col: start.1 });
            col += j - i;
            i = j;
            continue;
        }
        if "+-*/^()".contains(c) {
            out.push(Lexed { tok: Tok::Sym(c), line: start.0, col: start.1 });
            col += 1;
            i += 1;
            continue;
        }
        return Err(ParseError::new(
            field,
            line,
            col,
            ParseErrorKind::Syntax { expected: "an expression", found: format!("character {c:?}") },
        ));
    }
    out.push(Lexed { tok: Tok::End, line, col });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Lexed>,
    pos: usize,
    ctx: &'a Context,
    depth: usize,
}

const OPERAND: &str = "a number, identifier, '(' or '-'";

impl<'a> Parser<'a> {
    fn peek(&self) -> &Lexed {
        &self.toks[self.pos]
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        let l = self.peek();
        ParseError::new(&self.ctx.field, l.line, l.col, kind)
    }

    fn err_at(&self, at: &Lexed, kind: ParseErrorKind) -> ParseError {
        ParseError::new(&self.ctx.field, at.line, at.col, kind)
    }

    fn expected(&self, expected: &'static str) -> ParseError {
        self.err(ParseErrorKind::Syntax { expected, found: self.peek().tok.describe() })
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err(ParseErrorKind::TooDeep));
        }
        Ok(())
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Sym(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                break;
            };
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                break;
            };
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = if self.eat('-') { Expr::Neg(Box::new(self.unary()?)) } else { self.power()? };
        self.depth -= 1;
        Ok(e)
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let here = self.pos;
        match self.peek().tok.clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.expected("an operator or ')'"));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if self.peek().tok == Tok::Sym('(') {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(self.err_at(&self.toks[here], ParseErrorKind::UnknownIdentifier(name)));
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.expected("an operator or ')'"));
                    }
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                self.resolve(&name, here)
            }
            _ => Err(self.expected(OPERAND)),
        }
    }

    fn resolve(&self, name: &str, at: usize) -> Result<Expr, ParseError> {
        let at = &self.toks[at];
        if self.ctx.params.contains(name) {
            return Ok(Expr::Param(name.to_string()));
        }
        if let Some(var) = variable_name(name) {
            let allowed = match var {
                Var::X(_) => self.ctx.allow_x,
                Var::V(_) => self.ctx.allow_v,
                Var::P(_) => self.ctx.allow_p,
                Var::T => self.ctx.allow_t,
            };
            if !allowed {
                return Err(self.err_at(at, ParseErrorKind::ForbiddenVariable(name.to_string())));
            }
            if let Var::X(i) | Var::V(i) | Var::P(i) = var {
                if i >= self.ctx.dim {
                    return Err(self.err_at(
                        at,
                        ParseErrorKind::DimensionMismatch { name: name.to_string(), dim: self.ctx.dim },
                    ));
                }
            }
            return Ok(Expr::Var(var));
        }
        if name == "pi" {
            return Ok(Expr::Const("pi", std::f64::consts::PI));
        }
        Err(self.err_at(at, ParseErrorKind::UnknownIdentifier(name.to_string())))
    }
}

/// Recognizes `x<k>`, `v<k>`, `p<k>` (k >= 1, no leading zero) and `t`.
pub fn variable_name(name: &str) -> Option<Var> {
    if name == "t" {
        return Some(Var::T);
    }
    let mut cs = name.chars();
    let head = cs.next()?;
    let rest = cs.as_str();
    if rest.is_empty() || rest.starts_with('0') || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let k: usize = rest.parse().ok()?;
    match head {
        'x' => Some(Var::X(k - 1)),
        'v' => Some(Var::V(k - 1)),
        'p' => Some(Var::P(k - 1)),
        _ => None,
    }
}

/// Parses one expression under the given context.
pub fn parse_expr(src: &str, ctx: &Context) -> Result<Expr, ParseError> {
    let toks = lex(src, &ctx.field)?;
    let mut p = Parser { toks, pos: 0, ctx, depth: 0 };
    let e = p.expr()?;
    if p.peek().tok != Tok::End {
        return Err(p.expected("an operator or end of input"));
    }
    Ok(e)
}
