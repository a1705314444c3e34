//! Coefficient expression language: parsing, evaluation, symbolic differentiation.
//!
//! Coefficient functions are functions of a single variable `x` with optional
//! named parameters (e.g. `lambda`) that are bound at evaluation time, not at
//! parse time, so a parsed expression can be reused across parameter sweeps.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom ('^' ['-'] number)?
//! atom   := number | 'x' | ident | '(' expr ')' | func '(' expr ')'
//! func   := sin | cos | tan | exp | ln | sqrt
//! number := decimal with optional exponent, e.g. 2, 0.5, 1e-3
//! ```
//!
//! Binary operators are left-associative with the usual precedence; `^` binds
//! tighter than unary minus, so `-x^2` is `-(x^2)`. Exponents are constant
//! real numbers, which keeps differentiation total on the grammar.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Named unary functions of the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Identifiers that can never be used as parameter names.
pub const RESERVED_NAMES: [&str; 7] = ["x", "sin", "cos", "tan", "exp", "ln", "sqrt"];

/// Binary arithmetic operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

/// Parsed expression tree.
///
/// Values are immutable after construction and safe to share across threads.
/// Negative constants cannot be produced by the parser (the grammar has no
/// signed number literals; negation is the `Neg` node) but may appear in
/// derivative trees after constant folding.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Real constant.
    Const(f64),
    /// The independent variable `x`.
    Var,
    /// A named parameter, bound at evaluation time.
    Param(String),
    /// Unary negation.
    Neg(Box<Expr>),
    /// Application of a named function.
    Func(Func, Box<Expr>),
    /// Binary arithmetic node.
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Power with a constant real exponent.
    Pow(Box<Expr>, f64),
}

/// Parse failure, with the byte offset into the source text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}; found {found}", expected.join(", "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}: not declared as a parameter")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("empty expression")]
    Empty,
}

impl ParseError {
    /// Byte offset of the failure in the source text.
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => {
                *offset
            }
            ParseError::Empty => 0,
        }
    }
}

/// Evaluation failure. Domain violations surface as errors, never as silent
/// NaN or infinity.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),
    #[error("ln of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{base}^{exponent} is undefined")]
    PowDomain { base: f64, exponent: f64 },
    #[error("overflow in {0}")]
    Overflow(&'static str),
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
}

/// Parse `text`, accepting any identifier as a parameter name.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    Parser::new(text, None).run()
}

/// Parse `text`, rejecting identifiers that are not in `params`.
pub fn parse_declared(text: &str, params: &BTreeSet<String>) -> Result<Expr, ParseError> {
    Parser::new(text, Some(params)).run()
}

impl Expr {
    /// Evaluate at `x` with the given parameter bindings.
    pub fn eval(&self, x: f64, params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
        let v = self.eval_inner(x, params)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_inner(&self, x: f64, params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var => Ok(x),
            Expr::Param(name) => params
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::UnboundParameter(name.clone())),
            Expr::Neg(u) => Ok(-u.eval_inner(x, params)?),
            Expr::Func(f, u) => {
                let a = u.eval_inner(x, params)?;
                match f {
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Tan => Ok(a.tan()),
                    Func::Exp => {
                        let v = a.exp();
                        if v.is_infinite() {
                            Err(EvalError::Overflow("exp"))
                        } else {
                            Ok(v)
                        }
                    }
                    Func::Ln => {
                        if a <= 0.0 {
                            Err(EvalError::LogDomain(a))
                        } else {
                            Ok(a.ln())
                        }
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            Err(EvalError::SqrtDomain(a))
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                }
            }
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.eval_inner(x, params)?;
                let b = rhs.eval_inner(x, params)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            Ok(a / b)
                        }
                    }
                }
            }
            Expr::Pow(u, c) => {
                let a = u.eval_inner(x, params)?;
                let v = a.powf(*c);
                if v.is_nan() && !a.is_nan() {
                    Err(EvalError::PowDomain {
                        base: a,
                        exponent: *c,
                    })
                } else if v.is_infinite() && a.is_finite() {
                    if a == 0.0 && *c < 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        Err(EvalError::Overflow("pow"))
                    }
                } else {
                    Ok(v)
                }
            }
        }
    }

    /// Exact symbolic derivative with respect to `x`.
    ///
    /// Parameters are treated as constants. The result is folded so that
    /// constant subtrees collapse (`0*a -> 0`, `a+0 -> a`, `1*a -> a`, ...)
    /// but no deeper simplification is attempted.
    pub fn differentiate(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) => Expr::Const(0.0),
            Expr::Var => Expr::Const(1.0),
            Expr::Neg(u) => neg(u.differentiate()),
            Expr::Func(f, u) => {
                let du = u.differentiate();
                match f {
                    Func::Sin => mul(func(Func::Cos, (**u).clone()), du),
                    Func::Cos => neg(mul(func(Func::Sin, (**u).clone()), du)),
                    Func::Tan => div(du, pow(func(Func::Cos, (**u).clone()), 2.0)),
                    Func::Exp => mul(self.clone(), du),
                    Func::Ln => div(du, (**u).clone()),
                    Func::Sqrt => div(du, mul(Expr::Const(2.0), self.clone())),
                }
            }
            Expr::Bin(op, lhs, rhs) => {
                let da = lhs.differentiate();
                let db = rhs.differentiate();
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, (**rhs).clone()), mul((**lhs).clone(), db)),
                    BinOp::Div => div(
                        sub(mul(da, (**rhs).clone()), mul((**lhs).clone(), db)),
                        pow((**rhs).clone(), 2.0),
                    ),
                }
            }
            Expr::Pow(u, c) => mul(
                mul(Expr::Const(*c), pow((**u).clone(), c - 1.0)),
                u.differentiate(),
            ),
        }
    }
}

// Folding constructors used to assemble expressions (derivatives and derived
// coefficients). Folds only collapse constant subtrees and identities; they
// never reassociate.

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if (x + y).is_finite() => Expr::Const(x + y),
        (Expr::Const(z), b) if z == 0.0 => b,
        (a, Expr::Const(z)) if z == 0.0 => a,
        (a, b) => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if (x - y).is_finite() => Expr::Const(x - y),
        (a, Expr::Const(z)) if z == 0.0 => a,
        (Expr::Const(z), b) if z == 0.0 => neg(b),
        (a, b) => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if (x * y).is_finite() => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), b) if o == 1.0 => b,
        (a, Expr::Const(o)) if o == 1.0 => a,
        (a, b) => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) if y != 0.0 && (x / y).is_finite() => Expr::Const(x / y),
        (a, Expr::Const(o)) if o == 1.0 => a,
        (Expr::Const(z), b) if z == 0.0 && !matches!(b, Expr::Const(c) if c == 0.0) => {
            Expr::Const(0.0)
        }
        (a, b) => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(u) => *u,
        a => Expr::Neg(Box::new(a)),
    }
}

pub(crate) fn pow(a: Expr, c: f64) -> Expr {
    if c == 1.0 {
        return a;
    }
    if c == 0.0 {
        return Expr::Const(1.0);
    }
    if let Expr::Const(base) = a {
        let v = base.powf(c);
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    Expr::Pow(Box::new(a), c)
}

pub(crate) fn func(f: Func, a: Expr) -> Expr {
    Expr::Func(f, Box::new(a))
}

impl fmt::Display for Expr {
    /// Canonical parenthesized form; `parse(print(e))` reproduces `e` for any
    /// tree the parser can produce. Negative constants (which only arise from
    /// constant folding) print as negated positive literals.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var => write!(f, "x"),
            Expr::Param(name) => write!(f, "{name}"),
            Expr::Neg(u) => write!(f, "(-{u})"),
            Expr::Func(fun, u) => write!(f, "{}({u})", fun.name()),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(u, c) => {
                if c.is_sign_negative() {
                    write!(f, "({u})^-{:?}", -c)
                } else {
                    write!(f, "({u})^{c:?}")
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer and recursive-descent parser
// ---------------------------------------------------------------------------

const ATOM_EXPECTED: [&str; 5] = ["number", "`x`", "identifier", "`(`", "`-`"];

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    declared: Option<&'a BTreeSet<String>>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, declared: Option<&'a BTreeSet<String>>) -> Self {
        Parser {
            src,
            pos: 0,
            declared,
        }
    }

    fn run(mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Err(ParseError::Empty);
        }
        let e = self.parse_expr()?;
        self.skip_ws();
        if self.pos < self.src.len() {
            return Err(self.syntax_error(vec!["operator", "end of input"]));
        }
        Ok(e)
    }

    fn bytes(&self) -> &[u8] {
        self.src.as_bytes()
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes().get(self.pos).copied()
    }

    fn found_here(&self) -> String {
        match self.bytes().get(self.pos) {
            None => "end of input".to_string(),
            Some(&b) => format!("`{}`", b as char),
        }
    }

    fn syntax_error(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            expected,
            found: self.found_here(),
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term()?;
        while let Some(b) = self.peek() {
            let op = match b {
                b'+' => BinOp::Add,
                b'-' => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_factor()?;
        while let Some(b) = self.peek() {
            let op = match b {
                b'*' => BinOp::Mul,
                b'/' => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // `^` binds tighter than unary minus: `-x^2` is `-(x^2)`.
    fn parse_factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.parse_factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        let atom = self.parse_atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.parse_exponent()?;
            return Ok(Expr::Pow(Box::new(atom), exponent));
        }
        Ok(atom)
    }

    fn parse_exponent(&mut self) -> Result<f64, ParseError> {
        let negate = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        self.skip_ws();
        match self.lex_number()? {
            Some(v) => Ok(if negate { -v } else { v }),
            None => Err(self.syntax_error(vec!["number"])),
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.syntax_error(ATOM_EXPECTED.to_vec())),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(inner)
                } else {
                    Err(self.syntax_error(vec!["`)`"]))
                }
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => match self.lex_number()? {
                Some(v) => Ok(Expr::Const(v)),
                None => Err(self.syntax_error(vec!["number"])),
            },
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => self.parse_ident(),
            Some(_) => Err(self.syntax_error(ATOM_EXPECTED.to_vec())),
        }
    }

    fn parse_ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() {
            let b = self.bytes()[self.pos];
            if b.is_ascii_alphanumeric() || b == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = &self.src[start..self.pos];
        if name == "x" {
            return Ok(Expr::Var);
        }
        if let Some(f) = Func::from_name(name) {
            if self.peek() == Some(b'(') {
                self.pos += 1;
                let arg = self.parse_expr()?;
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    return Ok(Expr::Func(f, Box::new(arg)));
                }
                return Err(self.syntax_error(vec!["`)`"]));
            }
            return Err(self.syntax_error(vec!["`(` after function name"]));
        }
        if let Some(declared) = self.declared {
            if !declared.contains(name) {
                return Err(ParseError::UnknownIdentifier {
                    offset: start,
                    name: name.to_string(),
                });
            }
        }
        Ok(Expr::Param(name.to_string()))
    }

    /// Lex a number at the current position: digits, optional fraction,
    /// optional `e`/`E` exponent. The exponent marker is consumed only when
    /// followed by a valid exponent, so `2e` lexes as `2` then `e`.
    fn lex_number(&mut self) -> Result<Option<f64>, ParseError> {
        let start = self.pos;
        let bytes = self.bytes();
        let mut pos = self.pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'.' {
            pos += 1;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
        }
        if pos == start || (pos == start + 1 && bytes[start] == b'.') {
            return Ok(None);
        }
        if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
            let mut exp_end = pos + 1;
            if exp_end < bytes.len() && (bytes[exp_end] == b'+' || bytes[exp_end] == b'-') {
                exp_end += 1;
            }
            let digits_start = exp_end;
            while exp_end < bytes.len() && bytes[exp_end].is_ascii_digit() {
                exp_end += 1;
            }
            if exp_end > digits_start {
                pos = exp_end;
            }
        }
        let text = &self.src[start..pos];
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = pos;
                Ok(Some(v))
            }
            Err(_) => Err(ParseError::Syntax {
                offset: start,
                expected: vec!["number"],
                found: format!("`{text}`"),
            }),
        }
    }
}
