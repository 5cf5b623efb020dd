//! A small expression language for user-defined `g` and `p`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     = product (("+" | "-") product)*
//! product = unary (("*" | "/") unary)*
//! unary   = "-" unary | power
//! power   = atom ("^" unary)?          right-associative
//! atom    = number | "pi" | VAR | name "(" sum ")" | "(" sum ")"
//! name    = exp | log | tanh | sin | cos
//! ```
//!
//! So `-u^2` is `-(u^2)` and `2^3^2` is `2^(3^2)`. Exponents must fold to a
//! constant, which keeps differentiation closed-form.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{Antiderivative, ModelError, NonlinearityPair, ScalarFn};

/// Deepest nesting the parser accepts before reporting an error, so hostile
/// input cannot exhaust the stack.
pub const MAX_NESTING: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Tanh,
    Sin,
    Cos,
}

impl UnaryOp {
    fn function(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "tanh" => UnaryOp::Tanh,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// Expression tree in one variable.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: found {found}, expected one of: {}", expected.join(", "))]
    Syntax {
        offset: usize,
        found: String,
        expected: Vec<&'static str>,
    },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("exponent starting at offset {offset} is not constant")]
    NonConstantExponent { offset: usize },
    #[error("nesting deeper than {MAX_NESTING} at offset {offset}")]
    TooDeep { offset: usize },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lexeme = &text[start..i];
            let v = lexeme
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ExprError::Syntax {
                    offset: start,
                    found: format!("malformed number `{lexeme}`"),
                    expected: vec!["number"],
                })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_owned()), start));
        } else if b"+-*/^()".contains(&c) {
            out.push((Tok::Op(c as char), i));
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(ExprError::Syntax {
                offset: i,
                found: format!("character `{ch}`"),
                expected: vec!["number", "identifier", "operator", "`(`", "`)`"],
            });
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

const EXPECT_OPERAND: &[&str] = &["number", "variable", "function call", "`(`", "`-`"];

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    var: &'a str,
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn syntax(&self, expected: &[&'static str]) -> ExprError {
        ExprError::Syntax {
            offset: self.offset(),
            found: self.peek().describe(),
            expected: expected.to_vec(),
        }
    }

    fn enter(&mut self) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(ExprError::TooDeep { offset: self.offset() });
        }
        Ok(())
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.pos += 1;
            let rhs = self.product()?;
            let op = if c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        self.enter()?;
        let out = if *self.peek() == Tok::Op('-') {
            self.pos += 1;
            match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Unary(UnaryOp::Neg, Box::new(e)),
            }
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(out)
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Op('^') {
            return Ok(base);
        }
        self.pos += 1;
        let at = self.offset();
        let exponent = self.unary()?;
        match fold_constant(&exponent) {
            Some(c) if c.is_finite() => Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(Expr::Const(c)))),
            _ => Err(ExprError::NonConstantExponent { offset: at }),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                self.enter()?;
                let inner = self.sum()?;
                self.depth -= 1;
                self.expect_close()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if name == self.var {
                    Ok(Expr::Var)
                } else if name == "pi" {
                    Ok(Expr::Const(std::f64::consts::PI))
                } else if let Some(op) = UnaryOp::function(&name) {
                    if *self.peek() != Tok::Op('(') {
                        return Err(self.syntax(&["`(`"]));
                    }
                    self.pos += 1;
                    self.enter()?;
                    let arg = self.sum()?;
                    self.depth -= 1;
                    self.expect_close()?;
                    Ok(Expr::Unary(op, Box::new(arg)))
                } else {
                    Err(ExprError::UnknownIdentifier { offset, name })
                }
            }
            _ => Err(self.syntax(EXPECT_OPERAND)),
        }
    }

    fn expect_close(&mut self) -> Result<(), ExprError> {
        if *self.peek() == Tok::Op(')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&["operator", "`)`"]))
        }
    }
}

/// Parses an expression in the variable `u`.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    parse_in(text, "u")
}

/// Parses an expression in the variable named `var`.
pub fn parse_in(text: &str, var: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        var,
        depth: 0,
    };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        return Err(p.syntax(&["operator", "end of input"]));
    }
    Ok(e)
}

/// Value of a variable-free subtree, `None` if it mentions the variable or
/// cannot be evaluated.
fn fold_constant(e: &Expr) -> Option<f64> {
    if e.contains_var() {
        None
    } else {
        e.eval(0.0).ok()
    }
}

// ---------------------------------------------------------------------------
// Evaluation

impl Expr {
    pub fn contains_var(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var => true,
            Expr::Unary(_, a) => a.contains_var(),
            Expr::Binary(_, a, b) => a.contains_var() || b.contains_var(),
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var => 1,
            Expr::Unary(_, a) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// IEEE evaluation at `u`, operands left to right.
    pub fn eval(&self, u: f64) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var => Ok(u),
            Expr::Unary(op, a) => {
                let x = a.eval(u)?;
                Ok(match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Log => {
                        if !(x > 0.0) {
                            return Err(self.domain(format!("log of non-positive value {x}")));
                        }
                        x.ln()
                    }
                    UnaryOp::Tanh => x.tanh(),
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                })
            }
            Expr::Binary(op, a, b) => {
                let x = a.eval(u)?;
                let y = b.eval(u)?;
                Ok(match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain("division by zero".into()));
                        }
                        x / y
                    }
                    BinaryOp::Pow => {
                        if x < 0.0 && y.fract() != 0.0 {
                            return Err(self.domain(format!("non-integer power of negative value {x}")));
                        }
                        if x == 0.0 && y < 0.0 {
                            return Err(self.domain("negative power of zero".into()));
                        }
                        x.powf(y)
                    }
                })
            }
        }
    }

    fn domain(&self, reason: String) -> ExprError {
        ExprError::Domain {
            subexpr: self.to_string(),
            reason,
        }
    }
}

/// Evaluates `e` at `u`; free-function form of [`Expr::eval`].
pub fn evaluate(e: &Expr, u: f64) -> Result<f64, ExprError> {
    e.eval(u)
}

// ---------------------------------------------------------------------------
// Differentiation and simplification

fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn un(op: UnaryOp, a: Expr) -> Expr {
    Expr::Unary(op, Box::new(a))
}

fn folded(e: Expr) -> Expr {
    match fold_constant(&e) {
        Some(v) if v.is_finite() => Expr::Const(v),
        _ => e,
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(v) => c(-v),
        Expr::Unary(UnaryOp::Neg, inner) => *inner,
        a => un(UnaryOp::Neg, a),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) if *x == 0.0 => b,
        (_, Expr::Const(y)) if *y == 0.0 => a,
        _ => folded(Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b))),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(y)) if *y == 0.0 => a,
        (Expr::Const(x), _) if *x == 0.0 => neg(b),
        _ => folded(Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b))),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), _) | (_, Expr::Const(x)) if *x == 0.0 => c(0.0),
        (Expr::Const(x), _) if *x == 1.0 => b,
        (_, Expr::Const(y)) if *y == 1.0 => a,
        (Expr::Const(x), _) if *x == -1.0 => neg(b),
        (_, Expr::Const(y)) if *y == -1.0 => neg(a),
        // keep constants on the left
        (e, Expr::Const(_)) if !matches!(e, Expr::Const(_)) => mul(b, a),
        _ => folded(Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(y)) if *y == 1.0 => a,
        (Expr::Const(x), _) if *x == 0.0 => c(0.0),
        _ => folded(Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b))),
    }
}

fn pow(a: Expr, k: f64) -> Expr {
    if k == 0.0 {
        c(1.0)
    } else if k == 1.0 {
        a
    } else {
        folded(Expr::Binary(BinaryOp::Pow, Box::new(a), Box::new(c(k))))
    }
}

/// Exact symbolic derivative with respect to the variable, simplified by
/// constant folding and identity elimination.
pub fn differentiate(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) => c(0.0),
        Expr::Var => c(1.0),
        Expr::Unary(op, a) => {
            let da = differentiate(a);
            let a = (**a).clone();
            let outer = match op {
                UnaryOp::Neg => return neg(da),
                UnaryOp::Exp => un(UnaryOp::Exp, a),
                UnaryOp::Log => return div(da, a),
                UnaryOp::Tanh => sub(c(1.0), pow(un(UnaryOp::Tanh, a), 2.0)),
                UnaryOp::Sin => un(UnaryOp::Cos, a),
                UnaryOp::Cos => neg(un(UnaryOp::Sin, a)),
            };
            mul(outer, da)
        }
        Expr::Binary(op, a, b) => {
            let (da, db) = (differentiate(a), differentiate(b));
            let (a, b) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => add(da, db),
                BinaryOp::Sub => sub(da, db),
                BinaryOp::Mul => add(mul(da, b), mul(a, db)),
                BinaryOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), pow(b, 2.0)),
                BinaryOp::Pow => {
                    let k = match b {
                        Expr::Const(k) => k,
                        // The parser only builds constant exponents; fold
                        // anything else that is variable-free.
                        other => fold_constant(&other).unwrap_or(f64::NAN),
                    };
                    mul(mul(c(k), pow(a, k - 1.0)), da)
                }
            }
        }
    }
}

/// Conservative simplification: constant folding and identity elimination.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var => e.clone(),
        Expr::Unary(UnaryOp::Neg, a) => neg(simplify(a)),
        Expr::Unary(op, a) => folded(un(*op, simplify(a))),
        Expr::Binary(op, a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match op {
                BinaryOp::Add => add(a, b),
                BinaryOp::Sub => sub(a, b),
                BinaryOp::Mul => mul(a, b),
                BinaryOp::Div => div(a, b),
                BinaryOp::Pow => match b {
                    Expr::Const(k) => pow(a, k),
                    b => Expr::Binary(BinaryOp::Pow, Box::new(a), Box::new(b)),
                },
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POWER: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(_) | Expr::Var => PREC_ATOM,
        Expr::Unary(UnaryOp::Neg, _) => PREC_UNARY,
        Expr::Unary(..) => PREC_ATOM,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_SUM,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PREC_PRODUCT,
        Expr::Binary(BinaryOp::Pow, ..) => PREC_POWER,
    }
}

/// Shortest decimal text that parses back to the same double.
fn number_text(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{a}")
    } else {
        format!("{a:e}")
    }
}

impl Expr {
    fn write(&self, f: &mut fmt::Formatter<'_>, var: &str, min: u8) -> fmt::Result {
        let paren = precedence(self) < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{})", number_text(*v))?;
                } else {
                    f.write_str(&number_text(*v))?;
                }
            }
            Expr::Var => f.write_str(var)?,
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                a.write(f, var, PREC_UNARY)?;
            }
            Expr::Unary(op, a) => {
                write!(f, "{}(", op.name())?;
                a.write(f, var, 0)?;
                f.write_str(")")?;
            }
            Expr::Binary(op, a, b) => {
                let (left, right) = match op {
                    BinaryOp::Add | BinaryOp::Sub => (PREC_SUM, PREC_PRODUCT),
                    BinaryOp::Mul | BinaryOp::Div => (PREC_PRODUCT, PREC_UNARY),
                    BinaryOp::Pow => (PREC_ATOM, PREC_UNARY),
                };
                a.write(f, var, left)?;
                write!(f, "{}", op.symbol())?;
                b.write(f, var, right)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }

    /// Text in the variable `var` that [`parse_in`] maps back to this tree.
    pub fn unparse(&self, var: &str) -> String {
        struct Show<'a>(&'a Expr, &'a str);
        impl fmt::Display for Show<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.write(f, self.1, 0)
            }
        }
        Show(self, var).to_string()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, "u", 0)
    }
}

// ---------------------------------------------------------------------------
// Model assembly

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("in g: {0}")]
    G(ExprError),
    #[error("in p: {0}")]
    P(ExprError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn closure(e: Expr) -> ScalarFn {
    Arc::new(move |u| e.eval(u).unwrap_or(f64::NAN))
}

/// Builds a validated pair from expression texts in `u`.
///
/// Derivatives are symbolic, `𝒫` is computed by quadrature, and the pair is
/// checked on the symmetric interval covering `working_range`. Domain errors
/// during evaluation surface as NaN and fail validation.
pub fn build_model(g_text: &str, p_text: &str, working_range: (f64, f64)) -> Result<NonlinearityPair, BuildError> {
    let g = parse(g_text).map_err(BuildError::G)?;
    let p = parse(p_text).map_err(BuildError::P)?;
    let dg = differentiate(&g);
    let dp = differentiate(&p);
    let name = format!("g={g}; p={p}");
    let pair = NonlinearityPair::new(
        name,
        closure(g),
        closure(dg),
        closure(p),
        closure(dp),
        Antiderivative::Quadrature,
    );
    let range = working_range.0.abs().max(working_range.1.abs());
    pair.validate(range)?;
    Ok(pair)
}
