//! Kernel formulas of one real variable `v`.
//!
//! The grammar is deliberately small:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := atom ('^' exponent)?
//! exponent:= '-' exponent | '+' exponent | power
//! atom    := number | 'v' | 'pi' | 'e' | func '(' sum ')' | '(' sum ')'
//! func    := 'sin' | 'cos' | 'exp' | 'sqrt' | 'ln'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-v^2`
//! is `-(v^2)` and `2^3^2` is `2^(3^2)`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero at v = {0}")]
    DivisionByZero(f64),
    #[error("square root of a negative value at v = {0}")]
    SqrtDomain(f64),
    #[error("logarithm of a non-positive value at v = {0}")]
    LogDomain(f64),
    #[error("non-integer power of a negative base at v = {0}")]
    ComplexPower(f64),
    #[error("non-finite result at v = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "ln" => Func::Ln,
            _ => return None,
        })
    }
}

/// Abstract syntax tree of a kernel formula.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelExpr {
    Num(f64),
    Var,
    Pi,
    E,
    Neg(Box<KernelExpr>),
    Add(Box<KernelExpr>, Box<KernelExpr>),
    Sub(Box<KernelExpr>, Box<KernelExpr>),
    Mul(Box<KernelExpr>, Box<KernelExpr>),
    Div(Box<KernelExpr>, Box<KernelExpr>),
    Pow(Box<KernelExpr>, Box<KernelExpr>),
    Call(Func, Box<KernelExpr>),
}

use KernelExpr::*;

fn bx(e: KernelExpr) -> Box<KernelExpr> {
    Box::new(e)
}

impl KernelExpr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, end: src.len() };
        if p.tokens.is_empty() {
            return Err(ExprError::Syntax { pos: 0, msg: "empty expression".into() });
        }
        let e = p.sum()?;
        match p.peek() {
            None => Ok(e),
            Some(t) => Err(ExprError::Syntax {
                pos: t.pos,
                msg: format!("unexpected {}", t.kind.describe()),
            }),
        }
    }

    pub fn constant(c: f64) -> Self {
        Num(c)
    }

    /// True when the formula mentions `v`.
    pub fn depends_on_var(&self) -> bool {
        match self {
            Num(_) | Pi | E => false,
            Var => true,
            Neg(a) | Call(_, a) => a.depends_on_var(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.depends_on_var() || b.depends_on_var()
            }
        }
    }

    pub fn eval(&self, v: f64) -> Result<f64, EvalError> {
        let r = self.eval_raw(v)?;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(EvalError::NonFinite(v))
        }
    }

    fn eval_raw(&self, v: f64) -> Result<f64, EvalError> {
        let r = match self {
            Num(c) => *c,
            Var => v,
            Pi => std::f64::consts::PI,
            E => std::f64::consts::E,
            Neg(a) => -a.eval_raw(v)?,
            Add(a, b) => a.eval_raw(v)? + b.eval_raw(v)?,
            Sub(a, b) => a.eval_raw(v)? - b.eval_raw(v)?,
            Mul(a, b) => a.eval_raw(v)? * b.eval_raw(v)?,
            Div(a, b) => {
                let den = b.eval_raw(v)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero(v));
                }
                a.eval_raw(v)? / den
            }
            Pow(a, b) => {
                let base = a.eval_raw(v)?;
                let exp = b.eval_raw(v)?;
                if base < 0.0 && exp.fract() != 0.0 {
                    return Err(EvalError::ComplexPower(v));
                }
                if base == 0.0 && exp < 0.0 {
                    return Err(EvalError::DivisionByZero(v));
                }
                base.powf(exp)
            }
            Call(f, a) => {
                let x = a.eval_raw(v)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalError::SqrtDomain(v));
                        }
                        x.sqrt()
                    }
                    Func::Ln => {
                        if x <= 0.0 {
                            return Err(EvalError::LogDomain(v));
                        }
                        x.ln()
                    }
                }
            }
        };
        if r.is_nan() {
            return Err(EvalError::NonFinite(v));
        }
        Ok(r)
    }

    /// Exact symbolic derivative with respect to `v`. The result is not
    /// simplified.
    pub fn differentiate(&self) -> KernelExpr {
        match self {
            Num(_) | Pi | E => Num(0.0),
            Var => Num(1.0),
            Neg(a) => Neg(bx(a.differentiate())),
            Add(a, b) => Add(bx(a.differentiate()), bx(b.differentiate())),
            Sub(a, b) => Sub(bx(a.differentiate()), bx(b.differentiate())),
            Mul(a, b) => Add(
                bx(Mul(bx(a.differentiate()), b.clone())),
                bx(Mul(a.clone(), bx(b.differentiate()))),
            ),
            Div(a, b) => Div(
                bx(Sub(
                    bx(Mul(bx(a.differentiate()), b.clone())),
                    bx(Mul(a.clone(), bx(b.differentiate()))),
                )),
                bx(Mul(b.clone(), b.clone())),
            ),
            Pow(_, b) if matches!(**b, Num(c) if c == 0.0) => Num(0.0),
            Pow(a, b) if matches!(**b, Num(c) if c == 1.0) => a.differentiate(),
            Pow(a, b) if !b.depends_on_var() => {
                // b * a^(b-1) * a'
                Mul(
                    bx(Mul(b.clone(), bx(Pow(a.clone(), bx(Sub(b.clone(), bx(Num(1.0)))))))),
                    bx(a.differentiate()),
                )
            }
            Pow(a, b) if !a.depends_on_var() => Mul(
                bx(Mul(bx(self.clone()), bx(Call(Func::Ln, a.clone())))),
                bx(b.differentiate()),
            ),
            Pow(a, b) => {
                // a^b * (b' ln a + b a'/a)
                Mul(
                    bx(self.clone()),
                    bx(Add(
                        bx(Mul(bx(b.differentiate()), bx(Call(Func::Ln, a.clone())))),
                        bx(Div(bx(Mul(b.clone(), bx(a.differentiate()))), a.clone())),
                    )),
                )
            }
            Call(f, a) => {
                let da = a.differentiate();
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(bx(Call(Func::Sin, a.clone()))),
                    Func::Exp => self.clone(),
                    Func::Sqrt => Div(bx(Num(1.0)), bx(Mul(bx(Num(2.0)), bx(self.clone())))),
                    Func::Ln => Div(bx(Num(1.0)), a.clone()),
                };
                Mul(bx(outer), bx(da))
            }
        }
    }
}

impl FromStr for KernelExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelExpr::parse(s)
    }
}

/// Fully parenthesized rendering which parses back to the same tree.
impl fmt::Display for KernelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(c) if *c < 0.0 => write!(f, "(-{})", -c),
            Num(c) => write!(f, "{c}"),
            Var => write!(f, "v"),
            Pi => write!(f, "pi"),
            E => write!(f, "e"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(c) => format!("number {c}"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Plus => "`+`".into(),
            TokKind::Minus => "`-`".into(),
            TokKind::Star => "`*`".into(),
            TokKind::Slash => "`/`".into(),
            TokKind::Caret => "`^`".into(),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let kind = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => TokKind::Plus,
            b'-' => TokKind::Minus,
            b'*' => TokKind::Star,
            b'/' => TokKind::Slash,
            b'^' => TokKind::Caret,
            b'(' => TokKind::LParen,
            b')' => TokKind::RParen,
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part, only if followed by digits
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut k = i + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        i = k;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{text}`"),
                })?;
                out.push(Token { kind: TokKind::Num(value), pos: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token { kind: TokKind::Ident(src[start..i].to_string()), pos: start });
                continue;
            }
            _ => {
                return Err(ExprError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{}`", src[i..].chars().next().unwrap()),
                })
            }
        };
        out.push(Token { kind, pos: i });
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokKind> {
        self.peek().map(|t| &t.kind)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn sum(&mut self) -> Result<KernelExpr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek_kind() {
                Some(TokKind::Plus) => {
                    self.bump();
                    lhs = Add(bx(lhs), bx(self.product()?));
                }
                Some(TokKind::Minus) => {
                    self.bump();
                    lhs = Sub(bx(lhs), bx(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<KernelExpr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek_kind() {
                Some(TokKind::Star) => {
                    self.bump();
                    lhs = Mul(bx(lhs), bx(self.unary()?));
                }
                Some(TokKind::Slash) => {
                    self.bump();
                    lhs = Div(bx(lhs), bx(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<KernelExpr, ExprError> {
        match self.peek_kind() {
            Some(TokKind::Minus) => {
                self.bump();
                Ok(Neg(bx(self.unary()?)))
            }
            Some(TokKind::Plus) => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<KernelExpr, ExprError> {
        let base = self.atom()?;
        if let Some(TokKind::Caret) = self.peek_kind() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Pow(bx(base), bx(exp)));
        }
        Ok(base)
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.peek_kind() {
            Some(TokKind::RParen) => {
                self.bump();
                Ok(())
            }
            Some(k) => Err(ExprError::Syntax {
                pos: self.here(),
                msg: format!("expected `)`, found {}", k.describe()),
            }),
            None => Err(ExprError::Syntax { pos: self.end, msg: "expected `)`".into() }),
        }
    }

    fn atom(&mut self) -> Result<KernelExpr, ExprError> {
        let pos = self.here();
        let Some(tok) = self.bump() else {
            return Err(ExprError::Syntax { pos, msg: "unexpected end of input".into() });
        };
        match tok.kind {
            TokKind::Num(c) => Ok(Num(c)),
            TokKind::LParen => {
                let e = self.sum()?;
                self.expect_rparen()?;
                Ok(e)
            }
            TokKind::Ident(name) => match name.as_str() {
                "v" => Ok(Var),
                "pi" => Ok(Pi),
                "e" => Ok(E),
                _ => {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ExprError::UnknownIdentifier { name, pos: tok.pos });
                    };
                    match self.peek_kind() {
                        Some(TokKind::LParen) => {
                            self.bump();
                        }
                        _ => {
                            return Err(ExprError::Syntax {
                                pos: self.here(),
                                msg: format!("expected `(` after `{name}`"),
                            })
                        }
                    }
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    Ok(Call(func, bx(arg)))
                }
            },
            other => Err(ExprError::Syntax { pos: tok.pos, msg: format!("unexpected {}", other.describe()) }),
        }
    }
}

/// A formula living on `[0, support]`, extended by zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    expr: KernelExpr,
    support: f64,
}

impl Kernel {
    pub fn new(expr: KernelExpr, support: f64) -> Self {
        Self { expr, support }
    }

    pub fn parse(src: &str, support: f64) -> Result<Self, ExprError> {
        Ok(Self::new(KernelExpr::parse(src)?, support))
    }

    pub fn expr(&self) -> &KernelExpr {
        &self.expr
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn with_support(&self, support: f64) -> Self {
        Self::new(self.expr.clone(), support)
    }

    pub fn derivative(&self) -> Self {
        Self::new(self.expr.differentiate(), self.support)
    }

    /// Value at `v` on the closed support, zero elsewhere. Arguments within
    /// a few ulps of the support ends count as inside.
    pub fn eval(&self, v: f64) -> Result<f64, EvalError> {
        let slack = 1e-12 * self.support.max(1.0);
        if v < -slack || v > self.support + slack {
            return Ok(0.0);
        }
        self.expr.eval(v.clamp(0.0, self.support))
    }

    /// Values at `k * step` for `k = 0..=count`.
    pub fn sample(&self, step: f64, count: usize) -> Result<Vec<f64>, EvalError> {
        (0..=count).map(|k| self.eval(k as f64 * step)).collect()
    }
}
