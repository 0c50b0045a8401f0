//! Closed-form coefficient expressions such as `1 + x^2*sin(pi*y)`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | 'y' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log | sqrt | abs | tanh
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^9`.

use std::fmt;

use thiserror::Error;

use crate::grid::{Grid, ScalarField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unbalanced parenthesis at byte {offset}")]
    UnbalancedParen { offset: usize },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("unexpected {found} at byte {offset}")]
    UnexpectedToken { found: String, offset: usize },
    #[error("empty expression")]
    EmptyInput { offset: usize },
    #[error("{reason} at node ({i}, {j}), (x, y) = ({x}, {y})")]
    DomainError { reason: String, i: usize, j: usize, x: f64, y: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    const ALL: [Func; 7] = [Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt, Func::Abs, Func::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Const(Constant),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Reason an evaluation left the real domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainFault(pub String);

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, DomainFault> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Const(Constant::Pi) => std::f64::consts::PI,
            Expr::Const(Constant::E) => std::f64::consts::E,
            Expr::Neg(e) => -e.eval(x, y)?,
            Expr::Binary(op, l, r) => {
                let (a, b) = (l.eval(x, y)?, r.eval(x, y)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(DomainFault("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let p = a.powf(b);
                        if p.is_nan() {
                            return Err(DomainFault(format!("{a}^{b} is not real")));
                        }
                        p
                    }
                }
            }
            Expr::Call(f, arg) => {
                let a = arg.eval(x, y)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(DomainFault(format!("log of non-positive value {a}")));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(DomainFault(format!("sqrt of negative value {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                    Func::Tanh => a.tanh(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DomainFault(format!("non-finite result {v}")))
        }
    }
}

/// Fully parenthesized; re-parses to a structurally equal tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l}{sym}{r})")
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
            b'0'..=b'9' | b'.' => {
                let start = pos;
                while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'.') {
                    pos += 1;
                }
                // exponent only when digits follow, so `2e` stays `2` then `e`
                if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
                    let mut k = pos + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        pos = k;
                    }
                }
                let text = &src[start..pos];
                let v = text.parse::<f64>().map_err(|_| ExprError::UnexpectedToken {
                    found: format!("malformed number `{text}`"),
                    offset: start,
                })?;
                toks.push((Tok::Num(v), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = pos;
                while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                    pos += 1;
                }
                toks.push((Tok::Ident(src[start..pos].to_string()), start));
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                toks.push((Tok::Op(c as char), pos));
                pos += 1;
            }
            b'(' => {
                toks.push((Tok::LParen, pos));
                pos += 1;
            }
            b')' => {
                toks.push((Tok::RParen, pos));
                pos += 1;
            }
            _ => {
                let ch = src[pos..].chars().next().unwrap_or('?');
                return Err(ExprError::UnexpectedToken { found: format!("character `{ch}`"), offset: pos });
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |&(_, o)| o)
    }

    fn unexpected(&self) -> ExprError {
        match self.peek() {
            Some(t) => ExprError::UnexpectedToken { found: t.describe(), offset: self.offset() },
            None => ExprError::UnexpectedToken { found: "end of input".into(), offset: self.end },
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn close_paren(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            None => Err(ExprError::UnbalancedParen { offset: self.end }),
            Some(_) => Err(self.unexpected()),
        }
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let Some((tok, offset)) = self.toks.get(self.pos).cloned() else {
            return Err(self.unexpected());
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.close_paren()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => Ok(Expr::Var(Var::X)),
                    "y" => Ok(Expr::Var(Var::Y)),
                    "pi" => Ok(Expr::Const(Constant::Pi)),
                    "e" => Ok(Expr::Const(Constant::E)),
                    _ => {
                        let Some(func) = Func::from_name(&name) else {
                            return Err(ExprError::UnknownIdentifier { name, offset });
                        };
                        if self.peek() != Some(&Tok::LParen) {
                            return Err(self.unexpected());
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        self.close_paren()?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                }
            }
            Tok::RParen => Err(ExprError::UnbalancedParen { offset }),
            Tok::Op(_) => Err(self.unexpected()),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(ExprError::EmptyInput { offset: 0 });
    }
    let mut parser = Parser { toks, pos: 0, end: src.len() };
    let expr = parser.expr()?;
    match parser.peek() {
        None => Ok(expr),
        Some(Tok::RParen) => Err(ExprError::UnbalancedParen { offset: parser.offset() }),
        Some(_) => Err(parser.unexpected()),
    }
}

/// Evaluates `expr` at every interior node of `grid`.
pub fn eval_field(expr: &Expr, grid: Grid) -> Result<ScalarField, ExprError> {
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.ny() {
        let y = grid.y(j);
        for i in 0..grid.nx() {
            let x = grid.x(i);
            let v = expr
                .eval(x, y)
                .map_err(|DomainFault(reason)| ExprError::DomainError { reason, i, j, x, y })?;
            values.push(v);
        }
    }
    Ok(ScalarField::from_values(grid, values).expect("values are finite and sized to the grid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: f64, y: f64) -> f64 {
        parse(src).unwrap().eval(x, y).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("2+3*4", 0.0, 0.0), 14.0);
        assert_eq!(eval("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(eval("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(eval("10-4-3", 0.0, 0.0), 3.0);
        assert_eq!(eval("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(eval("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(eval("--x", 2.0, 0.0), 2.0);
        assert_eq!(eval("(1+2)*3", 0.0, 0.0), 9.0);
        assert_eq!(eval("2*-y", 0.0, 3.0), -6.0);
    }

    #[test]
    fn functions_and_constants() {
        assert!((eval("sin(pi/2)", 0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((eval("log(e)", 0.0, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(eval("sqrt(abs(-16))", 0.0, 0.0), 4.0);
        assert_eq!(eval("exp(0)+cos(0)+tanh(0)", 0.0, 0.0), 2.0);
        assert_eq!(eval("1.5e1 + 2E-1", 0.0, 0.0), 15.2);
        assert_eq!(eval(".5", 0.0, 0.0), 0.5);
    }

    #[test]
    fn error_offsets() {
        assert_eq!(parse("sin(pi*x"), Err(ExprError::UnbalancedParen { offset: 8 }));
        assert_eq!(parse("x+1)"), Err(ExprError::UnbalancedParen { offset: 3 }));
        assert_eq!(parse("   "), Err(ExprError::EmptyInput { offset: 0 }));
        assert_eq!(parse(""), Err(ExprError::EmptyInput { offset: 0 }));
        assert_eq!(
            parse("1 + z"),
            Err(ExprError::UnknownIdentifier { name: "z".into(), offset: 4 })
        );
        assert!(matches!(parse("2+"), Err(ExprError::UnexpectedToken { offset: 2, .. })));
        assert!(matches!(parse("2 3"), Err(ExprError::UnexpectedToken { offset: 2, .. })));
        assert!(matches!(parse("sin x"), Err(ExprError::UnexpectedToken { offset: 4, .. })));
        assert!(matches!(parse("x # 1"), Err(ExprError::UnexpectedToken { offset: 2, .. })));
        assert!(matches!(parse("()"), Err(ExprError::UnbalancedParen { offset: 1 })));
        assert!(matches!(parse("1..2"), Err(ExprError::UnexpectedToken { offset: 0, .. })));
    }

    #[test]
    fn display_reparses() {
        for src in ["-x^2", "2^3^2", "1-(2-3)", "sin(pi*x)*exp(-y)/2", "1e-5+0.25"] {
            let e = parse(src).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
    }

    #[test]
    fn field_evaluation() {
        let grid = Grid::unit_square(3);
        let one = eval_field(&parse("1").unwrap(), grid).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));

        let x = eval_field(&parse("x").unwrap(), grid).unwrap();
        for j in 0..3 {
            assert_eq!([x.at(0, j), x.at(1, j), x.at(2, j)], [0.25, 0.5, 0.75]);
        }

        let err = eval_field(&parse("1/(x-0.5)").unwrap(), grid).unwrap_err();
        match err {
            ExprError::DomainError { i, x, reason, .. } => {
                assert_eq!(i, 1);
                assert_eq!(x, 0.5);
                assert!(reason.contains("division by zero"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            eval_field(&parse("log(x-0.5)").unwrap(), grid),
            Err(ExprError::DomainError { .. })
        ));
        assert!(matches!(
            eval_field(&parse("sqrt(x-0.6)").unwrap(), grid),
            Err(ExprError::DomainError { .. })
        ));
        assert!(matches!(
            eval_field(&parse("exp(1000)").unwrap(), grid),
            Err(ExprError::DomainError { .. })
        ));
    }
}
