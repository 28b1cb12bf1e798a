//! Recursive-descent parser and evaluator for analytic field expressions.
//!
//! Grammar:
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' factor)?
//! base   := number | 'pi' | 'x' | 'y' | 't' | func '(' expr ')' | '(' expr ')'
//! ```
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! evaluates as `-(x^2)`. The constant `pi` is folded at parse time.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Parsed expression tree over the variables `x`, `y`, `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Constant(f64),
    Variable(Var),
    Unary(UnaryFn, Box<ExprAst>),
    Binary(BinOp, Box<ExprAst>, Box<ExprAst>),
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn error(&self, expected: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            expected: expected.to_string(),
        }
    }

    fn expect(&mut self, byte: u8) -> Result<()> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("'{}'", byte as char)))
        }
    }

    fn parse_expr(&mut self) -> Result<ExprAst> {
        let mut lhs = self.parse_term()?;
        while let Some(c) = self.peek() {
            let op = match c {
                b'+' => BinOp::Add,
                b'-' => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_term()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<ExprAst> {
        let mut lhs = self.parse_factor()?;
        while let Some(c) = self.peek() {
            let op = match c {
                b'*' => BinOp::Mul,
                b'/' => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_factor()?;
            lhs = ExprAst::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_factor(&mut self) -> Result<ExprAst> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.parse_factor()?;
            return Ok(ExprAst::Unary(UnaryFn::Neg, Box::new(inner)));
        }
        let base = self.parse_base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.parse_factor()?;
            return Ok(ExprAst::Binary(
                BinOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn parse_base(&mut self) -> Result<ExprAst> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(b'-') => {
                self.pos += 1;
                let inner = self.parse_base()?;
                Ok(ExprAst::Unary(UnaryFn::Neg, Box::new(inner)))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() => self.parse_identifier(),
            _ => Err(self.error("number, identifier, '(' or '-'")),
        }
    }

    fn parse_number(&mut self) -> Result<ExprAst> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if matches!(self.bytes.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // Not an exponent after all ("2e" could start "2*exp(...)"-like
                // garbage); leave it for the caller to reject.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<f64>()
            .map(ExprAst::Constant)
            .map_err(|_| Error::Parse {
                offset: start,
                expected: "number".to_string(),
            })
    }

    fn parse_identifier(&mut self) -> Result<ExprAst> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii letters");
        match name {
            "pi" => Ok(ExprAst::Constant(std::f64::consts::PI)),
            "x" => Ok(ExprAst::Variable(Var::X)),
            "y" => Ok(ExprAst::Variable(Var::Y)),
            "t" => Ok(ExprAst::Variable(Var::T)),
            "sin" | "cos" | "exp" | "sqrt" | "abs" => {
                let func = match name {
                    "sin" => UnaryFn::Sin,
                    "cos" => UnaryFn::Cos,
                    "exp" => UnaryFn::Exp,
                    "sqrt" => UnaryFn::Sqrt,
                    _ => UnaryFn::Abs,
                };
                self.expect(b'(')?;
                let arg = self.parse_expr()?;
                self.expect(b')')?;
                Ok(ExprAst::Unary(func, Box::new(arg)))
            }
            _ => Err(Error::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            }),
        }
    }
}

/// Parse `text` into an AST. Any trailing non-whitespace input is an error.
pub fn parse(text: &str) -> Result<ExprAst> {
    if text.is_empty() {
        return Err(Error::Parse {
            offset: 0,
            expected: "nonempty expression".to_string(),
        });
    }
    if !text.is_ascii() {
        let offset = text.bytes().position(|b| !b.is_ascii()).unwrap_or(0);
        return Err(Error::Parse {
            offset,
            expected: "ASCII input".to_string(),
        });
    }
    let mut parser = Parser::new(text);
    let ast = parser.parse_expr()?;
    if parser.peek().is_some() {
        return Err(parser.error("end of input or operator"));
    }
    Ok(ast)
}

/// Evaluate at `(x, y, t)` in IEEE double precision; a NaN or infinite
/// result (division by zero, domain error, overflow) is reported as an error.
pub fn eval(ast: &ExprAst, x: f64, y: f64, t: f64) -> Result<f64> {
    let value = eval_raw(ast, x, y, t);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Eval)
    }
}

fn eval_raw(ast: &ExprAst, x: f64, y: f64, t: f64) -> f64 {
    match ast {
        ExprAst::Constant(c) => *c,
        ExprAst::Variable(Var::X) => x,
        ExprAst::Variable(Var::Y) => y,
        ExprAst::Variable(Var::T) => t,
        ExprAst::Unary(func, arg) => {
            let a = eval_raw(arg, x, y, t);
            match func {
                UnaryFn::Neg => -a,
                UnaryFn::Sin => a.sin(),
                UnaryFn::Cos => a.cos(),
                UnaryFn::Exp => a.exp(),
                UnaryFn::Sqrt => a.sqrt(),
                UnaryFn::Abs => a.abs(),
            }
        }
        ExprAst::Binary(op, lhs, rhs) => {
            let a = eval_raw(lhs, x, y, t);
            let b = eval_raw(rhs, x, y, t);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
    }
}

/// Render the AST back to parseable text (fully parenthesised).
pub fn pretty_print(ast: &ExprAst) -> String {
    match ast {
        ExprAst::Constant(c) => {
            if *c < 0.0 {
                format!("({c})")
            } else {
                format!("{c}")
            }
        }
        ExprAst::Variable(Var::X) => "x".to_string(),
        ExprAst::Variable(Var::Y) => "y".to_string(),
        ExprAst::Variable(Var::T) => "t".to_string(),
        ExprAst::Unary(UnaryFn::Neg, arg) => format!("(-{})", pretty_print(arg)),
        ExprAst::Unary(func, arg) => {
            let name = match func {
                UnaryFn::Sin => "sin",
                UnaryFn::Cos => "cos",
                UnaryFn::Exp => "exp",
                UnaryFn::Sqrt => "sqrt",
                UnaryFn::Abs => "abs",
                UnaryFn::Neg => unreachable!(),
            };
            format!("{name}({})", pretty_print(arg))
        }
        ExprAst::Binary(op, lhs, rhs) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            format!("({}{sym}{})", pretty_print(lhs), pretty_print(rhs))
        }
    }
}

/// A pair of expressions defining a two-component field.
#[derive(Debug, Clone)]
pub struct VectorExpr {
    pub comp1: ExprAst,
    pub comp2: ExprAst,
}

impl VectorExpr {
    pub fn parse(texts: &[String; 2]) -> Result<Self> {
        Ok(VectorExpr {
            comp1: parse(&texts[0])?,
            comp2: parse(&texts[1])?,
        })
    }

    pub fn zero() -> Self {
        VectorExpr {
            comp1: ExprAst::Constant(0.0),
            comp2: ExprAst::Constant(0.0),
        }
    }

    pub fn eval(&self, x: f64, y: f64, t: f64) -> Result<(f64, f64)> {
        Ok((eval(&self.comp1, x, y, t)?, eval(&self.comp2, x, y, t)?))
    }
}

/// Serialisable form: a two-element array of expression strings.
impl Serialize for VectorExpr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [pretty_print(&self.comp1), pretty_print(&self.comp2)].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VectorExpr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let texts = <[String; 2]>::deserialize(deserializer)?;
        VectorExpr::parse(&texts).map_err(serde::de::Error::custom)
    }
}
