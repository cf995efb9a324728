//! Arithmetic expressions for boundary profiles `h(x)` and forcings `f(x, y)`.
//!
//! Grammar, with `^` binding tighter than unary minus:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := base ('^' unary)?
//! base   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Identifiers are limited to the variables `x`, `y` and the functions
//! `sin cos exp abs min max`.

use std::fmt;

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 200;
const MAX_TREE_DEPTH: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Min | Func::Max => n >= 1,
            _ => n == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
    ident: &'a str,
    depth: usize,
}

fn perr<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        offset,
        message: message.into(),
    })
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self> {
        let mut p = Parser {
            src,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
            ident: "",
            depth: 0,
        };
        p.advance()?;
        Ok(p)
    }

    fn advance(&mut self) -> Result<()> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        if self.pos >= bytes.len() {
            self.tok = Tok::End;
            return Ok(());
        }
        let c = bytes[self.pos];
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            self.tok = t;
            return Ok(());
        }
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                self.pos += 1;
            }
            if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
                let mut k = self.pos + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    self.pos = k;
                }
            }
            let text = &self.src[start..self.pos];
            let value: f64 = match text.parse() {
                Ok(v) => v,
                Err(_) => return perr(start, format!("malformed number '{text}'")),
            };
            if !value.is_finite() {
                return perr(start, format!("number '{text}' overflows"));
            }
            self.tok = Tok::Num(value);
            return Ok(());
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                self.pos += 1;
            }
            self.ident = &self.src[start..self.pos];
            self.tok = Tok::Ident;
            return Ok(());
        }
        // Report the offset of the offending character, respecting UTF-8 boundaries.
        let ch = self.src[self.pos..].chars().next().unwrap_or('?');
        perr(self.pos, format!("unexpected character '{ch}'"))
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return perr(self.tok_start, "expression nested too deeply");
        }
        Ok(())
    }

    fn check_tree(&self, depth: usize) -> Result<usize> {
        if depth > MAX_TREE_DEPTH {
            return perr(self.tok_start, "expression too long");
        }
        Ok(depth)
    }

    // Every production returns the tree together with its height so that
    // long operator chains cannot build trees deeper than MAX_TREE_DEPTH.
    fn expr(&mut self) -> Result<(Expr, usize)> {
        self.enter()?;
        let (mut lhs, mut h) = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.advance()?;
            let (rhs, hr) = self.term()?;
            h = self.check_tree(h.max(hr) + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok((lhs, h))
    }

    fn term(&mut self) -> Result<(Expr, usize)> {
        let (mut lhs, mut h) = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.advance()?;
            let (rhs, hr) = self.unary()?;
            h = self.check_tree(h.max(hr) + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, h))
    }

    fn unary(&mut self) -> Result<(Expr, usize)> {
        if self.tok == Tok::Minus {
            self.enter()?;
            self.advance()?;
            let (inner, h) = self.unary()?;
            self.depth -= 1;
            let h = self.check_tree(h + 1)?;
            return Ok((Expr::Neg(Box::new(inner)), h));
        }
        self.power()
    }

    fn power(&mut self) -> Result<(Expr, usize)> {
        let (base, hb) = self.base()?;
        if self.tok == Tok::Caret {
            self.enter()?;
            self.advance()?;
            let (exp, he) = self.unary()?;
            self.depth -= 1;
            let h = self.check_tree(hb.max(he) + 1)?;
            return Ok((Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)), h));
        }
        Ok((base, hb))
    }

    fn base(&mut self) -> Result<(Expr, usize)> {
        let start = self.tok_start;
        match self.tok {
            Tok::Num(v) => {
                self.advance()?;
                Ok((Expr::Num(v), 1))
            }
            Tok::Ident => {
                let name = self.ident;
                self.advance()?;
                match name {
                    "x" => return Ok((Expr::Var(Var::X), 1)),
                    "y" => return Ok((Expr::Var(Var::Y), 1)),
                    _ => {}
                }
                let Some(func) = Func::from_name(name) else {
                    return perr(start, format!("unknown identifier '{name}'"));
                };
                if self.tok != Tok::LParen {
                    return perr(self.tok_start, format!("expected '(' after '{name}'"));
                }
                let open = self.tok_start;
                self.advance()?;
                let (first, mut h) = self.expr()?;
                let mut args = vec![first];
                while self.tok == Tok::Comma {
                    self.advance()?;
                    let (a, ha) = self.expr()?;
                    h = h.max(ha);
                    args.push(a);
                }
                if self.tok != Tok::RParen {
                    if self.tok == Tok::End {
                        return perr(open, "unbalanced parenthesis");
                    }
                    return perr(self.tok_start, "expected ',' or ')'");
                }
                self.advance()?;
                if !func.arity_ok(args.len()) {
                    return perr(start, format!("wrong number of arguments to '{name}'"));
                }
                let h = self.check_tree(h + 1)?;
                Ok((Expr::Call(func, args), h))
            }
            Tok::LParen => {
                self.advance()?;
                let (inner, h) = self.expr()?;
                if self.tok != Tok::RParen {
                    if self.tok == Tok::End {
                        return perr(start, "unbalanced parenthesis");
                    }
                    return perr(self.tok_start, "expected ')'");
                }
                self.advance()?;
                Ok((inner, h))
            }
            Tok::End => perr(start, "unexpected end of input"),
            Tok::RParen => perr(start, "unbalanced parenthesis"),
            _ => perr(start, "expected a number, variable, function or '('"),
        }
    }
}

/// Parses `text`; the whole input must be consumed.
pub fn parse_expr(text: &str) -> Result<Expr> {
    if text.trim().is_empty() {
        return perr(0, "empty expression");
    }
    let mut p = Parser::new(text)?;
    let (e, _) = p.expr()?;
    match p.tok {
        Tok::End => Ok(e),
        Tok::RParen => perr(p.tok_start, "unbalanced parenthesis"),
        _ => perr(p.tok_start, "trailing input"),
    }
}

impl Expr {
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Neg(e) => -e.evaluate(x, y)?,
            Expr::Binary(op, a, b) => {
                let a = a.evaluate(x, y)?;
                let b = b.evaluate(x, y)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::Evaluation("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a == 0.0 && b < 0.0 {
                            return Err(Error::Evaluation("zero raised to a negative power".into()));
                        }
                        a.powf(b)
                    }
                }
            }
            Expr::Call(f, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.evaluate(x, y))
                    .collect::<Result<Vec<_>>>()?;
                match f {
                    Func::Sin => vals[0].sin(),
                    Func::Cos => vals[0].cos(),
                    Func::Exp => vals[0].exp(),
                    Func::Abs => vals[0].abs(),
                    Func::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
                    Func::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            }
        };
        if v.is_nan() {
            return Err(Error::Evaluation("result is not a number".into()));
        }
        Ok(v)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Binary(op, a, b) => {
                let prec = self.precedence();
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    // right associative; a negated base needs parentheses
                    write_child(f, a, a.precedence() <= prec)?;
                    f.write_str(sym)?;
                    write_child(f, b, b.precedence() < 3)
                } else {
                    write_child(f, a, a.precedence() < prec)?;
                    f.write_str(sym)?;
                    write_child(f, b, b.precedence() <= prec)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
