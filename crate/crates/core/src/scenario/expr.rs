//! Scalar field expressions.
//!
//! Grammar (lowest to highest precedence): `+ -`, `* /`, unary `-`, `^`
//! (right associative), atoms. Atoms are numbers, variables
//! (`x1 x2 y1 y2 a1 a2`), `pi`, named scenario constants and calls to
//! `sin cos exp abs sqrt min max wrap smoothstep`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X1,
    X2,
    Y1,
    Y2,
    A1,
    A2,
}

impl Var {
    const ALL: [Var; 6] = [Var::X1, Var::X2, Var::Y1, Var::Y2, Var::A1, Var::A2];

    pub fn name(self) -> &'static str {
        match self {
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::Y1 => "y1",
            Var::Y2 => "y2",
            Var::A1 => "a1",
            Var::A2 => "a2",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// Values of all variables for one evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub a: [f64; 2],
}

impl Env {
    pub fn new(x: [f64; 2], y: [f64; 2], a: [f64; 2]) -> Self {
        Env { x, y, a }
    }

    fn get(&self, v: Var) -> f64 {
        match v.slot() {
            0 => self.x[0],
            1 => self.x[1],
            2 => self.y[0],
            3 => self.y[1],
            4 => self.a[0],
            _ => self.a[1],
        }
    }
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
    Sqrt,
    Min,
    Max,
    Wrap,
    Smoothstep,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "min" => Func::Min,
            "max" => Func::Max,
            "wrap" => Func::Wrap,
            "smoothstep" => Func::Smoothstep,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Min => "min",
            Func::Max => "max",
            Func::Wrap => "wrap",
            Func::Smoothstep => "smoothstep",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Wrap => 2,
            Func::Smoothstep => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    /// `pi` or a named scenario constant, printed by name.
    Named(String, f64),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone)]
pub struct ScalarExpr {
    tree: Expr,
    source: String,
}

impl PartialEq for ScalarExpr {
    fn eq(&self, other: &Self) -> bool {
        self.tree == other.tree
    }
}

impl ScalarExpr {
    pub fn tree(&self) -> &Expr {
        &self.tree
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn constant(c: f64) -> Self {
        ScalarExpr { tree: Expr::Num(c), source: format!("{c}") }
    }

    pub fn from_tree(tree: Expr) -> Self {
        let source = tree.to_string();
        ScalarExpr { tree, source }
    }

    pub fn eval(&self, env: &Env) -> Result<f64> {
        let v = self.tree.eval(env)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Eval(format!("`{}` is not finite at {:?}", self.source, env)))
        }
    }

    pub fn uses(&self, v: Var) -> bool {
        self.tree.uses(v)
    }

    /// Canonical text; parsing it back yields the same tree.
    pub fn canonical(&self) -> String {
        self.tree.to_string()
    }
}

/// Parses with only `pi` as a named constant.
pub fn parse_expression(src: &str) -> Result<ScalarExpr> {
    parse_expression_with(src, &[])
}

/// Parses with extra named constants (for example `R0`).
pub fn parse_expression_with(src: &str, constants: &[(&str, f64)]) -> Result<ScalarExpr> {
    if src.trim().is_empty() {
        return Err(Error::Syntax { offset: 0, message: "empty expression".into() });
    }
    let mut p = Parser { src, bytes: src.as_bytes(), pos: 0, constants };
    let tree = p.expr()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(ScalarExpr { tree, source: src.to_string() })
}

impl Expr {
    pub fn eval(&self, env: &Env) -> Result<f64> {
        Ok(match self {
            Expr::Num(c) => *c,
            Expr::Var(v) => env.get(*v),
            Expr::Named(_, c) => *c,
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(env)?;
                let b = r.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::Eval("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let v = a.powf(b);
                        if v.is_nan() {
                            return Err(Error::Eval(format!("{a}^{b} is undefined")));
                        }
                        v
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(env)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(Error::Eval(format!("sqrt of negative value {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Min => a.min(args[1].eval(env)?),
                    Func::Max => a.max(args[1].eval(env)?),
                    Func::Wrap => {
                        let t = args[1].eval(env)?;
                        if t <= 0.0 {
                            return Err(Error::Eval(format!("wrap period must be positive, got {t}")));
                        }
                        let w = a - t * (a / t).floor();
                        // guard against a - t*floor(a/t) rounding up to t
                        if w >= t {
                            0.0
                        } else {
                            w
                        }
                    }
                    Func::Smoothstep => {
                        let b = args[1].eval(env)?;
                        let v = args[2].eval(env)?;
                        smoothstep(a, b, v)?
                    }
                }
            }
        })
    }

    pub fn uses(&self, v: Var) -> bool {
        match self {
            Expr::Var(w) => *w == v,
            Expr::Num(_) | Expr::Named(..) => false,
            Expr::Neg(e) => e.uses(v),
            Expr::Bin(_, l, r) => l.uses(v) || r.uses(v),
            Expr::Call(_, args) => args.iter().any(|a| a.uses(v)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

/// Cubic Hermite step: 0 at `v = a`, 1 at `v = b`, clamped outside.
pub fn smoothstep(a: f64, b: f64, v: f64) -> Result<f64> {
    if a == b {
        return Err(Error::Eval("smoothstep with equal edges".into()));
    }
    let t = ((v - a) / (b - a)).clamp(0.0, 1.0);
    Ok(t * t * (3.0 - 2.0 * t))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Named(n, _) => write!(f, "{n}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                child(f, e, e.precedence() < 3)
            }
            Expr::Bin(op, l, r) => {
                let (sym, prec) = match op {
                    BinOp::Add => (" + ", 1),
                    BinOp::Sub => (" - ", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                if *op == BinOp::Pow {
                    child(f, l, l.precedence() <= 4)?;
                    write!(f, "{sym}")?;
                    child(f, r, r.precedence() < 3)
                } else {
                    child(f, l, l.precedence() < prec)?;
                    write!(f, "{sym}")?;
                    child(f, r, r.precedence() <= prec)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tree)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    constants: &'a [(&'a str, f64)],
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> Error {
        Error::Syntax { offset: self.pos, message: message.to_string() }
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

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Expr::Neg(Box::new(e)));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => Err(self.err(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < b.len() && b[self.pos].is_ascii_digit() {
                while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| Error::Syntax { offset: start, message: format!("malformed number `{text}`") })
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_alphanumeric() || b[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            let func = Func::lookup(name)
                .ok_or_else(|| Error::UnknownIdent { name: name.to_string(), offset: start })?;
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                args.push(self.expr()?);
            }
            self.expect(b')')?;
            if args.len() != func.arity() {
                return Err(Error::Syntax {
                    offset: start,
                    message: format!("`{}` takes {} argument(s), got {}", name, func.arity(), args.len()),
                });
            }
            return Ok(Expr::Call(func, args));
        }
        if let Some(v) = Var::ALL.iter().find(|v| v.name() == name) {
            return Ok(Expr::Var(*v));
        }
        if name == "pi" {
            return Ok(Expr::Named("pi".into(), std::f64::consts::PI));
        }
        if let Some((n, c)) = self.constants.iter().find(|(n, _)| *n == name) {
            return Ok(Expr::Named(n.to_string(), *c));
        }
        Err(Error::UnknownIdent { name: name.to_string(), offset: start })
    }
}
