//! A small arithmetic expression language over the variables `t`, `x`, `y`.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := NUMBER | 'pi' | VAR | '(' expr ')' | FUNC '(' expr ')' | '-' factor
//! FUNC   := sin | cos | exp | abs | sqrt
//! VAR    := t | x | y
//! ```
//!
//! Printing with [`fmt::Display`] emits the minimum parentheses needed for the
//! printed text to parse back into the same tree.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    X,
    Y,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Abs => v.abs(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn is_additive(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

/// Variable bindings used during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl Env {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Env { t, x, y }
    }

    pub fn at_t(t: f64) -> Self {
        Env { t, x: 0.0, y: 0.0 }
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        match var {
            Var::T => self.t = value,
            Var::X => self.x = value,
            Var::Y => self.y = value,
        }
        self
    }

    pub fn get(&self, var: Var) -> f64 {
        match var {
            Var::T => self.t,
            Var::X => self.x,
            Var::Y => self.y,
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut parser = Parser { tokens: &tokens, pos: 0, src };
        let expr = parser.expr()?;
        match parser.peek() {
            Some(tok) => Err(parser.error_at(tok.offset, format!("unexpected {}", tok.kind))),
            None => Ok(expr),
        }
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(v) => env.get(*v),
            Expr::Neg(e) => -e.eval(env),
            Expr::Call(f, e) => f.apply(e.eval(env)),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.eval(env), r.eval(env));
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                }
            }
        }
    }

    /// Evaluates an expression that must not reference any variable.
    pub fn eval_const(&self) -> Result<f64> {
        if let Some(v) = self.free_vars().first() {
            return Err(Error::Eval(format!(
                "constant expression `{self}` references variable `{}`",
                v.name()
            )));
        }
        let v = self.eval(&Env::default());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Eval(format!("constant expression `{self}` is not finite")))
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) | Expr::Call(_, e) => e.depends_on(var),
            Expr::Bin(_, l, r) => l.depends_on(var) || r.depends_on(var),
        }
    }

    pub fn free_vars(&self) -> Vec<Var> {
        [Var::T, Var::X, Var::Y]
            .into_iter()
            .filter(|v| self.depends_on(*v))
            .collect()
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) if op.is_additive() => 1,
            Expr::Bin(_, _, _) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => write!(f, "(-{})", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => f.write_str("pi"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(e) => {
                if e.precedence() < 3 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, l, r) => {
                let prec = self.precedence();
                // Left-associative: the left child may share our precedence, the
                // right child must bind strictly tighter.
                if l.precedence() < prec {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                if op.is_additive() {
                    write!(f, " {} ", op.symbol())?;
                } else {
                    write!(f, "{}", op.symbol())?;
                }
                if r.precedence() <= prec {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl fmt::Display for TokKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokKind::Num(v) => write!(f, "number {v}"),
            TokKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokKind::Op(c) => write!(f, "`{c}`"),
            TokKind::LParen => f.write_str("`(`"),
            TokKind::RParen => f.write_str("`)`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for (i, c) in src.char_indices() {
        if i >= offset {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

fn parse_error(src: &str, offset: usize, message: String) -> Error {
    let (line, column) = line_col(src, offset);
    Error::Parse { line, column, message }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' | b'-' | b'*' | b'/' => {
                out.push(Token { kind: TokKind::Op(c as char), offset: i });
                i += 1;
            }
            b'(' => {
                out.push(Token { kind: TokKind::LParen, offset: i });
                i += 1;
            }
            b')' => {
                out.push(Token { kind: TokKind::RParen, offset: i });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
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
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| parse_error(src, start, format!("malformed number `{text}`")))?;
                out.push(Token { kind: TokKind::Num(v), offset: start });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token { kind: TokKind::Ident(src[start..i].to_string()), offset: start });
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(parse_error(src, i, format!("unexpected character `{ch}`")));
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn error_at(&self, offset: usize, message: String) -> Error {
        parse_error(self.src, offset, message)
    }

    fn eof_error(&self) -> Error {
        self.error_at(self.src.len(), "unexpected end of expression".to_string())
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token { kind: TokKind::Op(c @ ('+' | '-')), .. }) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(Token { kind: TokKind::Op(c @ ('*' | '/')), .. }) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expect_rparen(&mut self, open: usize) -> Result<()> {
        match self.peek() {
            Some(Token { kind: TokKind::RParen, .. }) => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(self.error_at(tok.offset, format!("expected `)`, found {}", tok.kind))),
            None => Err(self.error_at(open, "unclosed `(`".to_string())),
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let tok = self.peek().cloned().ok_or_else(|| self.eof_error())?;
        self.pos += 1;
        match tok.kind {
            TokKind::Num(v) => Ok(Expr::Num(v)),
            TokKind::Op('-') => Ok(Expr::Neg(Box::new(self.factor()?))),
            TokKind::LParen => {
                let inner = self.expr()?;
                self.expect_rparen(tok.offset)?;
                Ok(inner)
            }
            TokKind::Ident(name) => match name.as_str() {
                "pi" => Ok(Expr::Pi),
                "t" => Ok(Expr::Var(Var::T)),
                "x" => Ok(Expr::Var(Var::X)),
                "y" => Ok(Expr::Var(Var::Y)),
                other => {
                    let func = Func::from_name(other).ok_or_else(|| {
                        self.error_at(tok.offset, format!("unknown identifier `{other}`"))
                    })?;
                    match self.peek() {
                        Some(Token { kind: TokKind::LParen, offset }) => {
                            let open = *offset;
                            self.pos += 1;
                            let arg = self.expr()?;
                            self.expect_rparen(open)?;
                            Ok(Expr::Call(func, Box::new(arg)))
                        }
                        _ => Err(self.error_at(
                            tok.offset,
                            format!("function `{other}` must be followed by `(`"),
                        )),
                    }
                }
            },
            other => Err(self.error_at(tok.offset, format!("unexpected {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_parses_to_product() {
        let e = Expr::parse("4*t").unwrap();
        assert_eq!(e, Expr::bin(BinOp::Mul, Expr::Num(4.0), Expr::Var(Var::T)));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 - 2 - 3 * 4 / 2").unwrap();
        assert_eq!(e.eval(&Env::default()), 1.0 - 2.0 - 6.0);
        let e = Expr::parse("-x*y").unwrap();
        assert_eq!(e.eval(&Env::new(0.0, 3.0, 2.0)), -6.0);
        let e = Expr::parse("2*-3").unwrap();
        assert_eq!(e.eval(&Env::default()), -6.0);
    }

    #[test]
    fn paper_style_final_data_parses() {
        let e = Expr::parse("(1/2)*(t - pi/2)*sin(1/(t - pi/2))").unwrap();
        let t = 1.0;
        let u = t - std::f64::consts::FRAC_PI_2;
        assert!((e.eval(&Env::at_t(t)) - 0.5 * u * (1.0 / u).sin()).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_positions() {
        match Expr::parse("1 + foo") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 5)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Expr::parse(""), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("(1 + 2"), Err(Error::Parse { column: 1, .. })));
        assert!(matches!(Expr::parse("1 2"), Err(Error::Parse { column: 3, .. })));
        assert!(matches!(Expr::parse("sin 2"), Err(Error::Parse { .. })));
        assert!(matches!(Expr::parse("2 ^ 3"), Err(Error::Parse { column: 3, .. })));
    }

    #[test]
    fn exponent_literals() {
        assert_eq!(Expr::parse("1e-3").unwrap(), Expr::Num(1e-3));
        assert_eq!(Expr::parse("2.5E+2").unwrap(), Expr::Num(250.0));
    }

    #[test]
    fn printing_round_trips() {
        for src in ["1 - (2 - 3)", "a", "-(x + 1)*y", "x/(y*t)", "x/y*t", "--x", "sqrt(abs(t - 1))"] {
            let Ok(e) = Expr::parse(src) else { continue };
            let printed = e.to_string();
            assert_eq!(Expr::parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }

    #[test]
    fn free_variable_scan() {
        let e = Expr::parse("x + sin(y)").unwrap();
        assert_eq!(e.free_vars(), vec![Var::X, Var::Y]);
        assert!(Expr::parse("pi/8").unwrap().eval_const().is_ok());
        assert!(Expr::parse("t").unwrap().eval_const().is_err());
    }
}
