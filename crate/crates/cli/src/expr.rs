//! Coefficient expression language: a small tree-walking interpreter.
//!
//! Grammar, lowest precedence first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          right-associative
//! atom    := number | name | name '(' sum (',' sum)* ')' | '(' sum ')'
//! ```
//!
//! Names are `x1..xd`, `t`, and `x` (the whole point, only as the argument
//! of `norm`, `norm1`, `norm2`). Functions: `exp ln abs sqrt` (one
//! argument), `pow min max` (two), `norm norm1 norm2` (the point).

use std::fmt;

use thiserror::Error;

/// Byte range in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {column}: {message}")]
pub struct ParseError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("evaluation of `{fragment}` (columns {start}-{end}) is not finite")]
pub struct EvalError {
    pub fragment: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Abs,
    Sqrt,
    Pow,
    Min,
    Max,
    Norm,
    Norm1,
    Norm2,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "pow" => Func::Pow,
            "min" => Func::Min,
            "max" => Func::Max,
            "norm" => Func::Norm,
            "norm1" => Func::Norm1,
            "norm2" => Func::Norm2,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Pow => "pow",
            Func::Min => "min",
            Func::Max => "max",
            Func::Norm => "norm",
            Func::Norm1 => "norm1",
            Func::Norm2 => "norm2",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Pow | Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn takes_point(self) -> bool {
        matches!(self, Func::Norm | Func::Norm1 | Func::Norm2)
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

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Number(f64),
    /// Coordinate `x_{i+1}`.
    Coord(usize),
    Time,
    /// The whole point, valid only inside the norm functions.
    Point,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A parsed expression. Equality compares trees and ignores spans.
#[derive(Debug, Clone)]
pub struct Expr {
    pub node: Node,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

impl Expr {
    /// Whether `t` occurs anywhere in the tree.
    pub fn uses_time(&self) -> bool {
        match &self.node {
            Node::Time => true,
            Node::Number(_) | Node::Coord(_) | Node::Point => false,
            Node::Neg(inner) => inner.uses_time(),
            Node::Binary(_, a, b) => a.uses_time() || b.uses_time(),
            Node::Call(_, args) => args.iter().any(Expr::uses_time),
        }
    }
}

/// Spatial dimension and the `(d1, d2)` split used by `norm1`/`norm2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Context {
    pub dimension: usize,
    pub split: Option<(usize, usize)>,
}

impl Context {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, split: None }
    }

    pub fn with_split(mut self, d1: usize, d2: usize) -> Self {
        self.split = Some((d1, d2));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Name(String),
    Op(char),
    Open,
    Close,
    Comma,
}

fn column(src: &str, byte: usize) -> usize {
    src[..byte.min(src.len())].chars().count() + 1
}

fn tokenize(src: &str) -> Result<Vec<(Token, Span)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let token = if c.is_ascii_digit() || c == '.' {
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
            let value: f64 = text.parse().map_err(|_| ParseError {
                column: column(src, start),
                message: format!("malformed number `{text}`"),
            })?;
            Token::Number(value)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Token::Name(src[start..i].to_string())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => Token::Op(c),
                '(' => Token::Open,
                ')' => Token::Close,
                ',' => Token::Comma,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or(c);
                    return Err(ParseError {
                        column: column(src, start),
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            }
        };
        out.push((token, Span { start, end: i }));
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<(Token, Span)>,
    pos: usize,
    ctx: Context,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.src.len(), |(_, s)| s.start)
    }

    fn error<T>(&self, at: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            column: column(self.src, at),
            message: message.into(),
        })
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Token::Op('-')) = self.peek() {
            let start = self.here();
            self.pos += 1;
            let inner = self.unary()?;
            let end = inner.span.end;
            return Ok(Expr {
                node: Node::Neg(Box::new(inner)),
                span: Span { start, end },
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.here();
        let Some((token, span)) = self.tokens.get(self.pos).cloned() else {
            return self.error(at, "unexpected end of expression");
        };
        self.pos += 1;
        match token {
            Token::Number(v) => Ok(Expr {
                node: Node::Number(v),
                span,
            }),
            Token::Open => {
                let inner = self.sum()?;
                match self.peek() {
                    Some(Token::Close) => {
                        let end = self.tokens[self.pos].1.end;
                        self.pos += 1;
                        Ok(Expr {
                            node: inner.node,
                            span: Span { start: span.start, end },
                        })
                    }
                    _ => self.error(at, "unbalanced parenthesis: `(` is never closed"),
                }
            }
            Token::Name(name) => self.name(name, span),
            Token::Close => self.error(at, "unbalanced parenthesis: unexpected `)`"),
            Token::Comma => self.error(at, "unexpected `,`"),
            Token::Op(c) => self.error(at, format!("unexpected operator `{c}`")),
        }
    }

    fn name(&mut self, name: String, span: Span) -> Result<Expr, ParseError> {
        if let Some(func) = Func::lookup(&name) {
            if self.peek() != Some(&Token::Open) {
                return self.error(span.start, format!("function `{name}` must be called with parentheses"));
            }
            let open = self.here();
            self.pos += 1;
            let mut args = Vec::new();
            if self.peek() != Some(&Token::Close) {
                loop {
                    args.push(self.argument(func)?);
                    match self.peek() {
                        Some(Token::Comma) => self.pos += 1,
                        Some(Token::Close) => break,
                        None => return self.error(open, "unbalanced parenthesis: `(` is never closed"),
                        _ => return self.error(self.here(), "expected `,` or `)`"),
                    }
                }
            }
            let end = self.tokens[self.pos].1.end;
            self.pos += 1;
            if args.len() != func.arity() {
                return self.error(
                    span.start,
                    format!("`{name}` takes {} argument(s), got {}", func.arity(), args.len()),
                );
            }
            if func != Func::Norm && func.takes_point() && self.ctx.split.is_none() {
                return self.error(span.start, format!("`{name}` needs a declared split d1, d2"));
            }
            return Ok(Expr {
                node: Node::Call(func, args),
                span: Span { start: span.start, end },
            });
        }
        if name == "t" {
            return Ok(Expr { node: Node::Time, span });
        }
        if name == "x" {
            return self.error(
                span.start,
                "the point `x` may only appear as the argument of norm, norm1 or norm2",
            );
        }
        if let Some(index) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if (1..=self.ctx.dimension).contains(&index) {
                return Ok(Expr {
                    node: Node::Coord(index - 1),
                    span,
                });
            }
        }
        self.error(span.start, format!("unknown identifier `{name}`"))
    }

    fn argument(&mut self, func: Func) -> Result<Expr, ParseError> {
        if func.takes_point() {
            if let Some((Token::Name(n), span)) = self.tokens.get(self.pos).cloned() {
                if n == "x" {
                    self.pos += 1;
                    return Ok(Expr {
                        node: Node::Point,
                        span,
                    });
                }
            }
            return self.error(
                self.here(),
                format!("`{}` takes the point `x` as its argument", func.name()),
            );
        }
        self.sum()
    }
}

fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
    let span = Span {
        start: lhs.span.start,
        end: rhs.span.end,
    };
    Expr {
        node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
        span,
    }
}

/// Parses `src` for the given dimension and split.
pub fn parse_expression(src: &str, ctx: Context) -> Result<Expr, ParseError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser {
        src,
        tokens,
        pos: 0,
        ctx,
    };
    let expr = parser.sum()?;
    if parser.pos < parser.tokens.len() {
        let at = parser.here();
        let message = match parser.peek() {
            Some(Token::Close) => "unbalanced parenthesis: unexpected `)`".to_string(),
            _ => "unexpected trailing input".to_string(),
        };
        return parser.error(at, message);
    }
    Ok(expr)
}

fn norm_of(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A parsed expression bound to its source, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub source: String,
    pub expr: Expr,
    pub ctx: Context,
}

impl Compiled {
    pub fn new(source: &str, ctx: Context) -> Result<Self, ParseError> {
        Ok(Self {
            source: source.to_string(),
            expr: parse_expression(source, ctx)?,
            ctx,
        })
    }

    /// Evaluates at `(x, t)`; a non-finite intermediate value is an error
    /// naming the innermost offending subexpression.
    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64, EvalError> {
        self.eval_node(&self.expr, x, t)
    }

    fn fail(&self, e: &Expr) -> EvalError {
        let fragment = self.source.get(e.span.start..e.span.end).unwrap_or("").to_string();
        EvalError {
            fragment,
            start: column(&self.source, e.span.start),
            end: column(&self.source, e.span.end) - 1,
        }
    }

    fn eval_node(&self, e: &Expr, x: &[f64], t: f64) -> Result<f64, EvalError> {
        let v = match &e.node {
            Node::Number(v) => *v,
            Node::Coord(i) => x[*i],
            Node::Time => t,
            Node::Point => return Err(self.fail(e)),
            Node::Neg(inner) => -self.eval_node(inner, x, t)?,
            Node::Binary(op, a, b) => {
                let (a, b) = (self.eval_node(a, x, t)?, self.eval_node(b, x, t)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Node::Call(func, args) => match func {
                Func::Norm => norm_of(x),
                Func::Norm1 | Func::Norm2 => {
                    let d1 = self.ctx.split.map_or(x.len(), |s| s.0).min(x.len());
                    norm_of(if *func == Func::Norm1 { &x[..d1] } else { &x[d1..] })
                }
                _ => {
                    let a = self.eval_node(&args[0], x, t)?;
                    match func {
                        Func::Exp => a.exp(),
                        Func::Ln => a.ln(),
                        Func::Abs => a.abs(),
                        Func::Sqrt => a.sqrt(),
                        _ => {
                            let b = self.eval_node(&args[1], x, t)?;
                            match func {
                                Func::Pow => a.powf(b),
                                Func::Min => a.min(b),
                                _ => a.max(b),
                            }
                        }
                    }
                }
            },
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(e))
        }
    }
}

impl serde::Serialize for Compiled {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized form that re-parses to an equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Number(v) => write!(f, "{v:?}"),
            Node::Coord(i) => write!(f, "x{}", i + 1),
            Node::Time => f.write_str("t"),
            Node::Point => f.write_str("x"),
            Node::Neg(inner) => write!(f, "(-{inner})"),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, ctx: Context, x: &[f64]) -> Result<f64, EvalError> {
        Compiled::new(src, ctx).unwrap().eval(x, 0.0)
    }

    #[test]
    fn split_norms_match_hand_evaluation() {
        let ctx = Context::new(2).with_split(1, 1);
        let v = eval("exp(pow(norm1(x), 1.5) - pow(norm2(x), 1.5))", ctx, &[1.0, 0.0]).unwrap();
        assert!((v - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn zero_power_of_the_norm() {
        assert_eq!(eval("-x1*pow(norm(x),0)", Context::new(1), &[2.0]).unwrap(), -2.0);
    }

    #[test]
    fn logarithm_of_zero_is_an_error() {
        let err = eval("1 + ln(0)", Context::new(1), &[0.0]).unwrap_err();
        assert_eq!(err.fragment, "ln(0)");
        assert_eq!((err.start, err.end), (5, 9));
    }

    #[test]
    fn precedence_and_associativity() {
        let c = Context::new(1);
        assert_eq!(eval("2^3^2", c, &[0.0]).unwrap(), 512.0);
        assert_eq!(eval("-2^2", c, &[0.0]).unwrap(), -4.0);
        assert_eq!(eval("2^-1", c, &[0.0]).unwrap(), 0.5);
        assert_eq!(eval("1 - 2 - 3", c, &[0.0]).unwrap(), -4.0);
        assert_eq!(eval("8 / 2 / 2", c, &[0.0]).unwrap(), 2.0);
        assert_eq!(eval("1 + 2 * 3", c, &[0.0]).unwrap(), 7.0);
        assert_eq!(eval("min(x1, 1) + max(x1, 1)", c, &[3.0]).unwrap(), 4.0);
        assert_eq!(eval("1.5e-1 * 2E1", c, &[0.0]).unwrap(), 3.0);
    }

    #[test]
    fn errors_carry_positions() {
        let c = Context::new(1);
        let e = parse_expression("1 + x2", c).unwrap_err();
        assert_eq!(e.column, 5);
        assert!(e.message.contains("unknown identifier"));
        let e = parse_expression("pow(x1)", c).unwrap_err();
        assert!(e.message.contains("takes 2"));
        let e = parse_expression("(1 + x1", c).unwrap_err();
        assert_eq!(e.column, 1);
        assert!(e.message.contains("unbalanced"));
        let e = parse_expression("1 + x1)", c).unwrap_err();
        assert_eq!(e.column, 7);
        assert!(parse_expression("norm1(x)", c).is_err());
        assert!(parse_expression("x + 1", c).is_err());
        assert!(parse_expression("1 $ 2", c).unwrap_err().column == 3);
    }

    #[test]
    fn display_round_trips() {
        let ctx = Context::new(2).with_split(1, 1);
        for src in [
            "-x1*abs(x2)^2 - 0.1e-3",
            "exp(-(norm(x)^2)/4)",
            "max(t, sqrt(x1^2 + 1)) / -norm2(x)",
        ] {
            let e = parse_expression(src, ctx).unwrap();
            let again = parse_expression(&e.to_string(), ctx).unwrap();
            assert_eq!(e, again);
        }
    }
}
