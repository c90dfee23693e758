//! Small arithmetic expression language for user-supplied branch formulas.
//!
//! Supports numbers, named variables, `+ - * / ^`, unary minus and the
//! functions `exp`, `log` (natural, alias `ln`), `sqrt` and `abs`.
//! Decimal literals are read as exact rationals.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};

use crate::error::{Error, Result};
use crate::real::Scalar;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Clone, Debug)]
enum Node {
    Num(BigRational, f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Clone, Debug)]
pub struct Expr {
    source: String,
    vars: Vec<String>,
    root: Node,
}

impl Expr {
    /// Parse `src`; identifiers must be among `vars`.
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser { src, tokens, pos: 0, vars };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::expression(src, format!("unexpected token {:?}", p.tokens[p.pos])));
        }
        Ok(Expr { source: src.to_string(), vars: vars.iter().map(|s| s.to_string()).collect(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn eval(&self, vals: &[f64]) -> f64 {
        eval_f64(&self.root, vals)
    }

    pub fn eval_scalar(&self, vals: &[Scalar]) -> Scalar {
        eval_scalar(&self.root, vals)
    }

    /// Value of an expression that must not reference any variable.
    pub fn constant(src: &str) -> Result<Scalar> {
        Ok(Expr::parse(src, &[])?.eval_scalar(&[]))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn eval_f64(n: &Node, v: &[f64]) -> f64 {
    match n {
        Node::Num(_, x) => *x,
        Node::Var(i) => v[*i],
        Node::Neg(a) => -eval_f64(a, v),
        Node::Add(a, b) => eval_f64(a, v) + eval_f64(b, v),
        Node::Sub(a, b) => eval_f64(a, v) - eval_f64(b, v),
        Node::Mul(a, b) => eval_f64(a, v) * eval_f64(b, v),
        Node::Div(a, b) => eval_f64(a, v) / eval_f64(b, v),
        Node::Pow(a, b) => {
            let base = eval_f64(a, v);
            let e = eval_f64(b, v);
            if e.fract() == 0.0 && e.abs() < 1024.0 {
                base.powi(e as i32)
            } else {
                base.powf(e)
            }
        }
        Node::Call(f, a) => {
            let x = eval_f64(a, v);
            match f {
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
                Func::Sqrt => x.sqrt(),
                Func::Abs => x.abs(),
            }
        }
    }
}

fn eval_scalar(n: &Node, v: &[Scalar]) -> Scalar {
    match n {
        Node::Num(q, _) => Scalar::Exact(q.clone()),
        Node::Var(i) => v[*i].clone(),
        Node::Neg(a) => -eval_scalar(a, v),
        Node::Add(a, b) => eval_scalar(a, v) + eval_scalar(b, v),
        Node::Sub(a, b) => eval_scalar(a, v) - eval_scalar(b, v),
        Node::Mul(a, b) => eval_scalar(a, v) * eval_scalar(b, v),
        Node::Div(a, b) => eval_scalar(a, v) / eval_scalar(b, v),
        Node::Pow(a, b) => eval_scalar(a, v).pow(&eval_scalar(b, v)),
        Node::Call(f, a) => {
            let x = eval_scalar(a, v);
            match f {
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
                Func::Sqrt => x.sqrt(),
                Func::Abs => match x {
                    Scalar::Exact(q) => Scalar::Exact(q.abs()),
                    Scalar::Approx(r) => Scalar::Approx(r.abs()),
                },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push(Tok::Num(chars[start..i].iter().collect()));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else {
            return Err(Error::expression(src, format!("unexpected character '{c}'")));
        }
    }
    if out.is_empty() {
        return Err(Error::expression(src, "empty expression"));
    }
    Ok(out)
}

/// Exact rational value of a decimal literal such as `0.125` or `1.5e-3`.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (int, frac) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = if digits.is_empty() { BigInt::from(0) } else { digits.parse().ok()? };
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    Some(if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    })
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Tok>,
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::expression(self.src, msg)
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { Node::Add(lhs.into(), rhs.into()) } else { Node::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { Node::Mul(lhs.into(), rhs.into()) } else { Node::Div(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(self.unary()?.into()))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Node::Pow(base.into(), e.into()));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(s)) => {
                let q = parse_decimal(&s).ok_or_else(|| self.err(format!("bad number '{s}'")))?;
                let f = q.to_f64().unwrap_or(f64::NAN);
                Ok(Node::Num(q, f))
            }
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    let f = match name.as_str() {
                        "exp" => Func::Exp,
                        "log" | "ln" => Func::Log,
                        "sqrt" => Func::Sqrt,
                        "abs" => Func::Abs,
                        _ => return Err(self.err(format!("unknown function '{name}'"))),
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    match self.next() {
                        Some(Tok::RParen) => Ok(Node::Call(f, arg.into())),
                        _ => Err(self.err("missing ')'")),
                    }
                } else {
                    self.vars
                        .iter()
                        .position(|v| *v == name)
                        .map(Node::Var)
                        .ok_or_else(|| self.err(format!("unknown variable '{name}'")))
                }
            }
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(self.err("missing ')'")),
                }
            }
            Some(t) => Err(self.err(format!("unexpected token {t:?}"))),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 - 2 * 3 ^ 2 ^ 0.5 / 4", &[]).unwrap();
        let want = 1.0 - 2.0 * 3f64.powf(2f64.powf(0.5)) / 4.0;
        assert!((e.eval(&[]) - want).abs() < 1e-14);
        assert_eq!(Expr::parse("-2^2", &[]).unwrap().eval(&[]), -4.0);
    }

    #[test]
    fn exact_rationals_from_decimals() {
        let v = Expr::constant("0.1 * 3 - 1/5").unwrap();
        assert_eq!(v.render(20), "1/10");
        assert_eq!(parse_decimal("1.5e-3").unwrap(), BigRational::new(3.into(), 2000.into()));
    }

    #[test]
    fn variables_and_functions() {
        let e = Expr::parse("x^2 + 81/112*x - 81/112", &["x"]).unwrap();
        assert!((e.eval(&[9.0 / 16.0])).abs() < 1e-15);
        let g = Expr::parse("log(exp(y)) + sqrt(abs(-4))", &["y"]).unwrap();
        assert!((g.eval(&[0.7]) - 2.7).abs() < 1e-14);
    }

    #[test]
    fn errors_name_the_formula() {
        let err = Expr::parse("x + (1", &["x"]).unwrap_err();
        assert!(matches!(err, Error::ExpressionError { ref formula, .. } if formula == "x + (1"));
        assert!(Expr::parse("foo(1)", &[]).is_err());
        assert!(Expr::parse("z", &["x"]).is_err());
    }
}
