//! A tiny arithmetic expression language for runtime-defined coefficients.
//!
//! Grammar: `+ - * / ^` (with `^` right-associative), unary minus, parens,
//! the functions `sin`, `cos`, `exp`, numeric literals, and the variables
//! `t`, `x`, `y`. In dimension one `x` and `y` are scalars; in higher
//! dimension components are indexed as `x0, x1, ...` / `y0, y1, ...`.
//! `x` refers to the current state, `y` to the state one delay ago.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    State(usize),
    Delayed(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    /// Parse `source` for a model of state dimension `dim`.
    pub fn parse(source: &str, dim: usize) -> Result<Expr> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0, dim, source };
        let e = p.expression()?;
        if p.pos != p.tokens.len() {
            return Err(p.error(format!("unexpected trailing input at token {:?}", p.tokens[p.pos])));
        }
        Ok(e)
    }

    /// Evaluate with current state `x` and delayed state `y`.
    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => t,
            Expr::State(i) => x[*i],
            Expr::Delayed(i) => y[*i],
            Expr::Neg(e) => -e.eval(t, x, y),
            Expr::Add(a, b) => a.eval(t, x, y) + b.eval(t, x, y),
            Expr::Sub(a, b) => a.eval(t, x, y) - b.eval(t, x, y),
            Expr::Mul(a, b) => a.eval(t, x, y) * b.eval(t, x, y),
            Expr::Div(a, b) => a.eval(t, x, y) / b.eval(t, x, y),
            Expr::Pow(a, b) => a.eval(t, x, y).powf(b.eval(t, x, y)),
            Expr::Sin(e) => e.eval(t, x, y).sin(),
            Expr::Cos(e) => e.eval(t, x, y).cos(),
            Expr::Exp(e) => e.eval(t, x, y).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == '.'
                        || bytes[i] == 'e'
                        || bytes[i] == 'E'
                        || ((bytes[i] == '+' || bytes[i] == '-')
                            && i > start
                            && (bytes[i - 1] == 'e' || bytes[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = bytes[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| Error::Expr(format!("bad number literal '{text}' in '{src}'")))?;
                out.push(Token::Number(value));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(bytes[start..i].iter().collect()));
            }
            other => return Err(Error::Expr(format!("unexpected character '{other}' in '{src}'"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
    source: &'a str,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: String) -> Error {
        Error::Expr(format!("{msg} in '{}'", self.source))
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    // expression := term (('+'|'-') term)*
    fn expression(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right associative, binds over unary minus
    // in the exponent: 2^-x parses)
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Number(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expression()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(self.error("missing ')'".into())),
                }
            }
            Some(Token::Ident(name)) => self.ident(name),
            other => Err(self.error(format!("expected a value, found {other:?}"))),
        }
    }

    fn ident(&mut self, name: String) -> Result<Expr> {
        match name.as_str() {
            "t" => return Ok(Expr::Time),
            "sin" | "cos" | "exp" => {
                if !matches!(self.peek(), Some(Token::LParen)) {
                    return Err(self.error(format!("function '{name}' needs parentheses")));
                }
                self.pos += 1;
                let arg = self.expression()?;
                if !matches!(self.bump(), Some(Token::RParen)) {
                    return Err(self.error(format!("missing ')' after '{name}'")));
                }
                let arg = Box::new(arg);
                return Ok(match name.as_str() {
                    "sin" => Expr::Sin(arg),
                    "cos" => Expr::Cos(arg),
                    _ => Expr::Exp(arg),
                });
            }
            _ => {}
        }
        let (kind, rest) = name.split_at(1);
        let make = |idx: usize| -> Result<Expr> {
            if idx >= self.dim {
                return Err(Error::Expr(format!(
                    "component index in '{name}' is out of range for dimension {}",
                    self.dim
                )));
            }
            Ok(match kind {
                "x" => Expr::State(idx),
                _ => Expr::Delayed(idx),
            })
        };
        match (kind, rest) {
            ("x", "") | ("y", "") => {
                if self.dim != 1 {
                    return Err(Error::Expr(format!(
                        "bare '{name}' is only valid in dimension 1; use {name}0..{name}{}",
                        self.dim - 1
                    )));
                }
                make(0)
            }
            ("x", idx) | ("y", idx) if idx.chars().all(|c| c.is_ascii_digit()) => {
                make(idx.parse::<usize>().map_err(|_| self.error(format!("bad index in '{name}'")))?)
            }
            _ => Err(self.error(format!("unknown identifier '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(src: &str, t: f64, x: f64, y: f64) -> f64 {
        Expr::parse(src, 1).unwrap().eval(t, &[x], &[y])
    }

    #[test]
    fn cubic_drift_matches_closure() {
        // `^` maps to powf, which may differ from repeated multiplication
        // by an ulp
        for &(x, y) in &[(0.0, 0.0), (1.5, -2.0), (-0.3, 0.7)] {
            let got = eval1("x - x^3 + y", 0.0, x, y);
            let want = x - x * x * x + y;
            assert!((got - want).abs() <= 1e-15 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(eval1("2 + 3 * 4", 0.0, 0.0, 0.0), 14.0);
        assert_eq!(eval1("-2^2", 0.0, 0.0, 0.0), -4.0); // -(2^2)
        assert_eq!(eval1("2^-1", 0.0, 0.0, 0.0), 0.5);
        assert_eq!(eval1("2^3^2", 0.0, 0.0, 0.0), 512.0); // right associative
        assert_eq!(eval1("(2+3)*4", 0.0, 0.0, 0.0), 20.0);
    }

    #[test]
    fn functions_and_time() {
        let got = eval1("sin(t) + cos(t) * exp(x)", 0.3, 1.0, 0.0);
        assert!((got - (0.3f64.sin() + 0.3f64.cos() * 1.0f64.exp())).abs() < 1e-15);
    }

    #[test]
    fn component_indexing() {
        let e = Expr::parse("x1 + 2 * y0", 2).unwrap();
        assert_eq!(e.eval(0.0, &[10.0, 20.0], &[3.0, 4.0]), 26.0);
    }

    #[test]
    fn errors_name_the_problem() {
        let err = Expr::parse("x - z", 1).unwrap_err();
        assert!(err.to_string().contains("unknown identifier 'z'"));
        let err = Expr::parse("x1", 1).unwrap_err();
        assert!(err.to_string().contains("out of range"));
        let err = Expr::parse("x + ", 1).unwrap_err();
        assert!(err.to_string().contains("expected a value"));
        let err = Expr::parse("x", 2).unwrap_err();
        assert!(err.to_string().contains("only valid in dimension 1"));
    }
}
