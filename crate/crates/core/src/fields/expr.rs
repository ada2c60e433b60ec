//! Small arithmetic expression language for potentials and drifts.
//!
//! Grammar (`^` binds tightest and is right-associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('+' | '-') unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'pi' | 'x' | 'x_' index | '|x|' | '|' expr '|'
//!          | func '(' expr ')' | '(' expr ')'
//! func    := 'ln' | 'exp' | 'sqrt'
//! ```
//!
//! `x` alone is only accepted in one dimension; indices are 1-based.
//! Vector expressions separate components with `;`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Norm,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Abs(Box<Node>),
    Ln(Box<Node>),
    Exp(Box<Node>),
    Sqrt(Box<Node>),
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(i) => x[*i],
            Node::Norm => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => {
                let base = a.eval(x);
                match **b {
                    Node::Num(e) if e == e.trunc() && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(x)),
                }
            }
            Node::Abs(a) => a.eval(x).abs(),
            Node::Ln(a) => a.eval(x).ln(),
            Node::Exp(a) => a.eval(x).exp(),
            Node::Sqrt(a) => a.eval(x).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
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
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number `{text}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()|".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Token::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Expression(format!(
                "expected `{c}` at token {}",
                self.pos + 1
            )))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.eat('^') {
            Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn variable(&self, name: &str) -> Result<Node> {
        if name == "x" {
            return if self.dim == 1 {
                Ok(Node::Var(0))
            } else {
                Err(Error::Expression(format!(
                    "`x` is ambiguous in dimension {}; use x_i or |x|",
                    self.dim
                )))
            };
        }
        let idx: usize = name[2..]
            .parse()
            .map_err(|_| Error::Expression(format!("bad variable `{name}`")))?;
        if idx == 0 || idx > self.dim {
            return Err(Error::Expression(format!(
                "variable `{name}` out of range for dimension {}",
                self.dim
            )));
        }
        Ok(Node::Var(idx - 1))
    }

    fn primary(&mut self) -> Result<Node> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| Error::Expression("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Node::Num(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Op('|') => {
                if self.peek() == Some(&Token::Ident("x".into()))
                    && self.tokens.get(self.pos + 1) == Some(&Token::Op('|'))
                {
                    self.pos += 2;
                    return Ok(Node::Norm);
                }
                let e = self.expr()?;
                self.expect('|')?;
                Ok(Node::Abs(Box::new(e)))
            }
            Token::Ident(name) => match name.as_str() {
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "ln" | "exp" | "sqrt" => {
                    self.expect('(')?;
                    let a = Box::new(self.expr()?);
                    self.expect(')')?;
                    Ok(match name.as_str() {
                        "ln" => Node::Ln(a),
                        "exp" => Node::Exp(a),
                        _ => Node::Sqrt(a),
                    })
                }
                n if n == "x" || n.starts_with("x_") => self.variable(n),
                other => Err(Error::Expression(format!("unknown identifier `{other}`"))),
            },
            Token::Op(c) => Err(Error::Expression(format!("unexpected `{c}`"))),
        }
    }
}

/// Parsed scalar expression in `d` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    pub dim: usize,
}

impl Expr {
    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Expression("dimension must be at least 1".into()));
        }
        let mut p = Parser {
            tokens: tokenize(src)?,
            pos: 0,
            dim,
        };
        let root = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "trailing input after token {} in `{src}`",
                p.pos
            )));
        }
        Ok(Self { root, dim })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.root.eval(x)
    }
}

/// `d` component expressions separated by `;`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorExpr {
    components: Vec<Expr>,
}

impl VectorExpr {
    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let components = src
            .split(';')
            .map(|s| Expr::parse(s, dim))
            .collect::<Result<Vec<_>>>()?;
        if components.len() != dim {
            return Err(Error::Expression(format!(
                "expected {dim} components, found {}",
                components.len()
            )));
        }
        Ok(Self { components })
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.components) {
            *o = e.eval(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn precedence_and_functions() {
        let e = Expr::parse("1 + 2*3^2 - -4/2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), 21.0);
        let e = Expr::parse("2^3^2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]), 512.0);
        let e = Expr::parse("ln(exp(x)) + sqrt(|x_1|)", 1).unwrap();
        assert!((e.eval(&[4.0]) - 6.0).abs() < 1e-14);
        let e = Expr::parse("|x|^2 - x_1*x_1 - x_2*x_2 + pi", 2).unwrap();
        assert!((e.eval(&[1.5, -2.0]) - std::f64::consts::PI).abs() < 1e-14);
        let e = Expr::parse("-x^2", 1).unwrap();
        assert_eq!(e.eval(&[3.0]), -9.0);
        let e = Expr::parse("|x_1 - 3| * |x_2|", 2).unwrap();
        assert_eq!(e.eval(&[1.0, -2.0]), 4.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("x", 2).is_err());
        assert!(Expr::parse("x_3", 2).is_err());
        assert!(Expr::parse("x_0", 2).is_err());
        assert!(Expr::parse("sin(x)", 1).is_err());
        assert!(Expr::parse("1 +", 1).is_err());
        assert!(Expr::parse("(1", 1).is_err());
        assert!(Expr::parse("1 2", 1).is_err());
        assert!(VectorExpr::parse("x_1", 2).is_err());
    }

    #[test]
    fn vector_components() {
        let v = VectorExpr::parse("-x_1; 2*x_2", 2).unwrap();
        let mut out = [0.0; 2];
        v.eval_into(&[1.0, 3.0], &mut out);
        assert_eq!(out, [-1.0, 6.0]);
        let plus = VectorExpr::parse("+x", 1).unwrap();
        plus.eval_into(&[2.5], &mut out[..1]);
        assert_eq!(out[0], 2.5);
    }

    proptest! {
        #[test]
        fn polynomial_matches_direct(a in -10.0f64..10.0, b in -3.0f64..3.0) {
            let e = Expr::parse("3*x_1^2 - x_1*x_2 + 1/(1 + x_2^2)", 2).unwrap();
            let direct = 3.0 * a * a - a * b + 1.0 / (1.0 + b * b);
            prop_assert!((e.eval(&[a, b]) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }
}
