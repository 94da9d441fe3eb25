//! Scalar expressions over named variables.
//!
//! The fragment is deliberately small: field operations, integer powers,
//! `exp`, `log`, `sin`, `cos` and `sqrt`. Every expression can be evaluated
//! either on plain `f64` inputs or on [`Dual`] inputs, which gives exact
//! first derivatives.
//!
//! ```
//! use tamevol::Expression;
//!
//! let e = Expression::parse("x1^2 + exp(x2)", &["x1", "x2"]).unwrap();
//! assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 1.0);
//! assert_eq!(e.grad(&[3.0, 0.0]).unwrap(), vec![6.0, 1.0]);
//! ```

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::dual::{Dual, Scalar, DUAL_WIDTH};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expected {expected} arguments, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval<S: Scalar>(&self, args: &[S]) -> Result<S, ExprError> {
        let out = match self {
            Node::Const(c) => S::constant(*c),
            Node::Var(i) => args[*i],
            Node::Neg(a) => -a.eval(args)?,
            Node::Add(a, b) => a.eval(args)? + b.eval(args)?,
            Node::Sub(a, b) => a.eval(args)? - b.eval(args)?,
            Node::Mul(a, b) => a.eval(args)? * b.eval(args)?,
            Node::Div(a, b) => {
                let num = a.eval(args)?;
                let den = b.eval(args)?;
                if den.value() == 0.0 {
                    return Err(ExprError::Domain("division by zero".into()));
                }
                num / den
            }
            Node::Pow(a, k) => {
                let base = a.eval(args)?;
                if *k < 0 && base.value() == 0.0 {
                    return Err(ExprError::Domain("negative power of zero".into()));
                }
                base.powi(*k)
            }
            Node::Call(f, a) => {
                let x = a.eval(args)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x.value() <= 0.0 {
                            return Err(ExprError::Domain(format!(
                                "log of nonpositive value {}",
                                x.value()
                            )));
                        }
                        x.ln()
                    }
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Sqrt => {
                        if x.value() < 0.0 {
                            return Err(ExprError::Domain(format!(
                                "sqrt of negative value {}",
                                x.value()
                            )));
                        }
                        x.sqrt()
                    }
                }
            }
        };
        if !out.is_finite() {
            return Err(ExprError::Domain("non-finite value or derivative".into()));
        }
        Ok(out)
    }

    pub(crate) fn substitute(&self, with: &[Node]) -> Node {
        match self {
            Node::Const(c) => Node::Const(*c),
            Node::Var(i) => with[*i].clone(),
            Node::Neg(a) => Node::Neg(Box::new(a.substitute(with))),
            Node::Add(a, b) => Node::Add(Box::new(a.substitute(with)), Box::new(b.substitute(with))),
            Node::Sub(a, b) => Node::Sub(Box::new(a.substitute(with)), Box::new(b.substitute(with))),
            Node::Mul(a, b) => Node::Mul(Box::new(a.substitute(with)), Box::new(b.substitute(with))),
            Node::Div(a, b) => Node::Div(Box::new(a.substitute(with)), Box::new(b.substitute(with))),
            Node::Pow(a, k) => Node::Pow(Box::new(a.substitute(with)), *k),
            Node::Call(f, a) => Node::Call(*f, Box::new(a.substitute(with))),
        }
    }

    fn write(&self, vars: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) if *c < 0.0 => write!(f, "(-{:?})", -c),
            Node::Const(c) => write!(f, "{:?}", c),
            Node::Var(i) => f.write_str(&vars[*i]),
            Node::Neg(a) => {
                f.write_str("(-")?;
                a.write(vars, f)?;
                f.write_str(")")
            }
            Node::Add(a, b) => binary(vars, f, a, " + ", b),
            Node::Sub(a, b) => binary(vars, f, a, " - ", b),
            Node::Mul(a, b) => binary(vars, f, a, " * ", b),
            Node::Div(a, b) => binary(vars, f, a, " / ", b),
            Node::Pow(a, k) => {
                f.write_str("(")?;
                a.write(vars, f)?;
                write!(f, "^{})", k)
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(vars, f)?;
                f.write_str(")")
            }
        }
    }
}

fn binary(
    vars: &[String],
    f: &mut fmt::Formatter<'_>,
    a: &Node,
    op: &str,
    b: &Node,
) -> fmt::Result {
    f.write_str("(")?;
    a.write(vars, f)?;
    f.write_str(op)?;
    b.write(vars, f)?;
    f.write_str(")")
}

/// An immutable, parsed expression with an ordered list of declared variables.
#[derive(Clone, Debug)]
pub struct Expression {
    vars: Arc<[String]>,
    root: Arc<Node>,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.root == other.root
    }
}

impl Expression {
    /// Parses `text` against the declared variable names, in order.
    pub fn parse<S: AsRef<str>>(text: &str, vars: &[S]) -> Result<Expression, ExprError> {
        let vars: Arc<[String]> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        let tokens = tokenize(text)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            vars: &vars,
            end: text.chars().count(),
        };
        let root = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(ExprError::Syntax {
                position: t.pos,
                expected: "operator or end of input".into(),
                found: t.kind.describe(),
            });
        }
        Ok(Expression { vars, root: Arc::new(root) })
    }

    pub fn constant<S: AsRef<str>>(value: f64, vars: &[S]) -> Expression {
        Expression {
            vars: vars.iter().map(|v| v.as_ref().to_string()).collect(),
            root: Arc::new(Node::Const(value)),
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// True if the expression does not reference any variable.
    pub fn is_constant(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Const(_) => true,
                Node::Var(_) => false,
                Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => walk(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a) && walk(b)
                }
            }
        }
        walk(&self.root)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.eval_with(point)
    }

    /// Evaluates over any [`Scalar`]; with [`Dual`] inputs this yields derivatives.
    pub fn eval_with<S: Scalar>(&self, point: &[S]) -> Result<S, ExprError> {
        if point.len() != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                got: point.len(),
            });
        }
        self.root.eval(point)
    }

    /// Exact gradient by forward-mode differentiation.
    pub fn grad(&self, point: &[f64]) -> Result<Vec<f64>, ExprError> {
        let n = self.vars.len();
        if point.len() != n {
            return Err(ExprError::Arity { expected: n, got: point.len() });
        }
        if n == 0 {
            self.eval(point)?;
            return Ok(Vec::new());
        }
        let mut out = vec![0.0; n];
        for start in (0..n).step_by(DUAL_WIDTH) {
            let stop = (start + DUAL_WIDTH).min(n);
            let args: Vec<Dual> = point
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    if (start..stop).contains(&i) {
                        Dual::variable(x, i - start)
                    } else {
                        Dual::new(x)
                    }
                })
                .collect();
            let d = self.root.eval(&args)?;
            out[start..stop].copy_from_slice(&d.eps[..stop - start]);
        }
        Ok(out)
    }

    /// Substitutes `args[i]` for the `i`-th variable. All `args` must share
    /// one variable list, which becomes the variable list of the result.
    pub fn compose(&self, args: &[Expression]) -> Result<Expression, ExprError> {
        if args.len() != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                got: args.len(),
            });
        }
        let vars = match args.first() {
            Some(a) => a.vars.clone(),
            None => self.vars.clone(),
        };
        if args.iter().any(|a| a.vars != vars) {
            return Err(ExprError::Domain(
                "composed arguments must share a variable list".into(),
            ));
        }
        let with: Vec<Node> = args.iter().map(|a| (*a.root).clone()).collect();
        Ok(Expression {
            vars,
            root: Arc::new(self.root.substitute(&with)),
        })
    }

    /// Same tree, reinterpreted over a different variable list of equal length.
    pub fn rename<S: AsRef<str>>(&self, vars: &[S]) -> Result<Expression, ExprError> {
        if vars.len() != self.vars.len() {
            return Err(ExprError::Arity {
                expected: self.vars.len(),
                got: vars.len(),
            });
        }
        Ok(Expression {
            vars: vars.iter().map(|v| v.as_ref().to_string()).collect(),
            root: self.root.clone(),
        })
    }

    pub(crate) fn from_node(vars: Arc<[String]>, node: Node) -> Expression {
        Expression { vars, root: Arc::new(node) }
    }

    pub(crate) fn node(&self) -> &Node {
        &self.root
    }

    pub(crate) fn shared_vars(&self) -> Arc<[String]> {
        self.vars.clone()
    }
}

impl fmt::Display for Expression {
    /// Fully parenthesized; parses back to an identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(&self.vars, f)
    }
}

// ---- tokenizer -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
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

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {}", v),
            TokenKind::Ident(s) => format!("identifier `{}`", s),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i;
        let single = match c {
            '+' => Some(TokenKind::Plus),
            '-' | '\u{2212}' => Some(TokenKind::Minus),
            '*' | '\u{b7}' | '\u{d7}' => Some(TokenKind::Star),
            '/' => Some(TokenKind::Slash),
            '^' => Some(TokenKind::Caret),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            _ => None,
        };
        if let Some(kind) = single {
            out.push(Token { kind, pos });
            i += 1;
        } else if c.is_whitespace() {
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
            let lit: String = chars[start..i].iter().collect();
            let v: f64 = lit.parse().map_err(|_| ExprError::Syntax {
                position: start,
                expected: "number".into(),
                found: format!("`{}`", lit),
            })?;
            out.push(Token { kind: TokenKind::Number(v), pos });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(chars[start..i].iter().collect()),
                pos,
            });
        } else {
            return Err(ExprError::Syntax {
                position: pos,
                expected: "expression".into(),
                found: format!("`{}`", c),
            });
        }
    }
    Ok(out)
}

// ---- recursive descent -----------------------------------------------------

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    vars: &'a [String],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn error(&self, expected: &str) -> ExprError {
        match self.peek() {
            Some(t) => ExprError::Syntax {
                position: t.pos,
                expected: expected.into(),
                found: t.kind.describe(),
            },
            None => ExprError::Syntax {
                position: self.end,
                expected: expected.into(),
                found: "end of input".into(),
            },
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().map(|t| &t.kind) == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(&TokenKind::Plus) {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(&TokenKind::Minus) {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(&TokenKind::Star) {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(&TokenKind::Slash) {
                lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        if self.eat(&TokenKind::Minus) {
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        if self.eat(&TokenKind::Plus) {
            return self.factor();
        }
        let base = self.base()?;
        if self.eat(&TokenKind::Caret) {
            let negative = if self.eat(&TokenKind::Minus) {
                true
            } else {
                self.eat(&TokenKind::Plus);
                false
            };
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokenKind::Number(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                    self.pos += 1;
                    let k = v as i32;
                    return Ok(Node::Pow(Box::new(base), if negative { -k } else { k }));
                }
                _ => return Err(self.error("integer exponent")),
            }
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Node, ExprError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(self.error("number, variable, function or `(`")),
        };
        match tok.kind {
            TokenKind::Number(v) => {
                self.pos += 1;
                Ok(Node::Const(v))
            }
            TokenKind::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(&TokenKind::RParen) {
                    return Err(self.error("`)`"));
                }
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                self.pos += 1;
                let next_is_paren =
                    self.peek().map(|t| &t.kind) == Some(&TokenKind::LParen);
                if next_is_paren {
                    if let Some(func) = Func::from_name(&name) {
                        self.pos += 1;
                        let arg = self.expr()?;
                        if !self.eat(&TokenKind::RParen) {
                            return Err(self.error("`)`"));
                        }
                        return Ok(Node::Call(func, Box::new(arg)));
                    }
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    Ok(Node::Var(i))
                } else if name == "pi" {
                    Ok(Node::Const(std::f64::consts::PI))
                } else {
                    Err(ExprError::UnknownVariable(name))
                }
            }
            _ => Err(self.error("number, variable, function or `(`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, vars: &[&str]) -> Expression {
        Expression::parse(text, vars).unwrap()
    }

    #[test]
    fn smoke_two_variables() {
        let e = p("x1^2 + exp(x2)", &["x1", "x2"]);
        assert_eq!(e.arity(), 2);
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(e.eval(&[2.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn dangling_operator_reports_end_of_input() {
        match Expression::parse("x1 +", &["x1"]) {
            Err(ExprError::Syntax { position, found, .. }) => {
                assert_eq!(position, 4);
                assert_eq!(found, "end of input");
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn undeclared_variable() {
        assert_eq!(
            Expression::parse("x3", &["x1", "x2"]),
            Err(ExprError::UnknownVariable("x3".into()))
        );
    }

    #[test]
    fn division_by_zero_is_a_domain_error() {
        let e = p("x1/x2", &["x1", "x2"]);
        assert!(matches!(e.eval(&[1.0, 0.0]), Err(ExprError::Domain(_))));
    }

    #[test]
    fn log_and_sqrt_domains() {
        let e = p("log(x)", &["x"]);
        assert!(matches!(e.eval(&[0.0]), Err(ExprError::Domain(_))));
        assert!(matches!(e.eval(&[-1.0]), Err(ExprError::Domain(_))));
        let s = p("sqrt(x)", &["x"]);
        assert!(matches!(s.eval(&[-1e-300]), Err(ExprError::Domain(_))));
        assert_eq!(s.eval(&[0.0]).unwrap(), 0.0);
        // not differentiable at 0
        assert!(s.grad(&[0.0]).is_err());
    }

    #[test]
    fn pythagorean_identity() {
        let e = p("sin(x1)^2+cos(x1)^2", &["x1"]);
        assert!((e.eval(&[0.7313]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = p("-x^2 + 2*3 - 4/2", &["x"]);
        assert_eq!(e.eval(&[3.0]).unwrap(), -9.0 + 6.0 - 2.0);
        let e = p("2^-1 * x", &["x"]);
        assert_eq!(e.eval(&[4.0]).unwrap(), 2.0);
        let e = p("1.5e1 \u{2212} x\u{b7}2", &["x"]);
        assert_eq!(e.eval(&[1.0]).unwrap(), 13.0);
    }

    #[test]
    fn non_integer_exponent_is_rejected() {
        assert!(matches!(
            Expression::parse("x^1.5", &["x"]),
            Err(ExprError::Syntax { .. })
        ));
        assert!(matches!(
            Expression::parse("x^y", &["x", "y"]),
            Err(ExprError::Syntax { .. })
        ));
    }

    #[test]
    fn gradients() {
        assert_eq!(p("x1^2", &["x1"]).grad(&[3.0]).unwrap(), vec![6.0]);
        assert_eq!(p("4.5", &["a", "b"]).grad(&[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            p("exp(x1)\u{b7}x2", &["x1", "x2"]).grad(&[0.0, 2.0]).unwrap(),
            vec![2.0, 1.0]
        );
    }

    #[test]
    fn wide_gradient_is_chunked() {
        let names: Vec<String> = (0..11).map(|i| format!("v{}", i)).collect();
        let text = names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{}*{}", i + 1, n))
            .collect::<Vec<_>>()
            .join(" + ");
        let e = Expression::parse(&text, &names).unwrap();
        let g = e.grad(&vec![0.3; 11]).unwrap();
        let want: Vec<f64> = (1..=11).map(f64::from).collect();
        assert_eq!(g, want);
    }

    #[test]
    fn display_round_trips_structurally() {
        for text in ["x1^2 + exp(x2)", "-(x1 - 3e-7)/sqrt(2 + x2^-2)", "log(1+x1*x1)-pi"] {
            let e = p(text, &["x1", "x2"]);
            let again = p(&e.to_string(), &["x1", "x2"]);
            assert_eq!(e, again, "{}", e);
        }
    }

    #[test]
    fn compose_substitutes_variables() {
        let outer = p("a^2 + b", &["a", "b"]);
        let a = p("2*t", &["t"]);
        let b = p("sin(t)", &["t"]);
        let c = outer.compose(&[a, b]).unwrap();
        assert_eq!(c.variables(), &["t".to_string()]);
        let t = 0.4_f64;
        assert!((c.eval(&[t]).unwrap() - (4.0 * t * t + t.sin())).abs() < 1e-15);
    }
}
