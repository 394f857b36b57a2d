//! Scalar expression language for metric components, weights, seed maps and
//! densities.
//!
//! Expressions are parsed once and compiled to a flat instruction tape. The
//! tape evaluates either plain values or second-order forward jets
//! ([`Jet2`]), which is what the curvature code needs: first derivatives of
//! the metric for the connection and second derivatives for the Riemann
//! tensor.
//!
//! Grammar (standard precedence, `^` binds tighter than unary minus and is
//! right associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | name | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | log | sqrt | tanh
//! ```
//!
//! Names are the declared variables (`x0..x{d-1}` for chart expressions,
//! `u0..u{m-1}` for seed parametrizations), the constants `pi` and `e`, and
//! any named parameters supplied through [`Scope::with_constant`].

mod jet;
mod parser;
mod tape;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use jet::Jet2;

/// Variables and named constants visible to an expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Scope {
    prefix: String,
    count: usize,
    constants: BTreeMap<String, f64>,
}

impl Scope {
    /// Chart scope: variables `x0..x{dim-1}`.
    pub fn chart(dim: usize) -> Self {
        Self::with_prefix("x", dim)
    }

    /// Seed-parameter scope: variables `u0..u{count-1}`.
    pub fn params(count: usize) -> Self {
        Self::with_prefix("u", count)
    }

    pub fn with_prefix(prefix: &str, count: usize) -> Self {
        Scope {
            prefix: prefix.to_string(),
            count,
            constants: BTreeMap::new(),
        }
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Self {
        self.constants.insert(name.to_string(), value);
        self
    }

    pub fn with_constants<'a, I>(mut self, constants: I) -> Self
    where
        I: IntoIterator<Item = (&'a String, &'a f64)>,
    {
        for (k, v) in constants {
            self.constants.insert(k.clone(), *v);
        }
        self
    }

    pub fn variable_count(&self) -> usize {
        self.count
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    fn constant(&self, name: &str) -> Option<f64> {
        if let Some(v) = self.constants.get(name) {
            return Some(*v);
        }
        match name {
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => None,
        }
    }

    /// Resolves `name` as a variable of this scope. `Err(Some(i))` means the
    /// name has the variable shape but index `i` is out of range.
    fn variable(&self, name: &str) -> Result<usize, Option<usize>> {
        let digits = name.strip_prefix(self.prefix.as_str()).ok_or(None)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(None);
        }
        let index: usize = digits.parse().map_err(|_| None)?;
        if index < self.count {
            Ok(index)
        } else {
            Err(Some(index))
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

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

/// Abstract syntax tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Node::Num(v) => Some(*v),
            Node::Neg(inner) => inner.constant_value().map(|v| -v),
            _ => None,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, prefix: &str) -> fmt::Result {
        match self {
            Node::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "({:?})", v)
                } else {
                    write!(f, "{:?}", v)
                }
            }
            Node::Var(i) => write!(f, "{}{}", prefix, i),
            Node::Neg(inner) => {
                f.write_str("(-")?;
                inner.write(f, prefix)?;
                f.write_str(")")
            }
            Node::Binary(op, a, b) => {
                f.write_str("(")?;
                a.write(f, prefix)?;
                f.write_str(op.symbol())?;
                b.write(f, prefix)?;
                f.write_str(")")
            }
            Node::Call(func, arg) => {
                f.write_str(func.name())?;
                f.write_str("(")?;
                arg.write(f, prefix)?;
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    BadNumber(String),
    UndeclaredVariable(String),
    UnknownIdentifier(String),
    UnknownFunction(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Empty => f.write_str("empty expression"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected token '{t}'"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            ParseErrorKind::BadNumber(s) => write!(f, "malformed number '{s}'"),
            ParseErrorKind::UndeclaredVariable(s) => write!(f, "undeclared variable '{s}'"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier '{s}'"),
            ParseErrorKind::UnknownFunction(s) => write!(f, "unknown function '{s}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position} in `{source_text}`")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source text.
    pub position: usize,
    pub source_text: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
    #[error("expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// A parsed scalar expression over a fixed number of variables.
///
/// Immutable once built; evaluation takes `&self` only.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    root: Node,
    prefix: String,
    nvars: usize,
    tape: tape::Tape,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.nvars == other.nvars && self.prefix == other.prefix
    }
}

impl Expression {
    pub fn parse(source: &str, scope: &Scope) -> Result<Self, ParseError> {
        let root = parser::parse(source, scope)?;
        Ok(Self::from_node(root, source.to_string(), scope))
    }

    /// Parses a chart expression over `x0..x{dim-1}`.
    pub fn parse_chart(source: &str, dim: usize) -> Result<Self, ParseError> {
        Self::parse(source, &Scope::chart(dim))
    }

    /// Builds an expression from an already constructed tree.
    pub fn from_node(root: Node, source: String, scope: &Scope) -> Self {
        let tape = tape::Tape::compile(&root, scope.prefix());
        Expression {
            source,
            root,
            prefix: scope.prefix().to_string(),
            nvars: scope.variable_count(),
            tape,
        }
    }

    pub fn constant(value: f64, scope: &Scope) -> Self {
        Self::from_node(Node::Num(value), format!("{value:?}"), scope)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn variable_count(&self) -> usize {
        self.nvars
    }

    /// True when the expression does not reference any variable.
    pub fn is_constant(&self) -> bool {
        self.tape.is_constant()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.check_dim(x)?;
        self.tape.eval(x)
    }

    /// Value, gradient and Hessian at `x`, exact up to rounding.
    pub fn eval_jet2(&self, x: &[f64]) -> Result<Jet2, EvalError> {
        self.check_dim(x)?;
        let mut buf = Vec::new();
        let mut out = Jet2::zero(self.nvars);
        self.tape.eval_jet2_into(x, &mut buf, &mut out)?;
        Ok(out)
    }

    /// Jet evaluation reusing caller buffers; the hot path of the curvature code.
    pub fn eval_jet2_into(
        &self,
        x: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut Jet2,
    ) -> Result<(), EvalError> {
        self.check_dim(x)?;
        self.tape.eval_jet2_into(x, scratch, out)
    }

    /// Central finite-difference jet with step `h`. Cross-checking only.
    pub fn eval_jet2_fd(&self, x: &[f64], h: f64) -> Result<Jet2, EvalError> {
        self.check_dim(x)?;
        let d = self.nvars;
        let f0 = self.eval(x)?;
        let mut out = Jet2::constant(f0, d);
        let mut p = x.to_vec();
        let f = |p: &[f64]| self.tape.eval(p);
        for i in 0..d {
            p[i] = x[i] + h;
            let fp = f(&p)?;
            p[i] = x[i] - h;
            let fm = f(&p)?;
            p[i] = x[i];
            out.grad[i] = (fp - fm) / (2.0 * h);
            out.hess[i * d + i] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let corner = |si: f64, sj: f64| {
                    let mut q = x.to_vec();
                    q[i] += si * h;
                    q[j] += sj * h;
                    f(&q)
                };
                let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                    + corner(-1.0, -1.0)?)
                    / (4.0 * h * h);
                out.hess[i * d + j] = v;
                out.hess[j * d + i] = v;
            }
        }
        Ok(out)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.nvars {
            return Err(EvalError::Dimension {
                expected: self.nvars,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Fully parenthesized canonical form; parses back to an equivalent tree.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f, &self.prefix)
    }
}

/// Formats a tree using the given variable prefix.
pub fn display_node(node: &Node, prefix: &str) -> String {
    struct W<'a>(&'a Node, &'a str);
    impl fmt::Display for W<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            self.0.write(f, self.1)
        }
    }
    W(node, prefix).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_product_of_variables() {
        let e = Expression::parse_chart("x0*x0", 1).unwrap();
        assert_eq!(
            e.root(),
            &Node::Binary(BinOp::Mul, Box::new(Node::Var(0)), Box::new(Node::Var(0)))
        );
    }

    #[test]
    fn parses_exp_of_power() {
        let e = Expression::parse_chart("exp(x0^2)", 1).unwrap();
        assert_eq!(
            e.root(),
            &Node::Call(
                Func::Exp,
                Box::new(Node::Binary(
                    BinOp::Pow,
                    Box::new(Node::Var(0)),
                    Box::new(Node::Num(2.0))
                ))
            )
        );
    }

    #[test]
    fn rejects_undeclared_variable() {
        let err = Expression::parse_chart("x5", 4).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UndeclaredVariable("x5".into()));
        assert_eq!(err.position, 0);
    }

    #[test]
    fn rejects_unknown_identifier_and_function() {
        let err = Expression::parse_chart("1 + foo", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("foo".into()));
        assert_eq!(err.position, 4);
        let err = Expression::parse_chart("erf(x0)", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownFunction("erf".into()));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = Expression::parse_chart("x0 * (x1 + ", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
        let err = Expression::parse_chart("x0 $ 2", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedChar('$'));
        assert_eq!(err.position, 3);
        let err = Expression::parse_chart("   ", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Empty);
        let err = Expression::parse_chart("(x0))", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedToken(")".into()));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = Expression::parse_chart("-x0^2 + 2*3^2^0.5 - 8/2/2", 1).unwrap();
        let x = 3.0_f64;
        let expected = -(x * x) + 2.0 * 3f64.powf(2f64.powf(0.5)) - 2.0;
        assert_relative_eq!(e.eval(&[x]).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn named_constants_resolve() {
        let scope = Scope::chart(2).with_constant("M", 1.5);
        let e = Expression::parse("2*M/x1 + pi - e", &scope).unwrap();
        let v = e.eval(&[0.0, 3.0]).unwrap();
        assert_relative_eq!(v, 1.0 + std::f64::consts::PI - std::f64::consts::E);
    }

    #[test]
    fn jet_of_square() {
        let e = Expression::parse_chart("x0*x0", 1).unwrap();
        let j = e.eval_jet2(&[3.0]).unwrap();
        assert_eq!(j.value, 9.0);
        assert_eq!(j.grad, vec![6.0]);
        assert_eq!(j.hess, vec![2.0]);
    }

    #[test]
    fn jet_of_sine_in_second_variable() {
        let e = Expression::parse_chart("sin(x1)", 2).unwrap();
        let j = e.eval_jet2(&[0.7, 0.0]).unwrap();
        assert_eq!(j.value, 0.0);
        assert_eq!(j.grad, vec![0.0, 1.0]);
        assert_eq!(j.hess_at(1, 1), 0.0);
    }

    #[test]
    fn jet_of_exp_square_matches_finite_differences() {
        // Oracle: central differences with h = 1e-4.
        let e = Expression::parse_chart("exp(x0^2)", 1).unwrap();
        let x = [0.5];
        let h = 1e-4;
        let f = |t: f64| (t * t).exp();
        let fd_grad = (f(x[0] + h) - f(x[0] - h)) / (2.0 * h);
        let fd_hess = (f(x[0] + h) - 2.0 * f(x[0]) + f(x[0] - h)) / (h * h);
        let j = e.eval_jet2(&x).unwrap();
        assert_relative_eq!(j.value, 0.25f64.exp(), max_relative = 1e-15);
        assert_relative_eq!(j.grad[0], fd_grad, max_relative = 1e-6);
        assert_relative_eq!(j.hess[0], fd_hess, max_relative = 1e-6);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = Expression::parse_chart("1 + log(x0 - 2)", 1).unwrap();
        match e.eval_jet2(&[1.0]).unwrap_err() {
            EvalError::Domain { subexpr, .. } => assert_eq!(subexpr, "log((x0-2.0))"),
            other => panic!("unexpected {other:?}"),
        }
        let e = Expression::parse_chart("x0/(x0-x0)", 1).unwrap();
        assert!(matches!(e.eval(&[1.0]), Err(EvalError::Domain { .. })));
        let e = Expression::parse_chart("sqrt(x0)", 1).unwrap();
        assert!(e.eval(&[-1.0]).is_err());
        assert!(e.eval_jet2(&[0.0]).is_err());
        let e = Expression::parse_chart("x0^0.5", 1).unwrap();
        assert!(e.eval(&[-1.0]).is_err());
        let e = Expression::parse_chart("x0^3", 1).unwrap();
        assert_eq!(e.eval(&[-2.0]).unwrap(), -8.0);
    }

    #[test]
    fn wrong_point_dimension_is_rejected() {
        let e = Expression::parse_chart("x0", 2).unwrap();
        assert_eq!(
            e.eval(&[1.0]).unwrap_err(),
            EvalError::Dimension {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn display_round_trips() {
        let e = Expression::parse_chart("-(1 - 2*1.5/x1)*sin(x2)^2 + x0^-2", 3).unwrap();
        let printed = e.to_string();
        let back = Expression::parse_chart(&printed, 3).unwrap();
        assert_eq!(back.root(), e.root());
    }

    #[test]
    fn fd_fallback_agrees_with_jets() {
        let e = Expression::parse_chart("x0^2*cos(x1) + tanh(x0*x1)", 2).unwrap();
        let x = [0.3, -0.8];
        let exact = e.eval_jet2(&x).unwrap();
        let fd = e.eval_jet2_fd(&x, 1e-4).unwrap();
        for i in 0..2 {
            assert_relative_eq!(exact.grad[i], fd.grad[i], epsilon = 1e-7);
            for j in 0..2 {
                assert_relative_eq!(exact.hess_at(i, j), fd.hess_at(i, j), epsilon = 1e-5);
            }
        }
    }
}
