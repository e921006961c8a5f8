//! Scalar expressions over chart coordinates.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | variable | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log | sqrt | tanh
//! ```
//!
//! Variables are `u1..um`, or aliases supplied by the caller. Evaluation is
//! available on plain reals and on [`Dual`] numbers carrying one partial per
//! coordinate.

mod dual;
mod parser;

use std::fmt;

use thiserror::Error;

pub use dual::Dual;
pub use parser::{parse, parse_with_names};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable u{index} exceeds chart dimension {dim}")]
    DimensionExceeded { index: usize, dim: usize },
    #[error("evaluation domain error: {0}")]
    EvalDomain(String),
    #[error("point has {got} coordinates, expression expects {expected}")]
    PointSize { expected: usize, got: usize },
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
    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

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
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based coordinate index.
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    /// Integer exponent, evaluated by repeated multiplication.
    PowInt(Box<Node>, i32),
    /// Real exponent, evaluated as `exp(e · log b)`.
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed scalar field on an m-dimensional chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldExpr {
    root: Node,
    dim: usize,
}

impl ScalarFieldExpr {
    pub fn constant(value: f64, dim: usize) -> Self {
        Self {
            root: Node::Const(value),
            dim,
        }
    }

    pub(crate) fn from_node(root: Node, dim: usize) -> Self {
        Self { root, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// `self · other`, used to apply conformal factors.
    pub fn times(&self, other: &ScalarFieldExpr) -> ScalarFieldExpr {
        let root = match (&self.root, &other.root) {
            (Node::Const(a), _) if *a == 1.0 => other.root.clone(),
            (_, Node::Const(b)) if *b == 1.0 => self.root.clone(),
            (a, b) => Node::Mul(Box::new(a.clone()), Box::new(b.clone())),
        };
        ScalarFieldExpr {
            root,
            dim: self.dim.max(other.dim),
        }
    }

    /// True if the expression does not mention any coordinate.
    pub fn is_constant(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Const(_) => true,
                Node::Var(_) => false,
                Node::Neg(a) | Node::PowInt(a, _) | Node::Call(_, a) => walk(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                    walk(a) && walk(b)
                }
            }
        }
        walk(&self.root)
    }

    fn check_point(&self, point: &[f64]) -> Result<(), ExprError> {
        if point.len() != self.dim {
            return Err(ExprError::PointSize {
                expected: self.dim,
                got: point.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.check_point(point)?;
        let v = eval_real(&self.root, point)?;
        finite(v)
    }

    /// Value and exact gradient by forward-mode propagation.
    pub fn eval_dual(&self, point: &[f64]) -> Result<Dual, ExprError> {
        self.check_point(point)?;
        let d = eval_dual(&self.root, point)?;
        if !d.value.is_finite() || d.partials.iter().any(|p| !p.is_finite()) {
            return Err(ExprError::EvalDomain("non-finite derivative".into()));
        }
        Ok(d)
    }

    pub fn grad(&self, point: &[f64]) -> Result<Vec<f64>, ExprError> {
        Ok(self.eval_dual(point)?.partials)
    }
}

/// Convenience wrapper around [`ScalarFieldExpr::eval`].
pub fn eval(e: &ScalarFieldExpr, point: &[f64]) -> Result<f64, ExprError> {
    e.eval(point)
}

/// Convenience wrapper around [`ScalarFieldExpr::grad`].
pub fn grad(e: &ScalarFieldExpr, point: &[f64]) -> Result<Vec<f64>, ExprError> {
    e.grad(point)
}

fn finite(v: f64) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::EvalDomain(format!("non-finite value {v}")))
    }
}

fn domain(msg: &str) -> ExprError {
    ExprError::EvalDomain(msg.to_string())
}

fn eval_real(n: &Node, p: &[f64]) -> Result<f64, ExprError> {
    Ok(match n {
        Node::Const(c) => *c,
        Node::Var(i) => p[*i],
        Node::Neg(a) => -eval_real(a, p)?,
        Node::Add(a, b) => eval_real(a, p)? + eval_real(b, p)?,
        Node::Sub(a, b) => eval_real(a, p)? - eval_real(b, p)?,
        Node::Mul(a, b) => eval_real(a, p)? * eval_real(b, p)?,
        Node::Div(a, b) => {
            let den = eval_real(b, p)?;
            if den == 0.0 {
                return Err(domain("division by zero"));
            }
            eval_real(a, p)? / den
        }
        Node::PowInt(a, k) => powi_real(eval_real(a, p)?, *k)?,
        Node::Pow(a, b) => {
            let base = eval_real(a, p)?;
            let e = eval_real(b, p)?;
            if base <= 0.0 {
                return Err(domain("real power of a non-positive base"));
            }
            (e * base.ln()).exp()
        }
        Node::Call(f, a) => {
            let x = eval_real(a, p)?;
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Tanh => x.tanh(),
                Func::Log => {
                    if x <= 0.0 {
                        return Err(domain("log of a non-positive number"));
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(domain("sqrt of a negative number"));
                    }
                    x.sqrt()
                }
            }
        }
    })
}

fn powi_real(x: f64, k: i32) -> Result<f64, ExprError> {
    if k < 0 && x == 0.0 {
        return Err(domain("division by zero in negative power"));
    }
    let mut acc = 1.0;
    for _ in 0..k.unsigned_abs() {
        acc *= x;
    }
    Ok(if k < 0 { 1.0 / acc } else { acc })
}

fn eval_dual(n: &Node, p: &[f64]) -> Result<Dual, ExprError> {
    let m = p.len();
    Ok(match n {
        Node::Const(c) => Dual::constant(*c, m),
        Node::Var(i) => Dual::variable(p[*i], *i, m),
        Node::Neg(a) => -eval_dual(a, p)?,
        Node::Add(a, b) => eval_dual(a, p)? + eval_dual(b, p)?,
        Node::Sub(a, b) => eval_dual(a, p)? - eval_dual(b, p)?,
        Node::Mul(a, b) => eval_dual(a, p)? * eval_dual(b, p)?,
        Node::Div(a, b) => {
            let den = eval_dual(b, p)?;
            if den.value == 0.0 {
                return Err(domain("division by zero"));
            }
            eval_dual(a, p)? / den
        }
        Node::PowInt(a, k) => {
            let x = eval_dual(a, p)?;
            if *k < 0 && x.value == 0.0 {
                return Err(domain("division by zero in negative power"));
            }
            let mut acc = Dual::constant(1.0, m);
            for _ in 0..k.unsigned_abs() {
                acc = acc * x.clone();
            }
            if *k < 0 {
                Dual::constant(1.0, m) / acc
            } else {
                acc
            }
        }
        Node::Pow(a, b) => {
            let base = eval_dual(a, p)?;
            if base.value <= 0.0 {
                return Err(domain("real power of a non-positive base"));
            }
            (eval_dual(b, p)? * base.ln()).exp()
        }
        Node::Call(f, a) => {
            let x = eval_dual(a, p)?;
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Tanh => x.tanh(),
                Func::Log => {
                    if x.value <= 0.0 {
                        return Err(domain("log of a non-positive number"));
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if x.value <= 0.0 {
                        return Err(domain("sqrt at or below zero has no derivative"));
                    }
                    x.sqrt()
                }
            }
        }
    })
}

fn prec(n: &Node) -> u8 {
    match n {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(..) => 3,
        Node::Pow(..) | Node::PowInt(..) => 4,
        Node::Const(c) if *c < 0.0 => 3,
        _ => 5,
    }
}

fn write_node(n: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // Parenthesize any child whose precedence is not strictly higher; cheap and
    // always re-parses to the same tree shape up to associativity.
    let child = |c: &Node, min: u8, f: &mut fmt::Formatter<'_>| -> fmt::Result {
        if prec(c) > min {
            write_node(c, f)
        } else {
            write!(f, "(")?;
            write_node(c, f)?;
            write!(f, ")")
        }
    };
    match n {
        Node::Const(c) => write!(f, "{c:?}"),
        Node::Var(i) => write!(f, "u{}", i + 1),
        Node::Neg(a) => {
            write!(f, "-")?;
            child(a, 3, f)
        }
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            let (op, p) = match n {
                Node::Add(..) => ("+", 1),
                Node::Sub(..) => ("-", 1),
                Node::Mul(..) => ("*", 2),
                _ => ("/", 2),
            };
            child(a, p - 1, f)?;
            write!(f, " {op} ")?;
            child(b, p, f)
        }
        Node::PowInt(a, k) => {
            child(a, 4, f)?;
            if *k < 0 {
                write!(f, "^({k})")
            } else {
                write!(f, "^{k}")
            }
        }
        Node::Pow(a, b) => {
            child(a, 4, f)?;
            write!(f, "^")?;
            child(b, 4, f)
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, f)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for ScalarFieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evaluates_simple_polynomial() {
        let e = parse("u1*u2 + 0.5", 2).unwrap();
        assert_eq!(e.eval(&[2.0, 3.0]).unwrap(), 6.5);
    }

    #[test]
    fn pythagorean_identity() {
        let e = parse("sin(u1)^2 + cos(u1)^2", 1).unwrap();
        for x in [-3.0, -0.2, 0.0, 1.1, 7.5] {
            assert!((e.eval(&[x]).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn division_by_zero_is_a_domain_error() {
        let e = parse("u1/u2", 2).unwrap();
        assert!(matches!(e.eval(&[1.0, 0.0]), Err(ExprError::EvalDomain(_))));
        assert!(matches!(
            parse("log(u1)", 1).unwrap().eval(&[-1.0]),
            Err(ExprError::EvalDomain(_))
        ));
        assert!(matches!(
            parse("sqrt(u1)", 1).unwrap().eval(&[-1.0]),
            Err(ExprError::EvalDomain(_))
        ));
        assert!(matches!(
            parse("u1^0.5", 1).unwrap().eval(&[-2.0]),
            Err(ExprError::EvalDomain(_))
        ));
    }

    #[test]
    fn gradient_examples() {
        let e = parse("u1*u2", 2).unwrap();
        assert_eq!(e.grad(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
        let e = parse("exp(u3)", 3).unwrap();
        let g = e.grad(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
        assert!((g[2] - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("-2^2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), -4.0);
        let e = parse("2^3^2", 1).unwrap();
        assert!((e.eval(&[0.0]).unwrap() - 512.0).abs() < 1e-10);
        let e = parse("8 - 3 - 2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 3.0);
        let e = parse("8 / 4 / 2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 1.0);
        let e = parse("2^-1", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 0.5);
        let e = parse("u1^1.5", 1).unwrap();
        assert!((e.eval(&[4.0]).unwrap() - 8.0).abs() < 1e-13);
    }

    // Random expression trees of bounded depth over smooth, total operations.
    fn random_tree(depth: u32, m: usize, rng: &mut ChaCha8Rng) -> String {
        if depth == 0 || rng.random_bool(0.2) {
            return if rng.random_bool(0.6) {
                format!("u{}", rng.random_range(1..=m))
            } else {
                format!("{:.3}", rng.random_range(-2.0..2.0))
            };
        }
        let a = random_tree(depth - 1, m, rng);
        let b = random_tree(depth - 1, m, rng);
        match rng.random_range(0..8) {
            0 => format!("({a}) + ({b})"),
            1 => format!("({a}) - ({b})"),
            2 => format!("({a}) * ({b})"),
            3 => format!("({a}) / (2 + sin({b}))"),
            4 => format!("sin({a})"),
            5 => format!("exp(0.3*tanh({a}))"),
            6 => format!("({a})^2"),
            _ => format!("sqrt(1 + ({a})^2)"),
        }
    }

    #[test]
    fn gradient_matches_central_differences_seed_11() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 4;
        for _ in 0..20 {
            let text = random_tree(4, m, &mut rng);
            let e = parse(&text, m).unwrap();
            let p: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = e.grad(&p).unwrap();
            let h = 1e-5;
            for k in 0..m {
                let mut a = p.clone();
                let mut b = p.clone();
                a[k] += h;
                b[k] -= h;
                let fd = (e.eval(&a).unwrap() - e.eval(&b).unwrap()) / (2.0 * h);
                let scale = g[k].abs().max(1.0);
                assert!(
                    (fd - g[k]).abs() <= 1e-6 * scale,
                    "{text}: d/du{} ad={} fd={fd}",
                    k + 1,
                    g[k]
                );
            }
        }
    }

    #[test]
    fn gradient_is_linear() {
        let e1 = parse("sin(u1)*u2 + exp(u2)", 2).unwrap();
        let e2 = parse("u1^3 - tanh(u2)", 2).unwrap();
        let comb = parse("2.5*(sin(u1)*u2 + exp(u2)) + (u1^3 - tanh(u2))", 2).unwrap();
        let p = [0.3, -0.7];
        let g1 = e1.grad(&p).unwrap();
        let g2 = e2.grad(&p).unwrap();
        let gc = comb.grad(&p).unwrap();
        for k in 0..2 {
            assert!((gc[k] - (2.5 * g1[k] + g2[k])).abs() <= 1e-13);
        }
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = 3;
            let text = random_tree(4, m, &mut rng);
            let e = parse(&text, m).unwrap();
            let again = parse(&e.to_string(), m).unwrap();
            for _ in 0..100 {
                let p: Vec<f64> = (0..m).map(|_| rng.random_range(-1.5..1.5)).collect();
                let a = e.eval(&p).unwrap();
                let b = again.eval(&p).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
