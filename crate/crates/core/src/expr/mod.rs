//! The equation language.
//!
//! An [`Expr`] is the right-hand side of `y = f(x; w)`: a tree over data
//! variables `x1, x2, ...`, fittable parameters `w1, w2, ...`, small integer
//! constants and a fixed set of operators. Equations are exchanged as token
//! sequences (see [`token`]) and read back with the recursive-descent
//! [`parser`].

mod parser;
mod token;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use parser::{parse, parse_text, Expected, ParseError, TextParseError};
pub use token::{tokenize, Func, InfixOp, Token, TokenSeq, TokenizeError, UnknownToken, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
    Max,
    Argmin,
    Argmax,
}

/// Abstract syntax tree of an equation.
///
/// Variable and parameter indices are 1-based, matching their token names.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(u8),
    Param(u8),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no binding for variable x{0}")]
    UnboundVariable(u8),
    #[error("no binding for parameter w{0}")]
    UnboundParameter(u8),
}

/// Sorted, deduplicated variable and parameter indices of an expression.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreeSymbols {
    pub variables: Vec<u8>,
    pub parameters: Vec<u8>,
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl UnaryOp {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Neg => -a,
            UnaryOp::Exp => a.exp(),
            UnaryOp::Log => a.ln(),
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
            UnaryOp::Sigmoid => sigmoid(a),
        }
    }
}

impl BinaryOp {
    /// Applies the operator. `argmax`/`argmin` name the winning alternative
    /// as 1.0 or 2.0, with ties going to the first; NaN operands propagate.
    pub fn apply(self, a: f64, b: f64) -> f64 {
        if a.is_nan() || b.is_nan() {
            return f64::NAN;
        }
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
            BinaryOp::Min => {
                if a <= b {
                    a
                } else {
                    b
                }
            }
            BinaryOp::Max => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
            BinaryOp::Argmin => {
                if a <= b {
                    1.0
                } else {
                    2.0
                }
            }
            BinaryOp::Argmax => {
                if a >= b {
                    1.0
                } else {
                    2.0
                }
            }
        }
    }
}

impl Expr {
    pub fn var(i: u8) -> Self {
        Expr::Var(i)
    }

    pub fn param(i: u8) -> Self {
        Expr::Param(i)
    }

    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Self {
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Add, a, b)
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Mul, a, b)
    }

    pub fn div(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Div, a, b)
    }

    pub fn pow(a: Expr, b: Expr) -> Self {
        Self::binary(BinaryOp::Pow, a, b)
    }

    /// Evaluates the expression; `vars[0]` binds `x1`, `params[0]` binds `w1`.
    ///
    /// Out-of-domain inputs yield non-finite values rather than errors.
    pub fn evaluate(&self, vars: &[f64], params: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => lookup(vars, *i).ok_or(EvalError::UnboundVariable(*i)),
            Expr::Param(i) => lookup(params, *i).ok_or(EvalError::UnboundParameter(*i)),
            Expr::Unary(op, a) => Ok(op.apply(a.evaluate(vars, params)?)),
            Expr::Binary(op, a, b) => {
                let lhs = a.evaluate(vars, params)?;
                let rhs = b.evaluate(vars, params)?;
                Ok(op.apply(lhs, rhs))
            }
        }
    }

    pub fn free_symbols(&self) -> FreeSymbols {
        let mut vars = BTreeSet::new();
        let mut params = BTreeSet::new();
        self.visit(&mut |e| match e {
            Expr::Var(i) => {
                vars.insert(*i);
            }
            Expr::Param(i) => {
                params.insert(*i);
            }
            _ => {}
        });
        FreeSymbols {
            variables: vars.into_iter().collect(),
            parameters: params.into_iter().collect(),
        }
    }

    /// Highest parameter index used, or 0 when the expression has none.
    pub fn param_count(&self) -> usize {
        self.free_symbols().parameters.last().map_or(0, |&i| i as usize)
    }

    /// Highest variable index used, or 0 when the expression has none.
    pub fn var_count(&self) -> usize {
        self.free_symbols().variables.last().map_or(0, |&i| i as usize)
    }

    /// Depth of the tree; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Param(_) => 1,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, a) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Canonical text form: space-separated tokens without the trailing EOS.
    pub fn canonical(&self) -> String {
        let mut out = Vec::new();
        token::write_canonical(self, &mut out);
        out.join(" ")
    }
}

fn lookup(values: &[f64], index: u8) -> Option<f64> {
    (index as usize).checked_sub(1).and_then(|i| values.get(i)).copied()
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}
