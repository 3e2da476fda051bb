//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use symreg::expr::{BinaryOp, Expr, Token, UnaryOp, Vocab};
use symreg::nn::MlpModel;

pub const UNARY: [UnaryOp; 6] = [
    UnaryOp::Neg,
    UnaryOp::Exp,
    UnaryOp::Log,
    UnaryOp::Sin,
    UnaryOp::Cos,
    UnaryOp::Sigmoid,
];

pub const BINARY: [BinaryOp; 9] = [
    BinaryOp::Add,
    BinaryOp::Sub,
    BinaryOp::Mul,
    BinaryOp::Div,
    BinaryOp::Pow,
    BinaryOp::Min,
    BinaryOp::Max,
    BinaryOp::Argmin,
    BinaryOp::Argmax,
];

/// Random expression of depth at most `depth` using only symbols the
/// vocabulary can spell.
pub fn random_expr<R: Rng>(r: &mut R, depth: usize, vocab: &Vocab) -> Expr {
    if depth == 0 || r.random_bool(0.3) {
        return match r.random_range(0..3) {
            0 => Expr::Const(r.random_range(0..=2) as f64),
            1 => Expr::Var(r.random_range(1..=vocab.max_var)),
            _ => Expr::Param(r.random_range(1..=vocab.max_param)),
        };
    }
    if r.random_bool(0.3) {
        let op = UNARY[r.random_range(0..UNARY.len())];
        Expr::unary(op, random_expr(r, depth - 1, vocab))
    } else {
        let op = BINARY[r.random_range(0..BINARY.len())];
        Expr::binary(op, random_expr(r, depth - 1, vocab), random_expr(r, depth - 1, vocab))
    }
}

/// Uniformly random tokens from the vocabulary, any order.
pub fn random_tokens<R: Rng>(r: &mut R, max_len: usize, vocab: &Vocab) -> Vec<Token> {
    let len = r.random_range(0..=max_len);
    (0..len)
        .map(|_| vocab.token(r.random_range(0..vocab.size())).unwrap())
        .collect()
}

/// Per-bit binary cross-entropy, averaged, with probabilities clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn bce_oracle(output: &[f64], target: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..output.len() {
        let p = output[i].clamp(1e-12, 1.0 - 1e-12);
        let bit = if target[i] == 1.0 { -p.ln() } else { -(1.0 - p).ln() };
        total += bit;
    }
    total / output.len() as f64
}

/// Mean BCE of a batch computed from per-row forward passes.
pub fn batch_loss(model: &MlpModel, xs: &[Vec<f64>], ts: &[Vec<f64>]) -> f64 {
    let mut out = Vec::new();
    let mut tgt = Vec::new();
    for (x, t) in xs.iter().zip(ts) {
        out.extend(model.forward(x).unwrap());
        tgt.extend_from_slice(t);
    }
    bce_oracle(&out, &tgt)
}

/// Sample standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
