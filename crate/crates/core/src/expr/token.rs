use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp};

/// Operators written infix inside parentheses: `( a op b )`.
///
/// `Sub` doubles as prefix negation: `( - a )`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InfixOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Operators written in call syntax: `f ( a )` or `f ( a , b )`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sigmoid,
    Min,
    Max,
    Argmin,
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Num(u8),
    Var(u8),
    Param(u8),
    Infix(InfixOp),
    Func(Func),
    LParen,
    RParen,
    Comma,
    Pad,
    Eos,
}

pub const INFIX_OPS: [InfixOp; 5] = [
    InfixOp::Add,
    InfixOp::Sub,
    InfixOp::Mul,
    InfixOp::Div,
    InfixOp::Pow,
];

pub const FUNCS: [Func; 9] = [
    Func::Exp,
    Func::Log,
    Func::Sin,
    Func::Cos,
    Func::Sigmoid,
    Func::Min,
    Func::Max,
    Func::Argmin,
    Func::Argmax,
];

/// Largest integer constant with its own token.
pub const MAX_NUM: u8 = 2;

impl InfixOp {
    pub fn symbol(self) -> &'static str {
        match self {
            InfixOp::Add => "+",
            InfixOp::Sub => "-",
            InfixOp::Mul => "*",
            InfixOp::Div => "/",
            InfixOp::Pow => "^",
        }
    }

    pub fn binary_op(self) -> BinaryOp {
        match self {
            InfixOp::Add => BinaryOp::Add,
            InfixOp::Sub => BinaryOp::Sub,
            InfixOp::Mul => BinaryOp::Mul,
            InfixOp::Div => BinaryOp::Div,
            InfixOp::Pow => BinaryOp::Pow,
        }
    }
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sigmoid => "sigmoid",
            Func::Min => "min",
            Func::Max => "max",
            Func::Argmin => "argmin",
            Func::Argmax => "argmax",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Log | Func::Sin | Func::Cos | Func::Sigmoid => 1,
            Func::Min | Func::Max | Func::Argmin | Func::Argmax => 2,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(n) => write!(f, "{n}"),
            Token::Var(i) => write!(f, "x{i}"),
            Token::Param(i) => write!(f, "w{i}"),
            Token::Infix(op) => f.write_str(op.symbol()),
            Token::Func(func) => f.write_str(func.name()),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
            Token::Comma => f.write_str(","),
            Token::Pad => f.write_str("PAD"),
            Token::Eos => f.write_str("EOS"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown token `{0}`")]
pub struct UnknownToken(pub String);

impl FromStr for Token {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let indexed = |rest: &str| rest.parse::<u8>().ok().filter(|&i| i >= 1);
        let tok = match s {
            "(" => Token::LParen,
            ")" => Token::RParen,
            "," => Token::Comma,
            "PAD" => Token::Pad,
            "EOS" => Token::Eos,
            _ => {
                if let Some(op) = INFIX_OPS.iter().find(|op| op.symbol() == s) {
                    Token::Infix(*op)
                } else if let Some(func) = FUNCS.iter().find(|func| func.name() == s) {
                    Token::Func(*func)
                } else if let Some(i) = s.strip_prefix('x').and_then(indexed) {
                    Token::Var(i)
                } else if let Some(i) = s.strip_prefix('w').and_then(indexed) {
                    Token::Param(i)
                } else if let Some(n) = s.parse::<u8>().ok().filter(|&n| n <= MAX_NUM) {
                    Token::Num(n)
                } else {
                    return Err(UnknownToken(s.to_string()));
                }
            }
        };
        Ok(tok)
    }
}

/// A fixed, ordered token vocabulary.
///
/// Index layout: constants `0..=2`, `x1..`, `w1..`, infix operators, named
/// functions, `( ) ,`, then PAD at `size-2` and EOS at `size-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub max_var: u8,
    pub max_param: u8,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab {
            max_var: 4,
            max_param: 6,
        }
    }
}

impl Vocab {
    pub fn new(max_var: u8, max_param: u8) -> Self {
        Vocab { max_var, max_param }
    }

    pub fn size(&self) -> usize {
        self.first_op() + INFIX_OPS.len() + FUNCS.len() + 3 + 2
    }

    pub fn pad_index(&self) -> usize {
        self.size() - 2
    }

    pub fn eos_index(&self) -> usize {
        self.size() - 1
    }

    fn first_var(&self) -> usize {
        MAX_NUM as usize + 1
    }

    fn first_param(&self) -> usize {
        self.first_var() + self.max_var as usize
    }

    fn first_op(&self) -> usize {
        self.first_param() + self.max_param as usize
    }

    pub fn contains(&self, token: Token) -> bool {
        self.index_of(token).is_some()
    }

    pub fn index_of(&self, token: Token) -> Option<usize> {
        let infix_base = self.first_op();
        let func_base = infix_base + INFIX_OPS.len();
        let punct_base = func_base + FUNCS.len();
        match token {
            Token::Num(n) if n <= MAX_NUM => Some(n as usize),
            Token::Var(i) if i >= 1 && i <= self.max_var => Some(self.first_var() + i as usize - 1),
            Token::Param(i) if i >= 1 && i <= self.max_param => {
                Some(self.first_param() + i as usize - 1)
            }
            Token::Infix(op) => INFIX_OPS.iter().position(|&o| o == op).map(|p| infix_base + p),
            Token::Func(f) => FUNCS.iter().position(|&g| g == f).map(|p| func_base + p),
            Token::LParen => Some(punct_base),
            Token::RParen => Some(punct_base + 1),
            Token::Comma => Some(punct_base + 2),
            Token::Pad => Some(self.pad_index()),
            Token::Eos => Some(self.eos_index()),
            _ => None,
        }
    }

    pub fn token(&self, index: usize) -> Option<Token> {
        let first_var = self.first_var();
        let first_param = self.first_param();
        let infix_base = self.first_op();
        let func_base = infix_base + INFIX_OPS.len();
        let punct_base = func_base + FUNCS.len();
        let tok = if index < first_var {
            Token::Num(index as u8)
        } else if index < first_param {
            Token::Var((index - first_var + 1) as u8)
        } else if index < infix_base {
            Token::Param((index - first_param + 1) as u8)
        } else if index < func_base {
            Token::Infix(INFIX_OPS[index - infix_base])
        } else if index < punct_base {
            Token::Func(FUNCS[index - func_base])
        } else {
            match index - punct_base {
                0 => Token::LParen,
                1 => Token::RParen,
                2 => Token::Comma,
                3 => Token::Pad,
                4 => Token::Eos,
                _ => return None,
            }
        };
        Some(tok)
    }

    /// All tokens in index order.
    pub fn tokens(&self) -> Vec<Token> {
        (0..self.size()).filter_map(|i| self.token(i)).collect()
    }
}

/// An ordered token list, EOS-terminated when well formed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(pub Vec<Token>);

impl TokenSeq {
    pub fn as_slice(&self) -> &[Token] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Space-separated text, EOS included if present.
    pub fn text(&self) -> String {
        self.0
            .iter()
            .map(Token::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl From<Vec<Token>> for TokenSeq {
    fn from(v: Vec<Token>) -> Self {
        TokenSeq(v)
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenizeError {
    #[error("equation needs {needed} tokens including EOS, limit is {max}")]
    LengthExceeded { needed: usize, max: usize },
    #[error("constant {0} has no token (only 0, 1 and 2 are representable)")]
    UnrepresentableConstant(f64),
    #[error("token `{0}` is outside the vocabulary")]
    OutOfVocabulary(Token),
}

/// Serializes `expr` into a fully parenthesized, EOS-terminated token
/// sequence of at most `max_len` tokens.
pub fn tokenize(expr: &Expr, vocab: &Vocab, max_len: usize) -> Result<TokenSeq, TokenizeError> {
    let mut out = Vec::new();
    try_serialize(expr, &mut out)?;
    out.push(Token::Eos);
    if let Some(tok) = out.iter().find(|t| !vocab.contains(**t)) {
        return Err(TokenizeError::OutOfVocabulary(*tok));
    }
    if out.len() > max_len {
        return Err(TokenizeError::LengthExceeded {
            needed: out.len(),
            max: max_len,
        });
    }
    Ok(TokenSeq(out))
}

fn const_token(c: f64) -> Option<Token> {
    (0..=MAX_NUM).find(|&n| n as f64 == c).map(Token::Num)
}

fn try_serialize(e: &Expr, out: &mut Vec<Token>) -> Result<(), TokenizeError> {
    match e {
        Expr::Const(c) => out.push(const_token(*c).ok_or(TokenizeError::UnrepresentableConstant(*c))?),
        Expr::Var(i) => out.push(Token::Var(*i)),
        Expr::Param(i) => out.push(Token::Param(*i)),
        Expr::Unary(UnaryOp::Neg, a) => {
            out.extend([Token::LParen, Token::Infix(InfixOp::Sub)]);
            try_serialize(a, out)?;
            out.push(Token::RParen);
        }
        Expr::Unary(op, a) => {
            out.extend([Token::Func(unary_func(*op)), Token::LParen]);
            try_serialize(a, out)?;
            out.push(Token::RParen);
        }
        Expr::Binary(op, a, b) => match binary_syntax(*op) {
            Syntax::Infix(sym) => {
                out.push(Token::LParen);
                try_serialize(a, out)?;
                out.push(Token::Infix(sym));
                try_serialize(b, out)?;
                out.push(Token::RParen);
            }
            Syntax::Call(func) => {
                out.extend([Token::Func(func), Token::LParen]);
                try_serialize(a, out)?;
                out.push(Token::Comma);
                try_serialize(b, out)?;
                out.push(Token::RParen);
            }
        },
    }
    Ok(())
}

/// Writes the canonical text form. Constants without a token are printed
/// as decimal literals so any tree has a readable rendering.
pub(super) fn write_canonical(e: &Expr, out: &mut Vec<String>) {
    let tok = |t: Token| t.to_string();
    match e {
        Expr::Const(c) => out.push(const_token(*c).map_or_else(|| c.to_string(), tok)),
        Expr::Var(i) => out.push(tok(Token::Var(*i))),
        Expr::Param(i) => out.push(tok(Token::Param(*i))),
        Expr::Unary(UnaryOp::Neg, a) => {
            out.extend(["(".to_string(), "-".to_string()]);
            write_canonical(a, out);
            out.push(")".into());
        }
        Expr::Unary(op, a) => {
            out.extend([unary_func(*op).name().to_string(), "(".to_string()]);
            write_canonical(a, out);
            out.push(")".into());
        }
        Expr::Binary(op, a, b) => match binary_syntax(*op) {
            Syntax::Infix(sym) => {
                out.push("(".into());
                write_canonical(a, out);
                out.push(sym.symbol().into());
                write_canonical(b, out);
                out.push(")".into());
            }
            Syntax::Call(func) => {
                out.extend([func.name().to_string(), "(".to_string()]);
                write_canonical(a, out);
                out.push(",".into());
                write_canonical(b, out);
                out.push(")".into());
            }
        },
    }
}

enum Syntax {
    Infix(InfixOp),
    Call(Func),
}

fn unary_func(op: UnaryOp) -> Func {
    match op {
        UnaryOp::Exp => Func::Exp,
        UnaryOp::Log => Func::Log,
        UnaryOp::Sin => Func::Sin,
        UnaryOp::Cos => Func::Cos,
        UnaryOp::Sigmoid => Func::Sigmoid,
        UnaryOp::Neg => unreachable!("negation is written infix"),
    }
}

fn binary_syntax(op: BinaryOp) -> Syntax {
    match op {
        BinaryOp::Add => Syntax::Infix(InfixOp::Add),
        BinaryOp::Sub => Syntax::Infix(InfixOp::Sub),
        BinaryOp::Mul => Syntax::Infix(InfixOp::Mul),
        BinaryOp::Div => Syntax::Infix(InfixOp::Div),
        BinaryOp::Pow => Syntax::Infix(InfixOp::Pow),
        BinaryOp::Min => Syntax::Call(Func::Min),
        BinaryOp::Max => Syntax::Call(Func::Max),
        BinaryOp::Argmin => Syntax::Call(Func::Argmin),
        BinaryOp::Argmax => Syntax::Call(Func::Argmax),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(e: &Expr) -> String {
        tokenize(e, &Vocab::default(), 48).unwrap().text()
    }

    #[test]
    fn default_vocab_layout() {
        let v = Vocab::default();
        assert_eq!(v.size(), 32);
        assert_eq!(v.token(v.size() - 1), Some(Token::Eos));
        assert_eq!(v.token(v.size() - 2), Some(Token::Pad));
        assert_eq!(v.token(v.size()), None);
        for (i, tok) in v.tokens().into_iter().enumerate() {
            assert_eq!(v.index_of(tok), Some(i), "{tok}");
            assert_eq!(tok.to_string().parse::<Token>().unwrap(), tok);
        }
        assert!(!v.contains(Token::Var(5)));
        assert!(!v.contains(Token::Param(7)));
        assert!(!v.contains(Token::Num(3)));
    }

    #[test]
    fn tokenizes_subjective_value_shape() {
        let e = Expr::mul(Expr::param(1), Expr::pow(Expr::var(1), Expr::param(2)));
        assert_eq!(text(&e), "( w1 * ( x1 ^ w2 ) ) EOS");
    }

    #[test]
    fn tokenizes_single_constant() {
        assert_eq!(text(&Expr::constant(0.0)), "0 EOS");
    }

    #[test]
    fn tokenizes_argmax_in_call_form() {
        let sv = |p, v| Expr::mul(Expr::var(p), Expr::pow(Expr::var(v), Expr::param(1)));
        let e = Expr::binary(BinaryOp::Argmax, sv(1, 2), sv(3, 4));
        assert_eq!(
            text(&e),
            "argmax ( ( x1 * ( x2 ^ w1 ) ) , ( x3 * ( x4 ^ w1 ) ) ) EOS"
        );
    }

    #[test]
    fn negation_is_parenthesized_minus() {
        let e = Expr::unary(UnaryOp::Neg, Expr::var(1));
        assert_eq!(text(&e), "( - x1 ) EOS");
    }

    #[test]
    fn length_limit_counts_eos() {
        let e = Expr::add(Expr::var(1), Expr::var(2));
        assert!(tokenize(&e, &Vocab::default(), 6).is_ok());
        assert_eq!(
            tokenize(&e, &Vocab::default(), 5),
            Err(TokenizeError::LengthExceeded { needed: 6, max: 5 })
        );
    }

    #[test]
    fn rejects_constants_and_symbols_outside_vocab() {
        let v = Vocab::default();
        assert_eq!(
            tokenize(&Expr::constant(3.5), &v, 48),
            Err(TokenizeError::UnrepresentableConstant(3.5))
        );
        assert_eq!(
            tokenize(&Expr::var(9), &v, 48),
            Err(TokenizeError::OutOfVocabulary(Token::Var(9)))
        );
    }

    #[test]
    fn canonical_matches_token_text() {
        let e = Expr::binary(
            BinaryOp::Min,
            Expr::unary(UnaryOp::Exp, Expr::var(1)),
            Expr::unary(UnaryOp::Neg, Expr::param(3)),
        );
        let mut toks = text(&e);
        toks.truncate(toks.len() - " EOS".len());
        assert_eq!(e.canonical(), toks);
        assert_eq!(Expr::constant(2.5).canonical(), "2.5");
    }
}
