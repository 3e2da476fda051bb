use std::fmt;

use thiserror::Error;

use super::token::{Func, InfixOp, Token, UnknownToken};
use super::{BinaryOp, Expr, UnaryOp};

/// Nesting limit; token sequences of any practical output length stay well
/// below it, and it keeps hostile text input from exhausting the stack.
pub const MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Expression,
    Operand,
    InfixOperator,
    Token(Token),
    Eos,
    ShallowerNesting,
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expected::Expression => f.write_str("expression"),
            Expected::Operand => f.write_str("operand"),
            Expected::InfixOperator => f.write_str("infix operator"),
            Expected::Token(t) => write!(f, "`{t}`"),
            Expected::Eos => f.write_str("EOS"),
            Expected::ShallowerNesting => write!(f, "nesting depth at most {MAX_DEPTH}"),
        }
    }
}

/// A grammar violation.
///
/// `position` is the 1-based index of the offending token; when the input
/// runs out it is the sequence length (0 for an empty sequence).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at position {position}: expected {expected}")]
pub struct ParseError {
    pub position: usize,
    pub expected: Expected,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextParseError {
    #[error(transparent)]
    Lex(#[from] UnknownToken),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Parses an arbitrary token sequence.
///
/// Tokens after the first EOS are ignored. Any sequence is legal input:
/// malformed ones produce a [`ParseError`], never a panic.
pub fn parse(tokens: &[Token]) -> Result<Expr, ParseError> {
    let mut p = Parser { tokens, pos: 0 };
    let expr = p.expr(0, Expected::Expression)?;
    match p.peek() {
        Some(Token::Eos) => Ok(expr),
        _ => Err(p.error(Expected::Eos)),
    }
}

/// Parses the canonical text form; a trailing EOS is optional.
///
/// Parentheses, commas and operator symbols need not be space-separated.
pub fn parse_text(text: &str) -> Result<Expr, TextParseError> {
    let mut tokens = lex(text)?;
    if tokens.last() != Some(&Token::Eos) {
        tokens.push(Token::Eos);
    }
    Ok(parse(&tokens)?)
}

fn lex(text: &str) -> Result<Vec<Token>, UnknownToken> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| -> Result<(), UnknownToken> {
        if !word.is_empty() {
            tokens.push(word.parse()?);
            word.clear();
        }
        Ok(())
    };
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut word, &mut tokens)?;
        } else if "(),+-*/^".contains(ch) {
            flush(&mut word, &mut tokens)?;
            tokens.push(ch.to_string().parse()?);
        } else {
            word.push(ch);
        }
    }
    flush(&mut word, &mut tokens)?;
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn error(&self, expected: Expected) -> ParseError {
        let position = if self.pos < self.tokens.len() {
            self.pos + 1
        } else {
            self.tokens.len()
        };
        ParseError { position, expected }
    }

    fn expect(&mut self, tok: Token) -> Result<(), ParseError> {
        if self.peek() == Some(tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(Expected::Token(tok)))
        }
    }

    fn expr(&mut self, depth: usize, what: Expected) -> Result<Expr, ParseError> {
        if depth >= MAX_DEPTH {
            return Err(self.error(Expected::ShallowerNesting));
        }
        let Some(tok) = self.peek() else {
            return Err(self.error(what));
        };
        match tok {
            Token::Num(n) => {
                self.pos += 1;
                Ok(Expr::Const(n as f64))
            }
            Token::Var(i) if i >= 1 => {
                self.pos += 1;
                Ok(Expr::Var(i))
            }
            Token::Param(i) if i >= 1 => {
                self.pos += 1;
                Ok(Expr::Param(i))
            }
            Token::LParen => {
                self.pos += 1;
                if self.peek() == Some(Token::Infix(InfixOp::Sub)) {
                    self.pos += 1;
                    let inner = self.expr(depth + 1, Expected::Operand)?;
                    self.expect(Token::RParen)?;
                    return Ok(Expr::unary(UnaryOp::Neg, inner));
                }
                let lhs = self.expr(depth + 1, Expected::Operand)?;
                let op = match self.peek() {
                    Some(Token::Infix(op)) => op,
                    _ => return Err(self.error(Expected::InfixOperator)),
                };
                self.pos += 1;
                let rhs = self.expr(depth + 1, Expected::Operand)?;
                self.expect(Token::RParen)?;
                Ok(Expr::binary(op.binary_op(), lhs, rhs))
            }
            Token::Func(func) => {
                self.pos += 1;
                self.expect(Token::LParen)?;
                let first = self.expr(depth + 1, Expected::Operand)?;
                let expr = if func.arity() == 1 {
                    Expr::unary(unary_op(func), first)
                } else {
                    self.expect(Token::Comma)?;
                    let second = self.expr(depth + 1, Expected::Operand)?;
                    Expr::binary(binary_op(func), first, second)
                };
                self.expect(Token::RParen)?;
                Ok(expr)
            }
            _ => Err(self.error(what)),
        }
    }
}

fn unary_op(func: Func) -> UnaryOp {
    match func {
        Func::Exp => UnaryOp::Exp,
        Func::Log => UnaryOp::Log,
        Func::Sin => UnaryOp::Sin,
        Func::Cos => UnaryOp::Cos,
        Func::Sigmoid => UnaryOp::Sigmoid,
        _ => unreachable!("binary function"),
    }
}

fn binary_op(func: Func) -> BinaryOp {
    match func {
        Func::Min => BinaryOp::Min,
        Func::Max => BinaryOp::Max,
        Func::Argmin => BinaryOp::Argmin,
        Func::Argmax => BinaryOp::Argmax,
        _ => unreachable!("unary function"),
    }
}
