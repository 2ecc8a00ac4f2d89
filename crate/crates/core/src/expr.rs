//! Arithmetic expressions for vector fields and discrete maps.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term   (("+" | "-") term)*
//! term    := unary  (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?
//! primary := number | variable | func "(" expr ")" | "(" expr ")"
//! number  := digits ["." digits] [("e" | "E") ["+" | "-"] digits]
//! variable:= "x1" .. "xn" | "t"
//! func    := "sin" | "cos" | "exp" | "tanh" | "abs" | "sqrt"
//! ```
//!
//! `^` binds tighter than unary minus and is right associative, so `-x1^2`
//! is `-(x1^2)` and `2^3^2` is `2^9`. The binary operators `+ - * /` are
//! left associative.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// A node of the expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based state variable index (`x1` is `Var(0)`).
    Var(usize),
    Time,
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
}

/// A parsed expression over the variables `x1..xn` and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    arity: usize,
    program: Vec<Instr>,
    stack_depth: usize,
}

/// Postfix form of the tree, evaluated on a value stack.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Const(f64),
    Var(usize),
    Time,
    Neg,
    Call(Func),
    Binary(BinOp),
}

fn compile(node: &Node, out: &mut Vec<Instr>) -> usize {
    match node {
        Node::Const(c) => {
            out.push(Instr::Const(*c));
            1
        }
        Node::Var(i) => {
            out.push(Instr::Var(*i));
            1
        }
        Node::Time => {
            out.push(Instr::Time);
            1
        }
        Node::Neg(a) => {
            let d = compile(a, out);
            out.push(Instr::Neg);
            d
        }
        Node::Call(f, a) => {
            let d = compile(a, out);
            out.push(Instr::Call(*f));
            d
        }
        Node::Binary(op, a, b) => {
            let da = compile(a, out);
            let db = compile(b, out);
            out.push(Instr::Binary(*op));
            da.max(db + 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("variable `{name}` at offset {offset} is out of range for dimension {arity}")]
    VariableOutOfRange {
        offset: usize,
        name: String,
        arity: usize,
    },
    #[error("expression arity must be at least 1")]
    ZeroArity,
}

impl ParseError {
    /// Byte offset into the source, when the error has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::VariableOutOfRange { offset, .. } => Some(*offset),
            ParseError::ZeroArity => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative number")]
    SqrtOfNegative,
    #[error("evaluation produced NaN")]
    NotANumber,
    #[error("expected a point of dimension {expected}, got {found}")]
    ArityMismatch { expected: usize, found: usize },
}

/// Parses `src` as an expression over `x1..x{arity}` and `t`.
pub fn parse_expression(src: &str, arity: usize) -> Result<Expr, ParseError> {
    if arity == 0 {
        return Err(ParseError::ZeroArity);
    }
    let mut parser = Parser {
        lexer: Lexer::new(src),
        arity,
        peeked: None,
    };
    let root = parser.expr(0)?;
    let tok = parser.next()?;
    if tok.kind != TokenKind::End {
        return Err(ParseError::Syntax {
            offset: tok.offset,
            message: alloc::format!("unexpected {}", tok.kind),
        });
    }
    Ok(Expr::from_node(root, arity))
}

impl Expr {
    fn from_node(root: Node, arity: usize) -> Self {
        let mut program = Vec::new();
        let stack_depth = compile(&root, &mut program);
        Expr {
            root,
            arity,
            program,
            stack_depth,
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Evaluates the expression at `point` and `time`.
    pub fn eval(&self, point: &[f64], time: f64) -> Result<f64, EvalError> {
        if point.len() != self.arity {
            return Err(EvalError::ArityMismatch {
                expected: self.arity,
                found: point.len(),
            });
        }
        const INLINE: usize = 16;
        let v = if self.stack_depth <= INLINE {
            run(&self.program, &mut [0.0; INLINE], point, time)?
        } else {
            run(
                &self.program,
                &mut alloc::vec![0.0; self.stack_depth],
                point,
                time,
            )?
        };
        if v.is_nan() {
            return Err(EvalError::NotANumber);
        }
        Ok(v)
    }
}

/// Free-function form of [`Expr::eval`].
pub fn eval_expr(e: &Expr, point: &[f64], time: f64) -> Result<f64, EvalError> {
    e.eval(point, time)
}

fn run(program: &[Instr], stack: &mut [f64], x: &[f64], t: f64) -> Result<f64, EvalError> {
    let mut sp = 0;
    for ins in program {
        match *ins {
            Instr::Const(c) => {
                stack[sp] = c;
                sp += 1;
            }
            Instr::Var(i) => {
                stack[sp] = x[i];
                sp += 1;
            }
            Instr::Time => {
                stack[sp] = t;
                sp += 1;
            }
            Instr::Neg => stack[sp - 1] = -stack[sp - 1],
            Instr::Call(f) => stack[sp - 1] = call(f, stack[sp - 1])?,
            Instr::Binary(op) => {
                sp -= 1;
                stack[sp - 1] = binary(op, stack[sp - 1], stack[sp])?;
            }
        }
    }
    Ok(stack[0])
}

fn call(f: Func, v: f64) -> Result<f64, EvalError> {
    Ok(match f {
        Func::Sin => libm::sin(v),
        Func::Cos => libm::cos(v),
        Func::Exp => libm::exp(v),
        Func::Tanh => libm::tanh(v),
        Func::Abs => libm::fabs(v),
        Func::Sqrt => {
            if v < 0.0 {
                return Err(EvalError::SqrtOfNegative);
            }
            libm::sqrt(v)
        }
    })
}

fn binary(op: BinOp, l: f64, r: f64) -> Result<f64, EvalError> {
    Ok(match op {
        BinOp::Add => l + r,
        BinOp::Sub => l - r,
        BinOp::Mul => l * r,
        BinOp::Div => {
            if r == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            l / r
        }
        BinOp::Pow => pow(l, r),
    })
}

// Small integer exponents dominate polynomial vector fields; repeated
// multiplication is exact-rounded per step and much faster than pow.
fn pow(base: f64, exp: f64) -> f64 {
    if exp == 2.0 {
        base * base
    } else if exp == 3.0 {
        base * base * base
    } else {
        libm::pow(base, exp)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Time => f.write_str("t"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

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
    End,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Number(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Plus => f.write_str("`+`"),
            TokenKind::Minus => f.write_str("`-`"),
            TokenKind::Star => f.write_str("`*`"),
            TokenKind::Slash => f.write_str("`/`"),
            TokenKind::Caret => f.write_str("`^`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::End => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok(Token {
                kind: TokenKind::End,
                offset: start,
            });
        };
        let single = |kind| Token {
            kind,
            offset: start,
        };
        let tok = match c {
            b'+' => single(TokenKind::Plus),
            b'-' => single(TokenKind::Minus),
            b'*' => single(TokenKind::Star),
            b'/' => single(TokenKind::Slash),
            b'^' => single(TokenKind::Caret),
            b'(' => single(TokenKind::LParen),
            b')' => single(TokenKind::RParen),
            b'0'..=b'9' | b'.' => return self.number(),
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = start;
                while end < bytes.len()
                    && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
                {
                    end += 1;
                }
                self.pos = end;
                return Ok(Token {
                    kind: TokenKind::Ident(self.src[start..end].to_string()),
                    offset: start,
                });
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: alloc::format!("unexpected character `{ch}`"),
                });
            }
        };
        self.pos += 1;
        Ok(tok)
    }

    fn number(&mut self) -> Result<Token, ParseError> {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let digits = |mut i: usize| {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            i
        };
        let mut end = digits(start);
        let int_digits = end - start;
        let mut frac_digits = 0;
        if end < bytes.len() && bytes[end] == b'.' {
            let after = digits(end + 1);
            frac_digits = after - end - 1;
            end = after;
        }
        if int_digits == 0 && frac_digits == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                message: "malformed number".to_string(),
            });
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut i = end + 1;
            if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                i += 1;
            }
            let after = digits(i);
            if after == i {
                return Err(ParseError::Syntax {
                    offset: after,
                    message: "missing exponent digits".to_string(),
                });
            }
            end = after;
        }
        let value: f64 = self.src[start..end]
            .parse()
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: "malformed number".to_string(),
            })?;
        self.pos = end;
        Ok(Token {
            kind: TokenKind::Number(value),
            offset: start,
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    arity: usize,
    peeked: Option<Token>,
}

impl Parser<'_> {
    fn peek(&mut self) -> Result<&Token, ParseError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next_token()?);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next_token(),
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ParseError> {
        let tok = self.next()?;
        if tok.kind == kind {
            Ok(())
        } else {
            Err(ParseError::Syntax {
                offset: tok.offset,
                message: alloc::format!("expected {kind}, found {}", tok.kind),
            })
        }
    }

    /// Precedence climbing over the left-associative binary operators.
    fn expr(&mut self, min_prec: u8) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let (op, prec) = match self.peek()?.kind {
                TokenKind::Plus => (BinOp::Add, 1),
                TokenKind::Minus => (BinOp::Sub, 1),
                TokenKind::Star => (BinOp::Mul, 2),
                TokenKind::Slash => (BinOp::Div, 2),
                _ => break,
            };
            if prec < min_prec {
                break;
            }
            self.next()?;
            let rhs = self.expr(prec + 1)?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek()?.kind == TokenKind::Minus {
            self.next()?;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek()?.kind == TokenKind::Caret {
            self.next()?;
            let exp = self.unary()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let tok = self.next()?;
        match tok.kind {
            TokenKind::Number(v) => Ok(Node::Const(v)),
            TokenKind::LParen => {
                let inner = self.expr(0)?;
                self.expect(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.identifier(name, tok.offset),
            other => Err(ParseError::Syntax {
                offset: tok.offset,
                message: alloc::format!("unexpected {other}"),
            }),
        }
    }

    fn identifier(&mut self, name: String, offset: usize) -> Result<Node, ParseError> {
        if name == "t" {
            return Ok(Node::Time);
        }
        if let Some(func) = Func::from_name(&name) {
            self.expect(TokenKind::LParen)?;
            let arg = self.expr(0)?;
            self.expect(TokenKind::RParen)?;
            return Ok(Node::Call(func, Box::new(arg)));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty()
                && digits.bytes().all(|b| b.is_ascii_digit())
                && !digits.starts_with('0')
            {
                return match digits.parse::<usize>() {
                    Ok(i) if i <= self.arity => Ok(Node::Var(i - 1)),
                    _ => Err(ParseError::VariableOutOfRange {
                        offset,
                        name,
                        arity: self.arity,
                    }),
                };
            }
        }
        Err(ParseError::UnknownIdentifier { offset, name })
    }
}
