//! Infix expression parser.
//!
//! Grammar: `^` (right-assoc, integer exponents) > unary minus > `*` `/` >
//! `+` `-`; integer, decimal, and `p/q` rational literals; `f(expr)` calls
//! for the supported function set; explicit `*` (no juxtaposition); ASCII
//! identifiers resolved against a declared symbol table.

use std::collections::BTreeMap;
use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;

use super::interner::Func;
use super::{Expr, Scalar, Symbol};

/// Declared symbols an expression may reference.
#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    map: BTreeMap<String, Symbol>,
}

impl SymbolTable {
    pub fn new() -> Self {
        SymbolTable::default()
    }

    /// Declare a symbol; re-declaring the same name is an error.
    pub fn insert(&mut self, sym: Symbol) -> Result<(), String> {
        let name = sym.name();
        if self.map.contains_key(&name) {
            return Err(name);
        }
        self.map.insert(name, sym);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Symbol> {
        self.map.get(name).copied()
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.map.values().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    UndeclaredSymbol(String),
    UnknownFunction(String),
    NonIntegerExponent,
    MalformedNumber(String),
}

/// Syntax or resolution failure, with 1-based source position.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{kind} at line {line}, column {col}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{}`", c),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected token `{}`", t),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::UndeclaredSymbol(s) => write!(f, "undeclared symbol `{}`", s),
            ParseErrorKind::UnknownFunction(s) => write!(f, "unknown function `{}`", s),
            ParseErrorKind::NonIntegerExponent => {
                write!(f, "non-integer exponent on a symbolic base")
            }
            ParseErrorKind::MalformedNumber(s) => write!(f, "malformed number `{}`", s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Int(BigInt),
    Float(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(v) => write!(f, "{}", v),
            Tok::Float(v) => write!(f, "{}", v),
            Tok::Ident(s) => write!(f, "{}", s),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::Star => write!(f, "*"),
            Tok::Slash => write!(f, "/"),
            Tok::Caret => write!(f, "^"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            kind,
            line: self.line,
            col: self.col,
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, u32, u32)>, ParseError> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            let (line, col) = (self.line, self.col);
            let tok = match c {
                '+' => {
                    self.bump();
                    Tok::Plus
                }
                '-' => {
                    self.bump();
                    Tok::Minus
                }
                '*' => {
                    self.bump();
                    Tok::Star
                }
                '/' => {
                    self.bump();
                    Tok::Slash
                }
                '^' => {
                    self.bump();
                    Tok::Caret
                }
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                c if c.is_ascii_digit() => self.number()?,
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut name = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            name.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(name)
                }
                other => return Err(self.err(ParseErrorKind::UnexpectedChar(other))),
            };
            out.push((tok, line, col));
        }
        Ok(out)
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let mut text = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if self.chars.peek() == Some(&'.') {
            text.push('.');
            self.bump();
            let mut any = false;
            while let Some(&c) = self.chars.peek() {
                if c.is_ascii_digit() {
                    text.push(c);
                    self.bump();
                    any = true;
                } else {
                    break;
                }
            }
            if !any {
                return Err(self.err(ParseErrorKind::MalformedNumber(text)));
            }
            let v: f64 = text
                .parse()
                .map_err(|_| self.err(ParseErrorKind::MalformedNumber(text.clone())))?;
            Ok(Tok::Float(v))
        } else {
            let v: BigInt = text
                .parse()
                .map_err(|_| self.err(ParseErrorKind::MalformedNumber(text.clone())))?;
            Ok(Tok::Int(v))
        }
    }
}

struct Parser<'t> {
    toks: Vec<(Tok, u32, u32)>,
    pos: usize,
    table: &'t SymbolTable,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        self.pos += 1;
        t
    }

    fn here(&self) -> (u32, u32) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or((1, 1))
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        let (line, col) = self.here();
        ParseError { kind, line, col }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    acc = acc + rhs;
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    acc = acc - rhs;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.unary()?;
                    acc = acc * rhs;
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let rhs = self.unary()?;
                    acc = acc / rhs;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(-inner);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let exp = self.exponent_operand()?;
            return self.apply_power(base, exp);
        }
        Ok(base)
    }

    // `^` binds tighter than unary minus, but a sign directly after `^`
    // belongs to the exponent: x^-2 is x^(-2).
    fn exponent_operand(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            let inner = self.exponent_operand()?;
            return Ok(-inner);
        }
        self.power()
    }

    fn apply_power(&mut self, base: Expr, exp: Expr) -> Result<Expr, ParseError> {
        let Some(c) = exp.as_constant() else {
            return Err(self.err(ParseErrorKind::NonIntegerExponent));
        };
        if let Some(n) = c.to_integer() {
            if let Ok(n) = i32::try_from(n) {
                return Ok(base.powi(n));
            }
        }
        // non-integer exponent: fold numerically over a constant base only
        if let Some(bc) = base.as_constant() {
            let v = bc.to_f64().powf(c.to_f64());
            if v.is_finite() {
                return Ok(Expr::float(v));
            }
        }
        Err(self.err(ParseErrorKind::NonIntegerExponent))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (line, col) = self.here();
        match self.bump() {
            Some(Tok::Int(v)) => Ok(Expr::constant(Scalar::Rational(
                BigRational::from_integer(v),
            ))),
            Some(Tok::Float(v)) => Ok(Expr::float(v)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    Some(t) => Err(ParseError {
                        kind: ParseErrorKind::UnexpectedToken(t.to_string()),
                        line,
                        col,
                    }),
                    None => Err(ParseError {
                        kind: ParseErrorKind::UnexpectedEnd,
                        line,
                        col,
                    }),
                }
            }
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError {
                            kind: ParseErrorKind::UnknownFunction(name),
                            line,
                            col,
                        });
                    };
                    self.bump();
                    let arg = self.expr()?;
                    match self.bump() {
                        Some(Tok::RParen) => Ok(Expr::apply(func, arg)),
                        _ => Err(self.err(ParseErrorKind::UnexpectedEnd)),
                    }
                } else {
                    match self.table.get(&name) {
                        Some(sym) => Ok(Expr::sym(sym)),
                        None => Err(ParseError {
                            kind: ParseErrorKind::UndeclaredSymbol(name),
                            line,
                            col,
                        }),
                    }
                }
            }
            Some(t) => Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken(t.to_string()),
                line,
                col,
            }),
            None => Err(ParseError {
                kind: ParseErrorKind::UnexpectedEnd,
                line,
                col,
            }),
        }
    }
}

/// Parse one expression against a table of declared symbols.
pub fn parse_expr(text: &str, table: &SymbolTable) -> Result<Expr, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser {
        toks,
        pos: 0,
        table,
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        let (t, line, col) = &p.toks[p.pos];
        return Err(ParseError {
            kind: ParseErrorKind::UnexpectedToken(t.to_string()),
            line: *line,
            col: *col,
        });
    }
    Ok(e)
}
