//! Recursive-descent parser for the surface syntax.
//!
//! ```text
//! type ::= "nat" | type "->" type | "(" type ")"
//! term ::= "fun" ident ":" type "=>" term | atom { atom }
//! atom ::= nat | ident | "(" term ")" | "succ" atom | "pred" atom
//!        | "coin" "(" rat ")" | "coin" "[" ident "]" "(" rat ")"
//!        | "ifz" term "then" term "else" term
//!        | "let" ident "=" term "in" term | "fix" atom
//!        | "#" ident "{" term "}"
//! ```
//! `--` starts a comment running to the end of the line.

use std::sync::Arc;

use super::{Label, Term, TermKind, Ty};
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: probability {value} outside [0, 1]")]
    ProbabilityRange { line: usize, col: usize, value: String },
}

const KEYWORDS: &[&str] = &["fun", "ifz", "then", "else", "let", "in", "succ", "pred", "fix", "coin", "nat"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Kw(&'static str),
    /// Digits with an optional fractional part.
    Number(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        if two == "->" || two == "=>" {
            let sym = if two == "->" { "->" } else { "=>" };
            advance(2, &mut i);
            out.push(Spanned { tok: Tok::Sym(sym), line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            let text: String = chars[start..j].iter().collect();
            advance(j - start, &mut i);
            out.push(Spanned { tok: Tok::Number(text), line: l0, col: c0 });
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            let mut j = i;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            let text: String = chars[start..j].iter().collect();
            advance(j - start, &mut i);
            let tok = match KEYWORDS.iter().find(|k| **k == text) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(text),
            };
            out.push(Spanned { tok, line: l0, col: c0 });
            continue;
        }
        let sym = match c {
            '(' => "(",
            ')' => ")",
            '[' => "[",
            ']' => "]",
            '{' => "{",
            '}' => "}",
            ':' => ":",
            '=' => "=",
            '/' => "/",
            '#' => "#",
            _ => {
                return Err(ParseError::Syntax { line: l0, col: c0, msg: format!("unexpected character `{c}`") });
            }
        };
        advance(1, &mut i);
        out.push(Spanned { tok: Tok::Sym(sym), line: l0, col: c0 });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::Syntax { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Sym(x) if *x == s => {
                self.bump();
                Ok(())
            }
            other => self.error(format!("expected `{s}`, found {}", describe(other))),
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Kw(x) if *x == k => {
                self.bump();
                Ok(())
            }
            other => self.error(format!("expected `{k}`, found {}", describe(other))),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(x) => {
                self.bump();
                Ok(x)
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn ty(&mut self) -> Result<Ty, ParseError> {
        let dom = match self.peek() {
            Tok::Kw("nat") => {
                self.bump();
                Ty::Nat
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.ty()?;
                self.expect_sym(")")?;
                t
            }
            other => return self.error(format!("expected a type, found {}", describe(other))),
        };
        if self.peek() == &Tok::Sym("->") {
            self.bump();
            Ok(Ty::arrow(dom, self.ty()?))
        } else {
            Ok(dom)
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        if self.peek() == &Tok::Kw("fun") {
            self.bump();
            let x = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.ty()?;
            self.expect_sym("=>")?;
            let body = self.term()?;
            return Ok(Term::new(TermKind::Abs(Arc::from(x), ty, body)));
        }
        let mut head = self.atom()?;
        while self.starts_atom() {
            let arg = self.atom()?;
            head = Term::app(head, arg);
        }
        Ok(head)
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Number(_)
                | Tok::Ident(_)
                | Tok::Sym("(")
                | Tok::Sym("#")
                | Tok::Kw("succ" | "pred" | "coin" | "ifz" | "let" | "fix")
        )
    }

    fn rat(&mut self) -> Result<Rat, ParseError> {
        let (line, col) = self.here();
        let num = match self.bump() {
            Tok::Number(n) => n,
            other => return Err(ParseError::Syntax { line, col, msg: format!("expected a probability, found {}", describe(&other)) }),
        };
        let text = if self.peek() == &Tok::Sym("/") {
            self.bump();
            match self.bump() {
                Tok::Number(d) if !num.contains('.') && !d.contains('.') => format!("{num}/{d}"),
                _ => return Err(ParseError::Syntax { line, col, msg: "malformed fraction".into() }),
            }
        } else {
            num
        };
        let r: Rat = text.parse().map_err(|_| ParseError::Syntax { line, col, msg: format!("malformed rational `{text}`") })?;
        if !r.is_probability() {
            return Err(ParseError::ProbabilityRange { line, col, value: text });
        }
        Ok(r)
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                let v: u64 = n
                    .parse()
                    .map_err(|_| ParseError::Syntax { line, col, msg: format!("`{n}` is not a natural number literal") })?;
                Ok(Term::num(v))
            }
            Tok::Ident(x) => {
                self.bump();
                Ok(Term::var(&x))
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.term()?;
                self.expect_sym(")")?;
                Ok(t)
            }
            Tok::Sym("#") => {
                self.bump();
                let l = self.ident()?;
                self.expect_sym("{")?;
                let t = self.term()?;
                self.expect_sym("}")?;
                Ok(Term::mark(t, Label::new(&l)))
            }
            Tok::Kw("succ") => {
                self.bump();
                Ok(Term::succ(self.atom()?))
            }
            Tok::Kw("pred") => {
                self.bump();
                Ok(Term::pred(self.atom()?))
            }
            Tok::Kw("fix") => {
                self.bump();
                Ok(Term::fix(self.atom()?))
            }
            Tok::Kw("coin") => {
                self.bump();
                let label = if self.peek() == &Tok::Sym("[") {
                    self.bump();
                    let l = self.ident()?;
                    self.expect_sym("]")?;
                    Some(Label::new(&l))
                } else {
                    None
                };
                self.expect_sym("(")?;
                let r = self.rat()?;
                self.expect_sym(")")?;
                Ok(match label {
                    Some(l) => Term::dice_lab(l, r),
                    None => Term::dice(r),
                })
            }
            Tok::Kw("ifz") => {
                self.bump();
                let c = self.term()?;
                self.expect_kw("then")?;
                let z = self.term()?;
                self.expect_kw("else")?;
                let s = self.term()?;
                Ok(Term::ifz(c, z, s))
            }
            Tok::Kw("let") => {
                self.bump();
                let x = self.ident()?;
                self.expect_sym("=")?;
                let a = self.term()?;
                self.expect_kw("in")?;
                let b = self.term()?;
                Ok(Term::let_(&x, a, b))
            }
            other => self.error(format!("expected a term, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(x) => format!("identifier `{x}`"),
        Tok::Kw(k) => format!("keyword `{k}`"),
        Tok::Number(n) => format!("number `{n}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses one term; trailing input is an error.
pub fn parse(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let t = p.term()?;
    if p.peek() != &Tok::Eof {
        return p.error(format!("unexpected {} after term", describe(p.peek())));
    }
    Ok(t)
}

pub fn parse_type(src: &str) -> Result<Ty, ParseError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let t = p.ty()?;
    if p.peek() != &Tok::Eof {
        return p.error(format!("unexpected {} after type", describe(p.peek())));
    }
    Ok(t)
}
