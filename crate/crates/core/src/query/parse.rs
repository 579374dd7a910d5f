//! Datalog-style query text.
//!
//! ```text
//! Q(t1,...,tk) :- R(a,...), S(b,...)
//! ```
//!
//! Identifiers are variables, single-quoted strings (with `\'` and `\\`
//! escapes) and bare numbers are constants. Whitespace is insignificant, a
//! trailing `.` is allowed, and `%` starts a comment running to end of line.

use super::{Atom, ConjunctiveQuery, Term};
use crate::error::{Error, Result};

pub fn parse_query(text: &str) -> Result<ConjunctiveQuery> {
    let mut p = Parser::new(text);
    p.skip_ws();
    let q = p.query()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("trailing input after query"));
    }
    Ok(q)
}

/// Parses zero or more queries, one after another.
pub fn parse_queries(text: &str) -> Result<Vec<ConjunctiveQuery>> {
    let mut p = Parser::new(text);
    let mut out = Vec::new();
    loop {
        p.skip_ws();
        if p.at_end() {
            return Ok(out);
        }
        out.push(p.query()?);
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '%' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(self.error(format!("expected `{s}`")))
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_alphabetic() || c == '_' => {}
            _ => return Err(self.error("expected identifier")),
        }
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                self.bump();
            } else {
                break;
            }
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn term(&mut self) -> Result<Term> {
        self.skip_ws();
        match self.peek() {
            Some('\'') => {
                self.bump();
                let mut value = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.error("unterminated string constant")),
                        Some('\'') => break,
                        Some('\\') => match self.bump() {
                            Some(c) => value.push(c),
                            None => return Err(self.error("dangling escape")),
                        },
                        Some(c) => value.push(c),
                    }
                }
                Ok(Term::Const(value))
            }
            Some(c) if c.is_ascii_digit() || c == '-' => {
                let start = self.pos;
                self.bump();
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == '.' || c == '_' {
                        self.bump();
                    } else {
                        break;
                    }
                }
                Ok(Term::Const(self.src[start..self.pos].to_string()))
            }
            _ => Ok(Term::Var(self.ident()?)),
        }
    }

    fn terms(&mut self) -> Result<Vec<Term>> {
        self.expect("(")?;
        let mut out = Vec::new();
        if self.eat(')') {
            return Ok(out);
        }
        loop {
            out.push(self.term()?);
            if self.eat(')') {
                return Ok(out);
            }
            if !self.eat(',') {
                return Err(self.error("expected `,` or `)`"));
            }
        }
    }

    fn query(&mut self) -> Result<ConjunctiveQuery> {
        let name = self.ident()?;
        let head = self.terms()?;
        self.expect(":-")?;
        let mut body = Vec::new();
        loop {
            let relation = self.ident()?;
            let terms = self.terms()?;
            body.push(Atom::new(relation, terms));
            if !self.eat(',') {
                break;
            }
        }
        self.eat('.');
        let start = self.pos;
        let mut q = ConjunctiveQuery::new(head, body).map_err(|e| Error::Parse {
            position: start,
            message: e.to_string(),
        })?;
        q.name = name;
        Ok(q)
    }
}
