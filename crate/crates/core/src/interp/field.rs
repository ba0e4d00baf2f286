//! Set expressions over objects' feature sets.
//!
//! Grammar (`&` binds tighter than `-`, both left-associative):
//!
//! ```text
//! expr := term ('-' term)*
//! term := atom ('&' atom)*
//! atom := IDENT | '(' expr ')'
//! ```
//!
//! `∩` and `−` are accepted as spellings of `&` and `-`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::ObjectTable;
use crate::engine::Real;
use crate::error::{Error, Result};
use crate::tversky::{feature_membership, FeatureBank};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldExpr {
    Object(String),
    Intersection(Box<FieldExpr>, Box<FieldExpr>),
    Difference(Box<FieldExpr>, Box<FieldExpr>),
}

impl FieldExpr {
    pub fn object(name: impl Into<String>) -> Self {
        FieldExpr::Object(name.into())
    }

    pub fn and(self, rhs: FieldExpr) -> Self {
        FieldExpr::Intersection(Box::new(self), Box::new(rhs))
    }

    pub fn minus(self, rhs: FieldExpr) -> Self {
        FieldExpr::Difference(Box::new(self), Box::new(rhs))
    }

    /// Feature indices selected by the expression.
    pub fn evaluate<T: Real>(&self, bank: &FeatureBank<T>, table: &ObjectTable<T>) -> Result<BTreeSet<usize>> {
        Ok(match self {
            FieldExpr::Object(name) => {
                let x = table.get(name)?;
                feature_membership(x, bank)?.members.into_iter().collect()
            }
            FieldExpr::Intersection(a, b) => {
                let (a, b) = (a.evaluate(bank, table)?, b.evaluate(bank, table)?);
                a.intersection(&b).copied().collect()
            }
            FieldExpr::Difference(a, b) => {
                let (a, b) = (a.evaluate(bank, table)?, b.evaluate(bank, table)?);
                a.difference(&b).copied().collect()
            }
        })
    }
}

/// Fully parenthesized except at the top level.
impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(e: &FieldExpr, f: &mut fmt::Formatter<'_>, top: bool) -> fmt::Result {
            let (a, op, b) = match e {
                FieldExpr::Object(n) => return f.write_str(n),
                FieldExpr::Intersection(a, b) => (a, "&", b),
                FieldExpr::Difference(a, b) => (a, "-", b),
            };
            if !top {
                f.write_str("(")?;
            }
            go(a, f, false)?;
            write!(f, " {op} ")?;
            go(b, f, false)?;
            if !top {
                f.write_str(")")?;
            }
            Ok(())
        }
        go(self, f, true)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    And,
    Minus,
    Open,
    Close,
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | ':' | '\'' | '#')
}

/// Tokens with their 1-based column.
fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '&' | '∩' => Tok::And,
            '-' | '−' => Tok::Minus,
            '(' => Tok::Open,
            ')' => Tok::Close,
            c if is_ident_char(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                out.push((col, Tok::Ident(chars[start..i].iter().collect())));
                continue;
            }
            other => {
                return Err(Error::Parse {
                    pos: col,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        };
        out.push((col, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(c, _)| *c)
    }

    fn expr(&mut self) -> Result<FieldExpr> {
        let mut lhs = self.term()?;
        while self.peek() == Some(&Tok::Minus) {
            self.at += 1;
            lhs = lhs.minus(self.term()?);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<FieldExpr> {
        let mut lhs = self.atom()?;
        while self.peek() == Some(&Tok::And) {
            self.at += 1;
            lhs = lhs.and(self.atom()?);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<FieldExpr> {
        let col = self.col();
        match self.toks.get(self.at).map(|(_, t)| t.clone()) {
            Some(Tok::Ident(name)) => {
                self.at += 1;
                Ok(FieldExpr::Object(name))
            }
            Some(Tok::Open) => {
                self.at += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Tok::Close) {
                    return Err(Error::Parse {
                        pos: self.col(),
                        msg: "expected ')'".into(),
                    });
                }
                self.at += 1;
                Ok(inner)
            }
            Some(t) => Err(Error::Parse {
                pos: col,
                msg: format!("expected an object name or '(', found {t:?}"),
            }),
            None => Err(Error::Parse {
                pos: col,
                msg: "unexpected end of expression".into(),
            }),
        }
    }
}

pub fn parse_field(src: &str) -> Result<FieldExpr> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
        end: src.chars().count() + 1,
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return Err(Error::Parse {
            pos: p.col(),
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

impl FromStr for FieldExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_field(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(n: &str) -> FieldExpr {
        FieldExpr::object(n)
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_field("bad & good - worse - better").unwrap();
        assert_eq!(e, o("bad").and(o("good")).minus(o("worse")).minus(o("better")));
        let e = parse_field("a - b & c").unwrap();
        assert_eq!(e, o("a").minus(o("b").and(o("c"))));
        let e = parse_field("(a - b) & c").unwrap();
        assert_eq!(e, o("a").minus(o("b")).and(o("c")));
    }

    #[test]
    fn unicode_operators() {
        assert_eq!(parse_field("a ∩ b − c").unwrap(), parse_field("a & b - c").unwrap());
    }

    #[test]
    fn display_round_trips() {
        for src in ["a", "a & b - c", "a - (b - c)", "(a - b) & (c & d)"] {
            let e = parse_field(src).unwrap();
            assert_eq!(parse_field(&e.to_string()).unwrap(), e);
        }
    }

    #[test]
    fn errors_carry_column() {
        assert!(matches!(parse_field("a & "), Err(Error::Parse { pos: 5, .. })));
        assert!(matches!(parse_field("(a - b"), Err(Error::Parse { pos: 7, .. })));
        assert!(matches!(parse_field("a $ b"), Err(Error::Parse { pos: 3, .. })));
        assert!(matches!(parse_field("a b"), Err(Error::Parse { pos: 3, .. })));
        assert!(parse_field("").is_err());
    }
}
