// Grammar:
//
//   expr  := '0' | term ('+' term)*
//   term  := [coeff '*'] prim ('.' prim)*
//   coeff := '(' ['-'] factor ('*' factor)* ')'
//   factor:= uint | 'i' | 'k' ['^' uint]
//   prim  := 'Id[' a ']' | 'D[' a ']' ['^' uint] | 'B[' a ',' b ']' | 'Tr[' a ']'
//
// Whitespace (including newlines) is allowed between tokens.

use std::collections::BTreeSet;
use std::fmt;

use super::{normalize, Coefficient, OperatorExpr, OperatorTerm, Primitive, Slot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::Semantic => "semantic error",
        };
        write!(
            f,
            "{kind} at {}:{}: {}",
            self.line, self.column, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    LBracket,
    RBracket,
    Star,
    Dot,
    Plus,
    Minus,
    Caret,
    Comma,
    Int(u64),
    Ident(String),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::LBracket => f.write_str("'['"),
            Tok::RBracket => f.write_str("']'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Dot => f.write_str("'.'"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Caret => f.write_str("'^'"),
            Tok::Comma => f.write_str("','"),
            Tok::Int(v) => write!(f, "integer {v}"),
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut column = 1;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (start_line, start_col) = (line, column);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '*' => Tok::Star,
            '.' => Tok::Dot,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '^' => Tok::Caret,
            ',' => Tok::Comma,
            '0'..='9' => {
                let mut digits = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    digits.push(bump(&mut chars));
                }
                let value = digits.parse::<u64>().map_err(|_| ParseError {
                    kind: ParseErrorKind::Syntax,
                    line: start_line,
                    column: start_col,
                    message: format!("integer {digits} is too large"),
                })?;
                out.push(Token {
                    tok: Tok::Int(value),
                    line: start_line,
                    column: start_col,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                let mut ident = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_alphabetic() {
                        break;
                    }
                    ident.push(bump(&mut chars));
                }
                out.push(Token {
                    tok: Tok::Ident(ident),
                    line: start_line,
                    column: start_col,
                });
                continue;
            }
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::Syntax,
                    line: start_line,
                    column: start_col,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        bump(&mut chars);
        out.push(Token {
            tok,
            line: start_line,
            column: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

/// One parsed term before slot-range inference.
struct RawTerm {
    coeff: Coefficient,
    pipeline: Vec<(Primitive, usize, usize)>,
    identities: Vec<Slot>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, token: &Token, message: String) -> ParseError {
        ParseError {
            kind: ParseErrorKind::Syntax,
            line: token.line,
            column: token.column,
            message,
        }
    }

    fn expect(&mut self, want: Tok) -> Result<Token, ParseError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(self.error_at(&t, format!("expected {want}, found {}", t.tok)))
        }
    }

    fn uint(&mut self, what: &str) -> Result<(u64, Token), ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Int(v) => Ok((v, t)),
            ref other => Err(self.error_at(&t, format!("expected {what}, found {other}"))),
        }
    }

    fn slot(&mut self) -> Result<Slot, ParseError> {
        let (v, t) = self.uint("slot label")?;
        if v == 0 || v > u32::MAX as u64 / 2 {
            return Err(self.error_at(&t, format!("slot label {v} out of range")));
        }
        Ok(v as Slot)
    }

    fn expr(&mut self) -> Result<Vec<RawTerm>, ParseError> {
        if matches!(self.peek().tok, Tok::Int(0)) {
            self.next();
            self.expect(Tok::Eof)?;
            return Ok(Vec::new());
        }
        let mut terms = vec![self.term()?];
        loop {
            let t = self.next();
            match t.tok {
                Tok::Plus => terms.push(self.term()?),
                Tok::Eof => return Ok(terms),
                ref other => {
                    return Err(
                        self.error_at(&t, format!("expected '+' or end of input, found {other}"))
                    )
                }
            }
        }
    }

    fn term(&mut self) -> Result<RawTerm, ParseError> {
        let coeff = if self.peek().tok == Tok::LParen {
            let c = self.coeff()?;
            self.expect(Tok::Star)?;
            c
        } else {
            Coefficient::ONE
        };
        let mut raw = RawTerm {
            coeff,
            pipeline: Vec::new(),
            identities: Vec::new(),
        };
        self.prim(&mut raw)?;
        while self.peek().tok == Tok::Dot {
            self.next();
            self.prim(&mut raw)?;
        }
        Ok(raw)
    }

    fn coeff(&mut self) -> Result<Coefficient, ParseError> {
        self.expect(Tok::LParen)?;
        let mut c = Coefficient::ONE;
        if self.peek().tok == Tok::Minus {
            self.next();
            c = c.neg();
        }
        loop {
            let t = self.next();
            match &t.tok {
                Tok::Int(v) => {
                    let v = i64::try_from(*v)
                        .map_err(|_| self.error_at(&t, "coefficient too large".into()))?;
                    c = Coefficient::new(
                        c.re.checked_mul(v)
                            .ok_or_else(|| self.error_at(&t, "coefficient overflow".into()))?,
                        c.im.checked_mul(v)
                            .ok_or_else(|| self.error_at(&t, "coefficient overflow".into()))?,
                        c.kappa_power,
                    );
                }
                Tok::Ident(s) if s == "i" => c = c.mul(&Coefficient::new(0, 1, 0)),
                Tok::Ident(s) if s == "k" => {
                    let mut power = 1u64;
                    if self.peek().tok == Tok::Caret {
                        self.next();
                        power = self.uint("exponent")?.0;
                    }
                    let power = u32::try_from(power)
                        .ok()
                        .and_then(|p| c.kappa_power.checked_add(p))
                        .ok_or_else(|| self.error_at(&t, "exponent too large".into()))?;
                    c.kappa_power = power;
                }
                other => {
                    return Err(self.error_at(
                        &t,
                        format!("expected integer, 'i' or 'k' in coefficient, found {other}"),
                    ))
                }
            }
            let t = self.next();
            match t.tok {
                Tok::Star => continue,
                Tok::RParen => return Ok(c),
                ref other => {
                    return Err(self.error_at(&t, format!("expected '*' or ')', found {other}")))
                }
            }
        }
    }

    fn prim(&mut self, raw: &mut RawTerm) -> Result<(), ParseError> {
        let t = self.next();
        let name = match &t.tok {
            Tok::Ident(s) => s.clone(),
            other => {
                return Err(self.error_at(&t, format!("expected Id, D, B or Tr, found {other}")))
            }
        };
        self.expect(Tok::LBracket)?;
        match name.as_str() {
            "Id" => {
                let a = self.slot()?;
                self.expect(Tok::RBracket)?;
                raw.identities.push(a);
            }
            "D" => {
                let a = self.slot()?;
                self.expect(Tok::RBracket)?;
                let mut power = 1;
                if self.peek().tok == Tok::Caret {
                    self.next();
                    let (p, pt) = self.uint("derivative power")?;
                    if p == 0 || p > 64 {
                        return Err(
                            self.error_at(&pt, format!("derivative power {p} out of range"))
                        );
                    }
                    power = p;
                }
                for _ in 0..power {
                    raw.pipeline.push((Primitive::Deriv(a), t.line, t.column));
                }
            }
            "B" => {
                let target = self.slot()?;
                self.expect(Tok::Comma)?;
                let source = self.slot()?;
                self.expect(Tok::RBracket)?;
                raw.pipeline
                    .push((Primitive::Collision { target, source }, t.line, t.column));
            }
            "Tr" => {
                let a = self.slot()?;
                self.expect(Tok::RBracket)?;
                raw.pipeline.push((Primitive::PTrace(a), t.line, t.column));
            }
            other => {
                return Err(self.error_at(&t, format!("unknown primitive '{other}'")));
            }
        }
        Ok(())
    }
}

fn semantic(line: usize, column: usize, message: String) -> ParseError {
    ParseError {
        kind: ParseErrorKind::Semantic,
        line,
        column,
        message,
    }
}

fn check_lifetimes(raw: &RawTerm) -> Result<(), ParseError> {
    let mut dead = BTreeSet::new();
    for &(p, line, column) in &raw.pipeline {
        if let Primitive::Collision { target, source } = p {
            if target == source {
                return Err(semantic(
                    line,
                    column,
                    format!("{p} collides slot {target} with itself"),
                ));
            }
        }
        for a in p.slots() {
            if dead.contains(&a) {
                return Err(semantic(
                    line,
                    column,
                    format!("{p} uses slot {a} after it was removed"),
                ));
            }
        }
        if let Some(a) = p.consumed() {
            dead.insert(a);
        }
    }
    Ok(())
}

/// Parse operator text into a normalized expression. The slot range is the
/// span of all labels mentioned.
pub fn parse(src: &str) -> Result<OperatorExpr, ParseError> {
    let tokens = lex(src)?;
    let mut parser = Parser { tokens, pos: 0 };
    let raw_terms = parser.expr()?;
    if raw_terms.is_empty() {
        return Ok(OperatorExpr::new(0, 1, Vec::new()));
    }
    let mut labels = BTreeSet::new();
    for raw in &raw_terms {
        check_lifetimes(raw)?;
        labels.extend(raw.identities.iter().copied());
        labels.extend(raw.pipeline.iter().flat_map(|(p, _, _)| p.slots()));
    }
    let lo = *labels.first().expect("every term names a slot");
    let hi = *labels.last().expect("every term names a slot");
    let terms = raw_terms
        .into_iter()
        .map(|raw| {
            OperatorTerm::new(
                raw.coeff,
                raw.pipeline.into_iter().map(|(p, _, _)| p).collect(),
            )
        })
        .collect();
    Ok(normalize(&OperatorExpr::new(hi - lo + 1, lo, terms)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{build_w, pretty_print};

    #[test]
    fn parses_identity() {
        assert_eq!(parse("(1)*Id[1]").unwrap(), build_w(1, 1).unwrap());
        assert_eq!(parse("Id[1]").unwrap(), build_w(1, 1).unwrap());
    }

    #[test]
    fn parses_printed_w3() {
        let e = parse("(-1)*D[1]^2.Tr[2].Tr[3] + (k)*B[1,2].Tr[3]").unwrap();
        assert_eq!(e, build_w(3, 1).unwrap());
        // construction order does not matter
        let e = parse("(k)*Tr[3].B[1,2] + (-1)*Tr[3].Tr[2].D[1].D[1]").unwrap();
        assert_eq!(e, build_w(3, 1).unwrap());
    }

    #[test]
    fn round_trips_built_operators() {
        for n in 1..=7 {
            for j in 1..=3 {
                let w = build_w(n, j).unwrap();
                assert_eq!(parse(&pretty_print(&w)).unwrap(), w, "W_{n}^{j}");
            }
        }
    }

    #[test]
    fn lifetime_violation_is_semantic() {
        let err = parse("(1)*Tr[2].D[2]").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Semantic);
        assert_eq!((err.line, err.column), (1, 11));

        let err = parse("B[1,2].B[3,2]").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Semantic);
        let err = parse("B[2,2]").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Semantic);
    }

    #[test]
    fn syntax_errors_are_located() {
        let err = parse("(-1)*D[1]^2.Tr[2]\n + (k)*B[1,2].Tr[").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Syntax);
        assert_eq!(err.line, 2);
        assert_eq!(err.column, 18);

        let err = parse("(-1)*X[1]").unwrap_err();
        assert_eq!((err.line, err.column), (1, 6));
        assert!(err.message.contains("unknown primitive"));

        for bad in [
            "",
            "+",
            "(1)",
            "(1)*",
            "D[0]",
            "D[1]^0",
            "(q)*D[1]",
            "D[1] D[2]",
            "D[1]$",
        ] {
            assert!(parse(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn coefficient_products() {
        let e = parse("(-2*i*k^2)*D[1]").unwrap();
        assert_eq!(e.terms[0].coeff, Coefficient::new(0, -2, 2));
        let e = parse("(i*i)*D[1]").unwrap();
        assert_eq!(e.terms[0].coeff, Coefficient::new(-1, 0, 0));
    }

    #[test]
    fn zero_expression() {
        let e = parse("0").unwrap();
        assert!(e.is_empty());
        assert_eq!(pretty_print(&e), "0");
    }

    #[test]
    fn mixed_coefficient_prints_as_two_terms() {
        let e = parse("(2)*D[1] + (3*i)*D[1]").unwrap();
        assert_eq!(e.term_count(), 1);
        assert_eq!(pretty_print(&e), "(2)*D[1] + (3*i)*D[1]");
        assert_eq!(parse(&pretty_print(&e)).unwrap(), e);
    }
}
