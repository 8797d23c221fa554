//! Token stream shared by the formula grammar and the model file format.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Newline,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Prime,
    Plus,
    Minus,
    Bang,
    Amp,
    Pipe,
    Tilde,
    Underscore,
    Eq,         // =
    Le,         // <=
    Ge,         // >=
    Lt,         // <
    Gt,         // >
    Arrow,      // ->
    FatArrow,   // =>
    IffArrow,   // <=>
    Assign,     // :=
    DotDot,     // ..
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

/// Tokenize `src`. With `keep_newlines`, a `Newline` token is emitted at each
/// line break that is not enclosed in brackets, so line-oriented statements
/// can be delimited; formula fragments are lexed with `keep_newlines = false`.
pub fn lex(src: &str, keep_newlines: bool) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();

    macro_rules! push {
        ($t:expr, $l:expr, $c:expr) => {
            out.push(Token {
                tok: $t,
                span: Span { line: $l, col: $c },
            })
        };
    }

    while let Some(&ch) = chars.peek() {
        let (tl, tc) = (line, col);
        match ch {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
                if keep_newlines && depth == 0 {
                    push!(Tok::Newline, tl, tc);
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            c if c.is_ascii_alphabetic() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Ident(s), tl, tc);
            }
            '_' => {
                chars.next();
                col += 1;
                // a lone underscore is the wildcard; _foo is an identifier
                if chars.peek().map_or(false, |c| c.is_ascii_alphanumeric() || *c == '_') {
                    let mut s = String::from("_");
                    while let Some(&c) = chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            s.push(c);
                            chars.next();
                            col += 1;
                        } else {
                            break;
                        }
                    }
                    push!(Tok::Ident(s), tl, tc);
                } else {
                    push!(Tok::Underscore, tl, tc);
                }
            }
            c if c.is_ascii_digit() => {
                let mut n: i64 = 0;
                while let Some(&c) = chars.peek() {
                    if let Some(d) = c.to_digit(10) {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add(d as i64))
                            .ok_or(Error::Parse {
                                line: tl,
                                col: tc,
                                msg: "integer literal too large".into(),
                            })?;
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push!(Tok::Int(n), tl, tc);
            }
            _ => {
                chars.next();
                col += 1;
                let tok = match ch {
                    '(' => {
                        depth += 1;
                        Tok::LParen
                    }
                    ')' => {
                        depth = depth.saturating_sub(1);
                        Tok::RParen
                    }
                    '[' => {
                        depth += 1;
                        Tok::LBracket
                    }
                    ']' => {
                        depth = depth.saturating_sub(1);
                        Tok::RBracket
                    }
                    '{' => {
                        depth += 1;
                        Tok::LBrace
                    }
                    '}' => {
                        depth = depth.saturating_sub(1);
                        Tok::RBrace
                    }
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '\'' => Tok::Prime,
                    '+' => Tok::Plus,
                    '~' => Tok::Tilde,
                    '!' => Tok::Bang,
                    '&' => Tok::Amp,
                    '|' => Tok::Pipe,
                    '-' => {
                        if chars.peek() == Some(&'>') {
                            chars.next();
                            col += 1;
                            Tok::Arrow
                        } else {
                            Tok::Minus
                        }
                    }
                    '=' => {
                        if chars.peek() == Some(&'>') {
                            chars.next();
                            col += 1;
                            Tok::FatArrow
                        } else {
                            Tok::Eq
                        }
                    }
                    '<' => {
                        if chars.peek() == Some(&'=') {
                            chars.next();
                            col += 1;
                            if chars.peek() == Some(&'>') {
                                chars.next();
                                col += 1;
                                Tok::IffArrow
                            } else {
                                Tok::Le
                            }
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if chars.peek() == Some(&'=') {
                            chars.next();
                            col += 1;
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    ':' => {
                        if chars.peek() == Some(&'=') {
                            chars.next();
                            col += 1;
                            Tok::Assign
                        } else {
                            Tok::Colon
                        }
                    }
                    '.' => {
                        if chars.peek() == Some(&'.') {
                            chars.next();
                            col += 1;
                            Tok::DotDot
                        } else {
                            return Err(Error::Parse {
                                line: tl,
                                col: tc,
                                msg: "unexpected character '.'".into(),
                            });
                        }
                    }
                    other => {
                        return Err(Error::Parse {
                            line: tl,
                            col: tc,
                            msg: format!("unexpected character '{other}'"),
                        })
                    }
                };
                push!(tok, tl, tc);
            }
        }
    }
    if keep_newlines {
        push!(Tok::Newline, line, col);
    }
    Ok(out)
}

/// Cursor over a token slice with single-token lookahead.
pub struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(toks: &'a [Token]) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    pub fn span(&self) -> Span {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| t.span)
            .unwrap_or(Span { line: 0, col: 0 })
    }

    pub fn next(&mut self) -> Option<&'a Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.tok);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    /// Tokens not yet consumed.
    pub fn remaining(&self) -> &'a [Token] {
        &self.toks[self.pos.min(self.toks.len())..]
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        let span = self.span();
        Error::Parse {
            line: span.line,
            col: span.col,
            msg: msg.into(),
        }
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: &Tok, what: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    /// Consume an identifier token and return its text.
    pub fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    /// Consume an integer literal, allowing a leading minus sign.
    pub fn int(&mut self, what: &str) -> Result<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(if neg { -n } else { n })
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_longest_match() {
        let toks = lex("<= <=> => = := .. -> x' -1", false).unwrap();
        let kinds: Vec<_> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Le,
                Tok::IffArrow,
                Tok::FatArrow,
                Tok::Eq,
                Tok::Assign,
                Tok::DotDot,
                Tok::Arrow,
                Tok::Ident("x".into()),
                Tok::Prime,
                Tok::Minus,
                Tok::Int(1),
            ]
        );
    }

    #[test]
    fn newlines_suppressed_in_brackets() {
        let toks = lex("a {\n b\n} c\n", true).unwrap();
        let newlines = toks.iter().filter(|t| t.tok == Tok::Newline).count();
        assert_eq!(newlines, 2); // after "} c" and the final synthetic one
    }

    #[test]
    fn comments_ignored() {
        let toks = lex("x # comment with symbols <=> {\ny", false).unwrap();
        assert_eq!(toks.len(), 2);
    }
}
