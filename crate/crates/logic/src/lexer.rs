//! Tokenizer for program text.

use crate::ast::Pos;
use crate::error::{ParseError, ParseErrorKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    /// Lowercase-initial identifier.
    Ident(String),
    /// Uppercase- or underscore-initial identifier.
    Var(String),
    /// Decimal integer, normalized.
    Int(String),
    LParen,
    RParen,
    Comma,
    Dot,
    /// `:-`
    If,
    /// `:--`
    Highway,
    /// `<-`
    Update,
    /// `::`
    DoubleColon,
    /// `:`
    Colon,
    /// `!`
    Bang,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Var(s) | Tok::Int(s) => format!("`{s}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::If => "`:-`".into(),
            Tok::Highway => "`:--`".into(),
            Tok::Update => "`<-`".into(),
            Tok::DoubleColon => "`::`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let advance = |n: usize, col: &mut usize, i: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut col, &mut i),
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' | ')' | ',' | '.' | '!' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    _ => Tok::Bang,
                };
                out.push(Token { tok, pos });
                advance(1, &mut col, &mut i);
            }
            ':' => {
                let next = chars.get(i + 1).copied();
                let (tok, n) = match next {
                    Some('-') if chars.get(i + 2) == Some(&'-') => (Tok::Highway, 3),
                    Some('-') => (Tok::If, 2),
                    Some(':') => (Tok::DoubleColon, 2),
                    _ => (Tok::Colon, 1),
                };
                out.push(Token { tok, pos });
                advance(n, &mut col, &mut i);
            }
            '<' if chars.get(i + 1) == Some(&'-') => {
                out.push(Token { tok: Tok::Update, pos });
                advance(2, &mut col, &mut i);
            }
            '*' => return Err(ParseError::new(pos, ParseErrorKind::AnonymousEntity)),
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && is_ident_char(chars[i]) {
                    return Err(ParseError::new(pos, ParseErrorKind::UnexpectedChar(chars[i])));
                }
                let digits: String = chars[start..i].iter().collect();
                let normalized = digits.trim_start_matches('0');
                let normalized = if normalized.is_empty() { "0" } else { normalized };
                col += i - start;
                out.push(Token { tok: Tok::Int(normalized.to_string()), pos });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                col += i - start;
                let tok = if c.is_ascii_lowercase() { Tok::Ident(word) } else { Tok::Var(word) };
                out.push(Token { tok, pos });
            }
            other => return Err(ParseError::new(pos, ParseErrorKind::UnexpectedChar(other))),
        }
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}
