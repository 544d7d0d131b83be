//! Recursive-descent parser.
//!
//! ```text
//! program     := item*
//! item        := declaration | rule
//! declaration := ":-" ("embed" | "event") "(" ident "," int ")" [":" name] "."
//! rule        := ["!"] atom [":" name] [connector body] ["::" name] "."
//! connector   := ":-" | ":--" | "<-"
//! body        := [":" name [","]] [element ("," element)*]
//! element     := ["!"] atom [":" name]
//! atom        := ident ["(" term ("," term)* ")"]
//! name        := (ident | int) ["(" term ("," term)* ")"]
//! term        := ident | int | variable
//! ```

use crate::ast::{sym, Ast, Atom, BodyElement, DeclKind, Declaration, GroundAtom, Item, Pos, Rule, RuleKind, Term};
use crate::error::{ParseError, ParseErrorKind};
use crate::lexer::{tokenize, Tok, Token};

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let kind = if *self.peek() == Tok::Eof {
            ParseErrorKind::UnterminatedRule
        } else {
            ParseErrorKind::Unexpected { expected: expected.to_string(), found: self.peek().describe() }
        };
        ParseError::new(self.pos(), kind)
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn term(&mut self) -> PResult<Term> {
        let term = match self.peek().clone() {
            Tok::Var(v) => Term::Var(sym(&v)),
            Tok::Ident(c) | Tok::Int(c) => Term::Const(sym(&c)),
            _ => return Err(self.unexpected("a constant or variable")),
        };
        self.bump();
        if *self.peek() == Tok::LParen {
            return Err(ParseError::new(self.pos(), ParseErrorKind::NestedTerm));
        }
        Ok(term)
    }

    fn args(&mut self) -> PResult<Vec<Term>> {
        let mut args = Vec::new();
        if !self.eat(&Tok::LParen) {
            return Ok(args);
        }
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.term()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "`,` or `)`")?;
            return Ok(args);
        }
    }

    fn atom(&mut self) -> PResult<Atom> {
        let functor = match self.peek().clone() {
            Tok::Ident(f) => f,
            Tok::Var(v) => {
                return Err(ParseError::new(
                    self.pos(),
                    ParseErrorKind::Unexpected {
                        expected: "an atom (functors start lowercase)".into(),
                        found: format!("variable `{v}`"),
                    },
                ))
            }
            _ => return Err(self.unexpected("an atom")),
        };
        self.bump();
        let args = self.args()?;
        Ok(Atom { functor: sym(&functor), args })
    }

    fn name(&mut self) -> PResult<Atom> {
        let functor = match self.peek().clone() {
            Tok::Ident(f) | Tok::Int(f) => f,
            other => {
                return Err(ParseError::new(
                    self.pos(),
                    ParseErrorKind::IllFormedAnnotation(format!("expected a parameter name, found {}", other.describe())),
                ))
            }
        };
        self.bump();
        let args = self.args()?;
        Ok(Atom { functor: sym(&functor), args })
    }

    fn declaration(&mut self) -> PResult<Declaration> {
        let pos = self.pos();
        self.expect(Tok::If, "`:-`")?;
        let kind = match self.peek() {
            Tok::Ident(k) if k == "embed" => DeclKind::Embed,
            Tok::Ident(k) if k == "event" => DeclKind::Event,
            _ => return Err(self.unexpected("`embed` or `event`")),
        };
        self.bump();
        self.expect(Tok::LParen, "`(`")?;
        let functor = match self.peek().clone() {
            Tok::Ident(f) => f,
            _ => return Err(self.unexpected("a functor name")),
        };
        self.bump();
        self.expect(Tok::Comma, "`,`")?;
        let dim = match self.peek().clone() {
            Tok::Int(d) => d.parse::<usize>().map_err(|_| self.unexpected("a dimension"))?,
            _ => return Err(self.unexpected("a dimension")),
        };
        self.bump();
        self.expect(Tok::RParen, "`)`")?;
        let tau = if self.eat(&Tok::Colon) { Some(self.name()?) } else { None };
        if tau.is_some() && kind == DeclKind::Embed {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::IllFormedAnnotation("only event declarations take a `: name`".into()),
            ));
        }
        self.expect(Tok::Dot, "`.`")?;
        Ok(Declaration { kind, functor: sym(&functor), dim, tau, pos })
    }

    fn element(&mut self) -> PResult<BodyElement> {
        let negated = self.eat(&Tok::Bang);
        let atom = self.atom()?;
        let param = if self.eat(&Tok::Colon) { Some(self.name()?) } else { None };
        Ok(BodyElement { atom, negated, param })
    }

    fn rule(&mut self) -> PResult<Rule> {
        let pos = self.pos();
        let remove = self.eat(&Tok::Bang);
        let head = self.atom()?;
        let beta = if self.eat(&Tok::Colon) { Some(self.name()?) } else { None };
        let kind = match self.peek() {
            Tok::If => Some(RuleKind::Deductive),
            Tok::Highway => Some(RuleKind::Highway),
            Tok::Update => Some(if remove { RuleKind::UpdateRemove } else { RuleKind::UpdateAdd }),
            Tok::Dot | Tok::DoubleColon => None,
            _ => return Err(self.unexpected("`:-`, `:--`, `<-`, `::` or `.`")),
        };
        if remove && kind != Some(RuleKind::UpdateRemove) {
            return Err(ParseError::new(pos, ParseErrorKind::NegatedHead));
        }
        let mut rule = Rule {
            kind: kind.unwrap_or(RuleKind::Deductive),
            head,
            beta,
            bias: None,
            trigger: None,
            conditions: Vec::new(),
            full: None,
            pos,
        };
        if kind.is_some() {
            self.bump();
            if self.eat(&Tok::Colon) {
                rule.bias = Some(self.name()?);
                self.eat(&Tok::Comma);
            }
            let mut elements = Vec::new();
            if !matches!(self.peek(), Tok::Dot | Tok::DoubleColon) {
                loop {
                    elements.push(self.element()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            if rule.kind.is_update() && !elements.is_empty() {
                rule.trigger = Some(elements.remove(0));
            }
            rule.conditions = elements;
        }
        if self.eat(&Tok::DoubleColon) {
            rule.full = Some(self.name()?);
        }
        self.expect(Tok::Dot, "`,` or `.`")?;
        Ok(rule)
    }

    fn program(&mut self) -> PResult<Ast> {
        let mut items = Vec::new();
        while *self.peek() != Tok::Eof {
            if *self.peek() == Tok::If {
                items.push(Item::Decl(self.declaration()?));
            } else {
                items.push(Item::Rule(self.rule()?));
            }
        }
        Ok(Ast { items })
    }
}

/// Parses program text into a syntax tree.
pub fn parse_program(text: &str) -> Result<Ast, ParseError> {
    let tokens = tokenize(text)?;
    Parser { tokens, at: 0 }.program()
}

/// Parses a single ground atom such as `watch(u4,p49)`.
pub fn parse_ground_atom(text: &str) -> Result<GroundAtom, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, at: 0 };
    let start = p.pos();
    let atom = p.atom()?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected("end of atom"));
    }
    let mut args = Vec::with_capacity(atom.args.len());
    for t in atom.args {
        match t {
            Term::Const(c) => args.push(c),
            Term::Var(v) => {
                return Err(ParseError::new(
                    start,
                    ParseErrorKind::Unexpected { expected: "a ground atom".into(), found: format!("variable `{v}`") },
                ))
            }
        }
    }
    Ok(GroundAtom { functor: atom.functor, args })
}
