//! Syntax tree of a program, and its canonical printed form.
//!
//! Printing an [`Ast`] with `Display` and parsing the result yields an equal
//! tree; source positions do not take part in equality.

use std::fmt;
use std::sync::Arc;

/// Interned-by-refcount identifier text. Constants are symbols too:
/// integer literals are stored in their decimal form.
pub type Symbol = Arc<str>;

pub fn sym(s: &str) -> Symbol {
    Arc::from(s)
}

/// 1-based source position. Always compares equal so that trees built from
/// different layouts of the same program are equal.
#[derive(Clone, Copy, Debug, Default, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Pos {
    fn eq(&self, _: &Pos) -> bool {
        true
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Symbol),
    Const(Symbol),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn text(&self) -> &str {
        match self {
            Term::Var(s) | Term::Const(s) => s,
        }
    }
}

/// A possibly non-ground atom. Parameter names are atoms too; their functor
/// may be the integer `0` (the frozen zero matrix).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub functor: Symbol,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(functor: &str, args: Vec<Term>) -> Self {
        Atom { functor: sym(functor), args }
    }

    pub fn variables(&self) -> impl Iterator<Item = &Symbol> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        })
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    /// The reserved zero-matrix name.
    pub fn is_zero_name(&self) -> bool {
        &*self.functor == "0" && self.args.is_empty()
    }
}

/// A variable-free atom. The derived order coincides with the order of the
/// canonical strings, because identifier characters all sort after `(`, `,`
/// and `)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub functor: Symbol,
    pub args: Vec<Symbol>,
}

impl GroundAtom {
    pub fn new(functor: &str, args: &[&str]) -> Self {
        GroundAtom { functor: sym(functor), args: args.iter().map(|a| sym(a)).collect() }
    }

    pub fn to_atom(&self) -> Atom {
        Atom { functor: self.functor.clone(), args: self.args.iter().map(|a| Term::Const(a.clone())).collect() }
    }
}

fn write_args<T: fmt::Display>(f: &mut fmt::Formatter<'_>, functor: &str, args: &[T]) -> fmt::Result {
    f.write_str(functor)?;
    if !args.is_empty() {
        f.write_str("(")?;
        for (i, a) in args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_args(f, &self.functor, &self.args)
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_args(f, &self.functor, &self.args)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// `head :- body.`
    Deductive,
    /// `head :-- body.` (removed by desugaring)
    Highway,
    /// `head <- trigger, body.`
    UpdateAdd,
    /// `!head <- trigger, body.`
    UpdateRemove,
}

impl RuleKind {
    pub fn is_update(self) -> bool {
        matches!(self, RuleKind::UpdateAdd | RuleKind::UpdateRemove)
    }

    pub fn is_deductive(self) -> bool {
        matches!(self, RuleKind::Deductive | RuleKind::Highway)
    }
}

/// A body element: the trigger of an update rule or a condition.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BodyElement {
    pub atom: Atom,
    pub negated: bool,
    /// `: name` after the element.
    pub param: Option<Atom>,
}

impl BodyElement {
    pub fn positive(atom: Atom) -> Self {
        BodyElement { atom, negated: false, param: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub kind: RuleKind,
    pub head: Atom,
    /// `head : name` pooling-exponent name.
    pub beta: Option<Atom>,
    /// Leading `: name` in the body.
    pub bias: Option<Atom>,
    /// First body element of an update rule.
    pub trigger: Option<BodyElement>,
    pub conditions: Vec<BodyElement>,
    /// Trailing `:: name` naming the whole weight matrix.
    pub full: Option<Atom>,
    pub pos: Pos,
}

impl Rule {
    /// Trigger (if any) followed by the conditions.
    pub fn body(&self) -> impl Iterator<Item = &BodyElement> {
        self.trigger.iter().chain(self.conditions.iter())
    }

    pub fn has_body(&self) -> bool {
        self.trigger.is_some() || !self.conditions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeclKind {
    Embed,
    Event,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Declaration {
    pub kind: DeclKind,
    pub functor: Symbol,
    pub dim: usize,
    /// `: name` sharing the softplus scale of an event functor.
    pub tau: Option<Atom>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Rule(Rule),
    Decl(Declaration),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ast {
    pub items: Vec<Item>,
}

impl Ast {
    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.items.iter().filter_map(|i| match i {
            Item::Rule(r) => Some(r),
            Item::Decl(_) => None,
        })
    }

    pub fn declarations(&self) -> impl Iterator<Item = &Declaration> {
        self.items.iter().filter_map(|i| match i {
            Item::Decl(d) => Some(d),
            Item::Rule(_) => None,
        })
    }
}

impl fmt::Display for BodyElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        write!(f, "{}", self.atom)?;
        if let Some(p) = &self.param {
            write!(f, " : {p}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind == RuleKind::UpdateRemove {
            f.write_str("!")?;
        }
        write!(f, "{}", self.head)?;
        if let Some(b) = &self.beta {
            write!(f, " : {b}")?;
        }
        if self.has_body() || self.bias.is_some() || self.kind.is_update() {
            f.write_str(match self.kind {
                RuleKind::Deductive => " :-",
                RuleKind::Highway => " :--",
                RuleKind::UpdateAdd | RuleKind::UpdateRemove => " <-",
            })?;
            if let Some(b) = &self.bias {
                write!(f, " : {b}")?;
                if self.has_body() {
                    f.write_str(",")?;
                }
            }
            for (i, e) in self.body().enumerate() {
                f.write_str(if i == 0 { " " } else { ", " })?;
                write!(f, "{e}")?;
            }
        }
        if let Some(full) = &self.full {
            write!(f, " :: {full}")?;
        }
        f.write_str(".")
    }
}

impl fmt::Display for Declaration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DeclKind::Embed => "embed",
            DeclKind::Event => "event",
        };
        write!(f, ":- {kind}({}, {})", self.functor, self.dim)?;
        if let Some(t) = &self.tau {
            write!(f, " : {t}")?;
        }
        f.write_str(".")
    }
}

impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.items {
            match item {
                Item::Rule(r) => writeln!(f, "{r}")?,
                Item::Decl(d) => writeln!(f, "{d}")?,
            }
        }
        Ok(())
    }
}
