//! Static validation and compilation of a desugared program.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{Ast, Atom, BodyElement, DeclKind, Declaration, Rule, RuleKind, Symbol, Term};
use crate::desugar::desugar_highways;
use crate::error::{ProgramError, ValidationError};
use crate::parser::parse_program;

/// The reserved exogenous event applied at time 0.
pub const INIT: &str = "init";

/// An argument position of a compiled atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArgSlot {
    Var(usize),
    Const(Symbol),
}

/// An atom whose variables are replaced by binding-vector indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub functor: Symbol,
    pub args: Vec<ArgSlot>,
}

/// A positive body atom together with its position in the rule body
/// (0-based over the conditions).
#[derive(Clone, Debug)]
pub struct PositiveCondition {
    pub condition: usize,
    pub pattern: Pattern,
}

/// A rule with variables numbered for fast matching.
#[derive(Clone, Debug)]
pub struct CompiledRule {
    /// 1-based rule index.
    pub index: usize,
    pub kind: RuleKind,
    pub head: Pattern,
    pub trigger: Option<Pattern>,
    pub positives: Vec<PositiveCondition>,
    pub negatives: Vec<Pattern>,
    pub variables: Vec<Symbol>,
}

/// A validated, desugared program.
#[derive(Clone, Debug)]
pub struct Program {
    rules: Vec<Rule>,
    compiled: Vec<CompiledRule>,
    declarations: BTreeMap<Symbol, Declaration>,
    strata: BTreeMap<Symbol, usize>,
    by_stratum: Vec<Vec<usize>>,
    constants: BTreeSet<Symbol>,
    mentions_init: bool,
}

fn compile_atom(atom: &Atom, vars: &mut Vec<Symbol>) -> Pattern {
    let args = atom
        .args
        .iter()
        .map(|t| match t {
            Term::Const(c) => ArgSlot::Const(c.clone()),
            Term::Var(v) => {
                let i = vars.iter().position(|x| x == v).unwrap_or_else(|| {
                    vars.push(v.clone());
                    vars.len() - 1
                });
                ArgSlot::Var(i)
            }
        })
        .collect();
    Pattern { functor: atom.functor.clone(), args }
}

fn compile_rule(index: usize, rule: &Rule) -> CompiledRule {
    let mut vars = Vec::new();
    // Positive atoms first so that every variable is bound before it is
    // needed by the head or a negated condition.
    let trigger = rule.trigger.as_ref().map(|t| compile_atom(&t.atom, &mut vars));
    let positives = rule
        .conditions
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.negated)
        .map(|(i, c)| PositiveCondition { condition: i, pattern: compile_atom(&c.atom, &mut vars) })
        .collect();
    let negatives = rule.conditions.iter().filter(|c| c.negated).map(|c| compile_atom(&c.atom, &mut vars)).collect();
    let head = compile_atom(&rule.head, &mut vars);
    CompiledRule { index, kind: rule.kind, head, trigger, positives, negatives, variables: vars }
}

fn ill_formed(index: usize, rule: &Rule, message: &str) -> ValidationError {
    ValidationError::IllFormedRule { rule: index, pos: rule.pos, message: message.to_string() }
}

fn check_structure(index: usize, rule: &Rule) -> Result<(), ValidationError> {
    if rule.kind.is_update() {
        match &rule.trigger {
            None => return Err(ill_formed(index, rule, "an update rule needs a triggering event")),
            Some(t) if t.negated => return Err(ill_formed(index, rule, "the triggering event cannot be negated")),
            _ => {}
        }
    } else if rule.kind == RuleKind::Highway && rule.conditions.is_empty() {
        return Err(ill_formed(index, rule, "a highway rule needs a body"));
    }
    if rule.full.is_some() && (rule.bias.is_some() || rule.body().any(|e| e.param.is_some())) {
        return Err(ill_formed(index, rule, "`::` names the whole matrix and cannot be combined with `:` names"));
    }
    Ok(())
}

fn check_range_restriction(index: usize, rule: &Rule) -> Result<(), ValidationError> {
    let bound: BTreeSet<&Symbol> = rule.body().filter(|e| !e.negated).flat_map(|e| e.atom.variables()).collect();
    let violation = |v: &Symbol| ValidationError::RangeRestrictionViolation {
        rule: index,
        pos: rule.pos,
        variable: v.to_string(),
    };
    let named: Vec<&Atom> = rule
        .bias
        .iter()
        .chain(rule.full.iter())
        .chain(rule.body().filter_map(|e: &BodyElement| e.param.as_ref()))
        .collect();
    let negated = rule.conditions.iter().filter(|c| c.negated).flat_map(|c| c.atom.variables());
    for v in rule.head.variables().chain(negated).chain(named.iter().flat_map(|a| a.variables())) {
        if !bound.contains(v) {
            return Err(violation(v));
        }
    }
    if let Some(beta) = &rule.beta {
        let head_vars: BTreeSet<&Symbol> = rule.head.variables().collect();
        if let Some(v) = beta.variables().find(|v| !head_vars.contains(v)) {
            return Err(ValidationError::BetaVariableNotInHead {
                rule: index,
                pos: rule.pos,
                name: beta.to_string(),
                variable: v.to_string(),
            });
        }
    }
    Ok(())
}

/// Strongly connected components (Tarjan), returned with a component id
/// per node.
fn components(nodes: &[Symbol], edges: &BTreeMap<Symbol, BTreeSet<Symbol>>) -> BTreeMap<Symbol, usize> {
    struct State<'a> {
        edges: &'a BTreeMap<Symbol, BTreeSet<Symbol>>,
        index: BTreeMap<Symbol, usize>,
        low: BTreeMap<Symbol, usize>,
        on_stack: BTreeSet<Symbol>,
        stack: Vec<Symbol>,
        next: usize,
        comp: BTreeMap<Symbol, usize>,
        ncomp: usize,
    }
    fn strong(s: &mut State, v: &Symbol) {
        s.index.insert(v.clone(), s.next);
        s.low.insert(v.clone(), s.next);
        s.next += 1;
        s.stack.push(v.clone());
        s.on_stack.insert(v.clone());
        let succ: Vec<Symbol> = s.edges.get(v).map(|e| e.iter().cloned().collect()).unwrap_or_default();
        for w in succ {
            if !s.index.contains_key(&w) {
                strong(s, &w);
                let lw = s.low[&w];
                let lv = s.low.get_mut(v).expect("visited");
                *lv = (*lv).min(lw);
            } else if s.on_stack.contains(&w) {
                let iw = s.index[&w];
                let lv = s.low.get_mut(v).expect("visited");
                *lv = (*lv).min(iw);
            }
        }
        if s.low[v] == s.index[v] {
            loop {
                let w = s.stack.pop().expect("nonempty stack");
                s.on_stack.remove(&w);
                s.comp.insert(w.clone(), s.ncomp);
                if &w == v {
                    break;
                }
            }
            s.ncomp += 1;
        }
    }
    let mut s = State {
        edges,
        index: BTreeMap::new(),
        low: BTreeMap::new(),
        on_stack: BTreeSet::new(),
        stack: Vec::new(),
        next: 0,
        comp: BTreeMap::new(),
        ncomp: 0,
    };
    for n in nodes {
        if !s.index.contains_key(n) {
            strong(&mut s, n);
        }
    }
    s.comp
}

/// Stratum per functor. Edges run from body functor to head functor;
/// negated edges add one.
fn stratify(rules: &[Rule]) -> Result<BTreeMap<Symbol, usize>, ValidationError> {
    let mut nodes: BTreeSet<Symbol> = BTreeSet::new();
    let mut edges: BTreeMap<Symbol, BTreeSet<Symbol>> = BTreeMap::new();
    let mut weighted: Vec<(Symbol, Symbol, usize, usize)> = Vec::new();
    for (i, r) in rules.iter().enumerate().filter(|(_, r)| r.kind.is_deductive()) {
        nodes.insert(r.head.functor.clone());
        for c in &r.conditions {
            nodes.insert(c.atom.functor.clone());
            edges.entry(c.atom.functor.clone()).or_default().insert(r.head.functor.clone());
            weighted.push((c.atom.functor.clone(), r.head.functor.clone(), usize::from(c.negated), i + 1));
        }
    }
    let nodes: Vec<Symbol> = nodes.into_iter().collect();
    let comp = components(&nodes, &edges);
    for (from, to, w, rule) in &weighted {
        if *w == 1 && comp[from] == comp[to] {
            return Err(ValidationError::UnstratifiedNegation {
                rule: *rule,
                pos: rules[rule - 1].pos,
                functor: from.to_string(),
            });
        }
    }
    // Longest path over the condensation; at most |components| rounds.
    let mut stratum: BTreeMap<Symbol, usize> = nodes.iter().map(|n| (n.clone(), 0)).collect();
    for _ in 0..=nodes.len() {
        let mut changed = false;
        for (from, to, w, _) in &weighted {
            let candidate = if comp[from] == comp[to] { stratum[from] } else { stratum[from] + w };
            if candidate > stratum[to] {
                stratum.insert(to.clone(), candidate);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(stratum)
}

/// Validates a syntax tree (desugaring highways first if any remain).
pub fn validate(ast: &Ast) -> Result<Program, ValidationError> {
    let ast = desugar_highways(ast)?;
    let mut declarations: BTreeMap<Symbol, Declaration> = BTreeMap::new();
    for d in ast.declarations() {
        if declarations.insert(d.functor.clone(), d.clone()).is_some() {
            return Err(ValidationError::DuplicateDeclaration { pos: d.pos, functor: d.functor.to_string() });
        }
    }
    let rules: Vec<Rule> = ast.rules().cloned().collect();
    for (i, r) in rules.iter().enumerate() {
        check_structure(i + 1, r)?;
        check_range_restriction(i + 1, r)?;
        if r.kind.is_deductive() && r.conditions.iter().any(|c| !c.negated && c.atom == r.head) {
            return Err(ValidationError::CyclicDeduction {
                cycle: vec![r.head.to_string(), r.head.to_string()],
            });
        }
    }
    let strata = stratify(&rules)?;
    let compiled: Vec<CompiledRule> = rules.iter().enumerate().map(|(i, r)| compile_rule(i + 1, r)).collect();
    let depth = strata.values().copied().max().map_or(1, |m| m + 1);
    let mut by_stratum = vec![Vec::new(); depth];
    for c in compiled.iter().filter(|c| c.kind.is_deductive()) {
        by_stratum[strata.get(&c.head.functor).copied().unwrap_or(0)].push(c.index);
    }
    let mut constants = BTreeSet::new();
    let mut mentions_init = false;
    for r in &rules {
        for atom in std::iter::once(&r.head).chain(r.body().map(|e| &e.atom)) {
            mentions_init |= &*atom.functor == INIT;
            for t in &atom.args {
                if let Term::Const(c) = t {
                    constants.insert(c.clone());
                }
            }
        }
    }
    let program = Program { rules, compiled, declarations, strata, by_stratum, constants, mentions_init };
    crate::params::check_shapes(&program)?;
    Ok(program)
}

impl Program {
    /// Parses, desugars and validates program text.
    pub fn from_source(text: &str) -> Result<Program, ProgramError> {
        let ast = parse_program(text)?;
        Ok(validate(&ast)?)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Rule by 1-based index.
    pub fn rule(&self, index: usize) -> &Rule {
        &self.rules[index - 1]
    }

    pub fn compiled(&self) -> &[CompiledRule] {
        &self.compiled
    }

    pub fn compiled_rule(&self, index: usize) -> &CompiledRule {
        &self.compiled[index - 1]
    }

    pub fn declarations(&self) -> &BTreeMap<Symbol, Declaration> {
        &self.declarations
    }

    /// Embedding dimension of a functor (0 when undeclared).
    pub fn dim(&self, functor: &str) -> usize {
        self.declarations.get(functor).map_or(0, |d| d.dim)
    }

    pub fn is_event(&self, functor: &str) -> bool {
        self.declarations.get(functor).is_some_and(|d| d.kind == DeclKind::Event)
    }

    /// Cell width: the embedding dimension plus one intensity coordinate for
    /// event functors.
    pub fn cell_dim(&self, functor: &str) -> usize {
        self.dim(functor) + usize::from(self.is_event(functor))
    }

    pub fn event_functors(&self) -> impl Iterator<Item = &Symbol> {
        self.declarations.values().filter(|d| d.kind == DeclKind::Event).map(|d| &d.functor)
    }

    pub fn stratum(&self, functor: &str) -> usize {
        self.strata.get(functor).copied().unwrap_or(0)
    }

    pub fn strata(&self) -> &BTreeMap<Symbol, usize> {
        &self.strata
    }

    /// Deductive rule indices grouped by the stratum of their head.
    pub fn rules_by_stratum(&self) -> &[Vec<usize>] {
        &self.by_stratum
    }

    pub fn update_rules(&self) -> impl Iterator<Item = &CompiledRule> {
        self.compiled.iter().filter(|c| c.kind.is_update())
    }

    /// Constants written in the program text.
    pub fn constants(&self) -> &BTreeSet<Symbol> {
        &self.constants
    }

    /// Whether any rule mentions the reserved `init` event.
    pub fn mentions_init(&self) -> bool {
        self.mentions_init
    }
}
