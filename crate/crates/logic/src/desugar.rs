//! Highway (`:--`) elimination.
//!
//! Highway rules are first closed under unfolding of their own bodies. Every
//! other rule then gains one variant per (body element, defining highway
//! rule) pair: the element is replaced by the highway body, and the rest of
//! the original body stays with frozen-zero weights. Highway rules remain as
//! ordinary deductive rules.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ast::{sym, Ast, Atom, BodyElement, Item, Rule, RuleKind, Symbol, Term};
use crate::error::ValidationError;

fn zero_name() -> Atom {
    Atom { functor: sym("0"), args: Vec::new() }
}

type Subst = HashMap<Symbol, Term>;

fn walk(s: &Subst, t: &Term) -> Term {
    let mut cur = t.clone();
    while let Term::Var(v) = &cur {
        match s.get(v) {
            Some(next) => cur = next.clone(),
            None => break,
        }
    }
    cur
}

/// Most general unifier of `a` (from the host rule) and `b` (from the
/// renamed highway head). Variables of `b` are bound in preference.
fn unify(a: &Atom, b: &Atom) -> Option<Subst> {
    if a.functor != b.functor || a.args.len() != b.args.len() {
        return None;
    }
    let mut s = Subst::new();
    for (x, y) in a.args.iter().zip(&b.args) {
        let (x, y) = (walk(&s, x), walk(&s, y));
        if x == y {
            continue;
        }
        match (&x, &y) {
            (_, Term::Var(v)) => {
                s.insert(v.clone(), x.clone());
            }
            (Term::Var(v), _) => {
                s.insert(v.clone(), y.clone());
            }
            _ => return None,
        }
    }
    Some(s)
}

fn apply_atom(s: &Subst, a: &Atom) -> Atom {
    Atom { functor: a.functor.clone(), args: a.args.iter().map(|t| walk(s, t)).collect() }
}

fn apply_element(s: &Subst, e: &BodyElement) -> BodyElement {
    BodyElement { atom: apply_atom(s, &e.atom), negated: e.negated, param: e.param.as_ref().map(|p| apply_atom(s, p)) }
}

fn rule_variables(r: &Rule) -> BTreeSet<Symbol> {
    let mut vars: BTreeSet<Symbol> = r.head.variables().cloned().collect();
    for e in r.body() {
        vars.extend(e.atom.variables().cloned());
    }
    vars
}

/// Renames every variable of `hw` apart from `avoid`.
fn rename_apart(hw: &Rule, avoid: &BTreeSet<Symbol>, counter: &mut usize) -> Rule {
    *counter += 1;
    let mut s = Subst::new();
    for v in rule_variables(hw) {
        let mut k = *counter;
        let fresh = loop {
            let candidate = sym(&format!("{v}_h{k}"));
            if !avoid.contains(&candidate) {
                break candidate;
            }
            k += 1;
        };
        s.insert(v, Term::Var(fresh));
    }
    Rule {
        head: apply_atom(&s, &hw.head),
        conditions: hw.conditions.iter().map(|e| apply_element(&s, e)).collect(),
        ..hw.clone()
    }
}

/// A body element slot: `None` is the trigger, `Some(i)` is condition `i`.
type Slot = Option<usize>;

/// Builds the variant of `host` where the element in `slot` is replaced by
/// the body of highway rule `hw`. Returns `None` if the heads do not unify.
/// `inlined` receives the condition positions taken from `hw`.
fn unfold(host: &Rule, slot: Slot, hw: &Rule, counter: &mut usize) -> Option<(Rule, Vec<usize>)> {
    let element = match slot {
        None => host.trigger.as_ref()?,
        Some(i) => &host.conditions[i],
    };
    let hw = rename_apart(hw, &rule_variables(host), counter);
    let s = unify(&element.atom, &hw.head)?;
    let frozen = |e: &BodyElement| BodyElement { param: Some(zero_name()), ..apply_element(&s, e) };
    let inline: Vec<BodyElement> =
        hw.conditions.iter().map(|e| BodyElement { param: None, ..apply_element(&s, e) }).collect();
    let trigger = host.trigger.as_ref().map(&frozen);
    let mut conditions = Vec::new();
    let mut inlined = Vec::new();
    if slot.is_none() {
        inlined.extend(0..inline.len());
        conditions.extend(inline.iter().cloned());
    }
    for (i, c) in host.conditions.iter().enumerate() {
        if slot == Some(i) {
            inlined.extend(conditions.len()..conditions.len() + inline.len());
            conditions.extend(inline.iter().cloned());
        } else {
            conditions.push(frozen(c));
        }
    }
    let rule = Rule {
        kind: host.kind,
        head: apply_atom(&s, &host.head),
        beta: None,
        bias: None,
        trigger,
        conditions,
        full: None,
        pos: host.pos,
    };
    Some((rule, inlined))
}

fn check_acyclic(highways: &[&Rule]) -> Result<(), ValidationError> {
    let defined: BTreeSet<&str> = highways.iter().map(|r| &*r.head.functor).collect();
    let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in highways {
        for c in r.conditions.iter().filter(|c| !c.negated && defined.contains(&*c.atom.functor)) {
            edges.entry(&*r.head.functor).or_default().insert(&*c.atom.functor);
        }
    }
    // Depth-first search with an explicit path for the witness cycle.
    fn visit<'a>(
        f: &'a str,
        edges: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        state: &mut BTreeMap<&'a str, u8>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        match state.get(f) {
            Some(2) => return None,
            Some(1) => {
                let start = path.iter().position(|p| *p == f).unwrap_or(0);
                let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(f.to_string());
                return Some(cycle);
            }
            _ => {}
        }
        state.insert(f, 1);
        path.push(f);
        for next in edges.get(f).into_iter().flatten() {
            if let Some(c) = visit(next, edges, state, path) {
                return Some(c);
            }
        }
        path.pop();
        state.insert(f, 2);
        None
    }
    let mut state = BTreeMap::new();
    for f in &defined {
        if let Some(cycle) = visit(f, &edges, &mut state, &mut Vec::new()) {
            return Err(ValidationError::CyclicHighway { cycle });
        }
    }
    Ok(())
}

/// Removes highway rules by unfolding. Idempotent: the output contains no
/// `:--` rules, so a second pass changes nothing.
pub fn desugar_highways(ast: &Ast) -> Result<Ast, ValidationError> {
    let highways: Vec<&Rule> = ast.rules().filter(|r| r.kind == RuleKind::Highway).collect();
    if highways.is_empty() {
        return Ok(ast.clone());
    }
    check_acyclic(&highways)?;
    let mut counter = 0usize;

    // Close the highway rules: unfold highway atoms inside highway bodies.
    // Retained elements of generated rules are not unfolded again.
    let mut closed: Vec<Rule> = highways.iter().map(|r| (*r).clone()).collect();
    let mut queue: Vec<(Rule, Vec<bool>)> =
        highways.iter().map(|r| ((*r).clone(), vec![true; r.conditions.len()])).collect();
    let mut generated_highways = Vec::new();
    while let Some((rule, unfoldable)) = queue.pop() {
        for i in 0..rule.conditions.len() {
            let c = &rule.conditions[i];
            if !unfoldable[i] || c.negated {
                continue;
            }
            for hw in highways.iter().filter(|h| h.head.functor == c.atom.functor) {
                if let Some((new_rule, inlined)) = unfold(&rule, Some(i), hw, &mut counter) {
                    let mut mask = vec![false; new_rule.conditions.len()];
                    for k in inlined {
                        mask[k] = true;
                    }
                    generated_highways.push(new_rule.clone());
                    queue.push((new_rule, mask));
                }
            }
        }
    }
    closed.extend(generated_highways.iter().cloned());

    // One level of unfolding of every non-highway rule against the closure.
    let mut generated = Vec::new();
    for rule in ast.rules().filter(|r| r.kind != RuleKind::Highway) {
        let slots: Vec<Slot> = rule.trigger.iter().map(|_| None).chain((0..rule.conditions.len()).map(Some)).collect();
        for slot in slots {
            let element = match slot {
                None => rule.trigger.as_ref().expect("trigger slot"),
                Some(i) => &rule.conditions[i],
            };
            if element.negated {
                continue;
            }
            for hw in closed.iter().filter(|h| h.head.functor == element.atom.functor) {
                if let Some((new_rule, _)) = unfold(rule, slot, hw, &mut counter) {
                    generated.push(new_rule);
                }
            }
        }
    }

    let as_deductive = |r: &Rule| Rule { kind: RuleKind::Deductive, ..r.clone() };
    let mut items: Vec<Item> = ast
        .items
        .iter()
        .map(|item| match item {
            Item::Rule(r) if r.kind == RuleKind::Highway => Item::Rule(as_deductive(r)),
            other => other.clone(),
        })
        .collect();
    items.extend(generated_highways.iter().map(|r| Item::Rule(as_deductive(r))));
    items.extend(generated.into_iter().map(Item::Rule));
    Ok(Ast { items })
}
