//! Brute-force reference evaluator.
//!
//! Grounds every rule over the full constant universe and iterates to
//! convergence stratum by stratum. Exponential in rule width; intended for
//! cross-checking the engine on small programs.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{GroundAtom, RuleKind, Symbol};
use crate::engine::{Polarity, Proofs, ProofInstantiation, UpdateMatch};
use crate::program::{ArgSlot, CompiledRule, Pattern, Program};

fn ground(p: &Pattern, values: &[Symbol]) -> GroundAtom {
    GroundAtom {
        functor: p.functor.clone(),
        args: p
            .args
            .iter()
            .map(|s| match s {
                ArgSlot::Const(c) => c.clone(),
                ArgSlot::Var(v) => values[*v].clone(),
            })
            .collect(),
    }
}

/// Calls `f` with every assignment of the rule's variables to `universe`.
fn assignments(rule: &CompiledRule, universe: &[Symbol], f: &mut dyn FnMut(&[Symbol])) {
    let n = rule.variables.len();
    if n > 0 && universe.is_empty() {
        return;
    }
    let mut idx = vec![0usize; n];
    loop {
        let values: Vec<Symbol> = idx.iter().map(|&i| universe[i].clone()).collect();
        f(&values);
        let mut k = 0;
        loop {
            if k == n {
                return;
            }
            idx[k] += 1;
            if idx[k] < universe.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn holds(rule: &CompiledRule, values: &[Symbol], facts: &BTreeSet<GroundAtom>) -> bool {
    rule.positives.iter().all(|p| facts.contains(&ground(&p.pattern, values)))
        && rule.negatives.iter().all(|n| !facts.contains(&ground(n, values)))
}

/// Constants of the program plus those of `atoms`, sorted.
pub fn universe<'a>(program: &Program, atoms: impl IntoIterator<Item = &'a GroundAtom>) -> Vec<Symbol> {
    let mut u: BTreeSet<Symbol> = program.constants().clone();
    for a in atoms {
        u.extend(a.args.iter().cloned());
    }
    u.into_iter().collect()
}

/// Least fixpoint over `adrift`.
pub fn fixpoint(program: &Program, adrift: &BTreeSet<GroundAtom>) -> BTreeSet<GroundAtom> {
    let universe = universe(program, adrift);
    let mut facts = adrift.clone();
    for rule_ids in program.rules_by_stratum() {
        loop {
            let mut added = Vec::new();
            for &r in rule_ids {
                let rule = program.compiled_rule(r);
                assignments(rule, &universe, &mut |values| {
                    if holds(rule, values, &facts) {
                        let head = ground(&rule.head, values);
                        if !facts.contains(&head) {
                            added.push(head);
                        }
                    }
                });
            }
            if added.is_empty() {
                break;
            }
            facts.extend(added);
        }
    }
    facts
}

/// Every proof instantiation against `facts`, in canonical order.
pub fn proofs(program: &Program, facts: &BTreeSet<GroundAtom>) -> Proofs {
    let universe = universe(program, facts);
    let mut grouped: BTreeMap<(GroundAtom, usize), BTreeSet<(Vec<GroundAtom>, Vec<Symbol>)>> = BTreeMap::new();
    for rule in program.compiled().iter().filter(|r| r.kind.is_deductive()) {
        assignments(rule, &universe, &mut |values| {
            if holds(rule, values, facts) {
                let body = rule.positives.iter().map(|p| ground(&p.pattern, values)).collect();
                grouped.entry((ground(&rule.head, values), rule.index)).or_default().insert((body, values.to_vec()));
            }
        });
    }
    let mut out = Proofs::new();
    for ((head, rule), insts) in grouped {
        let list = out.entry(head.clone()).or_default();
        for (m, (body, binding)) in insts.into_iter().enumerate() {
            list.push(ProofInstantiation { rule, head: head.clone(), body, binding, index: m });
        }
    }
    out
}

/// Update matches for `events` against `facts`, in the engine's order.
pub fn matches(program: &Program, facts: &BTreeSet<GroundAtom>, events: &[GroundAtom]) -> Vec<UpdateMatch> {
    let universe = universe(program, facts.iter().chain(events));
    let events: BTreeSet<&GroundAtom> = events.iter().collect();
    let mut grouped: BTreeMap<(usize, GroundAtom), BTreeSet<(GroundAtom, Vec<GroundAtom>, Vec<Symbol>)>> =
        BTreeMap::new();
    for rule in program.update_rules() {
        let trigger = rule.trigger.as_ref().expect("update rule trigger");
        assignments(rule, &universe, &mut |values| {
            let e = ground(trigger, values);
            if events.contains(&e) && holds(rule, values, facts) {
                let body = rule.positives.iter().map(|p| ground(&p.pattern, values)).collect();
                grouped.entry((rule.index, ground(&rule.head, values))).or_default().insert((e, body, values.to_vec()));
            }
        });
    }
    let mut out = Vec::new();
    for ((rule, head), insts) in grouped {
        let polarity =
            if program.compiled_rule(rule).kind == RuleKind::UpdateRemove { Polarity::Remove } else { Polarity::Add };
        let mut insts: Vec<_> = insts.into_iter().collect();
        insts.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
        for (m, (trigger, body, binding)) in insts.into_iter().enumerate() {
            out.push(UpdateMatch { rule, polarity, head: head.clone(), trigger, body, binding, index: m });
        }
    }
    out
}

/// Checks the engine's facts and proofs for `state` against this evaluator.
pub fn verify_state(program: &Program, state: &crate::engine::DatabaseState) -> Result<(), String> {
    let facts = fixpoint(program, state.adrift());
    let engine_facts: BTreeSet<GroundAtom> = state.facts().iter().cloned().collect();
    if facts != engine_facts {
        let missing: Vec<String> = facts.difference(&engine_facts).map(|a| a.to_string()).collect();
        let extra: Vec<String> = engine_facts.difference(&facts).map(|a| a.to_string()).collect();
        return Err(format!("fact sets differ: missing {missing:?}, extra {extra:?}"));
    }
    let expected = proofs(program, &facts);
    if &expected != state.proofs() {
        let head = expected
            .keys()
            .chain(state.proofs().keys())
            .find(|h| expected.get(*h) != state.proofs().get(*h))
            .map(|h| h.to_string())
            .unwrap_or_default();
        return Err(format!("proofs differ at {head}"));
    }
    Ok(())
}

/// Checks the engine's update matches against this evaluator.
pub fn verify_matches(
    program: &Program,
    state: &crate::engine::DatabaseState,
    events: &[GroundAtom],
    engine_matches: &[UpdateMatch],
) -> Result<(), String> {
    let facts: BTreeSet<GroundAtom> = state.facts().iter().cloned().collect();
    let expected = matches(program, &facts, events);
    if expected != engine_matches {
        return Err(format!("{} expected matches, engine found {}", expected.len(), engine_matches.len()));
    }
    Ok(())
}
