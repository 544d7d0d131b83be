//! Temporal deductive database: fixpoint evaluation, proof enumeration,
//! update matching and state transitions.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::ast::{GroundAtom, RuleKind, Symbol};
use crate::error::EngineError;
use crate::program::{ArgSlot, CompiledRule, Pattern, Program, INIT};

type Binding = Vec<Option<Symbol>>;

/// Set of ground atoms indexed by functor and by (functor, position, value).
#[derive(Clone, Debug, Default)]
pub struct FactSet {
    sorted: BTreeSet<GroundAtom>,
    by_functor: HashMap<Symbol, Vec<GroundAtom>>,
    by_arg: HashMap<(Symbol, usize, Symbol), Vec<GroundAtom>>,
}

impl FactSet {
    pub fn insert(&mut self, atom: GroundAtom) -> bool {
        if self.sorted.contains(&atom) {
            return false;
        }
        for (i, a) in atom.args.iter().enumerate() {
            self.by_arg.entry((atom.functor.clone(), i, a.clone())).or_default().push(atom.clone());
        }
        self.by_functor.entry(atom.functor.clone()).or_default().push(atom.clone());
        self.sorted.insert(atom);
        true
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.sorted.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Atoms in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &GroundAtom> {
        self.sorted.iter()
    }

    pub fn of_functor(&self, functor: &str) -> &[GroundAtom] {
        self.by_functor.get(functor).map_or(&[], Vec::as_slice)
    }

    /// Candidates for `pattern` under `binding`, narrowed by the first bound
    /// argument position when there is one.
    fn candidates(&self, pattern: &Pattern, binding: &Binding) -> &[GroundAtom] {
        for (i, slot) in pattern.args.iter().enumerate() {
            let value = match slot {
                ArgSlot::Const(c) => Some(c),
                ArgSlot::Var(v) => binding[*v].as_ref(),
            };
            if let Some(value) = value {
                return self
                    .by_arg
                    .get(&(pattern.functor.clone(), i, value.clone()))
                    .map_or(&[], Vec::as_slice);
            }
        }
        self.of_functor(&pattern.functor)
    }
}

fn unify(pattern: &Pattern, fact: &GroundAtom, binding: &mut Binding, trail: &mut Vec<usize>) -> bool {
    if pattern.functor != fact.functor || pattern.args.len() != fact.args.len() {
        return false;
    }
    let mark = trail.len();
    for (slot, value) in pattern.args.iter().zip(&fact.args) {
        let ok = match slot {
            ArgSlot::Const(c) => c == value,
            ArgSlot::Var(v) => match &binding[*v] {
                Some(bound) => bound == value,
                None => {
                    binding[*v] = Some(value.clone());
                    trail.push(*v);
                    true
                }
            },
        };
        if !ok {
            undo(binding, trail, mark);
            return false;
        }
    }
    true
}

fn undo(binding: &mut Binding, trail: &mut Vec<usize>, mark: usize) {
    while trail.len() > mark {
        let v = trail.pop().expect("trail longer than mark");
        binding[v] = None;
    }
}

fn instantiate(pattern: &Pattern, binding: &Binding) -> GroundAtom {
    let args = pattern
        .args
        .iter()
        .map(|s| match s {
            ArgSlot::Const(c) => c.clone(),
            ArgSlot::Var(v) => binding[*v].clone().expect("range restriction binds every variable"),
        })
        .collect();
    GroundAtom { functor: pattern.functor.clone(), args }
}

/// Where the candidates for one positive body atom come from.
enum Source<'a> {
    Facts(&'a FactSet),
    List(&'a [GroundAtom]),
}

/// Enumerates every binding of `patterns` against `sources`, in order, then
/// checks `negatives` against `facts`.
fn join(
    patterns: &[&Pattern],
    sources: &[Source<'_>],
    negatives: &[Pattern],
    facts: &FactSet,
    binding: &mut Binding,
    trail: &mut Vec<usize>,
    emit: &mut dyn FnMut(&Binding),
) {
    let Some((first, rest)) = patterns.split_first() else {
        if negatives.iter().all(|n| !facts.contains(&instantiate(n, binding))) {
            emit(binding);
        }
        return;
    };
    let candidates = match &sources[0] {
        Source::Facts(f) => f.candidates(first, binding),
        Source::List(l) => l,
    };
    for fact in candidates {
        let mark = trail.len();
        if unify(first, fact, binding, trail) {
            join(rest, &sources[1..], negatives, facts, binding, trail, emit);
            undo(binding, trail, mark);
        }
    }
}

/// One way a rule proves its head: a single binding of the rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProofInstantiation {
    /// 1-based rule index.
    pub rule: usize,
    pub head: GroundAtom,
    /// Positive conditions in rule order.
    pub body: Vec<GroundAtom>,
    /// Value of every rule variable, in the rule's variable order.
    pub binding: Vec<Symbol>,
    /// Position among the instantiations of (head, rule) in canonical order.
    pub index: usize,
}

/// Facts and proofs of a fixpoint, keyed by head.
pub type Proofs = BTreeMap<GroundAtom, Vec<ProofInstantiation>>;

fn full_binding(binding: &Binding) -> Vec<Symbol> {
    binding.iter().map(|b| b.clone().expect("all rule variables bound")).collect()
}

fn rule_instances(rule: &CompiledRule, facts: &FactSet, mut emit: impl FnMut(GroundAtom, Vec<GroundAtom>, Vec<Symbol>)) {
    let patterns: Vec<&Pattern> = rule.positives.iter().map(|p| &p.pattern).collect();
    let sources: Vec<Source<'_>> = patterns.iter().map(|_| Source::Facts(facts)).collect();
    let mut binding = vec![None; rule.variables.len()];
    let mut trail = Vec::new();
    join(&patterns, &sources, &rule.negatives, facts, &mut binding, &mut trail, &mut |b| {
        let body = patterns.iter().map(|p| instantiate(p, b)).collect();
        emit(instantiate(&rule.head, b), body, full_binding(b));
    });
}

/// Least fixpoint of the deductive rules over `adrift`, stratum by stratum,
/// with semi-naive iteration inside each stratum.
pub fn least_fixpoint(program: &Program, adrift: &BTreeSet<GroundAtom>) -> FactSet {
    let mut total = FactSet::default();
    for a in adrift {
        total.insert(a.clone());
    }
    for (stratum, rule_ids) in program.rules_by_stratum().iter().enumerate() {
        let rules: Vec<&CompiledRule> = rule_ids.iter().map(|&i| program.compiled_rule(i)).collect();
        let mut fresh: Vec<GroundAtom> = Vec::new();
        for rule in &rules {
            rule_instances(rule, &total, |head, _, _| fresh.push(head));
        }
        loop {
            let mut delta = FactSet::default();
            for f in fresh.drain(..) {
                if !total.contains(&f) {
                    delta.insert(f);
                }
            }
            if delta.is_empty() {
                break;
            }
            for f in delta.iter() {
                total.insert(f.clone());
            }
            for rule in &rules {
                let patterns: Vec<&Pattern> = rule.positives.iter().map(|p| &p.pattern).collect();
                for (j, pj) in patterns.iter().enumerate() {
                    if program.stratum(&pj.functor) != stratum {
                        continue;
                    }
                    let delta_list = delta.of_functor(&pj.functor);
                    if delta_list.is_empty() {
                        continue;
                    }
                    let sources: Vec<Source<'_>> = (0..patterns.len())
                        .map(|k| if k == j { Source::List(delta_list) } else { Source::Facts(&total) })
                        .collect();
                    let mut binding = vec![None; rule.variables.len()];
                    let mut trail = Vec::new();
                    join(&patterns, &sources, &rule.negatives, &total, &mut binding, &mut trail, &mut |b| {
                        fresh.push(instantiate(&rule.head, b));
                    });
                }
            }
        }
    }
    total
}

/// All proof instantiations of the deductive rules against `facts`.
pub fn enumerate_proofs(program: &Program, facts: &FactSet) -> Proofs {
    let mut grouped: BTreeMap<(GroundAtom, usize), Vec<(Vec<GroundAtom>, Vec<Symbol>)>> = BTreeMap::new();
    for rule in program.compiled().iter().filter(|r| r.kind.is_deductive()) {
        rule_instances(rule, facts, |head, body, binding| {
            grouped.entry((head, rule.index)).or_default().push((body, binding));
        });
    }
    let mut proofs = Proofs::new();
    for ((head, rule), mut insts) in grouped {
        insts.sort();
        insts.dedup();
        let list = proofs.entry(head.clone()).or_default();
        for (m, (body, binding)) in insts.into_iter().enumerate() {
            list.push(ProofInstantiation { rule, head: head.clone(), body, binding, index: m });
        }
    }
    proofs
}

/// Rejects a ground proof relation with a cycle, naming a witness.
fn check_acyclic(proofs: &Proofs) -> Result<(), EngineError> {
    let mut indegree: BTreeMap<&GroundAtom, usize> = BTreeMap::new();
    let mut dependents: BTreeMap<&GroundAtom, Vec<&GroundAtom>> = BTreeMap::new();
    for (head, insts) in proofs {
        indegree.entry(head).or_insert(0);
        for inst in insts {
            for b in &inst.body {
                *indegree.entry(head).or_insert(0) += 1;
                indegree.entry(b).or_insert(0);
                dependents.entry(b).or_default().push(head);
            }
        }
    }
    let mut ready: Vec<&GroundAtom> = indegree.iter().filter(|(_, &d)| d == 0).map(|(a, _)| *a).collect();
    while let Some(a) = ready.pop() {
        for d in dependents.get(a).into_iter().flatten() {
            let e = indegree.get_mut(d).expect("known atom");
            *e -= 1;
            if *e == 0 {
                ready.push(d);
            }
        }
    }
    let stuck: BTreeSet<&GroundAtom> = indegree.iter().filter(|(_, &d)| d > 0).map(|(a, _)| *a).collect();
    let Some(&start) = stuck.iter().next() else { return Ok(()) };
    // Walk backwards through stuck body atoms until an atom repeats.
    let mut path = vec![start];
    let mut current = start;
    loop {
        let next = proofs[current]
            .iter()
            .flat_map(|i| i.body.iter())
            .find(|b| stuck.contains(b))
            .expect("a stuck atom has a stuck body atom");
        if let Some(k) = path.iter().position(|p| *p == next) {
            let mut cycle: Vec<String> = path[k..].iter().rev().map(|a| a.to_string()).collect();
            cycle.push(cycle[0].clone());
            return Err(EngineError::CyclicDeduction { cycle });
        }
        path.push(next);
        current = next;
    }
}

/// Memoized pattern queries against one state's facts.
#[derive(Debug, Default)]
pub struct QueryMemo {
    enabled: bool,
    table: RefCell<HashMap<(Symbol, Vec<Option<Symbol>>), Arc<Vec<GroundAtom>>>>,
    hits: Cell<u64>,
    misses: Cell<u64>,
}

impl Clone for QueryMemo {
    fn clone(&self) -> Self {
        QueryMemo {
            enabled: self.enabled,
            table: RefCell::new(self.table.borrow().clone()),
            hits: Cell::new(self.hits.get()),
            misses: Cell::new(self.misses.get()),
        }
    }
}

impl QueryMemo {
    fn new(enabled: bool) -> Self {
        QueryMemo { enabled, ..QueryMemo::default() }
    }

    pub fn hits(&self) -> u64 {
        self.hits.get()
    }

    pub fn misses(&self) -> u64 {
        self.misses.get()
    }

    pub fn len(&self) -> usize {
        self.table.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.borrow().is_empty()
    }
}

/// Engine options.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub memoize: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { memoize: true }
    }
}

/// Symbolic database state at a time: adrift atoms, facts and proofs.
#[derive(Clone, Debug)]
pub struct DatabaseState {
    time: f64,
    adrift: BTreeSet<GroundAtom>,
    facts: FactSet,
    proofs: Proofs,
    memo: QueryMemo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Add,
    Remove,
}

/// One instantiation of an update rule triggered by an event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateMatch {
    pub rule: usize,
    pub polarity: Polarity,
    pub head: GroundAtom,
    pub trigger: GroundAtom,
    /// Positive conditions in rule order.
    pub body: Vec<GroundAtom>,
    pub binding: Vec<Symbol>,
    /// Position among matches of (head, rule) in canonical order.
    pub index: usize,
}

/// How the adrift set changed in [`apply_updates`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transition {
    /// Heads of remove-matches that were adrift.
    pub docked: BTreeSet<GroundAtom>,
    /// Heads of add-matches.
    pub launched: BTreeSet<GroundAtom>,
}

impl DatabaseState {
    /// Builds the state whose adrift atoms are exactly `adrift`.
    pub fn from_adrift(
        program: &Program,
        adrift: BTreeSet<GroundAtom>,
        time: f64,
        config: EngineConfig,
    ) -> Result<DatabaseState, EngineError> {
        let facts = least_fixpoint(program, &adrift);
        let proofs = enumerate_proofs(program, &facts);
        check_acyclic(&proofs)?;
        Ok(DatabaseState { time, adrift, facts, proofs, memo: QueryMemo::new(config.memoize) })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn adrift(&self) -> &BTreeSet<GroundAtom> {
        &self.adrift
    }

    pub fn is_adrift(&self, atom: &GroundAtom) -> bool {
        self.adrift.contains(atom)
    }

    pub fn facts(&self) -> &FactSet {
        &self.facts
    }

    pub fn is_fact(&self, atom: &GroundAtom) -> bool {
        self.facts.contains(atom)
    }

    pub fn proofs(&self) -> &Proofs {
        &self.proofs
    }

    /// Proof instantiations of `atom`, ordered by rule then index.
    pub fn proofs_of(&self, atom: &GroundAtom) -> &[ProofInstantiation] {
        self.proofs.get(atom).map_or(&[], Vec::as_slice)
    }

    pub fn memo(&self) -> &QueryMemo {
        &self.memo
    }

    pub fn config(&self) -> EngineConfig {
        EngineConfig { memoize: self.memo.enabled }
    }

    /// Facts matching `functor` with the given argument pattern (`None` is a
    /// wildcard), in canonical order.
    pub fn query(&self, functor: &Symbol, pattern: &[Option<Symbol>]) -> Arc<Vec<GroundAtom>> {
        let key = (functor.clone(), pattern.to_vec());
        if self.memo.enabled {
            if let Some(hit) = self.memo.table.borrow().get(&key) {
                self.memo.hits.set(self.memo.hits.get() + 1);
                return hit.clone();
            }
        }
        self.memo.misses.set(self.memo.misses.get() + 1);
        let source = match pattern.iter().enumerate().find_map(|(i, p)| p.as_ref().map(|v| (i, v))) {
            Some((i, v)) => self.facts.by_arg.get(&(functor.clone(), i, v.clone())).map_or(&[][..], Vec::as_slice),
            None => self.facts.of_functor(functor),
        };
        let mut result: Vec<GroundAtom> = source
            .iter()
            .filter(|f| {
                f.args.len() == pattern.len() && f.args.iter().zip(pattern).all(|(a, p)| p.as_ref().is_none_or(|p| p == a))
            })
            .cloned()
            .collect();
        result.sort();
        let result = Arc::new(result);
        if self.memo.enabled {
            self.memo.table.borrow_mut().insert(key, result.clone());
        }
        result
    }

    /// Sorted text listing of the facts, one per line, adrift atoms flagged.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for f in self.facts.iter() {
            let flag = if self.adrift.contains(f) { " [adrift]" } else { "" };
            let _ = writeln!(out, "{f}{flag}");
        }
        out
    }
}

/// State at time 0, before `init` is applied.
pub fn init_state(program: &Program, config: EngineConfig) -> Result<DatabaseState, EngineError> {
    DatabaseState::from_adrift(program, BTreeSet::new(), 0.0, config)
}

/// The reserved `init` event.
pub fn init_event() -> GroundAtom {
    GroundAtom::new(INIT, &[])
}

fn match_rule(rule: &CompiledRule, state: &DatabaseState, event: &GroundAtom, out: &mut Vec<UpdateMatch>) {
    let trigger = rule.trigger.as_ref().expect("update rules have a trigger");
    let mut binding: Binding = vec![None; rule.variables.len()];
    let mut trail = Vec::new();
    if !unify(trigger, event, &mut binding, &mut trail) {
        return;
    }
    let polarity = if rule.kind == RuleKind::UpdateRemove { Polarity::Remove } else { Polarity::Add };
    fn extend(
        rule: &CompiledRule,
        k: usize,
        state: &DatabaseState,
        binding: &mut Binding,
        trail: &mut Vec<usize>,
        emit: &mut dyn FnMut(&Binding),
    ) {
        let Some(pos) = rule.positives.get(k) else {
            if rule.negatives.iter().all(|n| !state.is_fact(&instantiate(n, binding))) {
                emit(binding);
            }
            return;
        };
        let pattern: Vec<Option<Symbol>> = pos
            .pattern
            .args
            .iter()
            .map(|s| match s {
                ArgSlot::Const(c) => Some(c.clone()),
                ArgSlot::Var(v) => binding[*v].clone(),
            })
            .collect();
        let candidates = state.query(&pos.pattern.functor, &pattern);
        for fact in candidates.iter() {
            let mark = trail.len();
            if unify(&pos.pattern, fact, binding, trail) {
                extend(rule, k + 1, state, binding, trail, emit);
                undo(binding, trail, mark);
            }
        }
    }
    extend(rule, 0, state, &mut binding, &mut trail, &mut |b| {
        out.push(UpdateMatch {
            rule: rule.index,
            polarity,
            head: instantiate(&rule.head, b),
            trigger: event.clone(),
            body: rule.positives.iter().map(|p| instantiate(&p.pattern, b)).collect(),
            binding: full_binding(b),
            index: 0,
        });
    });
}

/// All add- and remove-matches of the update rules for the events that
/// occur together at the state's time. Conditions are checked against the
/// given (pre-update) state.
pub fn match_updates(program: &Program, state: &DatabaseState, events: &[GroundAtom]) -> Vec<UpdateMatch> {
    let events: BTreeSet<&GroundAtom> = events.iter().collect();
    let mut out = Vec::new();
    for rule in program.update_rules() {
        for e in &events {
            match_rule(rule, state, e, &mut out);
        }
    }
    out.sort_by(|a, b| {
        (a.rule, &a.head, &a.trigger, &a.body, &a.binding).cmp(&(b.rule, &b.head, &b.trigger, &b.body, &b.binding))
    });
    out.dedup_by(|a, b| a.rule == b.rule && a.head == b.head && a.trigger == b.trigger && a.binding == b.binding);
    let mut i = 0;
    while i < out.len() {
        let mut j = i;
        while j < out.len() && out[j].rule == out[i].rule && out[j].head == out[i].head {
            out[j].index = j - i;
            j += 1;
        }
        i = j;
    }
    out
}

/// Docks the heads of remove-matches, then launches the heads of
/// add-matches, and recomputes the fixpoint at `time`.
pub fn apply_updates(
    program: &Program,
    state: &DatabaseState,
    matches: &[UpdateMatch],
    time: f64,
) -> Result<(DatabaseState, Transition), EngineError> {
    let mut adrift = state.adrift.clone();
    let mut transition = Transition::default();
    for m in matches.iter().filter(|m| m.polarity == Polarity::Remove) {
        if adrift.remove(&m.head) {
            transition.docked.insert(m.head.clone());
        }
    }
    for m in matches.iter().filter(|m| m.polarity == Polarity::Add) {
        adrift.insert(m.head.clone());
        transition.launched.insert(m.head.clone());
    }
    let next = DatabaseState::from_adrift(program, adrift, time, state.config())?;
    Ok((next, transition))
}

/// Facts whose functor is declared as an event, in canonical order.
pub fn possible_events(program: &Program, state: &DatabaseState) -> Vec<GroundAtom> {
    program.event_functors().flat_map(|f| state.facts.of_functor(f).iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect()
}
