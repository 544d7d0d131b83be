//! Parameter names and shapes for each rule slot.
//!
//! A deductive rule for head `h` owns a weight matrix with `cell_dim(h)`
//! rows; an add-update rule owns `k · cell_dim(h)` rows where `k` is 3 in
//! discrete time and 7 in continuous time. The matrix is either split into
//! a bias column and one block per positive body element (each separately
//! named), or named as a whole with `::`.

use std::collections::BTreeMap;

use crate::ast::{sym, Atom, RuleKind, Term};
use crate::error::ValidationError;
use crate::program::Program;

/// Whether cells drift in continuous time or step in discrete time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeMode {
    Continuous,
    Discrete,
}

impl TimeMode {
    /// Gate blocks per cell coordinate in an update pre-activation.
    pub fn update_blocks(self) -> usize {
        match self {
            TimeMode::Discrete => 3,
            TimeMode::Continuous => 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignatureRole {
    Weight,
    PoolExponent,
    SoftplusScale,
}

/// One named parameter. `name` may contain rule variables; it is then
/// instantiated per ground binding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    pub name: Atom,
    pub rows: usize,
    pub cols: usize,
    pub role: SignatureRole,
}

/// Where a weight block applies within a rule body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotWeight {
    /// 0 for the trigger of an update rule, otherwise `1 + condition index`
    /// for update rules and `condition index` for deductive rules, i.e. the
    /// 0-based position in the body.
    pub body_position: usize,
    /// Embedding dimension of the element.
    pub cols: usize,
    /// `None` means the frozen zero matrix.
    pub name: Option<Atom>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeightLayout {
    Split { bias: Atom, slots: Vec<SlotWeight> },
    /// Whole matrix `[bias | block_1 | … ]`; `None` is the zero matrix.
    Full { name: Option<Atom>, cols: usize },
}

/// Parameters of one rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleParams {
    pub rule: usize,
    pub rows: usize,
    /// `None` for body-free rules, which have exactly one proof per head.
    pub beta: Option<Atom>,
    pub weights: WeightLayout,
}

/// Parameter layout of a program in a given time mode.
#[derive(Clone, Debug)]
pub struct ParameterLayout {
    pub mode: TimeMode,
    /// Indexed by rule index − 1; `None` for remove rules.
    pub rules: Vec<Option<RuleParams>>,
    /// Softplus-scale name per event functor (continuous mode only).
    pub taus: BTreeMap<crate::ast::Symbol, Atom>,
}

fn default_name(rule: usize, what: &str) -> Atom {
    Atom { functor: sym("params"), args: vec![Term::Const(sym(&rule.to_string())), Term::Const(sym(what))] }
}

fn tau_default(functor: &str) -> Atom {
    Atom { functor: sym("tau"), args: vec![Term::Const(sym(functor))] }
}

fn nonzero(name: Atom) -> Option<Atom> {
    if name.is_zero_name() {
        None
    } else {
        Some(name)
    }
}

/// Assigns a name and shape to every rule slot.
pub fn resolve_parameters(program: &Program, mode: TimeMode) -> ParameterLayout {
    let mut rules = Vec::with_capacity(program.rules().len());
    for (i, rule) in program.rules().iter().enumerate() {
        let index = i + 1;
        if rule.kind == RuleKind::UpdateRemove {
            rules.push(None);
            continue;
        }
        let cell = program.cell_dim(&rule.head.functor);
        let rows = if rule.kind.is_update() { mode.update_blocks() * cell } else { cell };
        let beta = rule.has_body().then(|| rule.beta.clone().unwrap_or_else(|| default_name(index, "beta")));
        let elements: Vec<(usize, &crate::ast::BodyElement)> =
            rule.body().enumerate().filter(|(_, e)| !e.negated).collect();
        let weights = match &rule.full {
            Some(full) => WeightLayout::Full {
                name: nonzero(full.clone()),
                cols: 1 + elements.iter().map(|(_, e)| program.dim(&e.atom.functor)).sum::<usize>(),
            },
            None => WeightLayout::Split {
                bias: rule.bias.clone().unwrap_or_else(|| default_name(index, "bias")),
                slots: elements
                    .iter()
                    .map(|(pos, e)| SlotWeight {
                        body_position: *pos,
                        cols: program.dim(&e.atom.functor),
                        name: nonzero(e.param.clone().unwrap_or_else(|| default_name(index, &(pos + 1).to_string()))),
                    })
                    .collect(),
            },
        };
        rules.push(Some(RuleParams { rule: index, rows, beta, weights }));
    }
    let taus = match mode {
        TimeMode::Discrete => BTreeMap::new(),
        TimeMode::Continuous => program
            .event_functors()
            .map(|f| {
                let d = &program.declarations()[f];
                (f.clone(), d.tau.clone().unwrap_or_else(|| tau_default(f)))
            })
            .collect(),
    };
    ParameterLayout { mode, rules, taus }
}

impl ParameterLayout {
    pub fn rule(&self, index: usize) -> Option<&RuleParams> {
        self.rules[index - 1].as_ref()
    }

    /// All named parameters with a nonzero number of entries, deduplicated by
    /// name pattern.
    pub fn signatures(&self) -> Vec<Signature> {
        let mut out: Vec<Signature> = Vec::new();
        let mut push = |s: Signature| {
            if s.rows * s.cols > 0 && !out.iter().any(|o| o.name == s.name) {
                out.push(s);
            }
        };
        for rp in self.rules.iter().flatten() {
            if let Some(b) = &rp.beta {
                push(Signature { name: b.clone(), rows: 1, cols: 1, role: SignatureRole::PoolExponent });
            }
            match &rp.weights {
                WeightLayout::Full { name: Some(n), cols } => {
                    push(Signature { name: n.clone(), rows: rp.rows, cols: *cols, role: SignatureRole::Weight })
                }
                WeightLayout::Full { name: None, .. } => {}
                WeightLayout::Split { bias, slots } => {
                    if !bias.is_zero_name() {
                        push(Signature { name: bias.clone(), rows: rp.rows, cols: 1, role: SignatureRole::Weight });
                    }
                    for s in slots {
                        if let Some(n) = &s.name {
                            push(Signature { name: n.clone(), rows: rp.rows, cols: s.cols, role: SignatureRole::Weight });
                        }
                    }
                }
            }
        }
        for name in self.taus.values() {
            push(Signature { name: name.clone(), rows: 1, cols: 1, role: SignatureRole::SoftplusScale });
        }
        out
    }
}

/// Renames variables positionally so that `emb(M,N)` and `emb(X,Y)` agree.
fn normalized(name: &Atom) -> String {
    let mut seen: Vec<&str> = Vec::new();
    let args: Vec<String> = name
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) => {
                let i = seen.iter().position(|s| *s == &**v).unwrap_or_else(|| {
                    seen.push(v);
                    seen.len() - 1
                });
                format!("_{i}")
            }
            Term::Const(c) => c.to_string(),
        })
        .collect();
    format!("{}({})", name.functor, args.join(","))
}

/// Rejects names used with two different shapes, in either time mode.
pub(crate) fn check_shapes(program: &Program) -> Result<(), ValidationError> {
    for mode in [TimeMode::Discrete, TimeMode::Continuous] {
        let layout = resolve_parameters(program, mode);
        let mut seen: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut all: Vec<(Atom, (usize, usize))> = Vec::new();
        for rp in layout.rules.iter().flatten() {
            if let Some(b) = &rp.beta {
                all.push((b.clone(), (1, 1)));
            }
            match &rp.weights {
                WeightLayout::Full { name: Some(n), cols } => all.push((n.clone(), (rp.rows, *cols))),
                WeightLayout::Full { name: None, .. } => {}
                WeightLayout::Split { bias, slots } => {
                    if !bias.is_zero_name() {
                        all.push((bias.clone(), (rp.rows, 1)));
                    }
                    all.extend(slots.iter().filter_map(|s| s.name.clone().map(|n| (n, (rp.rows, s.cols)))));
                }
            }
        }
        all.extend(layout.taus.values().map(|n| (n.clone(), (1, 1))));
        for (name, shape) in all {
            let key = normalized(&name);
            match seen.get(&key) {
                Some(&first) if first != shape => {
                    return Err(ValidationError::ParameterShapeConflict { name: name.to_string(), first, second: shape })
                }
                _ => {
                    seen.insert(key, shape);
                }
            }
        }
    }
    Ok(())
}
