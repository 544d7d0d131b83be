//! A validated program bound to a time mode, with every rule's parameter
//! names compiled into templates that ground against a rule binding.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndtt_autodiff::ParamSpec;
use ndtt_logic::{
    resolve_parameters, Atom, CompiledRule, EngineConfig, GroundAtom, ParameterLayout, Program, RuleKind, Symbol,
    Term, TimeMode, WeightLayout,
};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// A parameter name whose arguments may refer to rule variables.
#[derive(Clone, Debug)]
pub struct NameTemplate {
    functor: Symbol,
    args: Vec<NameArg>,
    ground: Option<String>,
}

#[derive(Clone, Debug)]
enum NameArg {
    Const(Symbol),
    Var(usize),
}

impl NameTemplate {
    fn new(atom: &Atom, variables: &[Symbol]) -> Self {
        let args: Vec<NameArg> = atom
            .args
            .iter()
            .map(|t| match t {
                Term::Const(c) => NameArg::Const(c.clone()),
                Term::Var(v) => NameArg::Var(
                    variables.iter().position(|x| x == v).expect("parameter variables occur in the rule body"),
                ),
            })
            .collect();
        let ground = atom.is_ground().then(|| atom.to_string());
        NameTemplate { functor: atom.functor.clone(), args, ground }
    }

    fn constant(atom: &Atom) -> Self {
        NameTemplate::new(atom, &[])
    }

    /// The parameter name under `binding` (the rule's variable values).
    pub fn ground(&self, binding: &[Symbol]) -> String {
        if let Some(g) = &self.ground {
            return g.clone();
        }
        GroundAtom {
            functor: self.functor.clone(),
            args: self
                .args
                .iter()
                .map(|a| match a {
                    NameArg::Const(c) => c.clone(),
                    NameArg::Var(i) => binding[*i].clone(),
                })
                .collect(),
        }
        .to_string()
    }
}

/// One named block of a split weight matrix.
#[derive(Clone, Debug)]
pub struct SlotNet {
    /// Index into the rule's input atoms: for update rules 0 is the trigger.
    pub input: usize,
    pub cols: usize,
    pub name: Option<NameTemplate>,
}

#[derive(Clone, Debug)]
pub enum WeightNet {
    Split { bias: Option<NameTemplate>, slots: Vec<SlotNet> },
    Full { name: Option<NameTemplate>, cols: usize, inputs: Vec<(usize, usize)> },
}

/// Compiled parameters of one deductive or add-update rule.
#[derive(Clone, Debug)]
pub struct RuleNet {
    pub rule: usize,
    pub kind: RuleKind,
    pub rows: usize,
    /// Cell dimension of the head.
    pub cell: usize,
    pub beta: Option<NameTemplate>,
    pub weights: WeightNet,
}

impl RuleNet {
    pub fn weight_spec(&self, cols: usize) -> ParamSpec {
        ParamSpec::weight(self.rows, cols)
    }
}

/// Program + time mode + compiled parameter templates.
#[derive(Clone, Debug)]
pub struct Model {
    program: Arc<Program>,
    source_hash: String,
    layout: ParameterLayout,
    nets: Vec<Option<RuleNet>>,
    taus: BTreeMap<Symbol, NameTemplate>,
    engine: EngineConfig,
    freeze_drift: bool,
}

/// Hex SHA-256 of program text.
pub fn program_hash(source: &str) -> String {
    Sha256::digest(source.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Model {
    pub fn from_source(source: &str, mode: TimeMode) -> Result<Model> {
        let program = Program::from_source(source)?;
        let mut model = Model::new(program, mode);
        model.source_hash = program_hash(source);
        Ok(model)
    }

    pub fn new(program: Program, mode: TimeMode) -> Model {
        let layout = resolve_parameters(&program, mode);
        let nets = program
            .compiled()
            .iter()
            .map(|rule| layout.rule(rule.index).map(|rp| compile_rule(&program, rule, rp)))
            .collect();
        let taus = layout.taus.iter().map(|(f, a)| (f.clone(), NameTemplate::constant(a))).collect();
        Model {
            program: Arc::new(program),
            source_hash: String::new(),
            layout,
            nets,
            taus,
            engine: EngineConfig::default(),
            freeze_drift: false,
        }
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn mode(&self) -> TimeMode {
        self.layout.mode
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    /// SHA-256 of the source text, or empty when built from a parsed program.
    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn net(&self, rule: usize) -> Option<&RuleNet> {
        self.nets[rule - 1].as_ref()
    }

    pub fn tau_name(&self, functor: &str) -> Option<&NameTemplate> {
        self.taus.get(functor)
    }

    pub fn engine_config(&self) -> EngineConfig {
        self.engine
    }

    pub fn with_memoize(mut self, memoize: bool) -> Self {
        self.engine.memoize = memoize;
        self
    }

    /// Continuous mode with zero decay and no asymptote updates: cells then
    /// hold their start value, which reduces the update to the discrete one.
    /// A diagnostic knob; it has no effect in discrete mode.
    pub fn with_frozen_drift(mut self, freeze: bool) -> Self {
        self.freeze_drift = freeze;
        self
    }

    pub fn frozen_drift(&self) -> bool {
        self.freeze_drift
    }
}

fn compile_rule(program: &Program, rule: &CompiledRule, rp: &ndtt_logic::RuleParams) -> RuleNet {
    let vars = &rule.variables;
    let is_update = rule.kind.is_update();
    // Input atoms: [trigger?, positives...]; their dims in that order.
    let mut dims: Vec<usize> = Vec::new();
    if let Some(t) = &rule.trigger {
        dims.push(program.dim(&t.functor));
    }
    dims.extend(rule.positives.iter().map(|p| program.dim(&p.pattern.functor)));
    let weights = match &rp.weights {
        WeightLayout::Split { bias, slots } => WeightNet::Split {
            bias: (!bias.is_zero_name()).then(|| NameTemplate::new(bias, vars)),
            slots: slots
                .iter()
                .enumerate()
                .map(|(k, s)| SlotNet { input: k, cols: s.cols, name: s.name.as_ref().map(|n| NameTemplate::new(n, vars)) })
                .collect(),
        },
        WeightLayout::Full { name, cols } => WeightNet::Full {
            name: name.as_ref().map(|n| NameTemplate::new(n, vars)),
            cols: *cols,
            inputs: dims.iter().copied().enumerate().collect(),
        },
    };
    debug_assert!(!is_update || rule.trigger.is_some());
    RuleNet {
        rule: rule.index,
        kind: rule.kind,
        rows: rp.rows,
        cell: program.cell_dim(&rule.head.functor),
        beta: rp.beta.as_ref().map(|b| NameTemplate::new(b, vars)),
        weights,
    }
}
