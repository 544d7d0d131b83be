//! Numeric semantics over a database state: fact embeddings, event
//! intensities and cell-block updates.
//!
//! A [`Session`] owns one computation graph and the parameter leaves placed
//! on it. [`ModelState`] pairs a database state with the live cell blocks,
//! whose values are nodes of that graph.

use std::collections::{BTreeMap, HashMap};

use ndtt_autodiff::{init_parameter, ParamSpec, ParameterStore, Tensor, Var};
use ndtt_autodiff::{softplus_scaled, Graph};
use ndtt_logic::{
    apply_updates, init_state, match_updates, possible_events, DatabaseState, GroundAtom, Polarity, Symbol, TimeMode,
    Transition,
};

use crate::error::Result;
use crate::model::{Model, NameTemplate, RuleNet, WeightNet};

/// Memory of one adrift atom.
#[derive(Clone, Copy, Debug)]
pub enum Cell {
    Discrete { c: Var },
    /// Relaxes from `start` at `start_time` toward `target` at rate `decay`.
    Continuous { start_time: f64, start: Var, target: Var, decay: Var },
}

/// Database state plus the cell blocks of its adrift atoms.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub db: DatabaseState,
    pub cells: BTreeMap<GroundAtom, Cell>,
}

impl ModelState {
    pub fn time(&self) -> f64 {
        self.db.time()
    }
}

/// Graph-free cell value.
#[derive(Clone, Debug, PartialEq)]
pub enum CellValue {
    Discrete { c: Tensor },
    Continuous { start_time: f64, start: Tensor, target: Tensor, decay: Tensor },
}

/// A model state detached from every graph; cheap to send across threads.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub db: DatabaseState,
    pub cells: BTreeMap<GroundAtom, CellValue>,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.db.time()
    }
}

/// Embedding and event pre-activation of one fact at one time.
#[derive(Clone, Copy, Debug)]
pub struct Node {
    /// `None` when the atom's embedding dimension is 0.
    pub embedding: Option<Var>,
    /// Intensity pre-activation, for event atoms.
    pub event_pre: Option<Var>,
}

/// Per-time memo of embeddings; `None` entries are non-facts.
#[derive(Debug)]
pub struct Frame {
    t: f64,
    nodes: HashMap<GroundAtom, Option<Node>>,
}

impl Frame {
    pub fn time(&self) -> f64 {
        self.t
    }
}

/// Signed-power pooling `v⁻¹(Σ_m v(x_m))` with `v(x) = sign(x)·|x|^β`,
/// applied elementwise. One vector passes through unchanged; no vectors
/// pool to the zero vector of length `dim`.
pub fn pool(graph: &mut Graph, xs: &[Var], beta: Var, dim: usize) -> Result<Var> {
    match xs.len() {
        0 => Ok(graph.zeros(dim)),
        1 => Ok(xs[0]),
        _ => {
            let mut powered = Vec::with_capacity(xs.len());
            for &x in xs {
                powered.push(graph.signed_pow(x, beta)?);
            }
            let total = graph.sum_list(&powered)?;
            Ok(graph.signed_root(total, beta)?)
        }
    }
}

/// Weighted-pool inputs of one update instantiation in continuous time.
struct ContinuousDelta {
    start: Var,
    target: Var,
    decay: Var,
}

pub struct Session<'m> {
    model: &'m Model,
    store: &'m ParameterStore,
    graph: Graph,
    params: HashMap<String, Var>,
    betas: HashMap<String, Var>,
    taus: HashMap<Symbol, Var>,
    fresh: BTreeMap<String, Tensor>,
    one: Option<Var>,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m Model, store: &'m ParameterStore) -> Self {
        Session {
            model,
            store,
            graph: Graph::new(),
            params: HashMap::new(),
            betas: HashMap::new(),
            taus: HashMap::new(),
            fresh: BTreeMap::new(),
            one: None,
        }
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    /// Parameters first created by this session (absent from the store).
    pub fn fresh(&self) -> &BTreeMap<String, Tensor> {
        &self.fresh
    }

    pub fn into_fresh(self) -> BTreeMap<String, Tensor> {
        self.fresh
    }

    /// Current value of a parameter, creating it from the store's seed if
    /// it does not exist yet.
    pub fn value(&mut self, name: &str, spec: ParamSpec) -> Result<Tensor> {
        if let Some(v) = self.store.get(name).or_else(|| self.fresh.get(name)) {
            if v.shape() != spec.shape() {
                return Err(ndtt_autodiff::AutodiffError::ShapeConflict {
                    name: name.to_string(),
                    existing: v.shape(),
                    requested: spec.shape(),
                }
                .into());
            }
            return Ok(v.clone());
        }
        let v = init_parameter(self.store.seed(), name, spec);
        self.fresh.insert(name.to_string(), v.clone());
        Ok(v)
    }

    fn param(&mut self, name: String, spec: ParamSpec) -> Result<Var> {
        if let Some(&v) = self.params.get(&name) {
            return Ok(v);
        }
        let value = self.value(&name, spec)?;
        let v = self.graph.param(&name, value)?;
        self.params.insert(name, v);
        Ok(v)
    }

    fn one(&mut self) -> Result<Var> {
        if let Some(v) = self.one {
            return Ok(v);
        }
        let v = self.graph.constant_scalar(1.0)?;
        self.one = Some(v);
        Ok(v)
    }

    /// Pooling exponent `1 + b²` of a named raw parameter `b`.
    fn beta(&mut self, name: &NameTemplate) -> Result<Var> {
        let name = name.ground(&[]);
        if let Some(&v) = self.betas.get(&name) {
            return Ok(v);
        }
        let raw = self.param(name.clone(), ParamSpec::pool_exponent())?;
        let sq = self.graph.mul(raw, raw)?;
        let v = self.graph.add_const(sq, 1.0)?;
        self.betas.insert(name, v);
        Ok(v)
    }

    /// Softplus scale of an event functor (continuous mode).
    pub fn tau(&mut self, functor: &Symbol) -> Result<Var> {
        if let Some(&v) = self.taus.get(functor) {
            return Ok(v);
        }
        let name = self.model.tau_name(functor).expect("every event functor has a scale").ground(&[]);
        let raw = self.param(name, ParamSpec::softplus_scale())?;
        let one = self.one()?;
        let v = self.graph.softplus_scaled(raw, one)?;
        self.taus.insert(functor.clone(), v);
        Ok(v)
    }

    /// Numeric value of a scale, without touching the graph.
    pub fn tau_value(&mut self, functor: &Symbol) -> Result<f64> {
        let name = self.model.tau_name(functor).expect("every event functor has a scale").ground(&[]);
        let raw = self.value(&name, ParamSpec::softplus_scale())?.item();
        Ok(softplus_scaled(raw, 1.0))
    }

    /// State at time 0 before any event.
    pub fn initial_state(&self) -> Result<ModelState> {
        let db = init_state(self.model.program(), self.model.engine_config())?;
        Ok(ModelState { db, cells: BTreeMap::new() })
    }

    pub fn frame(&self, t: f64) -> Frame {
        Frame { t, nodes: HashMap::new() }
    }

    /// Events possible in `state`, in canonical order.
    pub fn possible(&self, state: &ModelState) -> Vec<GroundAtom> {
        possible_events(self.model.program(), &state.db)
    }

    /// Value of a cell block at `t` (not before its start time).
    pub fn cell_value(&mut self, cell: &Cell, t: f64) -> Result<Var> {
        match *cell {
            Cell::Discrete { c } => Ok(c),
            Cell::Continuous { start_time, start, target, decay } => {
                if t == start_time {
                    return Ok(start);
                }
                debug_assert!(t > start_time, "cells are evaluated forward in time");
                let gap = self.graph.sub(start, target)?;
                let rate = self.graph.scale(decay, -(t - start_time))?;
                let factor = self.graph.exp(rate)?;
                let moved = self.graph.mul(gap, factor)?;
                Ok(self.graph.add(target, moved)?)
            }
        }
    }

    /// `W·[1; inputs]` for one instantiation; `None` when every block is the
    /// zero matrix.
    fn affine(&mut self, net: &RuleNet, inputs: &[Option<Var>], dims: &[usize], binding: &[Symbol]) -> Result<Option<Var>> {
        let mut terms = Vec::new();
        match &net.weights {
            WeightNet::Split { bias, slots } => {
                if let Some(b) = bias {
                    terms.push(self.param(b.ground(binding), net.weight_spec(1))?);
                }
                for slot in slots {
                    let (Some(name), true) = (&slot.name, slot.cols > 0) else { continue };
                    let Some(x) = inputs[slot.input] else { continue };
                    let w = self.param(name.ground(binding), net.weight_spec(slot.cols))?;
                    terms.push(self.graph.matvec(w, x)?);
                }
            }
            WeightNet::Full { name: Some(name), cols, inputs: _ } => {
                let w = self.param(name.ground(binding), net.weight_spec(*cols))?;
                let mut parts = vec![self.one()?];
                for (x, &d) in inputs.iter().zip(dims) {
                    match x {
                        Some(x) => parts.push(*x),
                        None if d > 0 => parts.push(self.graph.zeros(d)),
                        None => {}
                    }
                }
                let x = self.graph.concat(&parts)?;
                terms.push(self.graph.matvec(w, x)?);
            }
            WeightNet::Full { name: None, .. } => {}
        }
        match terms.len() {
            0 => Ok(None),
            1 => Ok(Some(terms[0])),
            _ => Ok(Some(self.graph.sum_list(&terms)?)),
        }
    }

    /// Signed-power pooling of same-size vectors.
    fn pool(&mut self, xs: &[Var], beta: Option<&NameTemplate>) -> Result<Var> {
        if xs.len() == 1 {
            return Ok(xs[0]);
        }
        let beta = self.beta(beta.expect("rules with several instantiations have a body"))?;
        let dim = self.graph.value(xs[0]).rows();
        pool(&mut self.graph, xs, beta, dim)
    }

    /// Embedding (or null) of `atom` at the frame's time.
    pub fn embed(&mut self, state: &ModelState, frame: &mut Frame, atom: &GroundAtom) -> Result<Option<Node>> {
        if let Some(n) = frame.nodes.get(atom) {
            return Ok(*n);
        }
        let node = if state.db.is_fact(atom) { Some(self.compute_node(state, frame, atom)?) } else { None };
        frame.nodes.insert(atom.clone(), node);
        Ok(node)
    }

    fn input_embeddings(
        &mut self,
        state: &ModelState,
        frame: &mut Frame,
        atoms: &[&GroundAtom],
    ) -> Result<(Vec<Option<Var>>, Vec<usize>)> {
        let program = self.model.program();
        let mut xs = Vec::with_capacity(atoms.len());
        let mut dims = Vec::with_capacity(atoms.len());
        for a in atoms {
            let d = program.dim(&a.functor);
            dims.push(d);
            xs.push(if d == 0 {
                None
            } else {
                match self.embed(state, frame, a)? {
                    Some(n) => n.embedding,
                    // Only an update trigger can be a non-fact here.
                    None => Some(self.graph.zeros(d)),
                }
            });
        }
        Ok((xs, dims))
    }

    fn compute_node(&mut self, state: &ModelState, frame: &mut Frame, atom: &GroundAtom) -> Result<Node> {
        let program = self.model.program();
        let cell_dim = program.cell_dim(&atom.functor);
        if cell_dim == 0 {
            return Ok(Node { embedding: None, event_pre: None });
        }
        let mut terms = Vec::new();
        if let Some(cell) = state.cells.get(atom) {
            terms.push(self.cell_value(cell, frame.t)?);
        }
        let proofs = state.db.proofs_of(atom);
        let mut i = 0;
        while i < proofs.len() {
            let rule = proofs[i].rule;
            let mut j = i;
            let mut images = Vec::new();
            let net = self.model.net(rule).expect("deductive rules have parameters");
            while j < proofs.len() && proofs[j].rule == rule {
                let p = &proofs[j];
                let body: Vec<&GroundAtom> = p.body.iter().collect();
                let (xs, dims) = self.input_embeddings(state, frame, &body)?;
                if let Some(v) = self.affine(net, &xs, &dims, &p.binding)? {
                    images.push(v);
                }
                j += 1;
            }
            if !images.is_empty() {
                if images.len() < j - i {
                    // Zero-matrix instantiations still count in the pool.
                    let z = self.graph.zeros(cell_dim);
                    images.resize(j - i, z);
                }
                terms.push(self.pool(&images, net.beta.as_ref())?);
            }
            i = j;
        }
        let pre = match terms.len() {
            0 => self.graph.zeros(cell_dim),
            1 => terms[0],
            _ => self.graph.sum_list(&terms)?,
        };
        let d = program.dim(&atom.functor);
        let embedding = if d > 0 {
            let head = self.graph.slice(pre, 0, d)?;
            Some(self.graph.tanh(head)?)
        } else {
            None
        };
        let event_pre = if program.is_event(&atom.functor) { Some(self.graph.slice(pre, d, 1)?) } else { None };
        Ok(Node { embedding, event_pre })
    }

    /// Intensity pre-activation of a possible event.
    pub fn event_preactivation(&mut self, state: &ModelState, frame: &mut Frame, event: &GroundAtom) -> Result<Var> {
        match self.embed(state, frame, event)?.and_then(|n| n.event_pre) {
            Some(v) => Ok(v),
            None => Err(crate::error::NdttError::Prediction(format!("`{event}` is not a possible event"))),
        }
    }

    /// Intensity `λ_e(t)`: softplus with the functor's scale in continuous
    /// mode, `exp` in discrete mode.
    pub fn intensity(&mut self, state: &ModelState, frame: &mut Frame, event: &GroundAtom) -> Result<Var> {
        let x = self.event_preactivation(state, frame, event)?;
        match self.model.mode() {
            TimeMode::Continuous => {
                let tau = self.tau(&event.functor)?;
                Ok(self.graph.softplus_scaled(x, tau)?)
            }
            TimeMode::Discrete => Ok(self.graph.exp(x)?),
        }
    }

    /// Intensities of `events` at `t`, in the given order.
    pub fn intensities(&mut self, state: &ModelState, t: f64, events: &[GroundAtom]) -> Result<Vec<Var>> {
        let mut frame = self.frame(t);
        events.iter().map(|e| self.intensity(state, &mut frame, e)).collect()
    }

    /// Numeric intensities of every possible event at `t`.
    pub fn intensity_values(&mut self, state: &ModelState, t: f64) -> Result<Vec<(GroundAtom, f64)>> {
        let events = self.possible(state);
        let vars = self.intensities(state, t, &events)?;
        Ok(events.into_iter().zip(vars).map(|(e, v)| (e, self.graph.scalar(v))).collect())
    }

    /// Processes the events that occur together at time `t`: pre-activations
    /// against the current state, then docking, cell updates and the new
    /// fixpoint.
    pub fn step(&mut self, state: &ModelState, events: &[GroundAtom], t: f64) -> Result<(ModelState, Transition)> {
        let model = self.model;
        let program = model.program();
        let matches = match_updates(program, &state.db, events);
        let mut frame = self.frame(t);
        let mut pending: BTreeMap<GroundAtom, BTreeMap<usize, Vec<Var>>> = BTreeMap::new();
        for m in matches.iter().filter(|m| m.polarity == Polarity::Add) {
            let net = model.net(m.rule).expect("add rules have parameters");
            if net.cell == 0 {
                continue;
            }
            let mut atoms: Vec<&GroundAtom> = vec![&m.trigger];
            atoms.extend(m.body.iter());
            let (xs, dims) = self.input_embeddings(state, &mut frame, &atoms)?;
            let z = match self.affine(net, &xs, &dims, &m.binding)? {
                Some(z) => z,
                None => self.graph.zeros(net.rows),
            };
            pending.entry(m.head.clone()).or_default().entry(m.rule).or_default().push(z);
        }
        let (db, transition) = apply_updates(program, &state.db, &matches, t)?;
        let mut cells = state.cells.clone();
        for h in &transition.docked {
            cells.remove(h);
        }
        for (head, per_rule) in pending {
            let prev = if transition.docked.contains(&head) { None } else { state.cells.get(&head).copied() };
            let cell = match model.mode() {
                TimeMode::Discrete => self.update_discrete(prev, &per_rule, t)?,
                TimeMode::Continuous => self.update_continuous(prev, &per_rule, t)?,
            };
            cells.insert(head, cell);
        }
        Ok((ModelState { db, cells }, transition))
    }

    fn gates(&mut self, z: Var, n: usize, count: usize) -> Result<Vec<Var>> {
        let s = self.graph.sigmoid(z)?;
        (0..count).map(|k| Ok(self.graph.slice(s, k * n, n)?)).collect()
    }

    /// `(f − 1)·c + i·(2z − 1)`.
    fn increment(&mut self, f: Var, i: Var, z: Var, c: Var) -> Result<Var> {
        let f1 = self.graph.add_const(f, -1.0)?;
        let keep = self.graph.mul(f1, c)?;
        let z2 = self.graph.scale(z, 2.0)?;
        let z2 = self.graph.add_const(z2, -1.0)?;
        let write = self.graph.mul(i, z2)?;
        Ok(self.graph.add(keep, write)?)
    }

    fn beta_of(&self, rule: usize) -> Option<&'m NameTemplate> {
        self.model.net(rule).and_then(|n| n.beta.as_ref())
    }

    fn update_discrete(&mut self, prev: Option<Cell>, per_rule: &BTreeMap<usize, Vec<Var>>, t: f64) -> Result<Cell> {
        let n = self.model.net(*per_rule.keys().next().unwrap()).unwrap().cell;
        let c = match prev {
            Some(cell) => self.cell_value(&cell, t)?,
            None => self.graph.zeros(n),
        };
        let mut total = vec![c];
        for (&rule, zs) in per_rule {
            let mut incs = Vec::with_capacity(zs.len());
            for &z in zs {
                let g = self.gates(z, n, 3)?;
                incs.push(self.increment(g[0], g[1], g[2], c)?);
            }
            total.push(self.pool(&incs, self.beta_of(rule))?);
        }
        Ok(Cell::Discrete { c: self.graph.sum_list(&total)? })
    }

    fn update_continuous(&mut self, prev: Option<Cell>, per_rule: &BTreeMap<usize, Vec<Var>>, t: f64) -> Result<Cell> {
        let n = self.model.net(*per_rule.keys().next().unwrap()).unwrap().cell;
        let frozen = self.model.frozen_drift();
        let (c, target, prev_decay) = match prev {
            Some(cell @ Cell::Continuous { target, decay, .. }) => (self.cell_value(&cell, t)?, target, Some(decay)),
            Some(Cell::Discrete { .. }) => unreachable!("continuous sessions hold continuous cells"),
            None => (self.graph.zeros(n), self.graph.zeros(n), None),
        };
        let mut rules: Vec<(Option<&NameTemplate>, Vec<ContinuousDelta>)> = Vec::new();
        for (&rule, zs) in per_rule {
            let mut deltas = Vec::with_capacity(zs.len());
            for &z in zs {
                let g = self.gates(z, n, 6)?;
                let start = self.increment(g[0], g[1], g[2], c)?;
                let target_inc = self.increment(g[3], g[4], g[5], target)?;
                let raw = self.graph.slice(z, 6 * n, n)?;
                let one = self.one()?;
                let decay = self.graph.softplus_scaled(raw, one)?;
                deltas.push(ContinuousDelta { start, target: target_inc, decay });
            }
            rules.push((self.beta_of(rule), deltas));
        }
        let mut start_terms = vec![c];
        let mut target_terms = vec![target];
        for (beta, deltas) in &rules {
            let starts: Vec<Var> = deltas.iter().map(|d| d.start).collect();
            start_terms.push(self.pool(&starts, *beta)?);
            if !frozen {
                let targets: Vec<Var> = deltas.iter().map(|d| d.target).collect();
                target_terms.push(self.pool(&targets, *beta)?);
            }
        }
        let new_start = self.graph.sum_list(&start_terms)?;
        let new_target = self.graph.sum_list(&target_terms)?;
        if frozen {
            let decay = self.graph.zeros(n);
            return Ok(Cell::Continuous { start_time: t, start: new_start, target: new_target, decay });
        }
        let decay = self.pooled_decay(&rules, new_start, new_target, prev_decay, n)?;
        Ok(Cell::Continuous { start_time: t, start: new_start, target: new_target, decay })
    }

    /// Attribution of a rule's pooled magnitude to each instantiation:
    /// `pool(|u|) · |u_m|^β / Σ|u_m'|^β`, taken as 0 where all `u` vanish.
    fn attributions(&mut self, us: &[Var], beta: Option<&NameTemplate>, n: usize) -> Result<Vec<Var>> {
        if us.len() == 1 {
            return Ok(vec![self.graph.abs(us[0])?]);
        }
        let beta = self.beta(beta.expect("rules with several instantiations have a body"))?;
        let mut powered = Vec::with_capacity(us.len());
        for &u in us {
            powered.push(self.graph.abs_pow(u, beta)?);
        }
        let total = self.graph.sum_list(&powered)?;
        let mask: Vec<bool> = self.graph.value(total).data().iter().map(|&s| s > 0.0).collect();
        let pooled = self.graph.signed_root(total, beta)?;
        let ones = self.graph.constant(Tensor::filled(n, 1, 1.0))?;
        let safe = self.graph.select(mask.clone(), total, ones)?;
        let ratio = self.graph.div(pooled, safe)?;
        let zeros = self.graph.zeros(n);
        let mut out = Vec::with_capacity(us.len());
        for p in powered {
            let share = self.graph.mul(p, ratio)?;
            out.push(self.graph.select(mask.clone(), share, zeros)?);
        }
        Ok(out)
    }

    /// Weighted harmonic mean of the proposed decays. Coordinates whose
    /// weights are all zero keep the previous decay, or for a new block
    /// take the unweighted harmonic mean.
    fn pooled_decay(
        &mut self,
        rules: &[(Option<&NameTemplate>, Vec<ContinuousDelta>)],
        new_start: Var,
        new_target: Var,
        prev_decay: Option<Var>,
        n: usize,
    ) -> Result<Var> {
        let gap = self.graph.sub(new_target, new_start)?;
        let smooth = self.graph.abs(gap)?;
        let mut weights = Vec::new();
        let mut inverse = Vec::new();
        let mut decays = Vec::new();
        for (beta, deltas) in rules {
            let starts: Vec<Var> = deltas.iter().map(|d| d.start).collect();
            let targets: Vec<Var> = deltas.iter().map(|d| d.target).collect();
            let a = self.attributions(&starts, *beta, n)?;
            let b = self.attributions(&targets, *beta, n)?;
            for ((d, a), b) in deltas.iter().zip(a).zip(b) {
                let w = self.graph.sum_list(&[a, b, smooth])?;
                weights.push(w);
                inverse.push(self.graph.div(w, d.decay)?);
                decays.push(d.decay);
            }
        }
        if decays.len() == 1 {
            return Ok(decays[0]);
        }
        let num = self.graph.sum_list(&weights)?;
        let den = self.graph.sum_list(&inverse)?;
        let mask: Vec<bool> = self.graph.value(num).data().iter().map(|&w| w > 0.0).collect();
        let ones = self.graph.constant(Tensor::filled(n, 1, 1.0))?;
        let safe = self.graph.select(mask.clone(), den, ones)?;
        let weighted = self.graph.div(num, safe)?;
        if mask.iter().all(|&m| m) {
            return Ok(weighted);
        }
        let fallback = match prev_decay {
            Some(d) => d,
            None => {
                let mut recips = Vec::with_capacity(decays.len());
                for &d in &decays {
                    recips.push(self.graph.div(ones, d)?);
                }
                let s = self.graph.sum_list(&recips)?;
                let k = self.graph.constant(Tensor::filled(n, 1, decays.len() as f64))?;
                self.graph.div(k, s)?
            }
        };
        Ok(self.graph.select(mask, weighted, fallback)?)
    }

    /// Numeric copy of `state`, independent of any graph.
    pub fn snapshot(&self, state: &ModelState) -> Snapshot {
        let g = &self.graph;
        let cells = state
            .cells
            .iter()
            .map(|(atom, cell)| {
                let v = match *cell {
                    Cell::Discrete { c } => CellValue::Discrete { c: g.value(c).clone() },
                    Cell::Continuous { start_time, start, target, decay } => CellValue::Continuous {
                        start_time,
                        start: g.value(start).clone(),
                        target: g.value(target).clone(),
                        decay: g.value(decay).clone(),
                    },
                };
                (atom.clone(), v)
            })
            .collect();
        Snapshot { db: state.db.clone(), cells }
    }

    /// Places a snapshot on this session's graph as constants.
    pub fn restore(&mut self, snapshot: &Snapshot) -> Result<ModelState> {
        let mut cells = BTreeMap::new();
        for (atom, v) in &snapshot.cells {
            let cell = match v {
                CellValue::Discrete { c } => Cell::Discrete { c: self.graph.constant(c.clone())? },
                CellValue::Continuous { start_time, start, target, decay } => Cell::Continuous {
                    start_time: *start_time,
                    start: self.graph.constant(start.clone())?,
                    target: self.graph.constant(target.clone())?,
                    decay: self.graph.constant(decay.clone())?,
                },
            };
            cells.insert(atom.clone(), cell);
        }
        Ok(ModelState { db: snapshot.db.clone(), cells })
    }

    /// Copies `state` onto a fresh graph as constants, dropping the history.
    pub fn detach(&mut self, state: &ModelState) -> Result<ModelState> {
        let snapshot = self.snapshot(state);
        self.graph = Graph::new();
        self.params.clear();
        self.betas.clear();
        self.taus.clear();
        self.one = None;
        self.restore(&snapshot)
    }

    /// Absolute sum of the intensity row of one instantiation's weights.
    fn intensity_row_bound(&mut self, net: &RuleNet, binding: &[Symbol], row: usize) -> Result<f64> {
        let mut total = 0.0;
        let row_abs = |w: &Tensor| (0..w.cols()).map(|j| w.get(row, j).abs()).sum::<f64>();
        match &net.weights {
            WeightNet::Split { bias, slots } => {
                if let Some(b) = bias {
                    total += row_abs(&self.value(&b.ground(binding), net.weight_spec(1))?);
                }
                for slot in slots {
                    if let (Some(name), true) = (&slot.name, slot.cols > 0) {
                        total += row_abs(&self.value(&name.ground(binding), net.weight_spec(slot.cols))?);
                    }
                }
            }
            WeightNet::Full { name: Some(name), cols, .. } => {
                total += row_abs(&self.value(&name.ground(binding), net.weight_spec(*cols))?);
            }
            WeightNet::Full { name: None, .. } => {}
        }
        Ok(total)
    }

    /// Upper bound on `λ_e(t)` for every `t ≥ state time` until the next
    /// event: embeddings lie in (−1, 1), pooling with β ≥ 1 never exceeds
    /// the sum of magnitudes, and a drifting cell stays between its start
    /// and target values.
    pub fn intensity_bound(&mut self, state: &ModelState, event: &GroundAtom) -> Result<f64> {
        let program = self.model.program();
        let row = program.dim(&event.functor);
        let mut bound = 0.0;
        if let Some(Cell::Continuous { start, target, .. }) = state.cells.get(event) {
            let s = self.graph.value(*start).get(row, 0).abs();
            let g = self.graph.value(*target).get(row, 0).abs();
            bound += s.max(g);
        }
        for p in state.db.proofs_of(event) {
            let net = self.model.net(p.rule).expect("deductive rules have parameters");
            bound += self.intensity_row_bound(net, &p.binding, row)?;
        }
        let tau = self.tau_value(&event.functor)?;
        Ok(softplus_scaled(bound, tau))
    }

    /// One trace record: every fact's embedding and every possible event's
    /// intensity at `t`.
    pub fn trace_record(&mut self, state: &ModelState, t: f64) -> Result<serde_json::Value> {
        let mut frame = self.frame(t);
        let mut facts = serde_json::Map::new();
        let atoms: Vec<GroundAtom> = state.db.facts().iter().cloned().collect();
        for a in &atoms {
            let node = self.embed(state, &mut frame, a)?.expect("facts have embeddings");
            let values: Vec<f64> = node.embedding.map(|v| self.graph.value(v).data().to_vec()).unwrap_or_default();
            facts.insert(a.to_string(), serde_json::json!(values));
        }
        let mut intensities = serde_json::Map::new();
        for e in self.possible(state) {
            let v = self.intensity(state, &mut frame, &e)?;
            intensities.insert(e.to_string(), serde_json::json!(self.graph.scalar(v)));
        }
        Ok(serde_json::json!({ "time": t, "embeddings": facts, "intensities": intensities }))
    }
}
