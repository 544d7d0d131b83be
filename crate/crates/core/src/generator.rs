//! Sampling event sequences: thinning in continuous time, categorical draws
//! in discrete time.

use ndtt_autodiff::ParameterStore;
use ndtt_logic::{init_event, GroundAtom, TimeMode};
use rand::Rng;
use rayon::prelude::*;

use crate::data::{EventSequence, Token};
use crate::error::{NdttError, Result};
use crate::model::Model;
use crate::neural::{ModelState, Session};
use crate::seed::stream;

/// Graph size beyond which a sampling session drops its history.
const DETACH_NODES: usize = 20_000;
/// Relative slack allowed when comparing an intensity with its bound.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Stop after this many sampled events; the horizon becomes the last
    /// event time.
    Count(usize),
    /// Stop at this time.
    Horizon(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub stop: StopRule,
    /// Time-sorted exogenous events merged into the simulation.
    pub exogenous: Vec<Token>,
}

impl SamplerConfig {
    pub fn new(stop: StopRule) -> Self {
        SamplerConfig { stop, exogenous: Vec::new() }
    }
}

/// The exogenous track with `init` at time 0 when the program needs it.
fn exogenous_track(model: &Model, given: &[Token]) -> (Vec<Token>, bool) {
    let init = init_event();
    let mut track: Vec<Token> = given.to_vec();
    let added = model.program().mentions_init() && !track.iter().any(|t| t.time == 0.0 && t.event == init);
    if added {
        track.insert(0, Token { time: 0.0, event: init, exogenous: true });
    }
    (track, added)
}

/// Picks an index with probability proportional to `weights`.
pub fn categorical(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// Sum of the per-event intensity bounds of `state`.
pub fn total_bound(session: &mut Session<'_>, state: &ModelState) -> Result<f64> {
    let mut b = 0.0;
    for e in session.possible(state) {
        b += session.intensity_bound(state, &e)?;
    }
    Ok(b)
}

/// Applies the exogenous events at index `*next` and all that share its time.
fn apply_exogenous(
    session: &mut Session<'_>,
    state: ModelState,
    track: &[Token],
    next: &mut usize,
) -> Result<(ModelState, f64)> {
    let t = track[*next].time;
    let mut events = Vec::new();
    while *next < track.len() && track[*next].time == t {
        events.push(track[*next].event.clone());
        *next += 1;
    }
    let (s, _) = session.step(&state, &events, t)?;
    Ok((session.detach(&s)?, t))
}

/// One continuous-time sequence by thinning.
pub fn sample_continuous(
    model: &Model,
    store: &ParameterStore,
    config: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<EventSequence> {
    let (track, added_init) = exogenous_track(model, &config.exogenous);
    let mut session = Session::new(model, store);
    let mut state = session.initial_state()?;
    let mut t = 0.0;
    let mut next_exo = 0;
    let mut tokens: Vec<Token> = Vec::new();
    let mut sampled = 0usize;
    let horizon = match config.stop {
        StopRule::Horizon(h) => h,
        StopRule::Count(_) => f64::INFINITY,
    };
    let done = |sampled: usize| matches!(config.stop, StopRule::Count(n) if sampled >= n);
    while next_exo < track.len() && track[next_exo].time <= t {
        let first = next_exo;
        (state, _) = apply_exogenous(&mut session, state, &track, &mut next_exo)?;
        tokens.extend(track[first..next_exo].iter().cloned());
    }
    let mut bound = total_bound(&mut session, &state)?;
    while !done(sampled) {
        let exo_time = track.get(next_exo).map(|x| x.time).filter(|&x| x <= horizon);
        let candidate = if bound > 0.0 { t - (1.0 - rng.gen::<f64>()).ln() / bound } else { f64::INFINITY };
        if let Some(x) = exo_time.filter(|&x| x <= candidate) {
            let first = next_exo;
            (state, t) = apply_exogenous(&mut session, state, &track, &mut next_exo)?;
            tokens.extend(track[first..next_exo].iter().cloned());
            debug_assert_eq!(t, x);
            bound = total_bound(&mut session, &state)?;
            continue;
        }
        if candidate > horizon || !candidate.is_finite() {
            break;
        }
        t = candidate;
        let lambdas = session.intensity_values(&state, t)?;
        let total: f64 = lambdas.iter().map(|(_, l)| l).sum();
        if total > bound * (1.0 + BOUND_SLACK) {
            return Err(NdttError::BoundViolation { time: t, intensity: total, bound });
        }
        if rng.gen::<f64>() * bound <= total {
            let weights: Vec<f64> = lambdas.iter().map(|(_, l)| *l).collect();
            let e = lambdas[categorical(&weights, rng)].0.clone();
            let (s, _) = session.step(&state, std::slice::from_ref(&e), t)?;
            state = session.detach(&s)?;
            tokens.push(Token { time: t, event: e, exogenous: false });
            sampled += 1;
            bound = total_bound(&mut session, &state)?;
        } else if session.graph().len() > DETACH_NODES {
            state = session.detach(&state)?;
        }
    }
    if added_init {
        tokens.retain(|tok| !(tok.exogenous && tok.time == 0.0 && tok.event == init_event()));
    }
    let end = match config.stop {
        StopRule::Horizon(h) => h,
        StopRule::Count(_) => tokens.iter().filter(|t| !t.exogenous).map(|t| t.time).fold(0.0, f64::max),
    };
    tokens.retain(|tok| tok.time <= end);
    Ok(EventSequence::new("sampled", tokens, end))
}

/// One discrete-time sequence of `steps` categorical draws. Exogenous
/// events at step `k` occur together with the draw of step `k`.
pub fn sample_discrete(
    model: &Model,
    store: &ParameterStore,
    steps: usize,
    exogenous: &[Token],
    rng: &mut impl Rng,
) -> Result<EventSequence> {
    let (track, added_init) = exogenous_track(model, exogenous);
    let mut session = Session::new(model, store);
    let mut state = session.initial_state()?;
    let mut next_exo = 0;
    let mut tokens = Vec::new();
    while next_exo < track.len() && track[next_exo].time == 0.0 {
        let first = next_exo;
        (state, _) = apply_exogenous(&mut session, state, &track, &mut next_exo)?;
        tokens.extend(track[first..next_exo].iter().cloned());
    }
    for step in 1..=steps {
        let t = step as f64;
        let possible = session.possible(&state);
        if possible.is_empty() {
            return Err(NdttError::NoPossibleEvents { step });
        }
        let mut frame = session.frame(t);
        let mut pre = Vec::with_capacity(possible.len());
        for e in &possible {
            let v = session.event_preactivation(&state, &mut frame, e)?;
            pre.push(session.graph().scalar(v));
        }
        let m = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = pre.iter().map(|x| (x - m).exp()).collect();
        let e = possible[categorical(&weights, rng)].clone();
        let mut events = vec![e.clone()];
        tokens.push(Token { time: t, event: e, exogenous: false });
        while next_exo < track.len() && track[next_exo].time <= t {
            events.push(track[next_exo].event.clone());
            tokens.push(track[next_exo].clone());
            next_exo += 1;
        }
        let (s, _) = session.step(&state, &events, t)?;
        state = session.detach(&s)?;
    }
    if added_init {
        tokens.retain(|tok| !(tok.exogenous && tok.time == 0.0 && tok.event == init_event()));
    }
    Ok(EventSequence::new("sampled", tokens, steps as f64))
}

/// `count` independent sequences; sequence `i` uses the stream `(seed, i)`.
pub fn sample_many(
    model: &Model,
    store: &ParameterStore,
    config: &SamplerConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<EventSequence>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[i as u64]);
            let mut seq = match model.mode() {
                TimeMode::Continuous => sample_continuous(model, store, config, &mut rng)?,
                TimeMode::Discrete => {
                    let steps = match config.stop {
                        StopRule::Count(n) => n,
                        StopRule::Horizon(h) => h.floor() as usize,
                    };
                    sample_discrete(model, store, steps, &config.exogenous, &mut rng)?
                }
            };
            seq.id = format!("seq_{i:05}");
            Ok(seq)
        })
        .collect()
}

/// Events possible after replaying `seq`, for inspection.
pub fn final_possible(model: &Model, store: &ParameterStore, seq: &EventSequence) -> Result<Vec<GroundAtom>> {
    let mut session = Session::new(model, store);
    let mut state = session.initial_state()?;
    let seq = crate::likelihood::with_init(model.program(), seq);
    for (t, group) in crate::likelihood::groups(&seq.tokens) {
        let events: Vec<GroundAtom> = group.iter().map(|(_, tok)| tok.event.clone()).collect();
        state = session.step(&state, &events, t)?.0;
    }
    Ok(session.possible(&state))
}
