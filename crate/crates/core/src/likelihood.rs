//! Log-likelihood of an event sequence under a model.
//!
//! Continuous time: `Σ log λ_{e_i}(t_i) − ∫₀ᵀ λ(t) dt`, with the integral
//! estimated at sample times. Discrete time: `Σ_t log λ_{e_t}(t) − log Σ_{e∈E(t)} λ_e(t)`.

use std::borrow::Cow;

use ndtt_autodiff::{ParameterStore, Var};
use ndtt_logic::{init_event, GroundAtom, Program, TimeMode};
use rand::Rng;

use crate::data::{EventSequence, Token};
use crate::error::{NdttError, Result};
use crate::model::Model;
use crate::neural::{ModelState, Session};

/// How to place the integral's evaluation points.
#[derive(Clone, Debug, PartialEq)]
pub enum Integral {
    /// `⌈multiplier · I⌉` uniform draws on `[0, T]` (at least one when `T > 0`).
    MonteCarlo { multiplier: f64 },
    /// Caller-chosen times on `[0, T]`, each weighted `T / n`.
    Fixed(Vec<f64>),
    /// Midpoint rule with `per_interval` points on every inter-event
    /// interval. Exact for intensities that are constant between events.
    Midpoint { per_interval: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodOptions {
    pub integral: Integral,
    /// Events drawn (with replacement) per evaluation of `λ(t)`; 0 sums
    /// over every possible event.
    pub downsample: usize,
}

impl Default for LikelihoodOptions {
    fn default() -> Self {
        LikelihoodOptions { integral: Integral::MonteCarlo { multiplier: 1.0 }, downsample: 10 }
    }
}

impl LikelihoodOptions {
    pub fn exact_sum(integral: Integral) -> Self {
        LikelihoodOptions { integral, downsample: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct LogLikReport {
    pub event_term: f64,
    /// Integral estimate (continuous) or sum of log normalizers (discrete).
    pub integral_term: f64,
    pub total: f64,
    pub num_events: usize,
    pub mc_samples: usize,
    pub downsample: usize,
}

/// A differentiable log-likelihood on a session graph.
#[derive(Clone, Debug)]
pub struct Scored {
    pub total: Var,
    pub report: LogLikReport,
    /// Integral evaluation times actually used.
    pub sample_times: Vec<f64>,
}

/// The sequence with `init` prepended at time 0 when the program mentions
/// `init` and the data does not already start with it.
pub fn with_init<'a>(program: &Program, seq: &'a EventSequence) -> Cow<'a, EventSequence> {
    let init = init_event();
    let has = seq.tokens.iter().any(|t| t.time == 0.0 && t.event == init);
    if !program.mentions_init() || has {
        return Cow::Borrowed(seq);
    }
    let mut s = seq.clone();
    s.tokens.insert(0, Token { time: 0.0, event: init, exogenous: true });
    Cow::Owned(s)
}

/// Tokens grouped by identical time.
pub(crate) fn groups(tokens: &[Token]) -> Vec<(f64, Vec<(usize, &Token)>)> {
    let mut out: Vec<(f64, Vec<(usize, &Token)>)> = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        match out.last_mut() {
            Some((time, g)) if *time == t.time => g.push((i, t)),
            _ => out.push((t.time, vec![(i, t)])),
        }
    }
    out
}

pub(crate) fn impossible(seq: &EventSequence, index: usize, token: &Token, possible: &[GroundAtom]) -> NdttError {
    NdttError::ImpossibleEvent {
        sequence: seq.id.clone(),
        index,
        time: token.time,
        event: token.event.to_string(),
        possible: possible.iter().map(|e| e.to_string()).collect(),
    }
}

/// Evaluation points and weights of the integral.
fn quadrature(integral: &Integral, seq: &EventSequence, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let t_max = seq.horizon;
    match integral {
        Integral::MonteCarlo { multiplier } => {
            if t_max <= 0.0 {
                return Vec::new();
            }
            let n = ((multiplier * seq.num_modeled() as f64).ceil() as usize).max(1);
            let mut ts: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * t_max).collect();
            ts.sort_by(f64::total_cmp);
            ts.into_iter().map(|t| (t, t_max / n as f64)).collect()
        }
        Integral::Fixed(times) => {
            let n = times.len();
            let mut ts = times.clone();
            ts.sort_by(f64::total_cmp);
            ts.into_iter().map(|t| (t, t_max / n as f64)).collect()
        }
        Integral::Midpoint { per_interval } => {
            let k = (*per_interval).max(1);
            let mut cuts = vec![0.0];
            cuts.extend(seq.tokens.iter().map(|t| t.time));
            cuts.push(t_max);
            cuts.dedup();
            let mut out = Vec::new();
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                let h = (b - a) / k as f64;
                out.extend((0..k).map(|j| (a + (j as f64 + 0.5) * h, h)));
            }
            out
        }
    }
}

/// Total intensity at `t`, or its downsampled unbiased estimate.
pub fn total_intensity(
    session: &mut Session<'_>,
    state: &ModelState,
    t: f64,
    downsample: usize,
    rng: &mut impl Rng,
) -> Result<Option<Var>> {
    let events = session.possible(state);
    if events.is_empty() {
        return Ok(None);
    }
    let chosen: Vec<GroundAtom> = if downsample == 0 {
        events.clone()
    } else {
        (0..downsample).map(|_| events[rng.gen_range(0..events.len())].clone()).collect()
    };
    let vars = session.intensities(state, t, &chosen)?;
    let g = session.graph_mut();
    let sum = g.sum_list(&vars)?;
    if downsample == 0 {
        Ok(Some(sum))
    } else {
        Ok(Some(g.scale(sum, events.len() as f64 / downsample as f64)?))
    }
}

/// Differentiable log-likelihood of `seq` on the session's graph.
pub fn score(session: &mut Session<'_>, seq: &EventSequence, opts: &LikelihoodOptions, rng: &mut impl Rng) -> Result<Scored> {
    match session.model().mode() {
        TimeMode::Continuous => score_continuous(session, seq, opts, rng),
        TimeMode::Discrete => score_discrete(session, seq),
    }
}

fn finish(session: &mut Session<'_>, seq: &EventSequence, events: Vec<Var>, integral: Vec<Var>) -> Result<(Var, f64, f64)> {
    let g = session.graph_mut();
    let zero = g.constant_scalar(0.0)?;
    let ev = if events.is_empty() { zero } else { g.sum_list(&events)? };
    let int = if integral.is_empty() { zero } else { g.sum_list(&integral)? };
    let total = g.sub(ev, int)?;
    let (e, i) = (g.scalar(ev), g.scalar(int));
    if !g.scalar(total).is_finite() {
        return Err(NdttError::NonFiniteLoss { sequence: seq.id.clone() });
    }
    Ok((total, e, i))
}

fn score_continuous(
    session: &mut Session<'_>,
    seq: &EventSequence,
    opts: &LikelihoodOptions,
    rng: &mut impl Rng,
) -> Result<Scored> {
    let program = session.model().program();
    let seq = with_init(program, seq);
    let seq = seq.as_ref();
    let points = quadrature(&opts.integral, seq, rng);
    let mut state = session.initial_state()?;
    let mut event_terms = Vec::new();
    let mut integral_terms = Vec::new();
    let mut next_point = 0;
    let mut num_events = 0;
    let groups = groups(&seq.tokens);
    let mut integrate_until = |session: &mut Session<'_>, state: &ModelState, limit: f64, next: &mut usize, rng: &mut _| -> Result<()> {
        while *next < points.len() && points[*next].0 <= limit {
            let (u, w) = points[*next];
            if let Some(v) = total_intensity(session, state, u, opts.downsample, rng)? {
                integral_terms.push(session.graph_mut().scale(v, w)?);
            }
            *next += 1;
        }
        Ok(())
    };
    for (t, group) in &groups {
        integrate_until(session, &state, *t, &mut next_point, rng)?;
        let mut frame = session.frame(*t);
        for (i, tok) in group.iter().filter(|(_, tok)| !tok.exogenous) {
            if !(program.is_event(&tok.event.functor) && state.db.is_fact(&tok.event)) {
                return Err(impossible(seq, *i, tok, &session.possible(&state)));
            }
            let lam = session.intensity(&state, &mut frame, &tok.event)?;
            event_terms.push(session.graph_mut().log(lam)?);
            num_events += 1;
        }
        let events: Vec<GroundAtom> = group.iter().map(|(_, tok)| tok.event.clone()).collect();
        state = session.step(&state, &events, *t)?.0;
    }
    integrate_until(session, &state, f64::INFINITY, &mut next_point, rng)?;
    let (total, event_term, integral_term) = finish(session, seq, event_terms, integral_terms)?;
    Ok(Scored {
        total,
        report: LogLikReport {
            event_term,
            integral_term,
            total: event_term - integral_term,
            num_events,
            mc_samples: points.len(),
            downsample: opts.downsample,
        },
        sample_times: points.iter().map(|p| p.0).collect(),
    })
}

fn score_discrete(session: &mut Session<'_>, seq: &EventSequence) -> Result<Scored> {
    let program = session.model().program();
    seq.check_mode(TimeMode::Discrete)?;
    let seq = with_init(program, seq);
    let seq = seq.as_ref();
    let mut state = session.initial_state()?;
    let mut event_terms = Vec::new();
    let mut normalizers = Vec::new();
    let mut num_events = 0;
    for (t, group) in groups(&seq.tokens) {
        let mut frame = session.frame(t);
        if let Some((i, tok)) = group.iter().find(|(_, tok)| !tok.exogenous) {
            let possible = session.possible(&state);
            let Ok(k) = possible.binary_search(&tok.event) else {
                return Err(impossible(seq, *i, tok, &possible));
            };
            let mut pre = Vec::with_capacity(possible.len());
            for e in &possible {
                pre.push(session.event_preactivation(&state, &mut frame, e)?);
            }
            let g = session.graph_mut();
            let stacked = g.concat(&pre)?;
            normalizers.push(g.log_sum_exp(stacked)?);
            event_terms.push(pre[k]);
            num_events += 1;
        }
        let events: Vec<GroundAtom> = group.iter().map(|(_, tok)| tok.event.clone()).collect();
        state = session.step(&state, &events, t)?.0;
    }
    let (total, event_term, integral_term) = finish(session, seq, event_terms, normalizers)?;
    Ok(Scored {
        total,
        report: LogLikReport {
            event_term,
            integral_term,
            total: event_term - integral_term,
            num_events,
            mc_samples: 0,
            downsample: 0,
        },
        sample_times: Vec::new(),
    })
}

/// Log-likelihood value only.
pub fn loglik(
    model: &Model,
    store: &ParameterStore,
    seq: &EventSequence,
    opts: &LikelihoodOptions,
    rng: &mut impl Rng,
) -> Result<LogLikReport> {
    let mut session = Session::new(model, store);
    Ok(score(&mut session, seq, opts, rng)?.report)
}
