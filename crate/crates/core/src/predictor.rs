//! Minimum-Bayes-risk prediction: the expected next-event time and the most
//! intense event type at a known time.

use std::collections::BTreeMap;

use ndtt_autodiff::ParameterStore;
use ndtt_logic::{GroundAtom, TimeMode};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{EventSequence, Token};
use crate::error::{NdttError, Result};
use crate::generator::total_bound;
use crate::likelihood::{groups, impossible, with_init};
use crate::model::Model;
use crate::neural::{ModelState, Session, Snapshot};
use crate::seed::stream;

const PREDICT_TAG: u64 = 3;
/// Proposals per draw before a time prediction gives up.
const MAX_PROPOSALS: usize = 1_000_000;

/// Which events `predict_type` may return.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Restriction {
    #[default]
    None,
    /// Only events with this functor.
    Functor(String),
    /// Only events matching the pattern; `None` arguments match anything.
    Pattern { functor: String, args: Vec<Option<String>> },
    /// Only events sharing the functor of the true event.
    TrueFunctor,
}

impl Restriction {
    /// Parses `help` or a pattern such as `help(eve,_)`, where `_` and
    /// capitalized names are wildcards.
    pub fn parse(text: &str) -> Result<Restriction> {
        let bad = || NdttError::Config(format!("invalid restriction `{text}`"));
        let text = text.trim();
        let ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_');
        let Some(open) = text.find('(') else {
            return if ident(text) { Ok(Restriction::Functor(text.to_string())) } else { Err(bad()) };
        };
        let functor = &text[..open];
        let inner = text[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        if !ident(functor) {
            return Err(bad());
        }
        let args = inner
            .split(',')
            .map(|a| {
                let a = a.trim();
                if !ident(a) {
                    Err(bad())
                } else if a == "_" || a.starts_with(|c: char| c.is_uppercase()) {
                    Ok(None)
                } else {
                    Ok(Some(a.to_string()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Restriction::Pattern { functor: functor.to_string(), args })
    }

    /// Whether `event` is a candidate when `truth` actually happened.
    pub fn admits(&self, event: &GroundAtom, truth: Option<&GroundAtom>) -> bool {
        match self {
            Restriction::None => true,
            Restriction::Functor(f) => &*event.functor == f,
            Restriction::Pattern { functor, args } => {
                &*event.functor == functor
                    && event.args.len() == args.len()
                    && event.args.iter().zip(args).all(|(a, p)| p.as_ref().is_none_or(|p| &**a == p))
            }
            Restriction::TrueFunctor => truth.is_none_or(|t| t.functor == event.functor),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictConfig {
    /// Thinning draws averaged per time prediction.
    pub samples: usize,
    pub restriction: Restriction,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig { samples: 100, restriction: Restriction::None, seed: 0 }
    }
}

/// One thinning draw of the first modeled event time after `state`, with
/// `exogenous` (time-sorted, not before the state's time) applied on the
/// way. `None` when no event can ever occur.
pub fn draw_next_time(
    session: &mut Session<'_>,
    state: &ModelState,
    exogenous: &[Token],
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    let mut state = state.clone();
    let mut t = state.time();
    let mut next = 0;
    let mut bound = total_bound(session, &state)?;
    for _ in 0..MAX_PROPOSALS {
        let candidate = if bound > 0.0 { t - (1.0 - rng.gen::<f64>()).ln() / bound } else { f64::INFINITY };
        if let Some(x) = exogenous.get(next).map(|x| x.time).filter(|&x| x <= candidate) {
            let mut events = Vec::new();
            while next < exogenous.len() && exogenous[next].time == x {
                events.push(exogenous[next].event.clone());
                next += 1;
            }
            state = session.step(&state, &events, x)?.0;
            t = x;
            bound = total_bound(session, &state)?;
            continue;
        }
        if !candidate.is_finite() {
            return Ok(None);
        }
        t = candidate;
        let total: f64 = session.intensity_values(&state, t)?.iter().map(|(_, l)| l).sum();
        if total > bound * (1.0 + 1e-9) {
            return Err(NdttError::BoundViolation { time: t, intensity: total, bound });
        }
        if rng.gen::<f64>() * bound <= total {
            return Ok(Some(t));
        }
    }
    Err(NdttError::Prediction(format!("no event accepted after {MAX_PROPOSALS} proposals")))
}

/// Mean of `samples` next-event times drawn from `snapshot`. In discrete
/// time the next event is always one step later.
pub fn predict_time(
    model: &Model,
    store: &ParameterStore,
    snapshot: &Snapshot,
    exogenous: &[Token],
    samples: usize,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    if model.mode() == TimeMode::Discrete {
        return Ok(Some(snapshot.time().floor() + 1.0));
    }
    let mut sum = 0.0;
    for _ in 0..samples.max(1) {
        let mut session = Session::new(model, store);
        let state = session.restore(snapshot)?;
        match draw_next_time(&mut session, &state, exogenous, rng)? {
            Some(t) => sum += t,
            None => return Ok(None),
        }
    }
    Ok(Some(sum / samples.max(1) as f64))
}

/// The candidate with the largest intensity at `t`; ties go to the first
/// in canonical order. `truth` is the event that happened, if known.
pub fn predict_type(
    model: &Model,
    store: &ParameterStore,
    snapshot: &Snapshot,
    t: f64,
    restriction: &Restriction,
    truth: Option<&GroundAtom>,
) -> Result<GroundAtom> {
    let mut session = Session::new(model, store);
    let state = session.restore(snapshot)?;
    let candidates: Vec<GroundAtom> =
        session.possible(&state).into_iter().filter(|e| restriction.admits(e, truth)).collect();
    if candidates.is_empty() {
        return Err(NdttError::Prediction(format!("no possible event at time {t} satisfies {restriction:?}")));
    }
    let vars = session.intensities(&state, t, &candidates)?;
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in vars.iter().enumerate() {
        let x = session.graph().scalar(*v);
        if x > best_value {
            best = i;
            best_value = x;
        }
    }
    Ok(candidates[best].clone())
}

/// Everything needed to predict one modeled token.
#[derive(Clone, Debug)]
pub struct PredictionTask {
    pub sequence: String,
    /// Index of the token in the sequence as given.
    pub index: usize,
    pub time: f64,
    pub event: GroundAtom,
    /// State just after the previous modeled event.
    pub anchor: Snapshot,
    /// Exogenous tokens after the anchor and strictly before `time`.
    pub exogenous: Vec<Token>,
    /// State just before `time`, cells drifting toward it.
    pub before: Snapshot,
}

/// Replays `seq` once and records a task per modeled token.
pub fn prediction_tasks(model: &Model, store: &ParameterStore, seq: &EventSequence) -> Result<Vec<PredictionTask>> {
    let program = model.program();
    let full = with_init(program, seq);
    let offset = full.tokens.len() - seq.tokens.len();
    let mut session = Session::new(model, store);
    let mut state = session.initial_state()?;
    let mut anchor = session.snapshot(&state);
    let mut pending: Vec<Token> = Vec::new();
    let mut tasks = Vec::new();
    for (t, group) in groups(&full.tokens) {
        let modeled: Vec<&(usize, &Token)> = group.iter().filter(|(_, tok)| !tok.exogenous).collect();
        let before = session.snapshot(&state);
        if !modeled.is_empty() {
            let possible = session.possible(&state);
            for (i, tok) in &modeled {
                if possible.binary_search(&tok.event).is_err() {
                    return Err(impossible(&full, *i, tok, &possible));
                }
                tasks.push(PredictionTask {
                    sequence: seq.id.clone(),
                    index: i - offset,
                    time: t,
                    event: tok.event.clone(),
                    anchor: anchor.clone(),
                    exogenous: pending.clone(),
                    before: before.clone(),
                });
            }
        }
        let events: Vec<GroundAtom> = group.iter().map(|(_, tok)| tok.event.clone()).collect();
        let next = session.step(&state, &events, t)?.0;
        state = session.detach(&next)?;
        if modeled.is_empty() {
            pending.extend(group.iter().map(|(_, tok)| (*tok).clone()));
        } else {
            anchor = session.snapshot(&state);
            pending.clear();
        }
    }
    Ok(tasks)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TokenPrediction {
    pub sequence: String,
    pub index: usize,
    pub true_time: f64,
    pub predicted_time: Option<f64>,
    pub true_event: String,
    pub predicted_event: String,
}

impl TokenPrediction {
    pub fn type_correct(&self) -> bool {
        self.true_event == self.predicted_event
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub num_tokens: usize,
    /// Over tokens that received a time prediction.
    pub time_rmse: f64,
    pub type_error_rate: f64,
    pub time_unpredicted: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PredictionReport {
    pub num_tokens: usize,
    pub time_rmse: f64,
    pub type_error_rate: f64,
    pub time_unpredicted: usize,
    /// Keyed by the true event's functor.
    pub per_functor: BTreeMap<String, ErrorSummary>,
}

fn summarize<'a>(preds: impl Iterator<Item = &'a TokenPrediction>) -> ErrorSummary {
    let (mut n, mut sq, mut timed, mut wrong) = (0usize, 0.0, 0usize, 0usize);
    for p in preds {
        n += 1;
        if let Some(t) = p.predicted_time {
            sq += (t - p.true_time).powi(2);
            timed += 1;
        }
        wrong += usize::from(!p.type_correct());
    }
    ErrorSummary {
        num_tokens: n,
        time_rmse: if timed == 0 { 0.0 } else { (sq / timed as f64).sqrt() },
        type_error_rate: if n == 0 { 0.0 } else { wrong as f64 / n as f64 },
        time_unpredicted: n - timed,
    }
}

pub fn report(preds: &[TokenPrediction]) -> PredictionReport {
    let all = summarize(preds.iter());
    let mut functors: BTreeMap<String, Vec<&TokenPrediction>> = BTreeMap::new();
    for p in preds {
        let f = p.true_event.split('(').next().unwrap_or_default().to_string();
        functors.entry(f).or_default().push(p);
    }
    PredictionReport {
        num_tokens: all.num_tokens,
        time_rmse: all.time_rmse,
        type_error_rate: all.type_error_rate,
        time_unpredicted: all.time_unpredicted,
        per_functor: functors.into_iter().map(|(f, ps)| (f, summarize(ps.into_iter()))).collect(),
    }
}

/// Which parts of a prediction to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tasks {
    pub time: bool,
    pub kind: bool,
}

impl Tasks {
    pub const BOTH: Tasks = Tasks { time: true, kind: true };
}

/// Predicts every modeled token of every sequence. Token `j` of sequence
/// `s` draws from the stream `(seed, s, j)`.
pub fn predict_all(
    model: &Model,
    store: &ParameterStore,
    seqs: &[EventSequence],
    config: &PredictConfig,
    which: Tasks,
) -> Result<Vec<TokenPrediction>> {
    let tasks: Vec<(usize, usize, PredictionTask)> = seqs
        .par_iter()
        .enumerate()
        .map(|(s, seq)| {
            Ok(prediction_tasks(model, store, seq)?.into_iter().enumerate().map(|(j, t)| (s, j, t)).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    tasks
        .into_par_iter()
        .map(|(s, j, task)| {
            let mut rng = stream(config.seed, &[PREDICT_TAG, s as u64, j as u64]);
            let predicted_time = if which.time {
                predict_time(model, store, &task.anchor, &task.exogenous, config.samples, &mut rng)?
            } else {
                None
            };
            let predicted_event = if which.kind {
                predict_type(model, store, &task.before, task.time, &config.restriction, Some(&task.event))?.to_string()
            } else {
                String::new()
            };
            Ok(TokenPrediction {
                sequence: task.sequence,
                index: task.index,
                true_time: task.time,
                predicted_time,
                true_event: task.event.to_string(),
                predicted_event,
            })
        })
        .collect()
}

/// Time RMSE and type error rate over every modeled token.
pub fn evaluate_predictions(
    model: &Model,
    store: &ParameterStore,
    seqs: &[EventSequence],
    config: &PredictConfig,
) -> Result<(PredictionReport, Vec<TokenPrediction>)> {
    let preds = predict_all(model, store, seqs, config, Tasks::BOTH)?;
    Ok((report(&preds), preds))
}
