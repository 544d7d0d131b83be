//! Maximum-likelihood training with Adam, one sequence per step, and early
//! stopping on held-out log-likelihood.

use std::collections::BTreeMap;
use std::time::Instant;

use ndtt_autodiff::{Adam, ParameterStore, Tensor};
use rayon::prelude::*;

use crate::data::EventSequence;
use crate::error::Result;
use crate::likelihood::{score, Integral, LikelihoodOptions, LogLikReport};
use crate::model::Model;
use crate::neural::Session;
use crate::seed::stream;

/// Stream tags separating the random draws of each phase.
const TRAIN_TAG: u64 = 1;
const EVAL_TAG: u64 = 2;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub train_likelihood: LikelihoodOptions,
    pub eval_likelihood: LikelihoodOptions,
    pub record_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 20,
            patience: 3,
            seed: 0,
            train_likelihood: LikelihoodOptions::default(),
            eval_likelihood: LikelihoodOptions { downsample: 0, ..LikelihoodOptions::default() },
            record_wallclock: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_ll_per_event: f64,
    pub dev_ll_per_event: f64,
    pub wallclock_s: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best epoch.
    pub store: ParameterStore,
    pub optimizer: Adam,
    pub best_epoch: usize,
    pub best_dev_ll_per_event: f64,
    pub metrics: Vec<EpochMetrics>,
    /// Per-sequence training log-likelihoods of every epoch, in order.
    pub train_losses: Vec<Vec<f64>>,
}

/// Sum of totals over sum of modeled events (0 for no events).
pub fn per_event(reports: &[LogLikReport]) -> f64 {
    let events: usize = reports.iter().map(|r| r.num_events).sum();
    let total: f64 = reports.iter().map(|r| r.total).sum();
    if events == 0 {
        0.0
    } else {
        total / events as f64
    }
}

/// Scores every sequence (in parallel) with its own seeded stream.
pub fn evaluate(
    model: &Model,
    store: &ParameterStore,
    seqs: &[EventSequence],
    opts: &LikelihoodOptions,
    seed: u64,
) -> Result<Vec<LogLikReport>> {
    seqs.par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(seed, &[EVAL_TAG, i as u64]);
            let mut session = Session::new(model, store);
            Ok(score(&mut session, s, opts, &mut rng)?.report)
        })
        .collect()
}

/// Creates every parameter the sequences touch, without updating any.
pub fn materialize(model: &Model, store: &mut ParameterStore, seqs: &[EventSequence], seed: u64) -> Result<Vec<LogLikReport>> {
    let results: Vec<(LogLikReport, BTreeMap<String, Tensor>)> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(seed, &[TRAIN_TAG, 0, i as u64]);
            let mut session = Session::new(model, store);
            let opts = LikelihoodOptions::exact_sum(Integral::Midpoint { per_interval: 1 });
            let r = score(&mut session, s, &opts, &mut rng)?.report;
            Ok((r, session.into_fresh()))
        })
        .collect::<Result<_>>()?;
    let mut reports = Vec::with_capacity(results.len());
    for (r, fresh) in results {
        store.absorb(fresh);
        reports.push(r);
    }
    Ok(reports)
}

/// One pass of minibatch-1 Adam over `seqs` in order. Returns the
/// per-sequence reports (computed before each sequence's update).
pub fn train_epoch(
    model: &Model,
    store: &mut ParameterStore,
    adam: &mut Adam,
    seqs: &[EventSequence],
    opts: &LikelihoodOptions,
    seed: u64,
    epoch: usize,
) -> Result<Vec<LogLikReport>> {
    let mut reports = Vec::with_capacity(seqs.len());
    for (i, seq) in seqs.iter().enumerate() {
        let mut rng = stream(seed, &[TRAIN_TAG, epoch as u64, i as u64]);
        let mut session = Session::new(model, store);
        let scored = score(&mut session, seq, opts, &mut rng)?;
        let loss = session.graph_mut().scale(scored.total, -1.0)?;
        let mut grads = session.graph().backward(loss)?;
        let fresh = session.into_fresh();
        store.absorb(fresh);
        adam.step(store, &mut grads);
        reports.push(scored.report);
    }
    Ok(reports)
}

/// Trains from `store` (typically freshly seeded). Epoch 0 records the
/// initial parameters; with `max_epochs = 0` the result is the
/// initialization itself.
pub fn train(
    model: &Model,
    mut store: ParameterStore,
    train_seqs: &[EventSequence],
    dev_seqs: &[EventSequence],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let clock = |record: bool| if record { started.elapsed().as_secs_f64() } else { 0.0 };
    let mut adam = Adam::new(config.learning_rate);
    materialize(model, &mut store, train_seqs, config.seed)?;
    materialize(model, &mut store, dev_seqs, config.seed)?;
    let dev_score = |store: &ParameterStore, train_pe: f64| -> Result<f64> {
        if dev_seqs.is_empty() {
            return Ok(train_pe);
        }
        Ok(per_event(&evaluate(model, store, dev_seqs, &config.eval_likelihood, config.seed)?))
    };
    let train0 = per_event(&evaluate(model, &store, train_seqs, &config.eval_likelihood, config.seed)?);
    let dev0 = dev_score(&store, train0)?;
    let mut metrics = vec![EpochMetrics {
        epoch: 0,
        train_ll_per_event: train0,
        dev_ll_per_event: dev0,
        wallclock_s: clock(config.record_wallclock),
        learning_rate: config.learning_rate,
    }];
    let mut best = (dev0, store.clone(), adam.clone(), 0usize);
    let mut since_best = 0;
    let mut train_losses = Vec::new();
    for epoch in 1..=config.max_epochs {
        let reports = train_epoch(model, &mut store, &mut adam, train_seqs, &config.train_likelihood, config.seed, epoch)?;
        train_losses.push(reports.iter().map(|r| r.total).collect());
        let train_pe = per_event(&reports);
        let dev = dev_score(&store, train_pe)?;
        metrics.push(EpochMetrics {
            epoch,
            train_ll_per_event: train_pe,
            dev_ll_per_event: dev,
            wallclock_s: clock(config.record_wallclock),
            learning_rate: config.learning_rate,
        });
        if dev > best.0 {
            best = (dev, store.clone(), adam.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (best_dev, store, optimizer, best_epoch) = best;
    Ok(TrainOutcome { store, optimizer, best_epoch, best_dev_ll_per_event: best_dev, metrics, train_losses })
}

/// Metrics CSV with a header row.
pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,train_ll_per_event,dev_ll_per_event,wallclock_s,learning_rate\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_ll_per_event, r.dev_ll_per_event, r.wallclock_s, r.learning_rate
        ));
    }
    s
}

/// Every parameter a model touches near its start: all facts embedded and
/// all possible events scored after `init`, then each possible event
/// applied on its own. Returns the created tensors by name.
pub fn probe_parameters(model: &Model, seed: u64) -> Result<BTreeMap<String, Tensor>> {
    let store = ParameterStore::new(seed);
    let mut session = Session::new(model, &store);
    let mut state = session.initial_state()?;
    if model.program().mentions_init() {
        state = session.step(&state, &[ndtt_logic::init_event()], 0.0)?.0;
    }
    session.trace_record(&state, 0.0)?;
    for e in session.possible(&state) {
        let (next, _) = session.step(&state, std::slice::from_ref(&e), 1.0)?;
        session.trace_record(&next, 1.0)?;
    }
    Ok(session.into_fresh())
}

/// Total number of scalars in a parameter map.
pub fn scalar_count(params: &BTreeMap<String, Tensor>) -> usize {
    params.values().map(|t| t.rows() * t.cols()).sum()
}
