use std::io::Write as _;
use std::path::Path;

use ndtt::autodiff::ParameterStore;
use ndtt::checkpoint::{mode_name, Checkpoint};
use ndtt::data::{parse_events, read_dataset, write_dataset};
use ndtt::generator::{sample_many, SamplerConfig, StopRule};
use ndtt::likelihood::{Integral, LikelihoodOptions};
use ndtt::logic::{init_event, SignatureRole, TimeMode};
use ndtt::neural::Session;
use ndtt::predictor::{predict_all, report, PredictConfig, Restriction, Tasks};
use ndtt::train::{evaluate, metrics_csv, per_event, probe_parameters, scalar_count, train, TrainConfig, TrainOutcome};
use ndtt::{parse_checkpoint, program_hash, EventSequence, Model, NdttError};
use serde_json::{json, Value};

use crate::args::{CheckArgs, Command, EvalArgs, ModeArg, PredictArgs, RunConfig, SampleArgs, TaskArg, TrainArgs};
use crate::{Cli, Failure};

type Outcome<T = ()> = Result<T, Failure>;

pub fn run(cli: Cli) -> Outcome {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(NdttError::Config("--jobs must be at least 1".into()).into());
        }
        // Fails only if a pool already exists (e.g. several runs in one process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Check(a) => check(&a),
        Command::Train(a) => train_command(&a),
        Command::Eval(a) => eval(&a),
        Command::Sample(a) => sample(&a),
        Command::Predict(a) => predict(&a),
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::at(path.display(), NdttError::Io { path: path.display().to_string(), source: e }))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::at(path.display(), NdttError::Io { path: path.display().to_string(), source: e }))
}

fn create_dir(path: &Path) -> Outcome {
    std::fs::create_dir_all(path).map_err(|e| Failure::at(path.display(), NdttError::Io { path: path.display().to_string(), source: e }))
}

/// Writes to `out`, or to standard output.
fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => write_text(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| NdttError::Io { path: "<stdout>".into(), source: e }.into())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn load_program(path: &Path, mode: TimeMode) -> Outcome<(Model, String)> {
    let source = read_text(path)?;
    let model = Model::from_source(&source, mode).map_err(|e| Failure::at(path.display(), e))?;
    Ok((model, source))
}

fn load_checkpoint(path: &Path) -> Outcome<Checkpoint> {
    parse_checkpoint(&read_text(path)?).map_err(|e| Failure::at(path.display(), e))
}

fn resolve_mode(flag: Option<ModeArg>, checkpoint: Option<&Checkpoint>) -> Outcome<TimeMode> {
    let saved = checkpoint.map(|c| c.time_mode()).transpose()?;
    match (flag.map(TimeMode::from), saved) {
        (Some(f), Some(c)) if f != c => Err(NdttError::Config(format!(
            "--mode {} disagrees with the checkpoint's {} mode",
            mode_name(f),
            mode_name(c)
        ))
        .into()),
        (Some(m), _) | (None, Some(m)) => Ok(m),
        (None, None) => Ok(TimeMode::Continuous),
    }
}

/// Parameters from a checkpoint whose program may differ (ablations reuse
/// checkpoints), warning when it does.
fn checkpoint_store(checkpoint: &Checkpoint, source: &str, path: &Path) -> Outcome<ParameterStore> {
    if checkpoint.program_hash != program_hash(source) {
        eprintln!("warning: {} was trained on a different program (hash {})", path.display(), checkpoint.program_hash);
    }
    Ok(checkpoint.store()?)
}

fn load_data(path: &Path, mode: TimeMode) -> Outcome<Vec<EventSequence>> {
    let seqs = read_dataset(path).map_err(|e| Failure::at(path.display(), e))?;
    for s in &seqs {
        s.check_mode(mode).map_err(|e| Failure::at(path.display(), e))?;
    }
    Ok(seqs)
}

fn check(a: &CheckArgs) -> Outcome {
    let mode = TimeMode::from(a.mode);
    let (model, _) = load_program(&a.program, mode)?;
    let signatures = model.layout().signatures();
    let scalars = scalar_count(&probe_parameters(&model, 0)?);
    let mut out = format!(
        "ok: {} ({} rules, {} time)\nparameter signatures: {}\n",
        a.program.display(),
        model.program().rules().len(),
        mode_name(mode),
        signatures.len()
    );
    for s in &signatures {
        let role = match s.role {
            SignatureRole::Weight => "weight",
            SignatureRole::PoolExponent => "pooling exponent",
            SignatureRole::SoftplusScale => "softplus scale",
        };
        out.push_str(&format!("  {:<28} {:>3} x {:<3} {role}\n", s.name.to_string(), s.rows, s.cols));
    }
    out.push_str(&format!("trainable scalars near the initial state: {scalars}\n"));
    if a.trace {
        let store = ParameterStore::new(0);
        let mut session = Session::new(&model, &store);
        let mut state = session.initial_state()?;
        if model.program().mentions_init() {
            state = session.step(&state, &[init_event()], 0.0)?.0;
        }
        out.push_str("facts at time 0:\n");
        out.push_str(&state.db.dump());
        let possible: Vec<String> = session.possible(&state).iter().map(|e| e.to_string()).collect();
        out.push_str(&format!("possible events at time 0: {}\n", possible.join(" ")));
    }
    emit(None, &out)
}

fn likelihood_options(integral: Integral, downsample: usize) -> LikelihoodOptions {
    LikelihoodOptions { integral, downsample }
}

fn train_config(c: &RunConfig) -> TrainConfig {
    let integral = Integral::MonteCarlo { multiplier: c.mc_multiplier };
    TrainConfig {
        learning_rate: c.learning_rate,
        max_epochs: c.max_epochs,
        patience: c.patience,
        seed: c.seed,
        train_likelihood: likelihood_options(integral.clone(), c.downsample),
        eval_likelihood: likelihood_options(integral, 0),
        record_wallclock: c.record_wallclock,
    }
}

fn dataset_hash(seqs: &[EventSequence]) -> String {
    let text: String = seqs.iter().map(|s| format!("{}\n{}", s.id, s.to_jsonl())).collect();
    program_hash(&text)
}

/// Per-sequence and aggregate log-likelihood.
fn ll_report(model: &Model, store: &ParameterStore, seqs: &[EventSequence], opts: &LikelihoodOptions, seed: u64) -> Outcome<Value> {
    let reports = evaluate(model, store, seqs, opts, seed)?;
    let sequences: Vec<Value> = seqs
        .iter()
        .zip(&reports)
        .map(|(s, r)| {
            json!({
                "id": s.id,
                "num_events": r.num_events,
                "total": r.total,
                "event_term": r.event_term,
                "integral_term": r.integral_term,
                "ll_per_event": per_event(std::slice::from_ref(r)),
            })
        })
        .collect();
    Ok(json!({
        "num_sequences": seqs.len(),
        "num_events": reports.iter().map(|r| r.num_events).sum::<usize>(),
        "total": reports.iter().map(|r| r.total).sum::<f64>(),
        "ll_per_event": per_event(&reports),
        "sequences": sequences,
    }))
}

struct TrainData {
    train: Vec<EventSequence>,
    dev: Vec<EventSequence>,
    test: Option<Vec<EventSequence>>,
}

/// Trains on `train`, writes the checkpoint, metrics and (with test data)
/// the test report into `dir`. Returns the outcome and the test ll/event.
fn train_into(
    dir: &Path,
    model: &Model,
    hash: &str,
    config: &RunConfig,
    train_seqs: &[EventSequence],
    data: &TrainData,
) -> Outcome<(TrainOutcome, Option<f64>)> {
    create_dir(dir)?;
    let cfg = train_config(config);
    let outcome = train(model, ParameterStore::new(config.seed), train_seqs, &data.dev, &cfg)?;
    let mode = model.mode();
    let checkpoint = Checkpoint::new(&outcome.store, &outcome.optimizer, hash, mode, outcome.best_epoch);
    write_text(&dir.join("checkpoint.json"), &checkpoint.to_json())?;
    write_text(&dir.join("metrics.csv"), &metrics_csv(&outcome.metrics))?;
    let test_ll = match &data.test {
        Some(test) => {
            let r = ll_report(model, &outcome.store, test, &cfg.eval_likelihood, config.seed)?;
            write_text(&dir.join("test_report.json"), &pretty(&r))?;
            Some(r["ll_per_event"].as_f64().unwrap_or(0.0))
        }
        None => None,
    };
    eprintln!(
        "{}: best epoch {} of {}, dev ll/event {:.6}",
        dir.display(),
        outcome.best_epoch,
        outcome.metrics.len() - 1,
        outcome.best_dev_ll_per_event
    );
    Ok((outcome, test_ll))
}

fn train_command(a: &TrainArgs) -> Outcome {
    let config = a.resolve()?;
    let mode = TimeMode::from(config.mode);
    let (model, source) = load_program(&config.program, mode)?;
    let hash = program_hash(&source);
    let data = TrainData {
        train: load_data(&config.train, mode)?,
        dev: match &config.dev {
            Some(p) => load_data(p, mode)?,
            None => Vec::new(),
        },
        test: config.test.as_deref().map(|p| load_data(p, mode)).transpose()?,
    };
    if let Some(&k) = config.subset_sizes.iter().find(|&&k| k > data.train.len()) {
        return Err(NdttError::Config(format!("subset size {k} exceeds the {} training sequences", data.train.len())).into());
    }
    create_dir(&config.out)?;
    let mut hashes = json!({ "train": dataset_hash(&data.train), "dev": dataset_hash(&data.dev) });
    if let Some(t) = &data.test {
        hashes["test"] = json!(dataset_hash(t));
    }
    let manifest = json!({
        "config": config,
        "program_hash": hash,
        "data_hashes": hashes,
        "version": env!("CARGO_PKG_VERSION"),
        "git_describe": env!("NDTT_GIT_DESCRIBE"),
    });
    write_text(&config.out.join("manifest.json"), &pretty(&manifest))?;
    if config.subset_sizes.is_empty() {
        train_into(&config.out, &model, &hash, &config, &data.train, &data)?;
        return Ok(());
    }
    let mut curve = String::from("train_size,best_epoch,dev_ll_per_event,test_ll_per_event\n");
    for &k in &config.subset_sizes {
        let dir = config.out.join(format!("size_{k}"));
        let (outcome, test_ll) = train_into(&dir, &model, &hash, &config, &data.train[..k], &data)?;
        let test = test_ll.map(|x| x.to_string()).unwrap_or_default();
        curve.push_str(&format!("{k},{},{},{test}\n", outcome.best_epoch, outcome.best_dev_ll_per_event));
    }
    write_text(&config.out.join("learning_curve.csv"), &curve)
}

fn eval(a: &EvalArgs) -> Outcome {
    if !(a.mc_multiplier.is_finite() && a.mc_multiplier > 0.0) {
        return Err(NdttError::Config("--mc-multiplier must be positive".into()).into());
    }
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let mode = resolve_mode(None, Some(&checkpoint))?;
    let (model, source) = load_program(&a.program, mode)?;
    let store = checkpoint_store(&checkpoint, &source, &a.checkpoint)?;
    let seqs = load_data(&a.data, mode)?;
    let integral = match a.midpoint {
        Some(0) => return Err(NdttError::Config("--midpoint must be at least 1".into()).into()),
        Some(n) => Integral::Midpoint { per_interval: n },
        None => Integral::MonteCarlo { multiplier: a.mc_multiplier },
    };
    let mut r = ll_report(&model, &store, &seqs, &likelihood_options(integral, a.downsample), a.seed)?;
    r["program_hash"] = json!(program_hash(&source));
    r["checkpoint_program_hash"] = json!(checkpoint.program_hash);
    r["mode"] = json!(mode_name(mode));
    r["downsample"] = json!(a.downsample);
    r["seed"] = json!(a.seed);
    emit(a.out.as_deref(), &pretty(&r))
}

fn sample(a: &SampleArgs) -> Outcome {
    let checkpoint = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let mode = resolve_mode(a.mode, checkpoint.as_ref())?;
    let (model, source) = load_program(&a.program, mode)?;
    let store = match (&checkpoint, &a.checkpoint) {
        (Some(c), Some(p)) => checkpoint_store(c, &source, p)?,
        _ => ParameterStore::new(a.seed),
    };
    let stop = match (a.length, a.horizon) {
        (Some(n), None) => StopRule::Count(n),
        (None, Some(h)) if h.is_finite() && h >= 0.0 => StopRule::Horizon(h),
        (None, Some(h)) => return Err(NdttError::Config(format!("--horizon must be finite and non-negative, got {h}")).into()),
        _ => unreachable!("clap requires exactly one of --length and --horizon"),
    };
    let exogenous = match &a.exogenous {
        Some(p) => {
            let seq = parse_events(&read_text(p)?, &p.display().to_string()).map_err(|e| Failure::at(p.display(), e))?;
            seq.tokens.into_iter().filter(|t| t.exogenous).collect()
        }
        None => Vec::new(),
    };
    let seqs = sample_many(&model, &store, &SamplerConfig { stop, exogenous }, a.num_seqs, a.seed)?;
    write_dataset(&a.out, &seqs)?;
    eprintln!("wrote {} sequences to {}", seqs.len(), a.out.display());
    Ok(())
}

fn predict(a: &PredictArgs) -> Outcome {
    if a.n == 0 {
        return Err(NdttError::Config("--n must be at least 1".into()).into());
    }
    let restriction = match (&a.restrict, a.restrict_true_functor) {
        (Some(r), _) => Restriction::parse(r)?,
        (None, true) => Restriction::TrueFunctor,
        (None, false) => Restriction::None,
    };
    let checkpoint = load_checkpoint(&a.checkpoint)?;
    let mode = resolve_mode(None, Some(&checkpoint))?;
    let (model, source) = load_program(&a.program, mode)?;
    let store = checkpoint_store(&checkpoint, &source, &a.checkpoint)?;
    let seqs = load_data(&a.data, mode)?;
    let which = Tasks { time: a.task != TaskArg::Type, kind: a.task != TaskArg::Time };
    let config = PredictConfig { samples: a.n, restriction, seed: a.seed };
    let preds = predict_all(&model, &store, &seqs, &config, which)?;
    let summary = report(&preds);
    let keep = |mut v: Value| {
        let obj = v.as_object_mut().expect("summaries are objects");
        if !which.time {
            obj.remove("time_rmse");
            obj.remove("time_unpredicted");
            obj.remove("predicted_time");
        }
        if !which.kind {
            obj.remove("type_error_rate");
            obj.remove("predicted_event");
        }
        v
    };
    let per_functor: serde_json::Map<String, Value> =
        summary.per_functor.iter().map(|(f, s)| (f.clone(), keep(json!(s)))).collect();
    let mut out = keep(json!({
        "num_tokens": summary.num_tokens,
        "time_rmse": summary.time_rmse,
        "time_unpredicted": summary.time_unpredicted,
        "type_error_rate": summary.type_error_rate,
    }));
    out["task"] = json!(match a.task {
        TaskArg::Time => "time",
        TaskArg::Type => "type",
        TaskArg::Both => "both",
    });
    out["samples"] = json!(a.n);
    out["seed"] = json!(a.seed);
    out["restriction"] = match (&a.restrict, a.restrict_true_functor) {
        (Some(r), _) => json!(r),
        (None, true) => json!("<true functor>"),
        (None, false) => Value::Null,
    };
    out["per_functor"] = Value::Object(per_functor);
    out["predictions"] = Value::Array(preds.iter().map(|p| keep(json!(p))).collect());
    emit(a.out.as_deref(), &pretty(&out))
}
