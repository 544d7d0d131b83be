mod common;

use common::probed;
use ndtt::autodiff::ParameterStore;
use ndtt::data::{EventSequence, Token};
use ndtt::fixtures::{constant_rate_store, two_phase_store, CONSTANT, HUMAN_ACTIVITY, PING_PONG, ROBOCUP_TOY, TWO_PHASE};
use ndtt::generator::{sample_many, SamplerConfig, StopRule};
use ndtt::logic::{parse_ground_atom, TimeMode};
use ndtt::neural::Session;
use ndtt::predictor::{
    draw_next_time, evaluate_predictions, predict_time, predict_type, prediction_tasks, PredictConfig, Restriction,
};
use ndtt::seed::stream;
use ndtt::stats::mean_se;
use ndtt::{Model, NdttError};
use rand::Rng;

fn tok(t: f64, e: &str, exogenous: bool) -> Token {
    Token { time: t, event: parse_ground_atom(e).unwrap(), exogenous }
}

#[test]
fn constant_rate_time_prediction_is_the_exponential_mean() {
    let model = Model::from_source(CONSTANT, TimeMode::Continuous).unwrap();
    let store = constant_rate_store(2.0);
    let seq = EventSequence::new("s", vec![tok(0.7, "e", false), tok(1.3, "e", false)], 1.3);
    let tasks = prediction_tasks(&model, &store, &seq).unwrap();
    let n = 10_000;
    let got = predict_time(&model, &store, &tasks[1].anchor, &[], n, &mut stream(1, &[])).unwrap().unwrap();
    let se = 0.5 / (n as f64).sqrt();
    assert!((got - (0.7 + 0.5)).abs() < 3.0 * se, "{got}");
}

#[test]
fn two_phase_time_prediction_matches_the_closed_form() {
    let model = Model::from_source(TWO_PHASE, TimeMode::Continuous).unwrap();
    let (low, high, switch) = (0.5, 3.0, 1.0);
    let store = two_phase_store(low, high);
    let mut session = Session::new(&model, &store);
    let state = session.initial_state().unwrap();
    let exo = [tok(switch, "switch", true)];
    let mut rng = stream(2, &[]);
    let draws: Vec<f64> =
        (0..10_000).map(|_| draw_next_time(&mut session, &state, &exo, &mut rng).unwrap().unwrap()).collect();
    let (m, se) = mean_se(&draws);
    let want = (1.0 - (-low * switch).exp()) / low + (-low * switch).exp() / high;
    assert!((m - want).abs() < 3.0 * se, "{m} ± {se} vs {want}");
}

#[test]
fn one_sample_prediction_is_that_sample() {
    let model = Model::from_source(HUMAN_ACTIVITY, TimeMode::Continuous).unwrap();
    let store = probed(&model, 1);
    let seq = &sample_many(&model, &store, &SamplerConfig::new(StopRule::Count(5)), 1, 4).unwrap()[0];
    let task = &prediction_tasks(&model, &store, seq).unwrap()[3];
    let predicted = predict_time(&model, &store, &task.anchor, &task.exogenous, 1, &mut stream(9, &[])).unwrap();
    let mut session = Session::new(&model, &store);
    let state = session.restore(&task.anchor).unwrap();
    let drawn = draw_next_time(&mut session, &state, &task.exogenous, &mut stream(9, &[])).unwrap();
    assert_eq!(predicted, drawn);
}

#[test]
fn estimator_variance_shrinks_with_the_sample_budget() {
    let model = Model::from_source(CONSTANT, TimeMode::Continuous).unwrap();
    let store = constant_rate_store(2.0);
    let snapshot = {
        let session = Session::new(&model, &store);
        session.snapshot(&session.initial_state().unwrap())
    };
    let var = |n: usize| {
        let xs: Vec<f64> = (0..300)
            .map(|s| predict_time(&model, &store, &snapshot, &[], n, &mut stream(s, &[n as u64])).unwrap().unwrap())
            .collect();
        let (_, se) = mean_se(&xs);
        se * se * xs.len() as f64
    };
    let ratio = var(10) / var(40);
    assert!(ratio > 2.0 && ratio < 8.0, "{ratio}");
}

#[test]
fn no_possible_events_means_no_time_prediction() {
    let model = Model::from_source(":- event(e, 0).\ne :- ready.\nready <- go.\n", TimeMode::Continuous).unwrap();
    let store = ParameterStore::new(0);
    let session = Session::new(&model, &store);
    let snapshot = session.snapshot(&session.initial_state().unwrap());
    assert_eq!(predict_time(&model, &store, &snapshot, &[], 5, &mut stream(0, &[])).unwrap(), None);
}

#[test]
fn forced_events_are_predicted_exactly() {
    let model = Model::from_source(PING_PONG, TimeMode::Discrete).unwrap();
    let store = ParameterStore::new(4);
    let seqs = sample_many(&model, &store, &SamplerConfig::new(StopRule::Count(12)), 3, 1).unwrap();
    let (report, preds) = evaluate_predictions(&model, &store, &seqs, &PredictConfig::default()).unwrap();
    assert_eq!(report.num_tokens, 36);
    assert_eq!(report.type_error_rate, 0.0);
    assert_eq!(report.time_rmse, 0.0);
    assert!(preds.iter().all(|p| p.type_correct()));
}

#[test]
fn time_error_cannot_beat_the_intrinsic_spread() {
    let model = Model::from_source(CONSTANT, TimeMode::Continuous).unwrap();
    let store = constant_rate_store(2.0);
    let seqs = sample_many(&model, &store, &SamplerConfig::new(StopRule::Count(100)), 20, 3).unwrap();
    let config = PredictConfig { samples: 50, ..PredictConfig::default() };
    let (report, _) = evaluate_predictions(&model, &store, &seqs, &config).unwrap();
    assert_eq!(report.num_tokens, 2000);
    // Squared error concentrates near 1/λ² = 0.25; allow three standard errors.
    assert!(report.time_rmse.powi(2) > 0.25 - 3.0 * (8f64).sqrt() / 4.0 / (2000f64).sqrt(), "{}", report.time_rmse);
    assert_eq!(report.type_error_rate, 0.0);
}

#[test]
fn predicted_types_are_always_possible() {
    let model = Model::from_source(ROBOCUP_TOY, TimeMode::Continuous).unwrap();
    let store = probed(&model, 6);
    let seqs = sample_many(&model, &store, &SamplerConfig::new(StopRule::Count(40)), 4, 2).unwrap();
    let tasks: Vec<_> = seqs.iter().flat_map(|s| prediction_tasks(&model, &store, s).unwrap()).collect();
    let sizes: std::collections::BTreeSet<usize> = tasks
        .iter()
        .map(|t| {
            let mut s = Session::new(&model, &store);
            let st = s.restore(&t.before).unwrap();
            s.possible(&st).len()
        })
        .collect();
    assert!(sizes.len() > 1, "the candidate set changes over time: {sizes:?}");
    let restrictions = [Restriction::None, Restriction::TrueFunctor];
    let mut rng = stream(8, &[]);
    for trial in 0..10_000 {
        let task = &tasks[rng.gen_range(0..tasks.len())];
        let r = &restrictions[trial % restrictions.len()];
        let t = task.time - rng.gen::<f64>() * (task.time - task.before.time());
        let e = predict_type(&model, &store, &task.before, t, r, Some(&task.event)).unwrap();
        let mut s = Session::new(&model, &store);
        let st = s.restore(&task.before).unwrap();
        assert!(s.possible(&st).contains(&e));
        assert!(r.admits(&e, Some(&task.event)));
    }
}

#[test]
fn restricted_queries_only_return_matching_atoms() {
    let model = Model::from_source(HUMAN_ACTIVITY, TimeMode::Continuous).unwrap();
    let store = probed(&model, 6);
    let seq = &sample_many(&model, &store, &SamplerConfig::new(StopRule::Count(10)), 1, 2).unwrap()[0];
    let pattern = Restriction::parse("help(eve,Y)").unwrap();
    for task in prediction_tasks(&model, &store, seq).unwrap() {
        let e = predict_type(&model, &store, &task.before, task.time, &pattern, None).unwrap();
        assert_eq!(&*e.functor, "help");
        assert_eq!(&*e.args[0], "eve");
    }
    let none = Restriction::parse("help(nobody,_)").unwrap();
    let task = &prediction_tasks(&model, &store, seq).unwrap()[0];
    assert!(matches!(
        predict_type(&model, &store, &task.before, task.time, &none, None),
        Err(NdttError::Prediction(_))
    ));
    assert!(Restriction::parse("help(eve").is_err());
}

#[test]
fn restricting_to_the_true_functor_never_hurts() {
    let model = Model::from_source(ROBOCUP_TOY, TimeMode::Continuous).unwrap();
    let store = probed(&model, 3);
    let seqs = sample_many(&model, &store, &SamplerConfig::new(StopRule::Count(25)), 6, 9).unwrap();
    let base = PredictConfig { samples: 1, ..PredictConfig::default() };
    let (free, _) = evaluate_predictions(&model, &store, &seqs, &base).unwrap();
    let restricted = PredictConfig { restriction: Restriction::TrueFunctor, ..base };
    let (r, _) = evaluate_predictions(&model, &store, &seqs, &restricted).unwrap();
    assert!(r.type_error_rate <= free.type_error_rate, "{} > {}", r.type_error_rate, free.type_error_rate);
    assert_eq!(r.num_tokens, 150);
}

#[test]
fn shifting_every_candidate_preactivation_keeps_the_argmax() {
    let model = Model::from_source(HUMAN_ACTIVITY, TimeMode::Continuous).unwrap();
    let store = probed(&model, 5);
    let rule = model
        .program()
        .rules()
        .iter()
        .position(|r| &*r.head.functor == "help" && r.to_string().contains("!same"))
        .unwrap()
        + 1;
    let seqs = sample_many(&model, &store, &SamplerConfig::new(StopRule::Count(20)), 1, 5).unwrap();
    let help = Restriction::Functor("help".into());
    for shift in [-3.0, 2.5] {
        let mut shifted = store.clone();
        let bias = shifted.get_mut(&format!("params({rule},bias)")).expect("bias exists");
        let last = bias.rows() - 1;
        bias.data_mut()[last] += shift;
        for task in prediction_tasks(&model, &store, &seqs[0]).unwrap() {
            let a = predict_type(&model, &store, &task.before, task.time, &help, None).unwrap();
            let b = predict_type(&model, &shifted, &task.before, task.time, &help, None).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn predictions_ignore_the_future() {
    let model = Model::from_source(HUMAN_ACTIVITY, TimeMode::Continuous).unwrap();
    let store = probed(&model, 7);
    let full = sample_many(&model, &store, &SamplerConfig::new(StopRule::Count(16)), 1, 3).unwrap().remove(0);
    let mut cut = full.clone();
    cut.tokens.truncate(8);
    cut.horizon = cut.tokens.last().unwrap().time;
    let config = PredictConfig { samples: 5, ..PredictConfig::default() };
    let (_, a) = evaluate_predictions(&model, &store, &[full], &config).unwrap();
    let (_, b) = evaluate_predictions(&model, &store, &[cut], &config).unwrap();
    assert_eq!(&a[..b.len()], &b[..]);
}
