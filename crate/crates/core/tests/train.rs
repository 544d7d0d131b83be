use ndtt::autodiff::{Adam, ParameterStore};
use ndtt::fixtures::{constant_rate_store, superposition_structured, CONSTANT, HUMAN_ACTIVITY};
use ndtt::generator::{sample_many, SamplerConfig, StopRule};
use ndtt::likelihood::{Integral, LikelihoodOptions};
use ndtt::logic::TimeMode;
use ndtt::train::{evaluate, materialize, metrics_csv, per_event, train, train_epoch, TrainConfig};
use ndtt::{EventSequence, Model};

fn constant_data(rate: f64, count: usize, length: usize, seed: u64) -> Vec<EventSequence> {
    let model = Model::from_source(CONSTANT, TimeMode::Continuous).unwrap();
    sample_many(&model, &constant_rate_store(rate), &SamplerConfig::new(StopRule::Count(length)), count, seed).unwrap()
}

fn exact() -> LikelihoodOptions {
    LikelihoodOptions::exact_sum(Integral::Midpoint { per_interval: 1 })
}

#[test]
fn zero_epochs_return_the_initialization() {
    let model = Model::from_source(&superposition_structured(2, 2, 4), TimeMode::Continuous).unwrap();
    let data = sample_many(&model, &ParameterStore::new(9), &SamplerConfig::new(StopRule::Count(10)), 6, 1).unwrap();
    let config = TrainConfig { max_epochs: 0, seed: 4, ..TrainConfig::default() };
    let out = train(&model, ParameterStore::new(4), &data[..4], &data[4..], &config).unwrap();
    let mut init = ParameterStore::new(4);
    materialize(&model, &mut init, &data, 4).unwrap();
    assert_eq!(out.store, init);
    assert_eq!(out.best_epoch, 0);
    assert_eq!(out.metrics.len(), 1);
    assert_eq!(out.optimizer, Adam::new(config.learning_rate));
}

#[test]
fn dev_likelihood_climbs_toward_the_poisson_optimum() {
    let model = Model::from_source(CONSTANT, TimeMode::Continuous).unwrap();
    let train_seqs = constant_data(2.0, 8, 30, 1);
    let dev_seqs = constant_data(2.0, 8, 30, 2);
    let config = TrainConfig {
        learning_rate: 0.02,
        max_epochs: 40,
        patience: 40,
        train_likelihood: exact(),
        eval_likelihood: exact(),
        ..TrainConfig::default()
    };
    let out = train(&model, ParameterStore::new(0), &train_seqs, &dev_seqs, &config).unwrap();
    let dev: Vec<f64> = out.metrics.iter().map(|m| m.dev_ll_per_event).collect();
    for w in dev[..6].windows(2) {
        assert!(w[1] >= w[0], "{dev:?}");
    }
    // The constant-rate MLE is I/T, where ℓ/I = log(I/T) − 1.
    let events: usize = train_seqs.iter().map(|s| s.num_modeled()).sum();
    let span: f64 = train_seqs.iter().map(|s| s.horizon).sum();
    let optimum = (events as f64 / span).ln() - 1.0;
    let mut config = config;
    config.learning_rate = 0.05;
    config.max_epochs = 200;
    let out = train(&model, ParameterStore::new(0), &train_seqs, &[], &config).unwrap();
    let got = per_event(&evaluate(&model, &out.store, &train_seqs, &exact(), 0).unwrap());
    assert!((got - optimum).abs() <= 0.02 * optimum.abs(), "{got} vs {optimum}");
}

#[test]
fn a_fixed_seed_reproduces_the_metrics() {
    let model = Model::from_source(HUMAN_ACTIVITY, TimeMode::Continuous).unwrap();
    let data = sample_many(&model, &ParameterStore::new(3), &SamplerConfig::new(StopRule::Count(12)), 6, 8).unwrap();
    let config = TrainConfig { max_epochs: 3, seed: 17, learning_rate: 0.01, ..TrainConfig::default() };
    let run = || {
        let out = train(&model, ParameterStore::new(17), &data[..4], &data[4..], &config).unwrap();
        (metrics_csv(&out.metrics), out.store)
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert!(a.lines().all(|l| l.split(',').nth(3) == Some("0") || l.starts_with("epoch")));
}

#[test]
fn memoization_leaves_every_loss_bit_identical() {
    let source = superposition_structured(2, 3, 4);
    let data = {
        let model = Model::from_source(&source, TimeMode::Continuous).unwrap();
        sample_many(&model, &ParameterStore::new(1), &SamplerConfig::new(StopRule::Count(15)), 4, 3).unwrap()
    };
    let epoch = |memoize: bool| {
        let model = Model::from_source(&source, TimeMode::Continuous).unwrap().with_memoize(memoize);
        let mut store = ParameterStore::new(5);
        let mut adam = Adam::new(0.01);
        let reports = train_epoch(&model, &mut store, &mut adam, &data, &LikelihoodOptions::default(), 5, 1).unwrap();
        (reports.iter().map(|r| r.total.to_bits()).collect::<Vec<_>>(), store)
    };
    let (a, sa) = epoch(true);
    let (b, sb) = epoch(false);
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}
