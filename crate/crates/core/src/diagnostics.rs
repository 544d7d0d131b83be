//! Numeric self-checks: analytic gradients against central differences.

use ndtt_autodiff::ParameterStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::EventSequence;
use crate::error::Result;
use crate::likelihood::{score, Integral, LikelihoodOptions};
use crate::model::Model;
use crate::neural::Session;

/// Gradient magnitude below which errors are measured absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    /// Scalars compared.
    pub scalars: usize,
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_relative_error: f64,
    /// Parameter and flat index of the worst scalar.
    pub worst: (String, usize),
}

fn value(model: &Model, store: &ParameterStore, seq: &EventSequence, opts: &LikelihoodOptions) -> Result<f64> {
    let mut session = Session::new(model, store);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = score(&mut session, seq, opts, &mut rng)?;
    Ok(session.graph().scalar(s.total))
}

/// Compares the log-likelihood gradient of every scalar in `store` with a
/// central difference of step `h`, holding the integral's sample times
/// fixed at `sample_times`.
pub fn gradient_check(
    model: &Model,
    store: &ParameterStore,
    seq: &EventSequence,
    sample_times: &[f64],
    h: f64,
) -> Result<GradientCheck> {
    let opts = LikelihoodOptions::exact_sum(Integral::Fixed(sample_times.to_vec()));
    let mut session = Session::new(model, store);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scored = score(&mut session, seq, &opts, &mut rng)?;
    let grads = session.graph().backward(scored.total)?;
    let mut probe = store.clone();
    let mut out = GradientCheck { scalars: 0, max_relative_error: 0.0, worst: (String::new(), 0) };
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let len = store.get(&name).map_or(0, |t| t.len());
        for k in 0..len {
            let original = store.get(&name).expect("present").data()[k];
            probe.get_mut(&name).expect("present").data_mut()[k] = original + h;
            let up = value(model, &probe, seq, &opts)?;
            probe.get_mut(&name).expect("present").data_mut()[k] = original - h;
            let down = value(model, &probe, seq, &opts)?;
            probe.get_mut(&name).expect("present").data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(&name).map_or(0.0, |g| g.data()[k]);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            out.scalars += 1;
            if err > out.max_relative_error {
                out.max_relative_error = err;
                out.worst = (name.clone(), k);
            }
        }
    }
    Ok(out)
}

/// Time-rescaling residuals: for each modeled event, the integral of the
/// total intensity since the previous modeled event (or time 0), by the
/// midpoint rule with `per_interval` points between consecutive tokens.
/// Under the model these are independent Exp(1) draws.
pub fn compensators(model: &Model, store: &ParameterStore, seq: &EventSequence, per_interval: usize) -> Result<Vec<f64>> {
    let seq = crate::likelihood::with_init(model.program(), seq);
    let mut session = Session::new(model, store);
    let mut state = session.initial_state()?;
    let mut last = 0.0;
    let mut acc = 0.0;
    let mut out = Vec::new();
    let k = per_interval.max(1);
    for (t, group) in crate::likelihood::groups(&seq.tokens) {
        let h = (t - last) / k as f64;
        for j in 0..k {
            let u = last + (j as f64 + 0.5) * h;
            acc += h * session.intensity_values(&state, u)?.iter().map(|(_, l)| l).sum::<f64>();
        }
        if group.iter().any(|(_, tok)| !tok.exogenous) {
            out.push(acc);
            acc = 0.0;
        }
        let events: Vec<_> = group.iter().map(|(_, tok)| tok.event.clone()).collect();
        let next = session.step(&state, &events, t)?.0;
        state = session.detach(&next)?;
        last = t;
    }
    Ok(out)
}
