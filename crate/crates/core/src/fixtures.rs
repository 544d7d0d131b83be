//! Shipped example programs and hand-set parameter stores.

use ndtt_autodiff::{softplus_inverse, ParameterStore, Tensor};
use ndtt_logic::{
    apply_updates, init_state, match_updates, naive, parse_ground_atom, possible_events, EngineConfig, GroundAtom,
    Program,
};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::seed::stream;

pub const CONSTANT: &str = include_str!("../fixtures/constant.ndtt");
pub const TWO_PHASE: &str = include_str!("../fixtures/two_phase.ndtt");
pub const HUMAN_ACTIVITY: &str = include_str!("../fixtures/human_activity.ndtt");
pub const IPTV_TOY: &str = include_str!("../fixtures/iptv_toy.ndtt");
pub const ROBOCUP_TOY: &str = include_str!("../fixtures/robocup_toy.ndtt");
pub const PING_PONG: &str = include_str!("../fixtures/ping_pong.ndtt");
pub const COIN: &str = include_str!("../fixtures/coin.ndtt");
pub const GRADIENT: &str = include_str!("../fixtures/gradient.ndtt");

const ORACLE: &[(&str, &str)] = &[
    ("human", include_str!("../fixtures/oracle/01_human.ndtt")),
    ("cursed", include_str!("../fixtures/oracle/02_cursed.ndtt")),
    ("growup", include_str!("../fixtures/oracle/03_growup.ndtt")),
    ("help_rel_highway", include_str!("../fixtures/oracle/04_help_rel_highway.ndtt")),
    ("pass_steal", include_str!("../fixtures/oracle/05_pass_steal.ndtt")),
    ("iptv_tags", include_str!("../fixtures/oracle/06_iptv_tags.ndtt")),
    ("superposition_local", include_str!("../fixtures/oracle/07_superposition_local.ndtt")),
    ("switches", include_str!("../fixtures/oracle/08_switches.ndtt")),
    ("highway_chain", include_str!("../fixtures/oracle/09_highway_chain.ndtt")),
    ("links_paths", include_str!("../fixtures/oracle/10_links_paths.ndtt")),
    ("moods", include_str!("../fixtures/oracle/11_moods.ndtt")),
];

/// A program for symbolic cross-checks plus the exogenous events a replay
/// may inject (listed in its `% exogenous:` header line).
#[derive(Clone, Debug)]
pub struct OracleFixture {
    pub name: &'static str,
    pub source: &'static str,
    pub exogenous: Vec<GroundAtom>,
}

pub fn oracle_programs() -> Vec<OracleFixture> {
    ORACLE
        .iter()
        .map(|(name, source)| {
            let header = source.lines().next().and_then(|l| l.strip_prefix("% exogenous:")).unwrap_or("");
            let exogenous = header
                .split_whitespace()
                .map(|a| parse_ground_atom(a).expect("fixture headers hold ground atoms"))
                .collect();
            OracleFixture { name, source, exogenous }
        })
        .collect()
}

/// Every shipped program with a short name, oracle programs included.
pub fn all_programs() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = [
        ("constant", CONSTANT),
        ("two_phase", TWO_PHASE),
        ("human_activity", HUMAN_ACTIVITY),
        ("iptv_toy", IPTV_TOY),
        ("robocup_toy", ROBOCUP_TOY),
        ("ping_pong", PING_PONG),
        ("coin", COIN),
        ("gradient", GRADIENT),
    ]
    .iter()
    .map(|(n, s)| (n.to_string(), s.to_string()))
    .collect();
    out.push(("superposition_structured".into(), superposition_structured(4, 4, 4)));
    out.push(("superposition_nhp".into(), superposition_nhp(4, 4, 4)));
    out.extend(ORACLE.iter().map(|(n, s)| (format!("oracle_{n}"), s.to_string())));
    out
}

fn index_facts(m: usize, n: usize) -> String {
    let mut s = String::new();
    for i in 1..=m {
        s.push_str(&format!("is_process({i}).\n"));
    }
    for j in 1..=n {
        s.push_str(&format!("is_type({j}).\n"));
    }
    s
}

/// `M` independent processes of `N` event types each; every process owns a
/// local state that only its own events read and update.
pub fn superposition_structured(m: usize, n: usize, dim: usize) -> String {
    format!(
        "{}:- embed(is_event, {dim}).\n:- embed(local, {dim}).\n:- event(e, 0).\n\
         is_event(M,N) :- is_process(M), is_type(N).\n\
         e(M,N) :- local(M), is_type(N).\n\
         local(M) <- init, is_process(M).\n\
         local(M) <- e(M,N), is_event(M,N), local(M).\n",
        index_facts(m, n)
    )
}

/// One global state shared by all event types, with per-type embedding and
/// intensity parameters.
pub fn superposition_nhp(m: usize, n: usize, dim: usize) -> String {
    format!(
        "{}:- embed(is_event, {dim}).\n:- embed(world, {dim}).\n:- event(e, 0).\n\
         is_event(M,N) :- is_process(M), is_type(N) :: emb(M,N).\n\
         e(M,N) :- world, is_process(M), is_type(N) :: prob(M,N).\n\
         world <- init.\n\
         world <- e(M,N), is_event(M,N), world.\n",
        index_facts(m, n)
    )
}

/// Store for [`CONSTANT`] whose single event has intensity `rate`.
pub fn constant_rate_store(rate: f64) -> ParameterStore {
    let mut s = ParameterStore::new(0);
    s.insert("params(1,bias)", Tensor::scalar(softplus_inverse(rate))).expect("valid name");
    s.insert("tau(e)", Tensor::scalar(softplus_inverse(1.0))).expect("valid name");
    s
}

/// Store for [`TWO_PHASE`] with rate `low` before the switch, `high` after.
pub fn two_phase_store(low: f64, high: f64) -> ParameterStore {
    let mut s = ParameterStore::new(0);
    s.insert("low", Tensor::scalar(softplus_inverse(low))).expect("valid name");
    s.insert("high", Tensor::scalar(softplus_inverse(high))).expect("valid name");
    s.insert("tau(e)", Tensor::scalar(softplus_inverse(1.0))).expect("valid name");
    s
}

/// Replays `steps` random event sets (possible events plus exogenous
/// candidates, occasionally two at once) and checks facts, proofs and
/// update matches against the brute-force evaluator after every step.
/// Returns the number of steps taken.
pub fn oracle_replay(fixture: &OracleFixture, steps: usize, seed: u64, memoize: bool) -> Result<usize, String> {
    let program = Program::from_source(fixture.source).map_err(|e| e.to_string())?;
    let mut state = init_state(&program, EngineConfig { memoize }).map_err(|e| e.to_string())?;
    naive::verify_state(&program, &state)?;
    let mut rng = stream(seed, &[]);
    for i in 0..steps {
        let mut candidates = possible_events(&program, &state);
        candidates.extend(fixture.exogenous.iter().cloned());
        if candidates.is_empty() {
            return Ok(i);
        }
        let mut events = vec![candidates.choose(&mut rng).expect("nonempty").clone()];
        if rng.gen_bool(0.2) {
            events.push(candidates.choose(&mut rng).expect("nonempty").clone());
        }
        let m = match_updates(&program, &state, &events);
        naive::verify_matches(&program, &state, &events, &m).map_err(|e| format!("{} step {i}: {e}", fixture.name))?;
        let (next, _) = apply_updates(&program, &state, &m, (i + 1) as f64).map_err(|e| e.to_string())?;
        naive::verify_state(&program, &next).map_err(|e| format!("{} step {i}: {e}", fixture.name))?;
        state = next;
    }
    Ok(steps)
}
