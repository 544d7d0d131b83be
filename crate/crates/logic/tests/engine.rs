use std::collections::BTreeSet;

use ndtt_logic::naive;
use ndtt_logic::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn atom(text: &str) -> GroundAtom {
    parse_ground_atom(text).unwrap()
}

fn facts(state: &DatabaseState) -> Vec<String> {
    state.facts().iter().map(|a| a.to_string()).collect()
}

fn init(src: &str) -> (Program, DatabaseState) {
    let p = Program::from_source(src).unwrap();
    let s = init_state(&p, EngineConfig::default()).unwrap();
    (p, s)
}

fn step(p: &Program, s: &DatabaseState, events: &[&str], t: f64) -> (DatabaseState, Transition) {
    let events: Vec<GroundAtom> = events.iter().map(|e| atom(e)).collect();
    let m = match_updates(p, s, &events);
    apply_updates(p, s, &m, t).unwrap()
}

#[test]
fn init_state_closes_body_free_rules() {
    let (_, s) = init("likes(eve,apples).\ncompatible(X,Y) :- likes(X,U), likes(Y,U).");
    assert_eq!(facts(&s), ["compatible(eve,eve)", "likes(eve,apples)"]);
    assert!(s.adrift().is_empty());
}

#[test]
fn empty_program_has_no_facts() {
    let (_, s) = init("");
    assert!(s.facts().is_empty());
}

#[test]
fn init_driven_facts_wait_for_init() {
    let (p, s) = init("person(eve) <- init.\ndie(X) :- person(X).");
    assert!(s.facts().is_empty());
    assert!(p.mentions_init());
    let (s, t) = step(&p, &s, &["init"], 0.0);
    assert_eq!(facts(&s), ["die(eve)", "person(eve)"]);
    assert!(t.launched.contains(&atom("person(eve)")));
    assert!(s.is_adrift(&atom("person(eve)")));
}

#[test]
fn recursive_descendants() {
    let (_, s) =
        init("cursed(cain).\ncursed(Y) :- cursed(X), parent(X,Y).\nparent(cain,enoch).\nparent(enoch,irad).");
    for who in ["cain", "enoch", "irad"] {
        assert!(s.is_fact(&atom(&format!("cursed({who})"))));
    }
    let proofs = s.proofs_of(&atom("cursed(irad)"));
    assert_eq!(proofs.len(), 1);
    assert_eq!(proofs[0].rule, 2);
    assert_eq!(proofs[0].body, vec![atom("cursed(enoch)"), atom("parent(enoch,irad)")]);
    // Body-free rules give one empty-bodied proof.
    let base = s.proofs_of(&atom("cursed(cain)"));
    assert_eq!(base.len(), 1);
    assert!(base[0].body.is_empty());
}

#[test]
fn adrift_atoms_feed_deduction() {
    let p = Program::from_source("die(X) :- person(X).").unwrap();
    let adrift: BTreeSet<_> = [atom("person(eve)")].into();
    let s = DatabaseState::from_adrift(&p, adrift, 1.0, EngineConfig::default()).unwrap();
    assert!(s.is_fact(&atom("die(eve)")));
}

#[test]
fn negated_condition_blocks_proof() {
    let src = "
        growup(X,G) :- person(X), gender(G), !adult(X).
        adult(X) :- adult(X,G).
        adult(X,G) <- growup(X,G).
        person(eve). person(adam).
        gender(female). gender(male).
    ";
    let (p, s) = init(src);
    assert!(s.is_fact(&atom("growup(eve,female)")));
    let (s, _) = step(&p, &s, &["growup(eve,female)"], 1.0);
    assert!(s.is_fact(&atom("adult(eve)")));
    assert!(!s.facts().iter().any(|f| &*f.functor == "growup" && &*f.args[0] == "eve"));
    assert!(s.is_fact(&atom("growup(adam,male)")));
}

const HUMAN: &str = "
    :- event(help, 8).
    :- event(harm, 0).
    grateful(Y,X) <- help(X,Y), person(Y).
    !grateful(Y,X) <- harm(X,Y).
    person(X) <- init, cast(X).
    cast(eve). cast(adam).
    help(X,Y) :- person(X), person(Y).
    harm(X,Y) :- person(X), person(Y).
";

#[test]
fn add_and_remove_matches() {
    let (p, s) = init(HUMAN);
    let (s, _) = step(&p, &s, &["init"], 0.0);
    let m = match_updates(&p, &s, &[atom("help(eve,adam)")]);
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].polarity, Polarity::Add);
    assert_eq!(m[0].head, atom("grateful(adam,eve)"));
    assert_eq!(m[0].body, vec![atom("person(adam)")]);
    let m = match_updates(&p, &s, &[atom("harm(eve,adam)")]);
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].polarity, Polarity::Remove);
    assert_eq!(m[0].head, atom("grateful(adam,eve)"));
    assert!(match_updates(&p, &s, &[atom("sneeze(eve)")]).is_empty());
}

#[test]
fn docking_removes_cell_only_fact() {
    let (p, s) = init("person(eve) <- init.\n!person(X) <- die(X).\n:- event(die, 0).\ndie(X) :- person(X).");
    let (s, _) = step(&p, &s, &["init"], 0.0);
    let (s, t) = step(&p, &s, &["die(eve)"], 2.0);
    assert!(t.docked.contains(&atom("person(eve)")));
    assert!(!s.is_fact(&atom("person(eve)")));
    assert!(s.facts().is_empty());
}

#[test]
fn docked_atom_with_deductive_proof_stays_a_fact() {
    let (p, s) = init("person(eve) <- init.\nperson(eve) :- immortal(eve).\nimmortal(eve).\n!person(X) <- die(X).");
    let (s, _) = step(&p, &s, &["init"], 0.0);
    let (s, t) = step(&p, &s, &["die(eve)"], 1.0);
    assert!(t.docked.contains(&atom("person(eve)")));
    assert!(s.is_fact(&atom("person(eve)")));
    assert!(!s.is_adrift(&atom("person(eve)")));
}

#[test]
fn simultaneous_dock_and_launch_relaunches() {
    let (p, s) = init("mood(X) <- init, who(X).\n!mood(X) <- reset(X).\nmood(X) <- reset(X).\nwho(eve).");
    let (s, _) = step(&p, &s, &["init"], 0.0);
    let (s, t) = step(&p, &s, &["reset(eve)"], 1.0);
    assert!(t.docked.contains(&atom("mood(eve)")));
    assert!(t.launched.contains(&atom("mood(eve)")));
    assert!(s.is_adrift(&atom("mood(eve)")));
}

#[test]
fn possible_events_follow_relations() {
    let src = "
        :- event(pass, 0).
        pass(P,Q) :- has_ball(P), teammate(P,Q).
        teammate(a1,a2). teammate(a1,a3). teammate(a2,a1). teammate(b1,b2).
        has_ball(Q) <- pass(P,Q).
        !has_ball(P) <- pass(P,Q).
        has_ball(a1) <- init.
    ";
    let (p, s) = init(src);
    assert!(possible_events(&p, &s).is_empty());
    let (s, _) = step(&p, &s, &["init"], 0.0);
    let ev: Vec<String> = possible_events(&p, &s).iter().map(|a| a.to_string()).collect();
    assert_eq!(ev, ["pass(a1,a2)", "pass(a1,a3)"]);
    let (s, _) = step(&p, &s, &["pass(a1,a2)"], 1.0);
    let ev: Vec<String> = possible_events(&p, &s).iter().map(|a| a.to_string()).collect();
    assert_eq!(ev, ["pass(a2,a1)"]);
}

#[test]
fn no_event_declarations_means_no_events() {
    let (p, s) = init("p(a).");
    assert!(possible_events(&p, &s).is_empty());
}

#[test]
fn ground_cycle_is_a_runtime_error() {
    let p = Program::from_source("reach(Y) :- reach(X), edge(X,Y).\nreach(a).\nedge(a,b).\nedge(b,a).").unwrap();
    match init_state(&p, EngineConfig::default()).unwrap_err() {
        EngineError::CyclicDeduction { cycle } => {
            assert!(cycle.len() >= 2);
            assert_eq!(cycle.first(), cycle.last());
        }
    }
}

#[test]
fn instantiation_indices_follow_body_order() {
    let (_, s) = init(":- embed(opinion, 2).\nrel(X,Y) :- opinion(X,U), opinion(Y,U).\nopinion(eve,pie). opinion(eve,tea). opinion(adam,pie). opinion(adam,tea).");
    let proofs = s.proofs_of(&atom("rel(eve,adam)"));
    assert_eq!(proofs.len(), 2);
    assert_eq!(proofs[0].body[0], atom("opinion(eve,pie)"));
    assert_eq!(proofs[1].body[0], atom("opinion(eve,tea)"));
    assert_eq!((proofs[0].index, proofs[1].index), (0, 1));
}

#[test]
fn dump_flags_adrift_atoms() {
    let (p, s) = init("person(eve) <- init.\nfood(pie).");
    let (s, _) = step(&p, &s, &["init"], 0.0);
    assert_eq!(s.dump(), "food(pie)\nperson(eve) [adrift]\n");
}

#[test]
fn memo_hits_on_repeated_queries() {
    let (p, s) = init(HUMAN);
    let (s, _) = step(&p, &s, &["init"], 0.0);
    let a = s.query(&sym("person"), &[Some(sym("eve"))]);
    let b = s.query(&sym("person"), &[Some(sym("eve"))]);
    assert_eq!(a, b);
    assert_eq!(s.memo().hits(), 1);
    // A new state starts with an empty table.
    let (s2, _) = step(&p, &s, &["help(eve,adam)"], 1.0);
    assert!(s2.memo().is_empty());
}

/// Programs exercising recursion, negation, docking and highways.
const ORACLE_PROGRAMS: &[(&str, &[&str])] = &[
    (HUMAN, &["init"]),
    (
        "cursed(Y) :- cursed(X), parent(X,Y).\ncursed(cain).\nparent(X,Y) <- born(X,Y).\n!parent(X,Y) <- disown(X,Y).\n:- event(born,0).\n:- event(disown,0).\nborn(X,Y) :- cursed(X), younger(X,Y), !cursed(Y).\ndisown(X,Y) :- parent(X,Y).\nyounger(cain,enoch). younger(cain,irad). younger(enoch,irad). younger(enoch,mehujael). younger(irad,mehujael).",
        &[],
    ),
    (
        ":- event(growup,0).\ngrowup(X,G) :- person(X), gender(G), !adult(X).\nadult(X) :- adult(X,G).\nadult(X,G) <- growup(X,G).\nperson(X) <- init, cast(X).\ncast(eve). cast(adam). cast(seth).\ngender(female). gender(male).",
        &["init"],
    ),
    (
        "help(X,Y) :- rel(X,Y).\nrel(X,Y) :-- opinion(X,U), opinion(Y,U).\nrel(X,Y) :-- teacher(X,Y).\n:- event(help,0).\n:- event(teach,0).\nopinion(X,U) <- help(X,Y), likes(Y,U).\nteacher(X,Y) <- teach(X,Y).\nteach(X,Y) :- person(X), person(Y), !teacher(X,Y).\nperson(ann). person(bob). person(cy).\nlikes(ann,tea). likes(bob,pie). likes(cy,tea).",
        &[],
    ),
    (
        ":- event(pass,0).\n:- event(steal,0).\npass(P,Q) :- has_ball(P), teammate(P,Q).\nsteal(Q,P) :- has_ball(P), opponent(P,Q).\nteammate(P,Q) :- in_team(P,T), in_team(Q,T), player(P), player(Q), !same(P,Q).\nsame(P,P) :- player(P).\nopponent(P,Q) :- in_team(P,T), in_team(Q,U), !same_team(T,U), team(T), team(U).\nsame_team(T,T) :- team(T).\nteam(red). team(blue).\nin_team(a1,red). in_team(a2,red). in_team(b1,blue). in_team(b2,blue).\nplayer(a1). player(a2). player(b1). player(b2).\nhas_ball(Q) <- pass(P,Q).\n!has_ball(P) <- pass(P,Q).\nhas_ball(P) <- steal(P,Q).\n!has_ball(Q) <- steal(P,Q).\nhas_ball(a1) <- init.\nteam_state(T) <- pass(P,Q), in_team(P,T).",
        &["init"],
    ),
    (
        ":- event(watch,0).\n:- event(release,0).\nprogram(P) :- has_tag(P,T), tag(T).\ntag(T) <- watch(U,P), has_tag(P,T).\nprogram(P) <- release(P).\nwatch(U,P) :- user(U), program(P).\nuser(u1). user(u2).\nhas_tag(p1,comedy). has_tag(p2,drama). has_tag(p3,comedy).",
        &["release(p1)", "release(p2)", "release(p3)"],
    ),
    (
        ":- event(e,0).\ne(M,N) :- local(M), is_type(N).\nlocal(M) <- init, is_process(M).\nlocal(M) <- e(M,N), is_event(M,N), local(M).\nis_event(M,N) :- is_process(M), is_type(N).\nis_process(1). is_process(2).\nis_type(1). is_type(2). is_type(3).",
        &["init"],
    ),
    (
        ":- event(flip,0).\non(X) <- flip(X), !on(X).\n!on(X) <- flip(X), on(X).\nflip(X) :- switch(X).\nswitch(s1). switch(s2). switch(s3).\nall_on :- on(s1), on(s2), on(s3).\nsome_off :- switch(X), !on(X).\nquiet :- !some_off, !all_on.",
        &[],
    ),
    (
        "top(X) :- mid(X).\nmid(X) :-- low(X).\nlow(X) :-- base(X), ok(X).\n:- event(poke,0).\n:- event(fix,0).\nbase(X) <- poke(X).\n!ok(X) <- poke(X).\nok(X) <- fix(X).\npoke(X) :- thing(X).\nfix(X) :- thing(X), !ok(X).\nthing(k1). thing(k2).\nok(X) <- init, thing(X).\nalert <- poke(X) , top(X).",
        &["init"],
    ),
    (
        ":- event(link,0).\n:- event(cut,0).\nedge(X,Y) <- link(X,Y).\n!edge(X,Y) <- cut(X,Y).\nlink(X,Y) :- node(X), node(Y), !edge(X,Y), below(X,Y).\ncut(X,Y) :- edge(X,Y).\npath(X,Y) :- edge(X,Y).\npath(X,Z) :- edge(X,Y), path(Y,Z).\nbelow(n1,n2). below(n1,n3). below(n2,n3). below(n2,n4). below(n3,n4).\nnode(n1). node(n2). node(n3). node(n4).\nreachable_all(X) :- node(X), path(X,n4), !isolated(X).\nisolated(X) :- node(X), !has_out(X).\nhas_out(X) :- edge(X,Y).",
        &[],
    ),
    (
        "mood(X) <- init, who(X).\n!mood(X) <- reset(X).\nmood(X) <- reset(X).\nmood(X) <- cheer(X,Y), mood(Y).\n:- event(reset,0).\n:- event(cheer,0).\nreset(X) :- mood(X).\ncheer(X,Y) :- who(X), mood(Y), !same(X,Y).\nsame(X,X) :- who(X).\nwho(a). who(b). who(c).",
        &["init"],
    ),
];

fn replay(src: &str, exogenous: &[&str], steps: usize, seed: u64, memoize: bool) -> Vec<(Vec<String>, usize, String)> {
    let program = Program::from_source(src).unwrap();
    let mut state = init_state(&program, EngineConfig { memoize }).unwrap();
    let exo: Vec<GroundAtom> = exogenous.iter().map(|e| atom(e)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    naive::verify_state(&program, &state).unwrap();
    for i in 0..steps {
        let mut candidates = possible_events(&program, &state);
        candidates.extend(exo.iter().cloned());
        if candidates.is_empty() {
            break;
        }
        let mut events = vec![candidates.choose(&mut rng).unwrap().clone()];
        if rng.gen_bool(0.2) {
            events.push(candidates.choose(&mut rng).unwrap().clone());
        }
        let m = match_updates(&program, &state, &events);
        naive::verify_matches(&program, &state, &events, &m).unwrap_or_else(|e| panic!("step {i}: {e}"));
        let (next, _) = apply_updates(&program, &state, &m, (i + 1) as f64).unwrap();
        naive::verify_state(&program, &next).unwrap_or_else(|e| panic!("step {i}: {e}"));
        trace.push((facts(&next), m.len(), format!("{:?}", next.proofs())));
        state = next;
    }
    trace
}

#[test]
fn engine_matches_brute_force_on_fixture_replays() {
    for (k, (src, exo)) in ORACLE_PROGRAMS.iter().enumerate() {
        replay(src, exo, 50, k as u64, true);
    }
}

#[test]
fn memoization_is_transparent() {
    for (k, (src, exo)) in ORACLE_PROGRAMS.iter().enumerate() {
        assert_eq!(replay(src, exo, 30, 100 + k as u64, true), replay(src, exo, 30, 100 + k as u64, false));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replays_agree_with_oracle_for_any_seed(seed in any::<u64>(), k in 0..ORACLE_PROGRAMS.len()) {
        let (src, exo) = ORACLE_PROGRAMS[k];
        let a = replay(src, exo, 15, seed, true);
        prop_assert_eq!(a, replay(src, exo, 15, seed, true));
    }

    #[test]
    fn adding_adrift_atoms_is_monotone(extra in prop::collection::btree_set(0usize..6, 0..4)) {
        let p = Program::from_source("reach(Y) :- reach(X), edge(X,Y).\nreach(n0).\nedge(n0,n1). edge(n1,n2).").unwrap();
        let pool = ["edge(n2,n3)", "edge(n3,n4)", "edge(n0,n5)", "reach(n6)", "edge(n6,n7)", "edge(n5,n8)"];
        let base = DatabaseState::from_adrift(&p, BTreeSet::new(), 0.0, EngineConfig::default()).unwrap();
        let adrift: BTreeSet<_> = extra.iter().map(|&i| atom(pool[i])).collect();
        let grown = DatabaseState::from_adrift(&p, adrift, 0.0, EngineConfig::default()).unwrap();
        for f in base.facts().iter() {
            prop_assert!(grown.is_fact(f));
        }
    }
}
