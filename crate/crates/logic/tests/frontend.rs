use ndtt_logic::*;
use proptest::prelude::*;

fn rename_vars(rule: &Rule) -> String {
    // Alpha-normalize by first occurrence so generated variable names compare equal.
    let text = rule.to_string();
    let mut out = String::new();
    let mut seen: Vec<String> = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let starts_word = i == 0 || !(chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
        if starts_word && c.is_ascii_uppercase() {
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let name: String = chars[i..j].iter().collect();
            let k = seen.iter().position(|s| *s == name).unwrap_or_else(|| {
                seen.push(name.clone());
                seen.len() - 1
            });
            out.push_str(&format!("V{k}"));
            i = j;
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

fn rule_of(text: &str) -> Rule {
    parse_program(text).unwrap().rules().next().unwrap().clone()
}

#[test]
fn parses_body_free_fact() {
    let ast = parse_program("likes(eve,apples).").unwrap();
    let rules: Vec<_> = ast.rules().collect();
    assert_eq!(rules.len(), 1);
    assert_eq!(rules[0].kind, RuleKind::Deductive);
    assert!(!rules[0].has_body());
    assert_eq!(rules[0].head.to_string(), "likes(eve,apples)");
}

#[test]
fn parses_empty_program() {
    assert!(parse_program("").unwrap().items.is_empty());
    assert!(parse_program("  % only a comment\n").unwrap().items.is_empty());
}

#[test]
fn parses_shared_variable_rule() {
    let r = rule_of("rel(X,Y) :- opinion(X,U), opinion(Y,U).");
    assert_eq!(r.kind, RuleKind::Deductive);
    assert_eq!(r.conditions.len(), 2);
    assert_eq!(r.conditions[0].atom.args[1], Term::Var(sym("U")));
    assert_eq!(r.conditions[1].atom.args[1], Term::Var(sym("U")));
}

#[test]
fn parses_update_rules_and_annotations() {
    let r = rule_of("!grateful(Y,X) <- harm(X,Y).");
    assert_eq!(r.kind, RuleKind::UpdateRemove);
    assert_eq!(r.trigger.as_ref().unwrap().atom.to_string(), "harm(X,Y)");
    let r = rule_of("grateful(Y,X) : g(X) <- : b, help(X,Y) : 0, person(Y) : w(Y) :: ignored.");
    assert_eq!(r.beta.as_ref().unwrap().to_string(), "g(X)");
    assert_eq!(r.bias.as_ref().unwrap().to_string(), "b");
    assert!(r.trigger.as_ref().unwrap().param.as_ref().unwrap().is_zero_name());
    assert_eq!(r.conditions[0].param.as_ref().unwrap().to_string(), "w(Y)");
    assert_eq!(r.full.as_ref().unwrap().to_string(), "ignored");
}

#[test]
fn parses_declarations() {
    let ast = parse_program(":- embed(opinion, 8).\n:- event(harm, 8) : intervene.").unwrap();
    let d: Vec<_> = ast.declarations().collect();
    assert_eq!(d[0].kind, DeclKind::Embed);
    assert_eq!(d[0].dim, 8);
    assert_eq!(d[1].kind, DeclKind::Event);
    assert_eq!(d[1].tau.as_ref().unwrap().to_string(), "intervene");
}

#[test]
fn integer_constants_are_entities() {
    let r = rule_of("is_process(007).");
    assert_eq!(r.head.to_string(), "is_process(7)");
}

#[test]
fn syntax_errors_carry_positions() {
    let e = parse_program("p(a).\nq(b) :- p(a)").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::UnterminatedRule);
    assert_eq!(e.line, 2);
    let e = parse_program("p(f(a)).").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::NestedTerm);
    assert_eq!((e.line, e.col), (1, 4));
    let e = parse_program("p(X) :- q(X) : .").unwrap_err();
    assert!(matches!(e.kind, ParseErrorKind::IllFormedAnnotation(_)));
    let e = parse_program("p(a) # q.").unwrap_err();
    assert!(matches!(e.kind, ParseErrorKind::UnexpectedChar(_)));
    assert!(e.to_string().starts_with("1:6:"));
}

#[test]
fn anonymous_entities_are_rejected_by_name() {
    let e = parse_program("birth(X,Y,*) <- procreate(X,Y).").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::AnonymousEntity);
    assert!(e.to_string().contains('*'));
}

#[test]
fn negated_heads_need_update_connector() {
    let e = parse_program("!p(a) :- q(a).").unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::NegatedHead);
}

#[test]
fn ground_atom_parser() {
    assert_eq!(parse_ground_atom("watch(u4,p49)").unwrap(), GroundAtom::new("watch", &["u4", "p49"]));
    assert_eq!(parse_ground_atom(" init ").unwrap(), GroundAtom::new("init", &[]));
    assert!(parse_ground_atom("watch(U,p)").is_err());
    assert!(parse_ground_atom("watch(u).").is_err());
    assert!(parse_ground_atom("").is_err());
}

const HIGHWAY_HELP: &str = "
help(X,Y) :- rel(X,Y).
rel(X,Y) :-- opinion(X,U), opinion(Y,U).
rel(X,Y) :-- teacher(X,Y).
";

#[test]
fn desugar_adds_unfolded_deductive_rules() {
    let out = desugar_highways(&parse_program(HIGHWAY_HELP).unwrap()).unwrap();
    let rules: Vec<&Rule> = out.rules().collect();
    assert_eq!(rules.len(), 5);
    assert!(rules.iter().all(|r| r.kind != RuleKind::Highway));
    let added: Vec<String> = rules[3..].iter().map(|r| rename_vars(r)).collect();
    assert!(added.contains(&rename_vars(&rule_of("help(X,Y) :- opinion(X,U), opinion(Y,U)."))));
    assert!(added.contains(&rename_vars(&rule_of("help(X,Y) :- teacher(X,Y)."))));
}

#[test]
fn desugar_freezes_trigger_and_retained_conditions() {
    let src = "grateful(Y,X) <- help(X,Y), person(Y).\nhelp(X,Y) :-- rel(X,Y).";
    let out = desugar_highways(&parse_program(src).unwrap()).unwrap();
    let rules: Vec<&Rule> = out.rules().collect();
    assert_eq!(rules.len(), 3);
    assert_eq!(
        rename_vars(rules[2]),
        rename_vars(&rule_of("grateful(Y,X) <- help(X,Y) : 0, rel(X,Y), person(Y) : 0."))
    );
}

#[test]
fn desugar_without_highways_is_identity() {
    let ast = parse_program("p(X) :- q(X).\nq(a).").unwrap();
    assert_eq!(desugar_highways(&ast).unwrap(), ast);
}

#[test]
fn desugar_unfolds_chains_transitively() {
    let src = "top(X) :- mid(X).\nmid(X) :-- low(X).\nlow(X) :-- base(X).";
    let out = desugar_highways(&parse_program(src).unwrap()).unwrap();
    let texts: Vec<String> = out.rules().map(rename_vars).collect();
    assert!(texts.contains(&rename_vars(&rule_of("top(X) :- base(X)."))));
    assert!(texts.contains(&rename_vars(&rule_of("top(X) :- low(X)."))));
}

#[test]
fn desugar_is_idempotent() {
    for src in [HIGHWAY_HELP, "grateful(Y,X) <- help(X,Y), person(Y).\nhelp(X,Y) :-- rel(X,Y).", "p(a)."] {
        let once = desugar_highways(&parse_program(src).unwrap()).unwrap();
        assert_eq!(desugar_highways(&once).unwrap(), once);
    }
}

#[test]
fn cyclic_highways_are_rejected() {
    let e = desugar_highways(&parse_program("a(X) :-- b(X).\nb(X) :-- a(X).").unwrap()).unwrap_err();
    assert!(matches!(e, ValidationError::CyclicHighway { .. }));
}

#[test]
fn range_restriction_names_variable() {
    match validate(&parse_program("likes(adam,Y) :- likes(adam,eve).").unwrap()).unwrap_err() {
        ValidationError::RangeRestrictionViolation { variable, rule, .. } => {
            assert_eq!(variable, "Y");
            assert_eq!(rule, 1);
        }
        e => panic!("unexpected {e}"),
    }
    // A variable only under negation is unbound.
    assert!(matches!(
        validate(&parse_program("p(X) :- q(X), !r(Z).").unwrap()).unwrap_err(),
        ValidationError::RangeRestrictionViolation { .. }
    ));
}

#[test]
fn recursion_through_other_atoms_is_accepted() {
    let p = Program::from_source("cursed(cain).\ncursed(Y) :- cursed(X), parent(X,Y).\nparent(cain,enoch).").unwrap();
    assert_eq!(p.rules().len(), 3);
}

#[test]
fn self_loop_is_cyclic() {
    assert!(matches!(
        validate(&parse_program("p(X) :- p(X), q(X).").unwrap()).unwrap_err(),
        ValidationError::CyclicDeduction { .. }
    ));
}

#[test]
fn negation_must_be_stratified() {
    assert!(matches!(
        validate(&parse_program("paradox :- !paradox.").unwrap()).unwrap_err(),
        ValidationError::UnstratifiedNegation { .. }
    ));
    assert!(matches!(
        validate(&parse_program("a :- q, !b.\nb :- q, a.\nq.").unwrap()).unwrap_err(),
        ValidationError::UnstratifiedNegation { .. }
    ));
}

#[test]
fn duplicate_declaration_rejected() {
    assert!(matches!(
        validate(&parse_program(":- embed(f, 2).\n:- event(f, 3).").unwrap()).unwrap_err(),
        ValidationError::DuplicateDeclaration { .. }
    ));
}

#[test]
fn update_rules_need_a_positive_trigger() {
    assert!(matches!(
        validate(&parse_program("p <- .").unwrap()).unwrap_err(),
        ValidationError::IllFormedRule { .. }
    ));
    assert!(matches!(
        validate(&parse_program("p <- !q.").unwrap()).unwrap_err(),
        ValidationError::IllFormedRule { .. }
    ));
}

#[test]
fn strata_respect_edges() {
    let src = "
        growup(X,G) :- person(X), gender(G), !adult(X).
        adult(X) :- adult(X,G).
        adult(X,G) <- growup(X,G).
        gender(female). gender(male).
    ";
    let p = Program::from_source(src).unwrap();
    for r in p.rules().iter().filter(|r| r.kind.is_deductive()) {
        for c in &r.conditions {
            let (f, g) = (p.stratum(&r.head.functor), p.stratum(&c.atom.functor));
            if c.negated {
                assert!(f > g, "{r}");
            } else {
                assert!(f >= g, "{r}");
            }
        }
    }
}

fn names(p: &Program, mode: TimeMode) -> Vec<String> {
    resolve_parameters(p, mode).signatures().iter().map(|s| s.name.to_string()).collect()
}

#[test]
fn default_parameter_names() {
    let mut src = String::from(":- embed(h, 2).\n:- embed(a, 3).\n:- embed(b, 1).\n");
    for i in 1..=6 {
        src.push_str(&format!("a(k{i}).\n"));
    }
    src.push_str("h(X) :- a(X), b(X).\nb(k1).\n");
    let p = Program::from_source(&src).unwrap();
    let sigs = resolve_parameters(&p, TimeMode::Discrete).signatures();
    let rule7: Vec<String> = sigs.iter().filter(|s| s.name.to_string().starts_with("params(7,")).map(|s| s.name.to_string()).collect();
    assert_eq!(rule7, ["params(7,beta)", "params(7,bias)", "params(7,1)", "params(7,2)"]);
    let w1 = sigs.iter().find(|s| s.name.to_string() == "params(7,1)").unwrap();
    assert_eq!((w1.rows, w1.cols), (2, 3));
}

#[test]
fn shared_full_names_share_one_signature() {
    let src = ":- embed(a, 2).\n:- embed(b, 2).\na(X) :- b(X) :: inherit.\nb(X) :- a(Y), c(X,Y) :: inherit.\nb(k).\nc(j,k).";
    // Same whole-matrix name with equal shapes.
    let p = Program::from_source(src).unwrap();
    let n = names(&p, TimeMode::Discrete);
    assert_eq!(n.iter().filter(|s| *s == "inherit").count(), 1);
}

#[test]
fn zero_slots_emit_no_signature() {
    let p = Program::from_source(":- embed(h, 2).\n:- embed(a, 2).\nh(X) :- a(X) : 0.\na(k).").unwrap();
    let n = names(&p, TimeMode::Discrete);
    assert!(!n.iter().any(|s| s == "params(1,1)"));
    assert!(n.iter().any(|s| s == "params(1,bias)"));
}

#[test]
fn update_rows_and_taus_depend_on_mode() {
    let p = Program::from_source(":- event(e, 2).\n:- embed(s, 3).\ns <- e, s.\ne :- s.").unwrap();
    let d = resolve_parameters(&p, TimeMode::Discrete);
    let c = resolve_parameters(&p, TimeMode::Continuous);
    assert_eq!(d.rule(1).unwrap().rows, 9);
    assert_eq!(c.rule(1).unwrap().rows, 21);
    // Event heads carry an intensity row.
    assert_eq!(d.rule(2).unwrap().rows, 3);
    assert!(d.taus.is_empty());
    assert_eq!(c.taus.values().next().unwrap().to_string(), "tau(e)");
}

#[test]
fn beta_variables_must_be_in_head() {
    assert!(matches!(
        validate(&parse_program("h(X) : beta(Y) :- a(X,Y).").unwrap()).unwrap_err(),
        ValidationError::BetaVariableNotInHead { .. }
    ));
}

#[test]
fn shape_conflicts_are_reported() {
    let src = ":- embed(a, 2).\n:- embed(b, 3).\na(X) :- c(X) : w.\nb(X) :- c(X) : w.\nc(k).";
    assert!(matches!(
        validate(&parse_program(src).unwrap()).unwrap_err(),
        ValidationError::ParameterShapeConflict { .. }
    ));
}

#[test]
fn parameter_count_ignores_ground_universe() {
    let program = |m: usize| {
        let mut s = String::from(":- event(e, 0).\n:- embed(local, 4).\ne(M,N) :- local(M), is_type(N).\nlocal(M) <- init, is_process(M).\nlocal(M) <- e(M,N), local(M).\n");
        for i in 1..=m {
            s.push_str(&format!("is_process({i}). is_type({i}).\n"));
        }
        Program::from_source(&s).unwrap()
    };
    let count = |p: &Program| -> usize {
        resolve_parameters(p, TimeMode::Continuous).signatures().iter().map(|s| s.rows * s.cols).sum()
    };
    assert_eq!(count(&program(2)), count(&program(8)));
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,4}".prop_filter("reserved", |s| s != "embed" && s != "event")
}

fn term() -> impl Strategy<Value = Term> {
    prop_oneof![
        ident().prop_map(|s| Term::Const(sym(&s))),
        (0u32..50).prop_map(|n| Term::Const(sym(&n.to_string()))),
        "[A-Z][a-z0-9]{0,2}".prop_map(|s| Term::Var(sym(&s))),
    ]
}

fn atom() -> impl Strategy<Value = Atom> {
    (ident(), prop::collection::vec(term(), 0..3)).prop_map(|(f, args)| Atom::new(&f, args))
}

fn name() -> impl Strategy<Value = Option<Atom>> {
    prop_oneof![
        3 => Just(None),
        1 => atom().prop_map(Some),
        1 => Just(Some(Atom::new("0", vec![]))),
    ]
}

fn element(allow_neg: bool) -> impl Strategy<Value = BodyElement> {
    (atom(), any::<bool>(), name()).prop_map(move |(atom, neg, param)| BodyElement { atom, negated: allow_neg && neg, param })
}

fn rule() -> impl Strategy<Value = Rule> {
    (
        prop_oneof![Just(RuleKind::Deductive), Just(RuleKind::Highway), Just(RuleKind::UpdateAdd), Just(RuleKind::UpdateRemove)],
        atom(),
        name(),
        name(),
        element(false),
        prop::collection::vec(element(true), 0..3),
        name(),
    )
        .prop_map(|(kind, head, beta, bias, trig, conditions, full)| {
            let trigger = kind.is_update().then_some(trig);
            // A body-free rule is written without a connector, so it can only be deductive.
            let kind = if trigger.is_none() && conditions.is_empty() { RuleKind::Deductive } else { kind };
            let has_body = trigger.is_some() || !conditions.is_empty();
            Rule {
                kind,
                head,
                beta,
                bias: if has_body { bias } else { None },
                trigger,
                conditions,
                full,
                pos: Pos { line: 1, col: 1 },
            }
        })
}

fn declaration() -> impl Strategy<Value = Declaration> {
    (any::<bool>(), ident(), 0usize..20, name()).prop_map(|(event, f, dim, tau)| Declaration {
        kind: if event { DeclKind::Event } else { DeclKind::Embed },
        functor: sym(&f),
        dim,
        tau: if event { tau } else { None },
        pos: Pos { line: 1, col: 1 },
    })
}

proptest! {
    #[test]
    fn print_then_parse_round_trips(items in prop::collection::vec(
        prop_oneof![rule().prop_map(Item::Rule), declaration().prop_map(Item::Decl)], 0..6)) {
        let ast = Ast { items };
        let text = ast.to_string();
        let back = parse_program(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        prop_assert_eq!(back, ast);
    }

    #[test]
    fn parser_never_panics(text in "[a-zA-Z0-9_(),.:!<%*\\- \n]{0,60}") {
        let _ = parse_program(&text);
        let _ = parse_ground_atom(&text);
    }
}
