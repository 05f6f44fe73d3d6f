use std::collections::BTreeMap;

use devmon_core::central::{check_channel_log, replay_requests, snapshot};
use devmon_core::config::DeviceConfig;
use devmon_core::corpus::PolicyRegistry;
use devmon_core::dsl::{parse_expr, parse_policy, pretty_print, validate_policy, Phase};
use devmon_core::expr::{count_within, eval_expr, prune_older, BinOp, Builtin, EvalContext, Expr, Namespace, UnOp};
use devmon_core::rules::{compile_source, DispatchKey};
use devmon_core::sim::{generate, resolve_trace, run, RunOptions, TraceEvent, TraceProfile, CATALOG};
use devmon_core::state::{GlobalState, LocalState, StateTypes};
use devmon_core::value::{Ty, Value};
use proptest::prelude::*;
use serde_json::json;

const NAMES: &[&str] = &["x", "count", "sendTimes", "a1", "flag_2"];

fn leaf() -> impl Strategy<Value = Expr> {
    let var = (
        prop::sample::select(vec![
            Namespace::Param,
            Namespace::Event,
            Namespace::Local,
            Namespace::Global,
            Namespace::Config,
        ]),
        prop::sample::select(NAMES.to_vec()),
    )
        .prop_map(|(ns, n)| Expr::var(ns, n));
    prop_oneof![
        (0i64..1_000_000_000).prop_map(Expr::int),
        any::<bool>().prop_map(Expr::bool),
        "[ -~]{0,8}".prop_map(|s| Expr::Lit(Value::Str(s))),
        Just(Expr::Now),
        Just(Expr::AppId),
        Just(Expr::AppName),
        var,
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let ops = vec![
        BinOp::Or,
        BinOp::And,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
    ];
    leaf().prop_recursive(5, 48, 3, move |inner| {
        prop_oneof![
            (prop::sample::select(vec![UnOp::Not, UnOp::Neg]), inner.clone())
                .prop_map(|(op, e)| Expr::Unary(op, Box::new(e))),
            (prop::sample::select(ops.clone()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::bin(op, l, r)),
            (prop::sample::select(Builtin::ALL.to_vec()), prop::collection::vec(inner, 0..3))
                .prop_map(|(b, a)| Expr::call(b, a)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn expressions_print_and_reparse(e in expr()) {
        let text = e.to_string();
        let back = parse_expr(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn window_helpers_agree_with_naive(mut list in prop::collection::vec(0i64..10_000, 0..60), now in 0i64..12_000, window in 0i64..5_000) {
        list.sort_unstable();
        let naive = list.iter().filter(|&&t| now - t <= window).count() as i64;
        prop_assert_eq!(count_within(&list, now, window), naive);
        let mut pruned = list.clone();
        prune_older(&mut pruned, now, window);
        let kept: Vec<i64> = list.iter().copied().filter(|&t| now - t <= window).collect();
        prop_assert_eq!(&pruned, &kept);
        prop_assert_eq!(count_within(&pruned, now, window), naive);
    }

    #[test]
    fn evaluation_is_pure(e in expr(), n in -5i64..5, t in 0i64..100_000) {
        let types: StateTypes = NAMES.iter().flat_map(|n| {
            [(devmon_core::expr::VarRef::global(*n), Ty::Int), (devmon_core::expr::VarRef::local(*n), Ty::Int)]
        }).collect();
        let bindings: BTreeMap<String, Value> = NAMES.iter().map(|k| (k.to_string(), Value::Int(n))).collect();
        let config = DeviceConfig::default();
        let mut gs = GlobalState::new();
        gs.vars.insert("x".into(), Value::Int(n));
        let before = snapshot(&gs);
        let ctx = EvalContext::central(&bindings, &mut gs, t, "a", "a", &config, &types);
        let first = eval_expr(&e, &ctx);
        let second = eval_expr(&e, &ctx);
        prop_assert_eq!(first, second);
        prop_assert_eq!(snapshot(&gs), before);
    }

    #[test]
    fn parser_is_total(src in "[ -~\\n]{0,200}") {
        if let Ok(spec) = parse_policy(&src) {
            let _ = validate_policy(&spec);
        }
    }

    #[test]
    fn token_soup_is_total(tokens in prop::collection::vec(prop::sample::select(vec![
        "Events", "Conditions", "Actions", "Rules", "{", "}", "(", ")", "=", "|", "->", ";", ",", "&&", "||", "!",
        "applicationSide", "GlobalSide", "after", "before", "uponReturning", "SmsManager", "*.", ".", "...", "x",
        "global.n", "local.n", ":=", "block()", "return", "1", "\"s\"", "int", "boolean", "hours(1)", "now",
    ]), 0..80)) {
        let _ = compile_source(&tokens.join(" "));
    }
}

#[test]
fn corpus_round_trips_through_printer() {
    for p in PolicyRegistry::standard().iter() {
        let spec = parse_policy(p.source()).unwrap();
        let printed = pretty_print(&spec);
        let back = parse_policy(&printed).unwrap_or_else(|e| panic!("{}: {e}\n{printed}", p.id()));
        assert_eq!(back, spec, "{}", p.id());
        assert_eq!(pretty_print(&back), printed, "{}", p.id());
    }
}

#[test]
fn dispatch_index_matches_linear_scan() {
    for p in PolicyRegistry::standard().iter() {
        let cp = p.compile().unwrap();
        for api in CATALOG {
            for phase in [Phase::Before, Phase::After] {
                let key = DispatchKey::new(api.namespace, api.method, phase);
                let linear: Vec<usize> =
                    cp.rules.iter().filter(|r| DispatchKey::of(&cp.events[r.trigger]) == key).map(|r| r.id).collect();
                assert_eq!(cp.rules_for(&key), linear.as_slice(), "{} {key:?}", p.id());
            }
        }
    }
}

#[test]
fn replaying_requests_reproduces_global_state() {
    let config = DeviceConfig::default();
    for id in ["MsgCntLmt", "MsgCntLmtHr", "PhoneTimeLim", "GamePlayLmt", "OneHrPerSittingOnly"] {
        let cp = PolicyRegistry::standard().get(id).unwrap().compile().unwrap();
        for seed in 0..5 {
            let trace = resolve_trace(&generate(&TraceProfile::for_policy(id), seed)).unwrap();
            for concurrent in [false, true] {
                let out = run(&trace, &cp, &config, &RunOptions { concurrent, ..RunOptions::default() }).unwrap();
                check_channel_log(&out.channel_log).unwrap();
                assert_eq!(replay_requests(&out.channel_log, &cp, &config).unwrap(), out.snapshot, "{id} seed {seed}");
            }
        }
    }
}

const PER_APP: &str = r#"
Events { send() = { SmsManager *.sendTextMessage(...) } }
Conditions { capped = { local.sent >= 3 } }
Actions { stop = { block() } count = { local.sent := local.sent + 1 } }
Rules { limit = send | capped -> stop; send | !capped -> count; }
"#;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn local_state_is_isolated(apps in prop::collection::vec(0usize..4, 1..40)) {
        let cp = compile_source(PER_APP).unwrap();
        let config = DeviceConfig::default();
        let trace: Vec<TraceEvent> = apps.iter().enumerate()
            .map(|(i, a)| TraceEvent::new(i as i64, &format!("app{a}"), "SmsManager.sendTextMessage", vec![json!("1"), json!("x")]))
            .collect();
        let all = run(&resolve_trace(&trace).unwrap(), &cp, &config, &RunOptions::default()).unwrap();
        prop_assert!(all.channel_log.is_empty());
        for a in 0..4 {
            let name = format!("app{a}");
            let mine: Vec<TraceEvent> = trace.iter().filter(|e| e.app == name).cloned().collect();
            if mine.is_empty() {
                continue;
            }
            let alone = run(&resolve_trace(&mine).unwrap(), &cp, &config, &RunOptions::default()).unwrap();
            let shared: Vec<_> = all.verdicts.iter().filter(|v| v.app == name).cloned().collect();
            prop_assert_eq!(shared, alone.verdicts);
            prop_assert_eq!(&all.monitors[&name].state, &alone.monitors[&name].state);
        }
        let untouched = LocalState::new();
        prop_assert!(all.monitors.values().all(|m| m.state != untouched));
    }
}
