//! Acceptance checks, one PASS/FAIL line each.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use devmon_core::bench::bench_policies;
use devmon_core::central::{check_channel_log, state_size, Direction};
use devmon_core::config::DeviceConfig;
use devmon_core::corpus::PolicyRegistry;
use devmon_core::dsl::Phase;
use devmon_core::rules::{compile_source, CompiledPolicy, DispatchKey};
use devmon_core::sim::{
    check_policy, generate, resolve_trace, run, write_trace, RunOptions, RunOutcome, TraceEvent, TraceProfile,
    VerdictDecision,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const MIN: i64 = 60_000;
const HOUR: i64 = 3_600_000;
const DAY: i64 = 86_400_000;
const SMS: &str = "SmsManager.sendTextMessage";

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn compiled(id: &str) -> CompiledPolicy {
    PolicyRegistry::standard().get(id).unwrap().compile().unwrap()
}

fn run_with(id: &str, trace: &[TraceEvent], config: &DeviceConfig, channel: &str) -> RunOutcome {
    let opts = RunOptions { channel: channel.into(), ..RunOptions::default() };
    run(&resolve_trace(trace).unwrap(), &compiled(id), config, &opts).unwrap()
}

fn run_default(id: &str, trace: &[TraceEvent]) -> RunOutcome {
    run_with(id, trace, &DeviceConfig::default(), "in-process")
}

fn sms(t: i64, app: &str) -> TraceEvent {
    TraceEvent::new(t, app, SMS, vec![json!("+35679000000"), json!("hi")])
}

fn blocked_at(out: &RunOutcome) -> Vec<usize> {
    out.verdicts.iter().enumerate().filter(|(_, v)| v.blocked()).map(|(i, _)| i).collect()
}

fn corpus_compiles() -> Check {
    let start = Instant::now();
    let reg = PolicyRegistry::standard();
    for p in reg.iter() {
        let cp = compile_source(p.source()).map_err(|e| format!("{}: {}", p.id(), e))?;
        ensure(check_policy(&cp).is_empty(), format!("{} does not fit the catalog", p.id()))?;
    }
    let took = start.elapsed();
    ensure(reg.len() == 10, format!("{} policies", reg.len()))?;
    ensure(took < Duration::from_secs(1), format!("took {took:?}"))?;
    Ok(format!("10 policies in {took:?}"))
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let config = DeviceConfig::default();
    let reg = PolicyRegistry::standard();
    let (mut events, mut blocks) = (0, 0);
    for p in reg.iter() {
        let cp = p.compile().unwrap();
        let profile = TraceProfile::for_policy(p.id());
        for seed in 0..200u64 {
            let trace = generate(&profile, 1000 + seed);
            let apps: std::collections::BTreeSet<_> = trace.iter().map(|e| &e.app).collect();
            ensure(apps.len() <= 5 && trace.len() <= 2000, "trace outside bounds")?;
            ensure(trace.last().is_none_or(|e| e.t_ms - trace[0].t_ms <= 7 * DAY), "trace longer than a week")?;
            let out = run(&resolve_trace(&trace).unwrap(), &cp, &config, &RunOptions::default()).unwrap();
            let expected = p.oracle(&trace, &config);
            if let Some(i) = (0..trace.len()).find(|&i| out.verdicts[i].decision != expected[i]) {
                return Err(format!("{} seed {} event {}: {:?}", p.id(), 1000 + seed, i, trace[i]));
            }
            events += trace.len();
            blocks += expected.iter().filter(|d| **d == VerdictDecision::Blocked).count();
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), format!("took {took:?}"))?;
    Ok(format!("2000 traces, {events} events, {blocks} blocks, {took:?}"))
}

fn daily_quota() -> Check {
    let apps = ["a0", "a1", "a2", "a3", "a4"];
    let trace: Vec<_> = (0..501).map(|i| sms(8 * HOUR + i as i64 * 1000, apps[i % 5])).collect();
    let out = run_default("MsgCntLmt", &trace);
    let blocked = blocked_at(&out);
    ensure(blocked == vec![500], format!("blocked {blocked:?}"))?;
    ensure(out.device.total_messages() == 500, "device did not send 500")?;
    Ok(format!("only send #501 blocked, reason {}", out.verdicts[500].reason))
}

fn named_scenarios() -> Check {
    let t0 = 10 * HOUR;
    let mut hourly: Vec<_> = (0..101).map(|i| sms(t0 + i * 30_000, "a")).collect();
    hourly.push(sms(t0 + HOUR + 1, "b"));
    let out = run_default("MsgCntLmtHr", &hourly);
    ensure(blocked_at(&out) == vec![100], format!("hourly window blocked {:?}", blocked_at(&out)))?;

    let gap = vec![sms(t0, "a"), sms(t0 + 59_000, "b"), sms(t0 + 61_000, "a")];
    let out = run_default("MsgTimeLmt", &gap);
    ensure(blocked_at(&out) == vec![1], format!("gap blocked {:?}", blocked_at(&out)))?;

    let mut sitting: Vec<_> = (0..=65).map(|m| sms(t0 + m * MIN, "a")).collect();
    sitting.push(sms(t0 + 79 * MIN, "a"));
    sitting.push(sms(t0 + 94 * MIN, "a"));
    let out = run_default("OneHrPerSittingOnly", &sitting);
    ensure(blocked_at(&out) == vec![60, 61, 62, 63, 64, 65, 66], format!("sitting blocked {:?}", blocked_at(&out)))?;

    let dial = |t, n: &str| TraceEvent::new(t, "a", "TelephonyManager.dialCall", vec![json!(n)]);
    let end = |t| TraceEvent::new(t, "a", "TelephonyManager.endCall", vec![]);
    let calls = vec![dial(t0, "+442079460000"), dial(t0 + 1, "+35621000000"), end(t0 + 2), dial(t0 + 3, "21000000")];
    let out = run_default("PhoneExtBlk", &calls);
    ensure(blocked_at(&out) == vec![0], format!("calls blocked {:?}", blocked_at(&out)))?;

    let wifi = |t| TraceEvent::new(t, "a", "WifiManager.setWifiEnabled", vec![json!(true)]);
    let out = run_default("WiFiLmt", &[wifi(14 * HOUR), wifi(DAY + 10 * HOUR)]);
    ensure(blocked_at(&out) == vec![0], format!("wifi blocked {:?}", blocked_at(&out)))?;
    ensure(out.channel_log.is_empty(), "WiFiLmt used the channel")?;
    Ok("hourly window, message gap, sitting, foreign call, wifi".into())
}

fn channel_asymmetry() -> Check {
    let reg = PolicyRegistry::standard();
    let mut requests = 0;
    for p in reg.iter() {
        let cp = p.compile().unwrap();
        for seed in 0..10 {
            let trace = resolve_trace(&generate(&TraceProfile::for_policy(p.id()), seed)).unwrap();
            for concurrent in [false, true] {
                let out =
                    run(&trace, &cp, &DeviceConfig::default(), &RunOptions { concurrent, ..RunOptions::default() })
                        .unwrap();
                check_channel_log(&out.channel_log).map_err(|e| format!("{}: {e}", p.id()))?;
                let up = out.channel_log.iter().filter(|e| e.direction == Direction::AppToCentral).count();
                ensure(2 * up == out.channel_log.len(), "central sent an unsolicited message")?;
                ensure(
                    out.channel_log.first().is_none_or(|e| e.direction == Direction::AppToCentral),
                    "central spoke first",
                )?;
                requests += up;
            }
        }
    }
    Ok(format!("{requests} requests, each answered once, none initiated centrally"))
}

fn overhead_ordering() -> Check {
    let trace: Vec<_> = (0..2000)
        .map(|i| {
            let t = i * 20_000;
            if i % 2 == 0 {
                TraceEvent::new(t, "a", "WifiManager.setWifiEnabled", vec![json!(i % 4 == 0)])
            } else {
                sms(t, "b")
            }
        })
        .collect();
    let config = DeviceConfig { service_cost_ns: 5_000, ..DeviceConfig::default() };
    let reg = PolicyRegistry::standard();
    let policies = reg.select("WiFiLmt,MsgCntLmtHr").unwrap();
    let r = bench_policies("wifi-sms", &policies, &resolve_trace(&trace).unwrap(), &config, 30)
        .map_err(|e| e.to_string())?;
    let (wifi, hr) = (&r.rows[0], &r.rows[1]);
    ensure(wifi.events_matched == 1000 && hr.events_matched == 1000, "unmatched trace")?;
    ensure(wifi.blocked == 0 && hr.blocked == 0, "blocked calls skip the service cost")?;
    ensure(
        wifi.overhead_pct < hr.overhead_pct,
        format!("WiFiLmt {:.1}% vs MsgCntLmtHr {:.1}%", wifi.overhead_pct, hr.overhead_pct),
    )?;
    Ok(format!("30 reps: WiFiLmt {:.1}% < MsgCntLmtHr {:.1}%", wifi.overhead_pct, hr.overhead_pct))
}

fn memory_accounting() -> Check {
    let trace: Vec<_> = (0..150).map(|i| sms(HOUR + i * 24_000, "a")).collect();
    let mut longest = 0;
    for n in 1..=trace.len() {
        let out = run_default("MsgCntLmtHr", &trace[..n]);
        longest = longest.max(state_size(&out.global).list_elements);
    }
    ensure(longest <= 100, format!("list reached {longest}"))?;
    let hr = state_size(&run_default("MsgCntLmtHr", &trace).global);
    let day = state_size(&run_default("MsgCntLmt", &trace).global);
    ensure(day.counters == 1 && day.lists == 0, format!("MsgCntLmt holds {:?}", day.vars))?;
    ensure(hr.total_bytes > 0 && day.total_bytes > 0, "no byte estimate")?;
    Ok(format!("list max {longest}, MsgCntLmt one counter, {} B vs {} B", day.total_bytes, hr.total_bytes))
}

fn devmon(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_devmon")).args(args).output().expect("binary runs")
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus");
    let trace = dir.path().join("trace.jsonl");
    std::fs::write(&trace, write_trace(&generate(&TraceProfile::for_policy("PhoneTimeLim"), 5))).unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, serde_json::to_string(&DeviceConfig::default()).unwrap()).unwrap();
    let mut outputs = Vec::new();
    for (id, k) in [("PhoneTimeLim", 0), ("PhoneTimeLim", 1), ("MsgCntLmtHr", 0), ("MsgCntLmtHr", 1)] {
        let out = dir.path().join(format!("{id}-{k}"));
        let policy = corpus.join(format!("{id}.dcp"));
        let o = devmon(&[
            "run",
            policy.to_str().unwrap(),
            trace.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        ensure(o.status.code() == Some(0), format!("run exited {:?}", o.status.code()))?;
        let files: Vec<Vec<u8>> = ["verdicts.jsonl", "snapshot.json", "channel.jsonl"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    ensure(outputs[0] == outputs[1] && outputs[2] == outputs[3], "outputs differ between runs")?;
    ensure(!outputs[0][2].is_empty(), "empty channel log")?;
    Ok("verdicts, snapshot and channel log byte-identical across runs".into())
}

fn fuzz() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vocab: &[&[u8]] =
        &[b"Events", b"Rules", b"{", b"}", b"(", b")", b"|", b"->", b"=", b";", b"global.", b"after", b"..."];
    let mut panics = 0;
    for i in 0..10_000 {
        let len = rng.gen_range(0..256);
        let mut bytes = Vec::with_capacity(len);
        while bytes.len() < len {
            if i % 2 == 0 {
                bytes.push(rng.gen::<u8>());
            } else {
                bytes.extend_from_slice(vocab[rng.gen_range(0..vocab.len())]);
                bytes.push(b' ');
            }
        }
        let text = String::from_utf8_lossy(&bytes).into_owned();
        if catch_unwind(AssertUnwindSafe(|| {
            let _ = compile_source(&text);
            let _ = devmon_core::sim::parse_trace(&text);
        }))
        .is_err()
        {
            panics += 1;
        }
    }
    let took = start.elapsed();
    ensure(panics == 0, format!("{panics} inputs panicked"))?;
    ensure(took < Duration::from_secs(60), format!("took {took:?}"))?;
    Ok(format!("10000 inputs, no panics, {took:?}"))
}

fn fail_closed() -> Check {
    let reg = PolicyRegistry::standard();
    let config = DeviceConfig::default();
    let mut refused = 0;
    for p in reg.iter() {
        let cp = p.compile().unwrap();
        let global_api = |call: &str| {
            let (ns, m) = call.split_once('.').unwrap();
            [Phase::Before, Phase::After].into_iter().any(|ph| cp.needs_global(&DispatchKey::new(ns, m, ph)))
        };
        for seed in 0..5 {
            let trace = generate(&TraceProfile::for_policy(p.id()), seed);
            let out = run(
                &resolve_trace(&trace).unwrap(),
                &cp,
                &config,
                &RunOptions { channel: "disconnected".into(), ..RunOptions::default() },
            )
            .unwrap();
            let oracle = p.oracle(&trace, &config);
            for (i, e) in trace.iter().enumerate() {
                let v = &out.verdicts[i];
                if global_api(&e.call) {
                    ensure(v.blocked() && v.reason == "ChannelError", format!("{} event {i} passed: {v:?}", p.id()))?;
                    refused += 1;
                } else {
                    ensure(v.decision == oracle[i], format!("{} event {i}: local decision changed", p.id()))?;
                }
            }
            ensure(out.channel_log.is_empty(), "disconnected channel logged traffic")?;
        }
    }
    ensure(refused > 0, "nothing needed the central monitor")?;
    Ok(format!("{refused} centrally checked calls refused, local-only decisions unchanged"))
}

/// Written straight to stderr so the lines show without `--nocapture`.
fn report(line: String) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance() {
    let checks: [Criterion; 10] = [
        ("corpus compiles", corpus_compiles),
        ("engine matches oracles", oracle_equivalence),
        ("daily message quota", daily_quota),
        ("named scenarios", named_scenarios),
        ("channel asymmetry", channel_asymmetry),
        ("overhead ordering", overhead_ordering),
        ("memory accounting", memory_accounting),
        ("determinism", determinism),
        ("parser fuzzing", fuzz),
        ("fail closed", fail_closed),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => report(format!("PASS {:>2} {name}: {detail}", i + 1)),
            Err(why) => {
                report(format!("FAIL {:>2} {name}: {why}", i + 1));
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
