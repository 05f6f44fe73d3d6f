//! `devmon` commands. Each returns the process exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use devmon_core::bench::{bench_policies, BenchReport, MIN_REPS};
use devmon_core::config::DeviceConfig;
use devmon_core::corpus::PolicyRegistry;
use devmon_core::rules::{compile_source, CompiledPolicy, Locality};
use devmon_core::sim::{
    channel_log_jsonl, check_policy, generate, load_trace, resolve_trace, run, verdicts_jsonl, write_trace,
    ResolvedEvent, RunOptions, TraceError, TraceProfile,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "devmon", version, about = "Device-wide runtime verification of app API calls")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a policy.
    Compile { policy: PathBuf },
    /// Replay a trace through the monitors.
    Run {
        policy: PathBuf,
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "in-process")]
        channel: String,
        /// Time every call on the wall clock instead of writing zero latencies.
        #[arg(long)]
        measure_latency: bool,
        /// Dispatch same-timestamp events of different apps concurrently.
        #[arg(long)]
        concurrent: bool,
    },
    /// Measure monitoring overhead for corpus policies.
    Bench {
        /// Comma-separated policy ids, or `all`.
        #[arg(long, default_value = "all")]
        policies: String,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = MIN_REPS)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a saved benchmark report as a table.
    Report { report: PathBuf },
    /// List the bundled policies.
    List,
    /// Write a random trace shaped for a corpus policy.
    GenTrace {
        #[arg(long, default_value = "default")]
        profile: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    code: i32,
    error: anyhow::Error,
}

type Outcome = Result<(), Failure>;

trait WithCode<T> {
    fn code(self, code: i32) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: i32) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).code(EXIT_IO)
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display())).code(EXIT_IO)
}

fn load_config(path: Option<&Path>) -> Result<DeviceConfig, Failure> {
    match path {
        None => Ok(DeviceConfig::default()),
        Some(p) => {
            DeviceConfig::from_json_str(&read(p)?).with_context(|| format!("bad config {}", p.display())).code(EXIT_IO)
        }
    }
}

/// Compiles and checks against the device catalog. Diagnostics go to `err`.
fn load_policy(path: &Path, err: &mut dyn Write) -> Result<CompiledPolicy, Failure> {
    let src = read(path)?;
    let invalid = |n: usize| Failure { code: EXIT_INVALID, error: anyhow!("{}: {n} error(s)", path.display()) };
    let cp = match compile_source(&src) {
        Ok(cp) => cp,
        Err(e) => {
            let diags = e.diagnostics();
            for d in &diags {
                let _ = writeln!(err, "{d}");
            }
            return Err(invalid(diags.len()));
        }
    };
    let catalog = check_policy(&cp);
    if !catalog.is_empty() {
        for e in &catalog {
            let _ = writeln!(err, "{e}");
        }
        return Err(invalid(catalog.len()));
    }
    Ok(cp)
}

fn load_resolved(path: &Path) -> Result<Vec<ResolvedEvent>, Failure> {
    let trace = match load_trace(path) {
        Ok(t) => t,
        Err(TraceError::Io(e)) => {
            return Err(anyhow::Error::new(e).context(format!("cannot read {}", path.display()))).code(EXIT_IO)
        }
        Err(e) => return Err(e).with_context(|| format!("bad trace {}", path.display())).code(EXIT_MISMATCH),
    };
    resolve_trace(&trace)
        .with_context(|| format!("trace {} does not match the catalog", path.display()))
        .code(EXIT_MISMATCH)
}

fn compile_cmd(policy: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let cp = load_policy(policy, err)?;
    let _ = writeln!(
        out,
        "ok: {} events, {} conditions, {} actions, {} rules",
        cp.events.len(),
        cp.conditions.len(),
        cp.actions.len(),
        cp.rules.len()
    );
    for r in &cp.rules {
        let locality = match r.locality {
            Locality::LocalOnly => "local",
            Locality::NeedsGlobal => "global",
        };
        let _ = writeln!(out, "  {:<28} {locality}", cp.rule_name(r.id));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_cmd(
    policy: &Path,
    trace: &Path,
    config: Option<&Path>,
    dir: &Path,
    channel: &str,
    measure_latency: bool,
    concurrent: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let cp = load_policy(policy, err)?;
    let config = load_config(config)?;
    let trace = load_resolved(trace)?;
    let opts = RunOptions {
        channel: channel.to_string(),
        probe: if measure_latency { "wall" } else { "off" }.to_string(),
        concurrent,
    };
    let outcome = run(&trace, &cp, &config, &opts).code(EXIT_INVALID)?;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).code(EXIT_IO)?;
    write(&dir.join("verdicts.jsonl"), &verdicts_jsonl(&outcome.verdicts))?;
    write(&dir.join("snapshot.json"), &(outcome.snapshot.clone() + "\n"))?;
    write(&dir.join("channel.jsonl"), &channel_log_jsonl(&outcome.channel_log))?;
    for (i, f) in &outcome.faults {
        let _ = writeln!(err, "event {i}: rule {}: {}", f.rule, f.message);
    }
    let blocked = outcome.verdicts.iter().filter(|v| v.blocked()).count();
    let _ = writeln!(
        out,
        "{} events, {} blocked, {} channel messages",
        outcome.verdicts.len(),
        blocked,
        outcome.channel_log.len()
    );
    Ok(())
}

fn bench_cmd(
    ids: &str,
    trace_path: &Path,
    reps: usize,
    report: &Path,
    config: Option<&Path>,
    out: &mut dyn Write,
) -> Outcome {
    if reps < MIN_REPS {
        return Err(anyhow!("--reps must be at least {MIN_REPS}")).code(EXIT_INVALID);
    }
    let reg = PolicyRegistry::standard();
    let policies = reg.select(ids).code(EXIT_INVALID)?;
    let config = load_config(config)?;
    let trace = load_resolved(trace_path)?;
    let trace_id =
        trace_path.file_name().map_or_else(|| trace_path.display().to_string(), |n| n.to_string_lossy().into_owned());
    let r = bench_policies(&trace_id, &policies, &trace, &config, reps).code(EXIT_INVALID)?;
    write(report, &r.to_json())?;
    let _ = write!(out, "{}", r.table());
    Ok(())
}

fn report_cmd(path: &Path, out: &mut dyn Write) -> Outcome {
    let r =
        BenchReport::from_json(&read(path)?).with_context(|| format!("bad report {}", path.display())).code(EXIT_IO)?;
    let _ = write!(out, "{}", r.table());
    Ok(())
}

fn list_cmd(out: &mut dyn Write) -> Outcome {
    for p in PolicyRegistry::standard().iter() {
        let tags: Vec<String> = p.tags().iter().map(|t| format!("{t:?}")).collect();
        let _ = writeln!(out, "{:<20} {:<26} {}", p.id(), p.category().label(), tags.join(","));
    }
    Ok(())
}

fn gen_trace_cmd(profile: &str, seed: u64, path: &Path) -> Outcome {
    let trace = generate(&TraceProfile::for_policy(profile), seed);
    write(path, &write_trace(&trace))
}

/// Runs one parsed command line.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Compile { policy } => compile_cmd(policy, out, err),
        Command::Run { policy, trace, config, out: dir, channel, measure_latency, concurrent } => {
            run_cmd(policy, trace, config.as_deref(), dir, channel, *measure_latency, *concurrent, out, err)
        }
        Command::Bench { policies, trace, reps, out: report, config } => {
            bench_cmd(policies, trace, *reps, report, config.as_deref(), out)
        }
        Command::Report { report } => report_cmd(report, out),
        Command::List => list_cmd(out),
        Command::GenTrace { profile, seed, out: path } => gen_trace_cmd(profile, *seed, path),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {:#}", f.error);
            f.code
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, out, err),
        Err(e) => {
            let _ = write!(err, "{e}");
            if e.use_stderr() {
                EXIT_IO
            } else {
                let _ = write!(out, "{e}");
                EXIT_OK
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_args(std::iter::once("devmon").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_policy_is_io() {
        let (code, _, err) = call(&["compile", "/nonexistent/p.dcp"]);
        assert_eq!(code, EXIT_IO);
        assert!(err.contains("cannot read"));
    }

    #[test]
    fn list_shows_ten() {
        let (code, out, _) = call(&["list"]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(out.lines().count(), 10);
    }

    #[test]
    fn too_few_reps() {
        let (code, _, err) = call(&["bench", "--trace", "x", "--reps", "5", "--out", "r.json"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains("at least 30"));
    }
}
