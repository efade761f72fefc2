// SPDX-License-Identifier: Apache-2.0

//! `ppcu`: simulate, check and measure consistent rule updates.
//!
//! Exit status is 0 when everything checked is clean, 1 when a violation or
//! counterexample was found, and 2 on bad input or I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ppcu_core::campaign::{run_seeds, SeedOutcome, Summary};
use ppcu_core::checker::explore::{explore, Verdict, DEFAULT_BOUND};
use ppcu_core::checker::check;
use ppcu_core::metrics::analytic::{analytic_compare, parse_params};
use ppcu_core::metrics::measure;
use ppcu_core::scenario::{bundled, Scenario};
use ppcu_core::sim::{run, Trace};
use ppcu_core::Ablation;
use serde_json::json;

/// Environment variable naming the directory that receives traces and
/// reports when no explicit path is given.
const OUT_DIR_ENV: &str = "PPCU_OUT_DIR";

#[derive(Parser)]
#[command(name = "ppcu", version, about = "Per-packet consistent rule updates: simulator, checker and cost model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, check the trace and report metrics.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run this many consecutive seeds starting at --seed.
        #[arg(long)]
        fuzz: Option<u64>,
        /// Replace rules in place, one switch at a time.
        #[arg(long)]
        naive: bool,
        /// Timestamp clamp; defaults to on when the scenario has clock drift.
        #[arg(long, value_enum)]
        clamp: Option<OnOff>,
        /// Disable one mechanism (case1..case7, fp1, fp2, f1-resubmit, f2-resubmit, old-fp2). Repeatable.
        #[arg(long)]
        ablate: Vec<Ablation>,
        /// Write the trace here. With --fuzz, the trace of the first failing seed (or the first seed).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Violations printed with their supporting records.
        #[arg(long, default_value_t = 3)]
        witnesses: usize,
    },
    /// Check a trace written by `run` against its scenario.
    Check {
        trace: PathBuf,
        scenario: String,
        #[arg(long)]
        naive: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        witnesses: usize,
    },
    /// Evaluate the closed-form cost comparison for each parameter set.
    Table1 {
        params: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Search every interleaving of a small scenario for a PPC violation.
    Explore {
        scenario: String,
        #[arg(long)]
        ablate: Vec<Ablation>,
        /// Maximum number of distinct states.
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        bound: u64,
    },
    /// List the bundled scenarios.
    Scenarios,
}

struct Fail(String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Fail {
        Fail(e.to_string())
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, Fail> {
    let path = Path::new(arg);
    if path.exists() {
        return Scenario::load(path).map_err(|e| Fail(format!("{arg}: {e}")));
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
    if bundled::source(name).is_some() || name.starts_with("concurrent") {
        return bundled::load(name).map_err(|e| Fail(format!("{arg}: {e}")));
    }
    Err(Fail(format!("{arg}: no such file or bundled scenario")))
}

fn write(path: &Path, text: &str) -> Result<(), Fail> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Fail(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Fail(format!("{}: {e}", path.display())))
}

/// Explicit path, else `$PPCU_OUT_DIR/<file>`, else nothing.
fn out_path(explicit: Option<PathBuf>, file: &str) -> Option<PathBuf> {
    explicit.or_else(|| std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(file)))
}

fn status(bad: bool) -> ExitCode {
    ExitCode::from(u8::from(bad))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario: &str,
    seed: u64,
    fuzz: Option<u64>,
    naive: bool,
    clamp: Option<OnOff>,
    ablate: &[Ablation],
    trace: Option<PathBuf>,
    report: Option<PathBuf>,
    witnesses: usize,
) -> Result<ExitCode, Fail> {
    let mut sc = load_scenario(scenario)?;
    if naive {
        sc.set_naive(true);
    }
    if let Some(c) = clamp {
        sc.set_clamp(matches!(c, OnOff::On));
    }
    for a in ablate {
        sc.ablate(*a);
    }
    let count = fuzz.unwrap_or(1).max(1);
    let outcomes = run_seeds(&sc, seed..seed + count);
    let sum = Summary::of(&outcomes);
    for o in &outcomes {
        if let Err(e) = &o.report {
            return Err(Fail(format!("seed {}: {e}", o.seed)));
        }
    }
    let shown: &SeedOutcome = sum
        .first_bad
        .and_then(|s| outcomes.iter().find(|o| o.seed == s))
        .unwrap_or(&outcomes[0]);

    if count == 1 {
        println!("scenario {} seed {}{}", sc.name, seed, if shown.quiescent { "" } else { " (horizon reached)" });
    } else {
        println!(
            "scenario {} seeds {}..{}: {} clean of {}{}",
            sc.name,
            seed,
            seed + count,
            sum.clean,
            sum.runs,
            sum.first_bad.map(|s| format!(", first failing seed {s}")).unwrap_or_default()
        );
        if sum.not_quiescent > 0 {
            println!("{} runs reached the horizon", sum.not_quiescent);
        }
        print!("{}", sum.total.render(&sc.topology, 0));
        println!("seed {}:", shown.seed);
    }
    let rep = shown.report.as_ref().expect("errors returned above");
    print!("{}", rep.render(&sc.topology, witnesses));
    print!("{}", shown.metrics.render(&sc.topology));

    let base = format!("{}-{}", sc.name, shown.seed);
    if let Some(p) = out_path(trace, &format!("{base}.trace")) {
        let out = run(&sc, shown.seed);
        write(&p, &out.trace.to_text(&sc.topology))?;
    }
    if let Some(p) = out_path(report, &format!("{base}.report.json")) {
        let doc = json!({
            "scenario": sc.name,
            "seeds": {"start": seed, "count": count, "clean": sum.clean, "first_bad": sum.first_bad},
            "violations": sum.total.counts().into_iter().map(|(k, n)| (k.as_str().to_string(), n)).collect::<std::collections::BTreeMap<_, _>>(),
            "shown_seed": shown.seed,
            "check": rep.to_json(&sc.topology),
            "metrics": shown.metrics,
        });
        write(&p, &serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(status(sum.clean != sum.runs))
}

fn cmd_check(trace: &Path, scenario: &str, naive: bool, report: Option<PathBuf>, witnesses: usize) -> Result<ExitCode, Fail> {
    let mut sc = load_scenario(scenario)?;
    if naive {
        sc.set_naive(true);
    }
    let text = fs::read_to_string(trace).map_err(|e| Fail(format!("{}: {e}", trace.display())))?;
    let tr = Trace::parse(&text, &sc.topology).map_err(|e| Fail(format!("{}: {e}", trace.display())))?;
    let rep = check(&sc, &tr)?;
    let mut metrics = measure(&sc, &tr);
    metrics.violations = rep.counts().into_iter().map(|(k, n)| (k.as_str().to_string(), n)).collect();
    print!("{}", rep.render(&sc.topology, witnesses));
    print!("{}", metrics.render(&sc.topology));
    let stem = trace.file_stem().and_then(|s| s.to_str()).unwrap_or("trace").to_string();
    if let Some(p) = out_path(report, &format!("{stem}.check.json")) {
        let doc = json!({"scenario": sc.name, "check": rep.to_json(&sc.topology), "metrics": metrics});
        write(&p, &serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(status(!rep.is_clean()))
}

fn cmd_table1(params: &Path, report: Option<PathBuf>) -> Result<ExitCode, Fail> {
    let text = fs::read_to_string(params).map_err(|e| Fail(format!("{}: {e}", params.display())))?;
    let sets = parse_params(&text)?;
    let tables: Vec<_> = sets.iter().map(analytic_compare).collect();
    for (k, t) in tables.iter().enumerate() {
        if k > 0 {
            println!();
        }
        print!("{}", t.render(k));
    }
    if let Some(p) = out_path(report, "table1.json") {
        write(&p, &serde_json::to_string_pretty(&tables)?)?;
    }
    Ok(status(tables.iter().any(|t| !t.claim.holds)))
}

fn cmd_explore(scenario: &str, ablate: &[Ablation], bound: u64) -> Result<ExitCode, Fail> {
    let mut sc = load_scenario(scenario)?;
    for a in ablate {
        sc.ablate(*a);
    }
    let e = explore(&sc, bound)?;
    match &e.verdict {
        Verdict::Verified => {
            println!("verified: {} states, {} orderings", e.states, e.orderings);
            Ok(ExitCode::SUCCESS)
        }
        Verdict::Counterexample(c) => {
            println!("counterexample after {} states:", e.states);
            print!("{}", c.render(&sc.topology));
            Ok(status(true))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { scenario, seed, fuzz, naive, clamp, ablate, trace, report, witnesses } => {
            cmd_run(&scenario, seed, fuzz, naive, clamp, &ablate, trace, report, witnesses)
        }
        Command::Check { trace, scenario, naive, report, witnesses } => {
            cmd_check(&trace, &scenario, naive, report, witnesses)
        }
        Command::Table1 { params, report } => cmd_table1(&params, report),
        Command::Explore { scenario, ablate, bound } => cmd_explore(&scenario, &ablate, bound),
        Command::Scenarios => {
            for n in bundled::names() {
                println!("{n}");
            }
            println!("concurrent<N>");
            Ok(ExitCode::SUCCESS)
        }
    };
    match res {
        Ok(code) => code,
        Err(Fail(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
