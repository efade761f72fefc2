// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `PPCU_ACCEPT_SEEDS` lowers the seed count of the fuzz campaign for quick
//! local runs; the default is the full campaign.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ppcu_core::campaign::{run_seeds, SeedOutcome, Summary};
use ppcu_core::checker::explore::{explore, Verdict, DEFAULT_BOUND};
use ppcu_core::checker::ViolationKind;
use ppcu_core::match_engine::{
    inverse_special_difference, match_field_equivalent, special_difference, updates_disjoint, ActionSpec, Header,
    MatchPattern, Rule, RuleSet, SwitchUpdate, UpdateRequest,
};
use ppcu_core::metrics::analytic::{analytic_compare, parse_params, Costs};
use ppcu_core::metrics::measure;
use ppcu_core::scenario::{bundled, MessageFault, Scenario};
use ppcu_core::sim::{run, Event, Profile};
use ppcu_core::switch_agent::MsgKind;
use ppcu_core::{Ablation, RuleId, SwitchId, Time, UpdateId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FUZZ_SEEDS: u64 = 10_000;
const FUZZ_BUDGET: Duration = Duration::from_secs(300);
const ABLATION_SEEDS: u64 = 1_000;
const EXPLORE_BUDGET: Duration = Duration::from_secs(60);
const STATE_LIMIT: u64 = 1_000_000;
const STALL_SEEDS: u64 = 1_000;
const CONCURRENT_SEEDS: u64 = 20;
const ORACLE_SETS: usize = 1_000;
/// Measured and closed-form round sums may differ by at most this.
const TICK: Time = Time::from_ns(1);

const FUZZ_SCENARIOS: [&str; 11] =
    ["case1", "case2", "case3", "case4", "case5", "case6", "case7", "fast_ingress", "fig1a", "fig1b", "fig1c"];

struct Outcome {
    pass: bool,
    summary: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>, notes: Vec<String>) -> Outcome {
        Outcome { pass, summary: summary.into(), notes }
    }
}

fn load(name: &str) -> Scenario {
    bundled::load(name).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn sw(s: &Scenario, name: &str) -> SwitchId {
    s.switch_id(name).unwrap_or_else(|| panic!("{}: no switch {name}", s.name))
}

fn fmt_counts(m: &BTreeMap<ViolationKind, usize>) -> String {
    if m.is_empty() {
        return "none".into();
    }
    m.iter().map(|(k, n)| format!("{k}={n}")).collect::<Vec<_>>().join(" ")
}

/// Completed, lossless updates must cost exactly `6 k_a` messages and
/// contact exactly the affected switches. Returns (checked, mismatches).
fn count_protocol_costs(outcomes: &[SeedOutcome]) -> (u64, u64) {
    let mut checked = 0;
    let mut bad = 0;
    for o in outcomes {
        for u in &o.metrics.updates {
            if u.partial || u.lost > 0 {
                continue;
            }
            checked += 1;
            if u.message_count != 6 * u.affected.len() as u64 || u.contacted != u.affected || !u.fp_is_one() {
                bad += 1;
            }
        }
    }
    (checked, bad)
}

fn ac1_ac4(seeds: u64) -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut all_clean = true;
    let mut checked = 0;
    let mut mismatched = 0;
    for name in FUZZ_SCENARIOS {
        let s = load(name);
        let t = Instant::now();
        let outcomes = run_seeds(&s, 0..seeds);
        let sum = Summary::of(&outcomes);
        let (c, b) = count_protocol_costs(&outcomes);
        checked += c;
        mismatched += b;
        let ok = sum.clean == sum.runs && sum.check_errors == 0;
        all_clean &= ok;
        notes.push(format!(
            "{name}: {}/{} clean, violations {}, {} errors, {} at horizon, {:.1} s",
            sum.clean,
            sum.runs,
            fmt_counts(&sum.total.counts()),
            sum.check_errors,
            sum.not_quiescent,
            t.elapsed().as_secs_f64()
        ));
    }
    let took = start.elapsed();
    let ac1 = Outcome::new(
        all_clean && took <= FUZZ_BUDGET && seeds >= FUZZ_SEEDS,
        format!(
            "fuzz: {} scenarios x {seeds} seeds, {} s (limit {} s){}",
            FUZZ_SCENARIOS.len(),
            took.as_secs(),
            FUZZ_BUDGET.as_secs(),
            if seeds < FUZZ_SEEDS { ", reduced seed count" } else { "" }
        ),
        notes,
    );
    let ac4 = Outcome::new(
        checked > 0 && mismatched == 0,
        format!("protocol counts: {checked} completed lossless updates, {mismatched} with messages != 6k_a or FP != 1"),
        Vec::new(),
    );
    (ac1, ac4)
}

/// Lowest seed below `limit` whose run shows `kind`.
fn first_seed_with(s: &Scenario, kind: ViolationKind, limit: u64) -> Option<(u64, BTreeMap<ViolationKind, usize>)> {
    let chunk = 100;
    let mut lo = 0;
    while lo < limit {
        let hi = (lo + chunk).min(limit);
        for o in run_seeds(s, lo..hi) {
            if o.has(kind) {
                let counts = o.report.as_ref().map(|r| r.counts()).unwrap_or_default();
                return Some((o.seed, counts));
            }
        }
        lo = hi;
    }
    None
}

fn ac2() -> Outcome {
    let mut rows: Vec<(String, Scenario, ViolationKind)> = Vec::new();
    for (name, a) in bundled::CASES {
        let mut s = load(name);
        s.ablate(a);
        rows.push((format!("{name} with {a}"), s, ViolationKind::Ppc));
    }
    let mut s = load("fast_ingress");
    s.set_clamp(false);
    rows.push(("fast_ingress with clamp off".into(), s, ViolationKind::Ppc));
    for (first, kind) in [("s3", ViolationKind::Loop), ("s2", ViolationKind::Drop)] {
        let mut s = load("fig1a");
        s.set_naive(true);
        s.naive_order = Some(vec![sw(&s, first)]);
        rows.push((format!("fig1a naive, {first} first"), s, kind));
    }
    let mut notes = Vec::new();
    let mut pass = true;
    for (label, s, kind) in &rows {
        match first_seed_with(s, *kind, ABLATION_SEEDS) {
            Some((seed, counts)) => notes.push(format!("{label}: {kind} at seed {seed} ({})", fmt_counts(&counts))),
            None => {
                pass = false;
                notes.push(format!("{label}: no {kind} in {ABLATION_SEEDS} seeds"));
            }
        }
    }
    Outcome::new(pass, format!("ablation sensitivity: {} paired scenarios within {ABLATION_SEEDS} seeds", rows.len()), notes)
}

fn ac3() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, a) in [("case3_kernel", Ablation::NoFp2Mark), ("case4_kernel", Ablation::NoFp1Mark)] {
        for ablated in [false, true] {
            let mut s = load(name);
            if ablated {
                s.ablate(a);
            }
            let t = Instant::now();
            let res = explore(&s, DEFAULT_BOUND);
            let took = t.elapsed();
            let label = if ablated { format!("{name} with {a}") } else { name.to_string() };
            match res {
                Ok(e) => {
                    let want = if ablated { "counterexample" } else { "verified" };
                    let got_ok = matches!(e.verdict, Verdict::Verified) != ablated;
                    let ok = got_ok && e.states <= STATE_LIMIT && took <= EXPLORE_BUDGET;
                    pass &= ok;
                    notes.push(format!(
                        "{label}: {} (expected {want}), {} states, {} orderings, {:.2} s",
                        e.verdict,
                        e.states,
                        e.orderings,
                        took.as_secs_f64()
                    ));
                }
                Err(err) => {
                    pass = false;
                    notes.push(format!("{label}: {err}"));
                }
            }
        }
    }
    Outcome::new(pass, "exhaustive interleavings: both kernels, with and without their mechanism", notes)
}

const TABLE1_PARAMS: &str = r#"[
  {"name": "small", "delta": 1, "t_i": 2, "t_d": 1, "t_m": 1, "t_v": "1/100", "t_s": 10,
   "n_o": 1, "n_n": 1, "n": 4, "k_a": 3, "k_i": 15, "k_t": 20},
  {"name": "wide", "delta": "0.5", "t_i": "0.2", "t_d": "0.1", "t_m": "0.1", "t_v": "0.001", "t_s": 5,
   "n_o": 10, "n_n": 20, "n": 100, "k_a": 40, "k_i": 8, "k_t": 64},
  {"name": "edge", "delta": 3, "t_i": 5, "t_d": 2, "t_m": 3, "t_v": "1/7", "t_s": 0,
   "n_o": 0, "n_n": 3, "n": 3, "k_a": 4, "k_i": 2, "k_t": 4}
]"#;

/// Hand-substituted rows: messages, FP, R1, R2, R3, R4, propagation, time,
/// overlap, transition; PPCU, E2PU, CCU; with t_v, then t_v dropped.
const TABLE1_EXPECTED: [[[[&str; 10]; 3]; 2]; 3] = [
    [
        [
            ["18", "1", "151/50", "1/50", "1201/100", "-", "6", "421/20", "381/20", "151/25"],
            ["80", "3/20", "8", "5", "14", "-", "6", "33", "31", "16"],
            ["72", "1/6", "3", "4", "12", "4", "8", "31", "23", "10"],
        ],
        [
            ["18", "1", "3", "0", "12", "-", "6", "21", "19", "6"],
            ["80", "3/20", "8", "5", "14", "-", "6", "33", "31", "16"],
            ["72", "1/6", "3", "4", "12", "4", "8", "31", "23", "10"],
        ],
    ],
    [
        [
            ["240", "1", "503/100", "3/100", "401/50", "-", "3", "402/25", "377/25", "164/25"],
            ["256", "5/8", "22", "13", "15", "-", "3", "53", "52", "73/2"],
            ["192", "5/6", "5", "10", "8", "10", "4", "37", "25", "33/2"],
        ],
        [
            ["240", "1", "5", "0", "8", "-", "3", "16", "15", "13/2"],
            ["256", "5/8", "22", "13", "15", "-", "3", "53", "52", "73/2"],
            ["192", "5/6", "5", "10", "8", "10", "4", "37", "25", "33/2"],
        ],
    ],
    [
        [
            ["24", "1", "108/7", "3/7", "66/7", "-", "18", "303/7", "261/7", "174/7"],
            ["16", "1", "30", "24", "6", "-", "18", "78", "72", "63"],
            ["24", "2/3", "15", "9", "9", "9", "24", "66", "45", "33"],
        ],
        [
            ["24", "1", "15", "0", "9", "-", "18", "42", "36", "24"],
            ["16", "1", "30", "24", "6", "-", "18", "78", "72", "63"],
            ["24", "2/3", "15", "9", "9", "9", "24", "66", "45", "33"],
        ],
    ],
];

fn cells(c: &Costs) -> [String; 10] {
    [
        c.messages.to_string(),
        c.fp.to_string(),
        c.r1.to_string(),
        c.r2.to_string(),
        c.r3.to_string(),
        c.r4.map_or_else(|| "-".to_string(), |q| q.to_string()),
        c.propagation.to_string(),
        c.time.to_string(),
        c.overlap.to_string(),
        c.transition.to_string(),
    ]
}

fn ac5() -> Outcome {
    let sets = parse_params(TABLE1_PARAMS).expect("parameter sets parse");
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (k, p) in sets.iter().enumerate() {
        let c = analytic_compare(p);
        for (variant, rows) in [&c.full, &c.without_t_v].into_iter().enumerate() {
            for (scheme, row) in rows.iter().enumerate() {
                let got = cells(row);
                for (i, want) in TABLE1_EXPECTED[k][variant][scheme].iter().enumerate() {
                    compared += 1;
                    if got[i] != *want {
                        mismatches.push(format!("set {k} variant {variant} {} cell {i}: {} != {want}", row.scheme.as_str(), got[i]));
                    }
                }
            }
        }
        if !c.claim.holds {
            mismatches.push(format!("set {k}: message claim fails"));
        }
    }
    // The message claim over a grid of switch counts.
    let base = sets[0].clone();
    let mut grid = 0;
    for k_a in 1..=60i128 {
        for k_i in 0..=60i128 {
            let mut p = base.clone();
            p.k_a = ppcu_core::metrics::analytic::Q::int(k_a);
            p.k_i = ppcu_core::metrics::analytic::Q::int(k_i);
            p.k_t = ppcu_core::metrics::analytic::Q::int(k_a.max(1) + 60);
            let c = analytic_compare(&p);
            grid += 1;
            let fewer = c.claim.ppcu < c.claim.ccu;
            if fewer != (2 * k_i > k_a) {
                mismatches.push(format!("k_a={k_a} k_i={k_i}: PPCU {} vs CCU {}", c.claim.ppcu, c.claim.ccu));
            }
        }
    }
    let pass = mismatches.is_empty();
    let mut notes = mismatches;
    notes.truncate(10);
    Outcome::new(
        pass,
        format!("analytic table: {compared} cells over 3 parameter sets, message claim on {grid} (k_a, k_i) pairs"),
        notes,
    )
}

fn analytic(mut s: Scenario, delta: Time) -> Scenario {
    s.timing.profile = Profile::Analytic;
    s.timing.delta = delta;
    s.timing.delta_overrides.clear();
    s.timing.offsets.clear();
    s.timing.gamma = Time::ZERO;
    s.mechanisms.gamma = Time::ZERO;
    s.set_clamp(false);
    s
}

fn ac6() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let mut updates = 0;
    for name in ["tiny", "case1", "case3", "case5", "fig1a", "fig1b", "fig1c"] {
        for delta_us in [500, 2_000] {
            let delta = Time::from_us(delta_us);
            let s = analytic(load(name), delta);
            for seed in 0..3 {
                let out = run(&s, seed);
                let m = measure(&s, &out.trace);
                for u in &m.updates {
                    updates += 1;
                    let (Some(r1), Some(r2), Some(r3), Some(ov), Some(tr)) = (u.r1, u.r2, u.r3, u.overlap, u.transition)
                    else {
                        pass = false;
                        notes.push(format!("{name} delta={delta}: update v={} incomplete", u.v));
                        continue;
                    };
                    let want_ov = delta * 4 + r1 + r2 + r3;
                    let want_tr = delta * 3 + r1 + r2;
                    if (ov - want_ov).abs() > TICK || (tr - want_tr).abs() > TICK {
                        pass = false;
                        notes.push(format!(
                            "{name} delta={delta} seed {seed}: overlap {ov} vs {want_ov}, transition {tr} vs {want_tr}"
                        ));
                    }
                }
            }
        }
    }
    if pass {
        notes.push(format!("{updates} updates, tolerance {TICK} ms"));
    }
    Outcome::new(pass && updates > 0, "measured overlap and transition match the round formulas", notes)
}

fn with_fault(name: &str, kind: MsgKind, switch: &str) -> Scenario {
    let mut s = load(name);
    let id = sw(&s, switch);
    s.faults.push(MessageFault { kind, switch: id, update: UpdateId(1), occurrence: 1 });
    s
}

fn ac7() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for switch in ["sf", "sj"] {
        let s = with_fault("case3", MsgKind::Commit, switch);
        let outcomes = run_seeds(&s, 0..STALL_SEEDS);
        let sum = Summary::of(&outcomes);
        let completed = outcomes.iter().flat_map(|o| &o.metrics.updates).filter(|u| !u.partial).count();
        let ok = sum.check_errors == 0
            && sum.total.paths.new == 0
            && sum.total.count(ViolationKind::Ppc) == 0
            && completed == 0;
        pass &= ok;
        notes.push(format!(
            "Commit to {switch} lost: {} packets on the new path, {} completed updates, violations {}",
            sum.total.paths.new,
            completed,
            fmt_counts(&sum.total.counts())
        ));
    }
    for switch in ["sf", "sj"] {
        let s = with_fault("case3", MsgKind::CommitOk, switch);
        let outcomes = run_seeds(&s, 0..STALL_SEEDS);
        let sum = Summary::of(&outcomes);
        let ok = sum.check_errors == 0 && sum.total.count(ViolationKind::Ppc) == 0;
        pass &= ok;
        notes.push(format!(
            "CommitOK to {switch} lost: old {} new {} other {}, violations {}",
            sum.total.paths.old,
            sum.total.paths.new,
            sum.total.paths.other,
            fmt_counts(&sum.total.counts())
        ));
    }
    Outcome::new(pass, format!("stall safety: one lost Commit or CommitOK, {STALL_SEEDS} seeds each"), notes)
}

fn ac8() -> Outcome {
    let n = 100u32;
    let s = bundled::concurrent(n).expect("concurrent scenario");
    let m = s.timing.max_lifetime;
    let mut notes = Vec::new();
    let mut pass = true;
    for seed in 0..CONCURRENT_SEEDS {
        let out = run(&s, seed);
        let rep = ppcu_core::checker::check(&s, &out.trace);
        let clean = rep.as_ref().is_ok_and(|r| r.is_clean());
        let mut admit: BTreeMap<u32, (Time, UpdateId)> = BTreeMap::new();
        let mut retire: BTreeMap<UpdateId, Time> = BTreeMap::new();
        let mut complete: BTreeMap<UpdateId, Time> = BTreeMap::new();
        let mut rejects: Vec<Time> = Vec::new();
        for r in &out.trace.records {
            match &r.event {
                Event::UpdateAdmit { idx, v } => {
                    admit.insert(*idx, (r.global, *v));
                }
                Event::UpdateRetire { v } => {
                    retire.insert(*v, r.global);
                }
                Event::UpdateComplete { v } => {
                    complete.insert(*v, r.global);
                }
                Event::UpdateReject { idx, .. } if *idx == n => rejects.push(r.global),
                _ => {}
            }
        }
        let disjoint: Vec<(Time, UpdateId)> = (0..n).filter_map(|i| admit.get(&i).copied()).collect();
        let first_done = complete.values().min().copied().unwrap_or(Time::MAX);
        let all_admitted_together = disjoint.len() == n as usize && disjoint.iter().all(|(t, _)| *t < first_done);
        let all_retired = disjoint.iter().all(|(_, v)| retire.contains_key(v));
        let blocking_retired = disjoint.first().and_then(|(_, v)| retire.get(v)).copied();
        let late = admit.get(&n).copied();
        let gate_ok = match (blocking_retired, late) {
            (Some(r), Some((a, v))) => {
                !rejects.is_empty()
                    && rejects.iter().all(|t| *t < r + m)
                    && a >= r + m
                    && retire.contains_key(&v)
            }
            _ => false,
        };
        let ok = clean && all_admitted_together && all_retired && gate_ok;
        if !ok || seed == 0 {
            notes.push(format!(
                "seed {seed}: clean={clean} concurrent={all_admitted_together} retired={all_retired} gate={gate_ok} conflicting admitted at {} after retire {} + M, {} rejections",
                late.map_or("-".into(), |(a, _)| a.to_string()),
                blocking_retired.map_or("-".into(), |r| r.to_string()),
                rejects.len()
            ));
        }
        pass &= ok;
    }
    Outcome::new(pass, format!("concurrency: {n} disjoint updates plus one conflicting, {CONCURRENT_SEEDS} seeds"), notes)
}

fn random_set(rng: &mut ChaCha8Rng) -> RuleSet {
    let n = rng.random_range(0..=6);
    RuleSet::from_rules((0..n).map(|i| {
        let care: u32 = rng.random_range(0..16);
        let value: u32 = rng.random_range(0..16) & care;
        let p = MatchPattern::new(4, value, care).expect("4-bit pattern");
        Rule::new(RuleId(i), rng.random_range(0..4), p, ActionSpec::forward(1))
    }))
    .expect("distinct ids")
}

fn headers(set: &RuleSet) -> Vec<u32> {
    (0..16u32).filter(|h| set.iter().any(|r| r.pattern.matches_unchecked(Header::new(4, *h).unwrap()))).collect()
}

/// Rules of `a` with some header that no rule of `b` on the given priority
/// side matches.
fn brute_difference(a: &RuleSet, b: &RuleSet, below: bool) -> Vec<RuleId> {
    a.iter()
        .filter(|ra| {
            (0..16u32).map(|h| Header::new(4, h).unwrap()).any(|h| {
                ra.pattern.matches_unchecked(h)
                    && !b.iter().any(|rb| {
                        let side = if below { rb.priority <= ra.priority } else { rb.priority >= ra.priority };
                        side && rb.pattern.matches_unchecked(h)
                    })
            })
        })
        .map(|r| r.id)
        .collect()
}

fn ac9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut mismatches = [0usize; 4];
    for _ in 0..ORACLE_SETS {
        let a = random_set(&mut rng);
        let b = random_set(&mut rng);
        let (ha, hb) = (headers(&a), headers(&b));
        if match_field_equivalent(&a, &b).unwrap() != (ha == hb) {
            mismatches[0] += 1;
        }
        let d: Vec<RuleId> = special_difference(&a, &b).iter().map(|r| r.id).collect();
        if d != brute_difference(&a, &b, true) {
            mismatches[1] += 1;
        }
        let d: Vec<RuleId> = inverse_special_difference(&a, &b).iter().map(|r| r.id).collect();
        if d != brute_difference(&a, &b, false) {
            mismatches[2] += 1;
        }
        let u1 = UpdateRequest {
            per_switch: BTreeMap::from([(SwitchId(0), SwitchUpdate { r0: a.clone(), r1: RuleSet::new() })]),
        };
        let u2 = UpdateRequest {
            per_switch: BTreeMap::from([(SwitchId(1), SwitchUpdate { r0: RuleSet::new(), r1: b.clone() })]),
        };
        if updates_disjoint(&u1, &u2) != !ha.iter().any(|h| hb.contains(h)) {
            mismatches[3] += 1;
        }
    }
    let total: usize = mismatches.iter().sum();
    Outcome::new(
        total == 0,
        format!(
            "match-engine oracle: {ORACLE_SETS} random 4-bit rule set pairs, mismatches equivalence={} A-B={} A~B={} disjoint={}",
            mismatches[0], mismatches[1], mismatches[2], mismatches[3]
        ),
        Vec::new(),
    )
}

fn main() -> ExitCode {
    let seeds = std::env::var("PPCU_ACCEPT_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(FUZZ_SEEDS);
    let (ac1, ac4) = ac1_ac4(seeds);
    let results = [
        ("AC1", ac1),
        ("AC2", ac2()),
        ("AC3", ac3()),
        ("AC4", ac4),
        ("AC5", ac5()),
        ("AC6", ac6()),
        ("AC7", ac7()),
        ("AC8", ac8()),
        ("AC9", ac9()),
    ];
    let mut failed = 0;
    for (id, o) in &results {
        for n in &o.notes {
            println!("    {id} {n}");
        }
        println!("{id} {} {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
