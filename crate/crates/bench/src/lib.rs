// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use ppcu_core::match_engine::{ActionSpec, MatchPattern, Rule, RuleSet};
use ppcu_core::scenario::{bundled, Scenario};
use ppcu_core::sim::{run, Trace};
use ppcu_core::RuleId;

/// A bundled scenario and the trace of one seeded run.
pub fn traced(name: &str, seed: u64) -> (Scenario, Trace) {
    let s = bundled::load(name).expect("bundled scenario");
    let t = run(&s, seed).trace;
    (s, t)
}

/// `n` exact-match rules over 16-bit headers with distinct priorities.
pub fn exact_table(n: u32) -> RuleSet {
    let rules = (0..n).map(|i| {
        let bits = format!("{:016b}", i);
        let pattern: MatchPattern = bits.parse().expect("valid pattern");
        Rule::new(RuleId(i + 1), i as i32 + 1, pattern, ActionSpec::forward(1))
    });
    RuleSet::from_rules(rules).expect("distinct ids")
}
