// SPDX-License-Identifier: Apache-2.0

//! Scenarios shipped with the crate.
//!
//! The seven `case*` scenarios share a five-switch line
//! `sin -> sf -> smid -> sj -> sout` where `sf` and `sj` are the affected
//! switches and one of them sits much further from the controller than the
//! other. Each pairs with the [`Ablation`] that breaks it, see [`CASES`].

use serde_json::json;

use super::{Scenario, ScenarioError, ScenarioFile};
use crate::Ablation;

const FILES: &[(&str, &str)] = &[
    ("tiny", include_str!("../../scenarios/tiny.json")),
    ("case1", include_str!("../../scenarios/case1.json")),
    ("case2", include_str!("../../scenarios/case2.json")),
    ("case3", include_str!("../../scenarios/case3.json")),
    ("case4", include_str!("../../scenarios/case4.json")),
    ("case5", include_str!("../../scenarios/case5.json")),
    ("case6", include_str!("../../scenarios/case6.json")),
    ("case7", include_str!("../../scenarios/case7.json")),
    ("fast_ingress", include_str!("../../scenarios/fast_ingress.json")),
    ("fig1a", include_str!("../../scenarios/fig1a.json")),
    ("fig1b", include_str!("../../scenarios/fig1b.json")),
    ("fig1c", include_str!("../../scenarios/fig1c.json")),
    ("case3_kernel", include_str!("../../scenarios/case3_kernel.json")),
    ("case4_kernel", include_str!("../../scenarios/case4_kernel.json")),
];

/// Each race scenario and the mechanism it exercises.
pub const CASES: [(&str, Ablation); 7] = [
    ("case1", Ablation::NewImmediate),
    ("case2", Ablation::OwnTime),
    ("case3", Ablation::NoFp2Mark),
    ("case4", Ablation::NoFp1Mark),
    ("case5", Ablation::NoF1Resubmit),
    ("case6", Ablation::NoOldFp2Guard),
    ("case7", Ablation::NoF2Resubmit),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    FILES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Loads a bundled scenario. `concurrent<N>` builds [`concurrent`] with `N`
/// updates.
pub fn load(name: &str) -> Result<Scenario, ScenarioError> {
    if let Some(n) = name.strip_prefix("concurrent") {
        if let Ok(n) = n.parse::<u32>() {
            return concurrent(n);
        }
    }
    match source(name) {
        Some(text) => Scenario::parse(text),
        None => Err(ScenarioError::Invalid(format!("no bundled scenario named `{name}`"))),
    }
}

fn header(i: u32) -> String {
    format!("{i:08b}")
}

/// `n` pairwise-disjoint updates, all submitted at 1 ms, plus one more update
/// that overlaps the first and retries every 0.5 ms until it is admitted.
///
/// Three switches `a -> b -> c`; update `i` replaces the exact-match rules for
/// header `i` at `a` and `c`. The last update adds a rule for header 0 at `b`.
pub fn concurrent(n: u32) -> Result<Scenario, ScenarioError> {
    if n == 0 || n > 255 {
        return Err(ScenarioError::Invalid("concurrent scenarios need 1..=255 updates".into()));
    }
    let mut a = vec![json!({"id": 1, "priority": 1, "match": "********", "action": {"forward": 1}})];
    let b = vec![json!({"id": 1, "priority": 1, "match": "********", "action": {"forward": 1}})];
    let mut c = vec![json!({"id": 1, "priority": 1, "match": "********", "action": {"forward": 9}})];
    let mut updates = Vec::new();
    let mut workload = Vec::new();
    for i in 0..n {
        let h = header(i);
        let old = 100 + i;
        let new = 1000 + i;
        a.push(json!({"id": old, "priority": 5, "match": h, "action": {"forward": 1}}));
        c.push(json!({"id": old, "priority": 5, "match": h, "action": {"forward": 9}}));
        updates.push(json!({"at_ms": 1.0, "switches": {
            "a": {"delete": [old], "insert": [{"id": new, "priority": 6, "match": h, "action": {"forward": 1, "increment_f": 1}}]},
            "c": {"delete": [old], "insert": [{"id": new, "priority": 6, "match": h, "action": {"forward": 9, "increment_f": 1}}]},
        }}));
        workload.push(json!({"ingress": "a", "header": h, "start_ms": 0, "interval_ms": 4, "count": 5}));
    }
    updates.push(json!({"at_ms": 1.0, "retry_every_ms": 0.5, "switches": {
        "b": {"delete": [], "insert": [{"id": 2, "priority": 6, "match": header(0), "action": {"forward": 1, "set_f": 7}}]},
    }}));
    let doc = json!({
        "name": format!("concurrent{n}"),
        "description": "Disjoint concurrent updates plus one conflicting update.",
        "header_width": 8,
        "topology": {
            "switches": [{"name": "a", "ingress": true}, {"name": "b"}, {"name": "c", "egress": true}],
            "links": [
                {"from": "a", "port": 1, "to": "b", "delay_ms": 0.1},
                {"from": "b", "port": 1, "to": "c", "delay_ms": 0.1}
            ],
            "hosts": [{"name": "h", "switch": "c", "port": 9}]
        },
        "initial_rules": {"a": a, "b": b, "c": c},
        "updates": updates,
        "workload": workload,
        "timing": {"delta_ms": 0.5, "max_lifetime_ms": 5, "t_i_ms": 0.2, "t_m_ms": 0.1, "t_d_ms": 0.1, "t_v_ms": 0.01}
    });
    let file: ScenarioFile = serde_json::from_value(doc).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    Scenario::from_file(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_scenario_loads() {
        for name in names() {
            load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(load("nope").is_err());
        let c = load("concurrent10").unwrap();
        assert_eq!(c.updates.len(), 11);
    }
}
