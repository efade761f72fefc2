// SPDX-License-Identifier: Apache-2.0

//! Relations between rule sets.
//!
//! `A - B` keeps the rules `a` of `A` whose packets are not all matched by
//! the rules of `B` with priority at most `P(a)`. `A ~ B` is the same with
//! priority at least `P(a)`. A rule dropped by `A - B` has a counterpart in
//! `B` below it, so `B` can take over its traffic without changing which
//! packets the switch handles.

use std::collections::BTreeMap;

use super::{MatchError, MatchPattern, Rule, RuleSet};
use crate::SwitchId;

/// Widths up to this are decided by walking every header of the cube.
const ENUMERATION_WIDTH: u8 = 16;

/// Whether every header matched by `p` is matched by some pattern in `by`.
pub fn covered_by(p: MatchPattern, by: &[MatchPattern]) -> bool {
    if p.width() <= ENUMERATION_WIDTH {
        covered_by_enumeration(p, by)
    } else {
        covered_by_cubes(p, by)
    }
}

pub(crate) fn covered_by_enumeration(p: MatchPattern, by: &[MatchPattern]) -> bool {
    let relevant: Vec<MatchPattern> = by.iter().copied().filter(|b| b.intersects(p)).collect();
    if relevant.iter().any(|b| p.is_subset_of(*b)) {
        return true;
    }
    p.headers().all(|h| relevant.iter().any(|b| b.matches_unchecked(h)))
}

pub(crate) fn covered_by_cubes(p: MatchPattern, by: &[MatchPattern]) -> bool {
    let mut rest = vec![p];
    for b in by {
        if rest.is_empty() {
            break;
        }
        rest = rest.into_iter().flat_map(|c| c.subtract(*b)).collect();
    }
    rest.is_empty()
}

fn set_width(set: &RuleSet) -> Option<u8> {
    set.iter().next().map(|r| r.pattern.width())
}

/// Whether `a` and `b` match exactly the same set of headers.
pub fn match_field_equivalent(a: &RuleSet, b: &RuleSet) -> Result<bool, MatchError> {
    if let (Some(wa), Some(wb)) = (set_width(a), set_width(b)) {
        if wa != wb {
            return Err(MatchError::WidthMismatch { expected: wa, found: wb });
        }
    }
    let pa: Vec<MatchPattern> = a.patterns().collect();
    let pb: Vec<MatchPattern> = b.patterns().collect();
    Ok(pa.iter().all(|p| covered_by(*p, &pb)) && pb.iter().all(|p| covered_by(*p, &pa)))
}

fn difference_by(a: &RuleSet, b: &RuleSet, keep_b: impl Fn(&Rule, &Rule) -> bool) -> RuleSet {
    let kept = a.iter().filter(|ra| {
        let below: Vec<MatchPattern> =
            b.iter().filter(|rb| keep_b(ra, rb)).map(|rb| rb.pattern).collect();
        !covered_by(ra.pattern, &below)
    });
    RuleSet::from_rules(kept.cloned()).expect("subset of a rule set has unique ids")
}

/// `A - B`.
pub fn special_difference(a: &RuleSet, b: &RuleSet) -> RuleSet {
    difference_by(a, b, |ra, rb| rb.priority <= ra.priority)
}

/// `A ~ B`.
pub fn inverse_special_difference(a: &RuleSet, b: &RuleSet) -> RuleSet {
    difference_by(a, b, |ra, rb| rb.priority >= ra.priority)
}

/// Rules to delete and rules to install at one switch.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SwitchUpdate {
    pub r0: RuleSet,
    pub r1: RuleSet,
}

/// One rules update across a set of switches. The identifier is assigned by
/// the controller on admission.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct UpdateRequest {
    pub per_switch: BTreeMap<SwitchId, SwitchUpdate>,
}

impl UpdateRequest {
    pub fn switches(&self) -> impl Iterator<Item = SwitchId> + '_ {
        self.per_switch.keys().copied()
    }

    /// Every pattern in `R0` and `R1` over all switches.
    pub fn patterns(&self) -> impl Iterator<Item = MatchPattern> + '_ {
        self.per_switch.values().flat_map(|u| u.r0.patterns().chain(u.r1.patterns()))
    }

    /// Structural checks: at least one switch, no switch with nothing to do.
    pub fn well_formed(&self) -> Result<(), String> {
        if self.per_switch.is_empty() {
            return Err("update touches no switch".into());
        }
        for (sw, u) in &self.per_switch {
            if u.r0.is_empty() && u.r1.is_empty() {
                return Err(format!("update entry for switch {} is empty", sw.0));
            }
        }
        Ok(())
    }
}

/// No header can match a rule of both updates. Decided by pairwise pattern
/// intersection.
pub fn updates_disjoint(u1: &UpdateRequest, u2: &UpdateRequest) -> bool {
    let p2: Vec<MatchPattern> = u2.patterns().collect();
    u1.patterns().all(|a| p2.iter().all(|b| !a.intersects(*b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::match_engine::{ActionSpec, Header};
    use crate::RuleId;
    use proptest::prelude::*;

    fn set(rules: &[(i32, &str)]) -> RuleSet {
        RuleSet::from_rules(rules.iter().enumerate().map(|(i, (p, m))| {
            Rule::new(RuleId(i as u32), *p, m.parse().unwrap(), ActionSpec::forward(1))
        }))
        .unwrap()
    }

    fn summary(s: &RuleSet) -> Vec<(i32, String)> {
        s.iter().map(|r| (r.priority, r.pattern.to_string())).collect()
    }

    fn update(sw: u16, r0: RuleSet, r1: RuleSet) -> UpdateRequest {
        UpdateRequest { per_switch: BTreeMap::from([(SwitchId(sw), SwitchUpdate { r0, r1 })]) }
    }

    #[test]
    fn equivalence_examples() {
        let a = set(&[(3, "0000"), (2, "01**")]);
        let b = set(&[(3, "0000"), (2, "0100"), (1, "01**")]);
        assert!(match_field_equivalent(&a, &b).unwrap());
        assert!(!match_field_equivalent(&set(&[(1, "0000")]), &set(&[(1, "0001")])).unwrap());
        assert!(match_field_equivalent(&set(&[(1, "000")]), &set(&[(1, "0000")])).is_err());
    }

    #[test]
    fn difference_examples() {
        let r1 = set(&[(2, "0000"), (1, "00**")]);
        let r0 = set(&[(1, "000*")]);
        assert_eq!(summary(&special_difference(&r1, &r0)), [(1, "00**".to_string())]);
        assert!(special_difference(&r1, &r1).is_empty());

        let r0 = set(&[(1, "00**")]);
        let r1 = set(&[(2, "000*")]);
        assert_eq!(summary(&inverse_special_difference(&r0, &r1)), [(1, "00**".to_string())]);
        assert_eq!(inverse_special_difference(&r0, &RuleSet::new()), r0);
    }

    #[test]
    fn disjointness_examples() {
        let u1 = update(1, RuleSet::new(), set(&[(5, "1000")]));
        let u2 = update(2, set(&[(5, "1***")]), RuleSet::new());
        let u3 = update(1, RuleSet::new(), set(&[(5, "1111")]));
        assert!(!updates_disjoint(&u1, &u2));
        assert!(updates_disjoint(&u1, &u3));
        assert!(!updates_disjoint(&u1, &u1));
    }

    #[test]
    fn wide_patterns_use_cube_algebra() {
        let p: MatchPattern = "1*******************".parse().unwrap();
        let halves: Vec<MatchPattern> =
            vec!["10******************".parse().unwrap(), "11******************".parse().unwrap()];
        assert!(covered_by(p, &halves));
        assert!(!covered_by(p, &halves[..1]));
    }

    // Brute-force oracles: every relation decided by listing headers.

    fn headers_of(p: MatchPattern) -> Vec<Header> {
        Header::all(p.width()).filter(|h| p.matches_unchecked(*h)).collect()
    }

    fn brute_covered(p: MatchPattern, by: &[MatchPattern]) -> bool {
        headers_of(p).iter().all(|h| by.iter().any(|b| b.matches_unchecked(*h)))
    }

    fn brute_difference(a: &RuleSet, b: &RuleSet, below: bool) -> Vec<RuleId> {
        a.iter()
            .filter(|ra| {
                let by: Vec<MatchPattern> = b
                    .iter()
                    .filter(|rb| if below { rb.priority <= ra.priority } else { rb.priority >= ra.priority })
                    .map(|rb| rb.pattern)
                    .collect();
                !brute_covered(ra.pattern, &by)
            })
            .map(|r| r.id)
            .collect()
    }

    fn arb_set(width: u8, max: usize) -> impl Strategy<Value = RuleSet> {
        let m = (1u32 << width) - 1;
        proptest::collection::vec((0i32..4, 0..=m, 0..=m), 0..max).prop_map(move |v| {
            RuleSet::from_rules(v.into_iter().enumerate().map(|(i, (p, val, care))| {
                Rule::new(
                    RuleId(i as u32),
                    p,
                    MatchPattern::new(width, val & care, care).unwrap(),
                    ActionSpec::forward(1),
                )
            }))
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn relations_match_brute_force(a in arb_set(4, 5), b in arb_set(4, 5)) {
            let ha: Vec<Header> = Header::all(4).filter(|h| a.iter().any(|r| r.pattern.matches_unchecked(*h))).collect();
            let hb: Vec<Header> = Header::all(4).filter(|h| b.iter().any(|r| r.pattern.matches_unchecked(*h))).collect();
            prop_assert_eq!(match_field_equivalent(&a, &b).unwrap(), ha == hb);
            let d: Vec<RuleId> = special_difference(&a, &b).iter().map(|r| r.id).collect();
            prop_assert_eq!(d, brute_difference(&a, &b, true));
            let d: Vec<RuleId> = inverse_special_difference(&a, &b).iter().map(|r| r.id).collect();
            prop_assert_eq!(d, brute_difference(&a, &b, false));
        }

        #[test]
        fn difference_partitions_its_input(a in arb_set(4, 6), b in arb_set(4, 6)) {
            let d = special_difference(&a, &b);
            for r in &d {
                prop_assert!(a.get(r.id).is_some());
            }
            let rest = a.iter().filter(|r| d.get(r.id).is_none()).count();
            prop_assert_eq!(rest + d.len(), a.len());
        }

        #[test]
        fn cover_routes_agree(p in (0u32..256, 0u32..256), by in proptest::collection::vec((0u32..256, 0u32..256), 0..6)) {
            let mk = |(v, c): (u32, u32)| MatchPattern::new(8, v & c, c).unwrap();
            let p = mk(p);
            let by: Vec<MatchPattern> = by.into_iter().map(mk).collect();
            prop_assert_eq!(covered_by_cubes(p, &by), covered_by_enumeration(p, &by));
            prop_assert_eq!(covered_by_cubes(p, &by), brute_covered(p, &by));
        }

        #[test]
        fn disjointness_is_symmetric_and_sound(a in arb_set(8, 4), b in arb_set(8, 4)) {
            let u1 = update(1, a.clone(), RuleSet::new());
            let u2 = update(2, RuleSet::new(), b.clone());
            prop_assert_eq!(updates_disjoint(&u1, &u2), updates_disjoint(&u2, &u1));
            if updates_disjoint(&u1, &u2) {
                for h in Header::all(8) {
                    let in_a = a.iter().any(|r| r.pattern.matches_unchecked(h));
                    let in_b = b.iter().any(|r| r.pattern.matches_unchecked(h));
                    prop_assert!(!(in_a && in_b));
                }
            }
        }
    }
}
