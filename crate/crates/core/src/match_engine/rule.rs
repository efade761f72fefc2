// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Header, MatchError, MatchPattern};
use crate::packet::PacketMeta;
use crate::{Port, RuleId, Time, UpdateId};

/// Inactive sentinel for the activation register: one less than the largest
/// value a 31-bit millisecond timestamp can hold.
pub const T_MAX: Time = Time::from_ms((1i64 << 31) - 2);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleFlag {
    New,
    Old,
    U,
}

impl RuleFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleFlag::New => "NEW",
            RuleFlag::Old => "OLD",
            RuleFlag::U => "U",
        }
    }

    pub fn parse(s: &str) -> Option<RuleFlag> {
        match s {
            "NEW" => Some(RuleFlag::New),
            "OLD" => Some(RuleFlag::Old),
            "U" => Some(RuleFlag::U),
            _ => None,
        }
    }
}

impl fmt::Display for RuleFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Extra match-field constraints on the packet's flag bits. `true` means
/// the bit must be zero; `false` is a wildcard.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct FlagGuard {
    pub f1_zero: bool,
    pub f2_zero: bool,
    pub fp1_zero: bool,
    pub fp2_zero: bool,
}

impl FlagGuard {
    pub const ANY: FlagGuard = FlagGuard { f1_zero: false, f2_zero: false, fp1_zero: false, fp2_zero: false };
    pub const NEW: FlagGuard = FlagGuard { f1_zero: true, f2_zero: false, fp1_zero: true, fp2_zero: false };
    pub const OLD: FlagGuard = FlagGuard { f1_zero: false, f2_zero: true, fp1_zero: false, fp2_zero: true };

    #[inline]
    pub fn admits(self, meta: &PacketMeta, (fp1, fp2): (bool, bool)) -> bool {
        !(self.f1_zero && meta.f1
            || self.f2_zero && meta.f2
            || self.fp1_zero && fp1
            || self.fp2_zero && fp2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Output {
    Forward(Port),
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldOp {
    Increment(i64),
    Set(i64),
}

impl FieldOp {
    pub fn apply(self, f: &mut i64) {
        match self {
            FieldOp::Increment(d) => *f = f.wrapping_add(d),
            FieldOp::Set(v) => *f = v,
        }
    }
}

/// What a rule does to a packet it executes on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAction", into = "RawAction")]
pub struct ActionSpec {
    pub output: Output,
    pub field: Option<FieldOp>,
}

impl ActionSpec {
    pub fn forward(port: u16) -> ActionSpec {
        ActionSpec { output: Output::Forward(Port(port)), field: None }
    }

    pub fn drop() -> ActionSpec {
        ActionSpec { output: Output::Drop, field: None }
    }

    pub fn with_field(mut self, op: FieldOp) -> ActionSpec {
        self.field = Some(op);
        self
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    forward: Option<u16>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    drop: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    increment_f: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    set_f: Option<i64>,
}

impl TryFrom<RawAction> for ActionSpec {
    type Error = String;

    fn try_from(r: RawAction) -> Result<ActionSpec, String> {
        let output = match (r.forward, r.drop) {
            (Some(p), false) => Output::Forward(Port(p)),
            (None, true) => Output::Drop,
            (Some(_), true) => return Err("action has both `forward` and `drop`".into()),
            (None, false) => return Err("action needs `forward` or `drop`".into()),
        };
        let field = match (r.increment_f, r.set_f) {
            (Some(d), None) => Some(FieldOp::Increment(d)),
            (None, Some(v)) => Some(FieldOp::Set(v)),
            (None, None) => None,
            (Some(_), Some(_)) => return Err("action has both `increment_f` and `set_f`".into()),
        };
        Ok(ActionSpec { output, field })
    }
}

impl From<ActionSpec> for RawAction {
    fn from(a: ActionSpec) -> RawAction {
        let (forward, drop) = match a.output {
            Output::Forward(p) => (Some(p.0), false),
            Output::Drop => (None, true),
        };
        let (increment_f, set_f) = match a.field {
            Some(FieldOp::Increment(d)) => (Some(d), None),
            Some(FieldOp::Set(v)) => (None, Some(v)),
            None => (None, None),
        };
        RawAction { forward, drop, increment_f, set_f }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rule {
    pub id: RuleId,
    /// Larger is higher.
    pub priority: i32,
    pub pattern: MatchPattern,
    pub action: ActionSpec,
    pub flag: RuleFlag,
    /// Activation register: NEW rules execute for `TS >= t`, OLD rules for
    /// `TS < t`.
    pub t: Time,
    pub update: Option<UpdateId>,
    pub guard: FlagGuard,
}

impl Rule {
    /// An unaffected (`U`) rule.
    pub fn new(id: RuleId, priority: i32, pattern: MatchPattern, action: ActionSpec) -> Rule {
        Rule { id, priority, pattern, action, flag: RuleFlag::U, t: T_MAX, update: None, guard: FlagGuard::ANY }
    }

    /// The rule as it looks once its update has finished.
    pub fn into_unaffected(mut self) -> Rule {
        self.flag = RuleFlag::U;
        self.t = T_MAX;
        self.update = None;
        self.guard = FlagGuard::ANY;
        self
    }
}

/// A priority table. Rules are kept sorted by descending priority with
/// insertion order preserved among equal priorities, so the first admitted
/// match is the lookup result.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new() -> RuleSet {
        RuleSet::default()
    }

    pub fn from_rules(rules: impl IntoIterator<Item = Rule>) -> Result<RuleSet, MatchError> {
        let mut set = RuleSet::new();
        for r in rules {
            set.insert(r)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, rule: Rule) -> Result<(), MatchError> {
        if self.get(rule.id).is_some() {
            return Err(MatchError::DuplicateRule(rule.id));
        }
        let at = self.rules.partition_point(|r| r.priority >= rule.priority);
        self.rules.insert(at, rule);
        Ok(())
    }

    pub fn remove(&mut self, id: RuleId) -> Option<Rule> {
        let at = self.rules.iter().position(|r| r.id == id)?;
        Some(self.rules.remove(at))
    }

    pub fn get(&self, id: RuleId) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn get_mut(&mut self, id: RuleId) -> Option<&mut Rule> {
        self.rules.iter_mut().find(|r| r.id == id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Rule> {
        self.rules.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Rule> {
        self.rules.iter_mut()
    }

    pub fn retain(&mut self, f: impl FnMut(&Rule) -> bool) {
        self.rules.retain(f);
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn patterns(&self) -> impl Iterator<Item = MatchPattern> + '_ {
        self.rules.iter().map(|r| r.pattern)
    }

    /// Highest-priority rule whose pattern matches `header` and whose flag
    /// guard admits the packet's metadata and header flags.
    pub fn lookup(&self, header: Header, meta: &PacketMeta, flags: (bool, bool)) -> Option<&Rule> {
        self.lookup_excluding(header, meta, flags, &[])
    }

    /// As [`RuleSet::lookup`], skipping the rules in `skip`.
    pub fn lookup_excluding(
        &self,
        header: Header,
        meta: &PacketMeta,
        flags: (bool, bool),
        skip: &[RuleId],
    ) -> Option<&Rule> {
        self.rules.iter().find(|r| {
            r.pattern.matches_unchecked(header) && r.guard.admits(meta, flags) && !skip.contains(&r.id)
        })
    }

    /// Lookup ignoring flag guards, as done on frozen configurations.
    pub fn plain_lookup(&self, header: Header) -> Option<&Rule> {
        self.rules.iter().find(|r| r.pattern.matches_unchecked(header))
    }
}

impl<'a> IntoIterator for &'a RuleSet {
    type Item = &'a Rule;
    type IntoIter = std::slice::Iter<'a, Rule>;

    fn into_iter(self) -> Self::IntoIter {
        self.rules.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(id: u32, prio: i32, pat: &str) -> Rule {
        Rule::new(RuleId(id), prio, pat.parse().unwrap(), ActionSpec::forward(id as u16))
    }

    fn flagged(mut r: Rule, flag: RuleFlag) -> Rule {
        r.flag = flag;
        r.update = Some(UpdateId(1));
        r.guard = match flag {
            RuleFlag::New => FlagGuard::NEW,
            RuleFlag::Old => FlagGuard::OLD,
            RuleFlag::U => FlagGuard::ANY,
        };
        r
    }

    fn table() -> RuleSet {
        RuleSet::from_rules([
            flagged(rule(5, 5, "00**"), RuleFlag::Old),
            flagged(rule(6, 6, "00**"), RuleFlag::New),
        ])
        .unwrap()
    }

    #[test]
    fn new_wins_when_unflagged() {
        let h = "0010".parse().unwrap();
        let t = table();
        assert_eq!(t.lookup(h, &PacketMeta::default(), (false, false)).unwrap().id, RuleId(6));
    }

    #[test]
    fn fp1_hides_new_rules() {
        let h = "0010".parse().unwrap();
        assert_eq!(table().lookup(h, &PacketMeta::default(), (true, false)).unwrap().id, RuleId(5));
    }

    #[test]
    fn fp2_hides_old_rules() {
        let h = "0010".parse().unwrap();
        let t = table();
        assert_eq!(t.lookup(h, &PacketMeta::default(), (false, true)).unwrap().id, RuleId(6));
        let meta = PacketMeta { f1: true, ..PacketMeta::default() };
        assert!(t.lookup(h, &meta, (false, true)).is_none());
    }

    #[test]
    fn ties_break_by_insertion_order() {
        let t = RuleSet::from_rules([rule(2, 3, "1***"), rule(1, 3, "1***"), rule(3, 4, "11**")]).unwrap();
        let ids: Vec<u32> = t.iter().map(|r| r.id.0).collect();
        assert_eq!(ids, [3, 2, 1]);
        assert_eq!(t.plain_lookup("1000".parse().unwrap()).unwrap().id, RuleId(2));
        assert!(t.plain_lookup("0000".parse().unwrap()).is_none());
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert_eq!(
            RuleSet::from_rules([rule(1, 1, "1***"), rule(1, 2, "0***")]),
            Err(MatchError::DuplicateRule(RuleId(1)))
        );
    }

    #[test]
    fn action_json_shapes() {
        let a: ActionSpec = serde_json::from_str(r#"{"forward": 2, "increment_f": 1}"#).unwrap();
        assert_eq!(a, ActionSpec::forward(2).with_field(FieldOp::Increment(1)));
        let d: ActionSpec = serde_json::from_str(r#"{"drop": true}"#).unwrap();
        assert_eq!(d, ActionSpec::drop());
        assert!(serde_json::from_str::<ActionSpec>(r#"{"forward": 1, "drop": true}"#).is_err());
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"{"drop":true}"#);
    }
}
