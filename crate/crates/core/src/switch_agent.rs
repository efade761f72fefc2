// SPDX-License-Identifier: Apache-2.0

//! The switch side of the update protocol.
//!
//! The agent never looks at global time. Every handler receives the
//! switch's local clock reading and returns [`Effect`]s; table mutations
//! come back as a [`Batch`] that the caller applies atomically once the
//! rule-operation latency has elapsed.

use std::collections::BTreeMap;
use std::fmt;

use crate::match_engine::{FlagGuard, Rule, RuleFlag, RuleSet, T_MAX};
use crate::{Ablation, Mechanisms, RuleId, SwitchId, Time, UpdateId};

/// Protocol messages between the controller and a switch.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    Commit { v: UpdateId, r0: Vec<RuleId>, r1: Vec<Rule> },
    ReadyToCommit { v: UpdateId, t: Time },
    CommitOk { v: UpdateId, t_last: Time },
    AckCommitOk { v: UpdateId, t: Time },
    DiscardOld { v: UpdateId, t_del: Time },
    DiscardOldAck { v: UpdateId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgKind {
    Commit,
    ReadyToCommit,
    CommitOk,
    AckCommitOk,
    DiscardOld,
    DiscardOldAck,
}

impl MsgKind {
    pub const ALL: [MsgKind; 6] = [
        MsgKind::Commit,
        MsgKind::ReadyToCommit,
        MsgKind::CommitOk,
        MsgKind::AckCommitOk,
        MsgKind::DiscardOld,
        MsgKind::DiscardOldAck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MsgKind::Commit => "Commit",
            MsgKind::ReadyToCommit => "ReadyToCommit",
            MsgKind::CommitOk => "CommitOK",
            MsgKind::AckCommitOk => "AckCommitOK",
            MsgKind::DiscardOld => "DiscardOld",
            MsgKind::DiscardOldAck => "DiscardOldAck",
        }
    }

    pub fn parse(s: &str) -> Option<MsgKind> {
        MsgKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Sent by the controller.
    pub fn downstream(self) -> bool {
        matches!(self, MsgKind::Commit | MsgKind::CommitOk | MsgKind::DiscardOld)
    }
}

impl fmt::Display for MsgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Message {
    pub fn kind(&self) -> MsgKind {
        match self {
            Message::Commit { .. } => MsgKind::Commit,
            Message::ReadyToCommit { .. } => MsgKind::ReadyToCommit,
            Message::CommitOk { .. } => MsgKind::CommitOk,
            Message::AckCommitOk { .. } => MsgKind::AckCommitOk,
            Message::DiscardOld { .. } => MsgKind::DiscardOld,
            Message::DiscardOldAck { .. } => MsgKind::DiscardOldAck,
        }
    }

    pub fn v(&self) -> UpdateId {
        match self {
            Message::Commit { v, .. }
            | Message::ReadyToCommit { v, .. }
            | Message::CommitOk { v, .. }
            | Message::AckCommitOk { v, .. }
            | Message::DiscardOld { v, .. }
            | Message::DiscardOldAck { v } => *v,
        }
    }

    /// The timestamp the message carries, if any.
    pub fn time(&self) -> Option<Time> {
        match self {
            Message::ReadyToCommit { t, .. } | Message::AckCommitOk { t, .. } => Some(*t),
            Message::CommitOk { t_last, .. } => Some(*t_last),
            Message::DiscardOld { t_del, .. } => Some(*t_del),
            _ => None,
        }
    }
}

/// Rule-operation latencies: insert, modify, delete, register write.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Latencies {
    pub t_i: Time,
    pub t_m: Time,
    pub t_d: Time,
    pub t_v: Time,
}

impl Latencies {
    /// Marking `n_o` rules OLD and installing `n_n` NEW rules.
    pub fn commit(&self, n_o: usize, n_n: usize) -> Time {
        (self.t_m + self.t_v) * n_o as i64 + (self.t_i + self.t_v) * n_n as i64
    }

    /// Writing the activation register of every rule of the update.
    pub fn commit_ok(&self, n_o: usize, n_n: usize) -> Time {
        self.t_v * (n_o + n_n) as i64
    }

    /// Relabelling NEW rules and deleting OLD ones.
    pub fn expire(&self, n_o: usize, n_n: usize) -> Time {
        (self.t_m + self.t_v) * n_n as i64 + self.t_d * n_o as i64
    }

    /// Naive replacement: delete `R0`, insert `R1` as unaffected rules.
    pub fn naive(&self, n_o: usize, n_n: usize) -> Time {
        self.t_d * n_o as i64 + self.t_i * n_n as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Committed,
    CommitOkReceived,
    TimerRunning,
    Complete,
}

/// A table mutation to apply atomically after `delay`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Batch {
    Commit { v: UpdateId, r0: Vec<RuleId>, r1: Vec<Rule> },
    SetActivation { v: UpdateId, t_eff: Time },
    Expire { v: UpdateId },
    Naive { v: UpdateId, r0: Vec<RuleId>, r1: Vec<Rule> },
}

impl Batch {
    pub fn v(&self) -> UpdateId {
        match self {
            Batch::Commit { v, .. } | Batch::SetActivation { v, .. } | Batch::Expire { v } | Batch::Naive { v, .. } => *v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Effect {
    /// Apply the batch `delay` after now.
    Schedule { delay: Time, batch: Batch },
    Reply(Message),
    /// Fire [`SwitchAgent::timer_fired`] after this local duration.
    ArmTimer { v: UpdateId, duration: Time },
    /// The activation register of update `v`'s rules was set.
    Activated { v: UpdateId, t_eff: Time },
    /// Commit could not be applied; the update never becomes visible here.
    CommitFailed { v: UpdateId, missing: RuleId },
    /// All OLD rules of `v` are gone and its NEW rules are unaffected.
    Completed { v: UpdateId },
    /// Naive mode replaced the rules directly.
    Replaced { v: UpdateId },
    /// A message was dropped by the state machine.
    Ignored { v: UpdateId, kind: MsgKind, reason: &'static str },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct UpdateState {
    phase: Phase,
    old: Vec<RuleId>,
    new: Vec<RuleId>,
    /// Local time reported in ReadyToCommit.
    t_ready: Time,
    t_eff: Option<Time>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SwitchAgent {
    pub id: SwitchId,
    pub table: RuleSet,
    mech: Mechanisms,
    lat: Latencies,
    max_lifetime: Time,
    updates: BTreeMap<UpdateId, UpdateState>,
    /// Commit batches scheduled but not yet applied.
    in_progress: Vec<UpdateId>,
}

impl SwitchAgent {
    pub fn new(id: SwitchId, table: RuleSet, mech: Mechanisms, lat: Latencies, max_lifetime: Time) -> SwitchAgent {
        SwitchAgent { id, table, mech, lat, max_lifetime, updates: BTreeMap::new(), in_progress: Vec::new() }
    }

    pub fn phase(&self, v: UpdateId) -> Option<Phase> {
        self.updates.get(&v).map(|u| u.phase)
    }

    pub fn activation(&self, v: UpdateId) -> Option<Time> {
        self.updates.get(&v).and_then(|u| u.t_eff)
    }

    /// Handles a controller message received at local time `local`.
    pub fn on_message(&mut self, msg: Message, local: Time) -> Vec<Effect> {
        let kind = msg.kind();
        let ignore = |v, reason| vec![Effect::Ignored { v, kind, reason }];
        match msg {
            Message::Commit { v, r0, r1 } => {
                if self.updates.contains_key(&v) || self.in_progress.contains(&v) {
                    return ignore(v, "duplicate-commit");
                }
                self.in_progress.push(v);
                let (delay, batch) = if self.mech.naive {
                    (self.lat.naive(r0.len(), r1.len()), Batch::Naive { v, r0, r1 })
                } else {
                    (self.lat.commit(r0.len(), r1.len()), Batch::Commit { v, r0, r1 })
                };
                vec![Effect::Schedule { delay, batch }]
            }
            Message::CommitOk { v, t_last } => {
                let Some(u) = self.updates.get(&v) else {
                    return ignore(v, "unknown-update");
                };
                if u.phase != Phase::Committed {
                    return ignore(v, "wrong-phase");
                }
                let base = if self.mech.ablated(Ablation::OwnTime) { u.t_ready } else { t_last };
                let t_eff = self.mech.activation_time(base);
                let delay = self.lat.commit_ok(u.old.len(), u.new.len());
                vec![Effect::Schedule { delay, batch: Batch::SetActivation { v, t_eff } }]
            }
            Message::DiscardOld { v, t_del } => {
                let m = self.max_lifetime;
                let Some(u) = self.updates.get_mut(&v) else {
                    return ignore(v, "unknown-update");
                };
                if u.phase != Phase::CommitOkReceived {
                    return ignore(v, "wrong-phase");
                }
                u.phase = Phase::TimerRunning;
                // Wait until every packet stamped before the activation time
                // has left the network.
                let guard = t_del.max(u.t_eff.unwrap_or(t_del));
                let duration = (guard + m - local).max0();
                vec![Effect::Reply(Message::DiscardOldAck { v }), Effect::ArmTimer { v, duration }]
            }
            Message::ReadyToCommit { v, .. } | Message::AckCommitOk { v, .. } | Message::DiscardOldAck { v } => {
                ignore(v, "not-switch-bound")
            }
        }
    }

    pub fn timer_fired(&mut self, v: UpdateId) -> Vec<Effect> {
        match self.updates.get(&v) {
            Some(u) if u.phase == Phase::TimerRunning => {
                let delay = self.lat.expire(u.old.len(), u.new.len());
                vec![Effect::Schedule { delay, batch: Batch::Expire { v } }]
            }
            _ => Vec::new(),
        }
    }

    /// Applies a previously scheduled batch at local time `local`.
    pub fn apply(&mut self, batch: Batch, local: Time) -> Vec<Effect> {
        match batch {
            Batch::Commit { v, r0, r1 } => {
                self.in_progress.retain(|x| *x != v);
                if let Some(missing) = r0.iter().copied().find(|id| self.table.get(*id).is_none()) {
                    return vec![Effect::CommitFailed { v, missing }];
                }
                let old_guard = if self.mech.ablated(Ablation::NoOldFp2Guard) {
                    FlagGuard { fp2_zero: false, ..FlagGuard::OLD }
                } else {
                    FlagGuard::OLD
                };
                for id in &r0 {
                    let r = self.table.get_mut(*id).expect("checked above");
                    r.flag = RuleFlag::Old;
                    r.t = T_MAX;
                    r.update = Some(v);
                    r.guard = old_guard;
                }
                let new_t = if self.mech.ablated(Ablation::NewImmediate) { Time::ZERO } else { T_MAX };
                let mut new_ids = Vec::with_capacity(r1.len());
                for mut r in r1 {
                    r.flag = RuleFlag::New;
                    r.t = new_t;
                    r.update = Some(v);
                    r.guard = FlagGuard::NEW;
                    new_ids.push(r.id);
                    if self.table.insert(r).is_err() {
                        return vec![Effect::CommitFailed { v, missing: *new_ids.last().unwrap() }];
                    }
                }
                let mut effects = Vec::new();
                let mut t_eff = None;
                if self.mech.ablated(Ablation::OwnTime) {
                    let t = self.mech.activation_time(local);
                    for id in r0.iter().chain(&new_ids) {
                        self.table.get_mut(*id).expect("installed above").t = t;
                    }
                    t_eff = Some(t);
                    effects.push(Effect::Activated { v, t_eff: t });
                }
                self.updates.insert(v, UpdateState { phase: Phase::Committed, old: r0, new: new_ids, t_ready: local, t_eff });
                effects.push(Effect::Reply(Message::ReadyToCommit { v, t: local }));
                effects
            }
            Batch::SetActivation { v, t_eff } => {
                let immediate = self.mech.ablated(Ablation::NewImmediate);
                let Some(u) = self.updates.get_mut(&v) else { return Vec::new() };
                for id in &u.old {
                    if let Some(r) = self.table.get_mut(*id) {
                        r.t = t_eff;
                    }
                }
                if !immediate {
                    for id in &u.new {
                        if let Some(r) = self.table.get_mut(*id) {
                            r.t = t_eff;
                        }
                    }
                }
                u.phase = Phase::CommitOkReceived;
                u.t_eff = Some(t_eff);
                vec![Effect::Activated { v, t_eff }, Effect::Reply(Message::AckCommitOk { v, t: local })]
            }
            Batch::Expire { v } => {
                let Some(u) = self.updates.get_mut(&v) else { return Vec::new() };
                for id in &u.old {
                    self.table.remove(*id);
                }
                for id in &u.new {
                    if let Some(r) = self.table.remove(*id) {
                        self.table.insert(r.into_unaffected()).expect("id was just removed");
                    }
                }
                u.phase = Phase::Complete;
                vec![Effect::Completed { v }]
            }
            Batch::Naive { v, r0, r1 } => {
                self.in_progress.retain(|x| *x != v);
                if let Some(missing) = r0.iter().copied().find(|id| self.table.get(*id).is_none()) {
                    return vec![Effect::CommitFailed { v, missing }];
                }
                for id in &r0 {
                    self.table.remove(*id);
                }
                for r in r1 {
                    let id = r.id;
                    if self.table.insert(r.into_unaffected()).is_err() {
                        return vec![Effect::CommitFailed { v, missing: id }];
                    }
                }
                self.updates.insert(
                    v,
                    UpdateState { phase: Phase::Complete, old: r0, new: Vec::new(), t_ready: local, t_eff: None },
                );
                vec![Effect::Replaced { v }, Effect::Reply(Message::ReadyToCommit { v, t: local })]
            }
        }
    }
}
