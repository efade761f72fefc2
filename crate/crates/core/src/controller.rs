// SPDX-License-Identifier: Apache-2.0

//! The coordinator: three broadcast rounds per update, admission control
//! for concurrent updates, and the quiescence gate after an update retires.
//!
//! Controller processing takes no time. Handlers return the messages to
//! send; delivery is the caller's business.

use std::collections::{BTreeMap, BTreeSet};

use crate::match_engine::{updates_disjoint, UpdateRequest};
use crate::switch_agent::{Message, MsgKind};
use crate::{SwitchId, Time, UpdateId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    CommitSent,
    CommitOkSent,
    DiscardSent,
    Complete,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Coordination {
    pub v: UpdateId,
    pub request: UpdateRequest,
    pub status: Status,
    pub admitted_at: Time,
    pub ready: BTreeMap<SwitchId, Time>,
    pub acked: BTreeMap<SwitchId, Time>,
    pub discarded: BTreeSet<SwitchId>,
    pub t_last: Option<Time>,
    pub t_del: Option<Time>,
    /// Last DiscardOldAck received.
    pub complete_at: Option<Time>,
    /// Every switch has removed the update's OLD rules. Anchors the
    /// quiescence gate; reported out of band, not as a protocol message.
    pub retired_at: Option<Time>,
    retired: BTreeSet<SwitchId>,
    /// Naive mode: switches still to be sent Commit, in order.
    naive_queue: Vec<SwitchId>,
}

impl Coordination {
    pub fn switches(&self) -> impl Iterator<Item = SwitchId> + '_ {
        self.request.switches()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("conflicts with in-flight update v={with}")]
    Conflict { with: UpdateId },
    #[error("conflicts with update v={blocking}, which retired recently; earliest admission at {earliest}")]
    Quiescence { blocking: UpdateId, earliest: Time },
    #[error("malformed update: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CtrlEffect {
    Send { to: SwitchId, msg: Message },
    Completed { v: UpdateId },
    Ignored { from: SwitchId, v: UpdateId, kind: MsgKind, reason: &'static str },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Controller {
    naive: bool,
    max_lifetime: Time,
    next_v: u32,
    updates: BTreeMap<UpdateId, Coordination>,
}

impl Controller {
    pub fn new(max_lifetime: Time, naive: bool) -> Controller {
        Controller { naive, max_lifetime, next_v: 1, updates: BTreeMap::new() }
    }

    pub fn update(&self, v: UpdateId) -> Option<&Coordination> {
        self.updates.get(&v)
    }

    pub fn updates(&self) -> impl Iterator<Item = &Coordination> {
        self.updates.values()
    }

    /// Admission test without side effects.
    pub fn admissible(&self, request: &UpdateRequest, now: Time) -> Result<(), Rejection> {
        request.well_formed().map_err(Rejection::Malformed)?;
        let mut gate: Option<(UpdateId, Time)> = None;
        for c in self.updates.values() {
            if updates_disjoint(&c.request, request) {
                continue;
            }
            match c.retired_at {
                None => return Err(Rejection::Conflict { with: c.v }),
                Some(r) if r + self.max_lifetime > now => {
                    let earliest = r + self.max_lifetime;
                    if gate.is_none_or(|(_, e)| earliest > e) {
                        gate = Some((c.v, earliest));
                    }
                }
                Some(_) => {}
            }
        }
        match gate {
            Some((blocking, earliest)) => Err(Rejection::Quiescence { blocking, earliest }),
            None => Ok(()),
        }
    }

    /// Admits `request` and returns the Commit messages. Switches are
    /// contacted in id order.
    pub fn begin_update(&mut self, request: UpdateRequest, now: Time) -> Result<(UpdateId, Vec<CtrlEffect>), Rejection> {
        let order: Vec<SwitchId> = request.switches().collect();
        self.begin_update_ordered(request, now, order)
    }

    /// As [`Controller::begin_update`]; in naive mode `order` is the order
    /// in which switches are updated one by one.
    pub fn begin_update_ordered(
        &mut self,
        request: UpdateRequest,
        now: Time,
        order: Vec<SwitchId>,
    ) -> Result<(UpdateId, Vec<CtrlEffect>), Rejection> {
        self.admissible(&request, now)?;
        let v = UpdateId(self.next_v);
        self.next_v += 1;
        let mut c = Coordination {
            v,
            request,
            status: Status::CommitSent,
            admitted_at: now,
            ready: BTreeMap::new(),
            acked: BTreeMap::new(),
            discarded: BTreeSet::new(),
            t_last: None,
            t_del: None,
            complete_at: None,
            retired_at: None,
            retired: BTreeSet::new(),
            naive_queue: Vec::new(),
        };
        let out = if self.naive {
            let mut q = order;
            q.reverse();
            c.naive_queue = q;
            let first = c.naive_queue.pop().expect("well-formed update has a switch");
            vec![commit_for(&c, first)]
        } else {
            c.switches().map(|s| commit_for(&c, s)).collect()
        };
        self.updates.insert(v, c);
        Ok((v, out))
    }

    /// Handles a switch reply received at `now`.
    pub fn on_message(&mut self, from: SwitchId, msg: Message, now: Time) -> Vec<CtrlEffect> {
        let kind = msg.kind();
        let v = msg.v();
        let ignored = |reason| vec![CtrlEffect::Ignored { from, v, kind, reason }];
        let naive = self.naive;
        let Some(c) = self.updates.get_mut(&v) else { return ignored("unknown-update") };
        if !c.request.per_switch.contains_key(&from) {
            return ignored("not-in-update");
        }
        match msg {
            Message::ReadyToCommit { t, .. } => {
                if c.status != Status::CommitSent || c.ready.contains_key(&from) {
                    return ignored("wrong-phase");
                }
                c.ready.insert(from, t);
                if naive {
                    return match c.naive_queue.pop() {
                        Some(next) => vec![commit_for(c, next)],
                        None => {
                            c.status = Status::Complete;
                            c.complete_at = Some(now);
                            c.retired_at = Some(now);
                            vec![CtrlEffect::Completed { v }]
                        }
                    };
                }
                if c.ready.len() < c.request.per_switch.len() {
                    return Vec::new();
                }
                let t_last = c.ready.values().copied().max().expect("nonempty");
                c.t_last = Some(t_last);
                c.status = Status::CommitOkSent;
                broadcast(c, |v| Message::CommitOk { v, t_last })
            }
            Message::AckCommitOk { t, .. } => {
                if c.status != Status::CommitOkSent || c.acked.contains_key(&from) {
                    return ignored("wrong-phase");
                }
                c.acked.insert(from, t);
                if c.acked.len() < c.request.per_switch.len() {
                    return Vec::new();
                }
                let t_del = c.acked.values().copied().max().expect("nonempty");
                c.t_del = Some(t_del);
                c.status = Status::DiscardSent;
                broadcast(c, |v| Message::DiscardOld { v, t_del })
            }
            Message::DiscardOldAck { .. } => {
                if c.status != Status::DiscardSent || !c.discarded.insert(from) {
                    return ignored("wrong-phase");
                }
                if c.discarded.len() < c.request.per_switch.len() {
                    return Vec::new();
                }
                c.status = Status::Complete;
                c.complete_at = Some(now);
                vec![CtrlEffect::Completed { v }]
            }
            Message::Commit { .. } | Message::CommitOk { .. } | Message::DiscardOld { .. } => {
                ignored("not-controller-bound")
            }
        }
    }

    /// Out-of-band report that `switch` finished removing `v`'s OLD rules.
    pub fn switch_retired(&mut self, v: UpdateId, switch: SwitchId, now: Time) {
        if let Some(c) = self.updates.get_mut(&v) {
            if c.request.per_switch.contains_key(&switch) && c.retired.insert(switch) && c.retired.len() == c.request.per_switch.len() {
                c.retired_at = Some(now);
            }
        }
    }
}

fn commit_for(c: &Coordination, s: SwitchId) -> CtrlEffect {
    let u = &c.request.per_switch[&s];
    CtrlEffect::Send {
        to: s,
        msg: Message::Commit { v: c.v, r0: u.r0.iter().map(|r| r.id).collect(), r1: u.r1.iter().cloned().collect() },
    }
}

fn broadcast(c: &Coordination, mk: impl Fn(UpdateId) -> Message) -> Vec<CtrlEffect> {
    c.switches().map(|to| CtrlEffect::Send { to, msg: mk(c.v) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::match_engine::{ActionSpec, Rule, RuleSet, SwitchUpdate};
    use crate::RuleId;

    fn req(switches: &[u16], pat: &str) -> UpdateRequest {
        let mut per_switch = BTreeMap::new();
        for (i, s) in switches.iter().enumerate() {
            let r = Rule::new(RuleId(100 + i as u32), 5, pat.parse().unwrap(), ActionSpec::forward(1));
            per_switch.insert(SwitchId(*s), SwitchUpdate { r0: RuleSet::new(), r1: RuleSet::from_rules([r]).unwrap() });
        }
        UpdateRequest { per_switch }
    }

    fn sends(effects: &[CtrlEffect]) -> Vec<(SwitchId, MsgKind)> {
        effects
            .iter()
            .filter_map(|e| match e {
                CtrlEffect::Send { to, msg } => Some((*to, msg.kind())),
                _ => None,
            })
            .collect()
    }

    fn ms(v: i64) -> Time {
        Time::from_ms(v)
    }

    #[test]
    fn three_rounds_with_max_aggregation() {
        let mut c = Controller::new(ms(10), false);
        let (v, out) = c.begin_update(req(&[1, 2, 3], "1000"), ms(0)).unwrap();
        assert_eq!(sends(&out).len(), 3);
        assert!(c.on_message(SwitchId(1), Message::ReadyToCommit { v, t: ms(12) }, ms(1)).is_empty());
        assert!(c.on_message(SwitchId(2), Message::ReadyToCommit { v, t: ms(17) }, ms(1)).is_empty());
        let out = c.on_message(SwitchId(3), Message::ReadyToCommit { v, t: ms(15) }, ms(1));
        assert_eq!(sends(&out).len(), 3);
        assert!(out.iter().all(|e| matches!(e, CtrlEffect::Send { msg: Message::CommitOk { t_last, .. }, .. } if *t_last == ms(17))));

        c.on_message(SwitchId(1), Message::AckCommitOk { v, t: ms(30) }, ms(2));
        c.on_message(SwitchId(2), Message::AckCommitOk { v, t: ms(29) }, ms(2));
        let out = c.on_message(SwitchId(3), Message::AckCommitOk { v, t: ms(20) }, ms(2));
        assert!(out.iter().all(|e| matches!(e, CtrlEffect::Send { msg: Message::DiscardOld { t_del, .. }, .. } if *t_del == ms(30))));

        c.on_message(SwitchId(1), Message::DiscardOldAck { v }, ms(3));
        c.on_message(SwitchId(2), Message::DiscardOldAck { v }, ms(3));
        let out = c.on_message(SwitchId(3), Message::DiscardOldAck { v }, ms(4));
        assert_eq!(out, [CtrlEffect::Completed { v }]);
        assert_eq!(c.update(v).unwrap().complete_at, Some(ms(4)));
    }

    #[test]
    fn missing_ready_blocks_commit_ok() {
        let mut c = Controller::new(ms(10), false);
        let (v, _) = c.begin_update(req(&[1, 2], "1000"), ms(0)).unwrap();
        assert!(c.on_message(SwitchId(1), Message::ReadyToCommit { v, t: ms(1) }, ms(1)).is_empty());
        assert_eq!(c.update(v).unwrap().status, Status::CommitSent);
    }

    #[test]
    fn stray_messages_are_ignored() {
        let mut c = Controller::new(ms(10), false);
        let (v, _) = c.begin_update(req(&[1], "1000"), ms(0)).unwrap();
        let out = c.on_message(SwitchId(9), Message::ReadyToCommit { v, t: ms(1) }, ms(1));
        assert!(matches!(out[..], [CtrlEffect::Ignored { reason: "not-in-update", .. }]));
        let out = c.on_message(SwitchId(1), Message::AckCommitOk { v, t: ms(1) }, ms(1));
        assert!(matches!(out[..], [CtrlEffect::Ignored { reason: "wrong-phase", .. }]));
    }

    #[test]
    fn admission_and_quiescence_gate() {
        let mut c = Controller::new(ms(10), false);
        let (v1, _) = c.begin_update(req(&[1], "1000"), ms(0)).unwrap();
        assert!(c.begin_update(req(&[1], "1111"), ms(0)).is_ok());
        assert_eq!(c.begin_update(req(&[2], "1***"), ms(0)), Err(Rejection::Conflict { with: v1 }));

        let mut c = Controller::new(ms(10), false);
        let (v1, _) = c.begin_update(req(&[1], "1000"), ms(0)).unwrap();
        c.switch_retired(v1, SwitchId(1), ms(40));
        assert_eq!(
            c.begin_update(req(&[2], "1***"), ms(49)),
            Err(Rejection::Quiescence { blocking: v1, earliest: ms(50) })
        );
        assert!(c.begin_update(req(&[2], "1***"), ms(50)).is_ok());
    }

    #[test]
    fn naive_mode_updates_one_switch_at_a_time() {
        let mut c = Controller::new(ms(10), true);
        let (v, out) = c.begin_update_ordered(req(&[1, 2], "1000"), ms(0), vec![SwitchId(2), SwitchId(1)]).unwrap();
        assert_eq!(sends(&out), [(SwitchId(2), MsgKind::Commit)]);
        let out = c.on_message(SwitchId(2), Message::ReadyToCommit { v, t: ms(1) }, ms(1));
        assert_eq!(sends(&out), [(SwitchId(1), MsgKind::Commit)]);
        let out = c.on_message(SwitchId(1), Message::ReadyToCommit { v, t: ms(2) }, ms(2));
        assert_eq!(out, [CtrlEffect::Completed { v }]);
    }
}
