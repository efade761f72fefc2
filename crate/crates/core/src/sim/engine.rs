// SPDX-License-Identifier: Apache-2.0

//! The discrete-event loop.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controller::{Controller, CtrlEffect, Rejection};
use crate::dataplane::{egress_decapsulate, ingress_encapsulate, process_packet, Action, DropReason};
use crate::packet::Packet;
use crate::scenario::Scenario;
use crate::switch_agent::{Batch, Effect, Message, MsgKind, SwitchAgent};
use crate::{PacketId, SwitchId, Time, UpdateId};

use super::trace::{Entity, Event, MsgSummary, Record, RejectReason, Trace};
use super::PortTarget;

/// Result of one simulation run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    /// False if the horizon was reached with events still pending.
    pub quiescent: bool,
    /// Time of the last processed event.
    pub end: Time,
    /// Clock offset of each switch.
    pub offsets: Vec<Time>,
    pub packets: u64,
}

enum Ev {
    Submit { idx: usize },
    Inject { flow: usize, k: u32 },
    Arrive { pkt: Box<Packet>, at: SwitchId },
    ToSwitch { sw: SwitchId, msg: Message },
    ToController { from: SwitchId, msg: Message },
    Apply { sw: SwitchId, batch: Batch },
    Timer { sw: SwitchId, v: UpdateId },
}

struct Queued {
    at: Time,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

struct Sim<'a> {
    sc: &'a Scenario,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Queued>,
    seq: u64,
    now: Time,
    offsets: Vec<Time>,
    switches: Vec<SwitchAgent>,
    ctrl: Controller,
    trace: Trace,
    down_last: Vec<Time>,
    up_last: Vec<Time>,
    sent: BTreeMap<(MsgKind, SwitchId, UpdateId), u32>,
    retire_logged: BTreeSet<UpdateId>,
    next_pkt: u64,
}

impl<'a> Sim<'a> {
    fn push(&mut self, at: Time, ev: Ev) {
        self.seq += 1;
        self.queue.push(Queued { at, seq: self.seq, ev });
    }

    fn local(&self, sw: SwitchId) -> Time {
        self.now + self.offsets[sw.0 as usize]
    }

    fn record(&mut self, entity: Entity, event: Event) {
        let local = match entity {
            Entity::Controller => self.now,
            Entity::Switch(s) => self.local(s),
        };
        self.trace.push(Record { global: self.now, local, entity, event });
    }

    fn summary(msg: &Message) -> MsgSummary {
        MsgSummary { kind: msg.kind(), v: msg.v(), t: msg.time() }
    }

    /// True if this transmission is configured to be lost.
    fn lose(&mut self, kind: MsgKind, sw: SwitchId, v: UpdateId) -> bool {
        let n = self.sent.entry((kind, sw, v)).or_insert(0);
        *n += 1;
        let n = *n;
        self.sc.faults.iter().any(|f| f.kind == kind && f.switch == sw && f.update == v && f.occurrence == n)
    }

    fn send_down(&mut self, to: SwitchId, msg: Message) {
        let s = Self::summary(&msg);
        self.record(Entity::Controller, Event::Send { peer: Entity::Switch(to), msg: s });
        if self.lose(s.kind, to, s.v) {
            self.record(Entity::Controller, Event::Lost { peer: Entity::Switch(to), msg: s });
            return;
        }
        let d = self.sc.timing.sample_delay(to, &mut self.rng);
        let at = (self.now + d).max(self.down_last[to.0 as usize]);
        self.down_last[to.0 as usize] = at;
        self.push(at, Ev::ToSwitch { sw: to, msg });
    }

    fn send_up(&mut self, from: SwitchId, msg: Message) {
        let s = Self::summary(&msg);
        self.record(Entity::Switch(from), Event::Send { peer: Entity::Controller, msg: s });
        if self.lose(s.kind, from, s.v) {
            self.record(Entity::Switch(from), Event::Lost { peer: Entity::Controller, msg: s });
            return;
        }
        let d = self.sc.timing.sample_delay(from, &mut self.rng);
        let at = (self.now + d).max(self.up_last[from.0 as usize]);
        self.up_last[from.0 as usize] = at;
        self.push(at, Ev::ToController { from, msg });
    }

    fn ctrl_effects(&mut self, effects: Vec<CtrlEffect>) {
        for e in effects {
            match e {
                CtrlEffect::Send { to, msg } => self.send_down(to, msg),
                CtrlEffect::Completed { v } => {
                    self.record(Entity::Controller, Event::UpdateComplete { v });
                    self.note_retire(v);
                }
                CtrlEffect::Ignored { from, v, kind, reason } => {
                    let _ = from;
                    self.record(Entity::Controller, Event::Ignored { v, kind, reason: reason.to_string() });
                }
            }
        }
    }

    fn note_retire(&mut self, v: UpdateId) {
        let retired = self.ctrl.update(v).and_then(|c| c.retired_at).is_some();
        if retired && self.retire_logged.insert(v) {
            self.record(Entity::Controller, Event::UpdateRetire { v });
        }
    }

    fn switch_effects(&mut self, sw: SwitchId, effects: Vec<Effect>) {
        for e in effects {
            match e {
                Effect::Schedule { delay, batch } => self.push(self.now + delay, Ev::Apply { sw, batch }),
                Effect::Reply(msg) => self.send_up(sw, msg),
                Effect::ArmTimer { v, duration } => {
                    let expiry = self.local(sw) + duration;
                    self.record(Entity::Switch(sw), Event::TimerArm { v, expiry });
                    self.push(self.now + duration, Ev::Timer { sw, v });
                }
                Effect::Activated { v, t_eff } => self.record(Entity::Switch(sw), Event::SetT { v, t_eff }),
                Effect::CommitFailed { v, missing } => {
                    self.record(Entity::Switch(sw), Event::CommitFail { v, rule: missing })
                }
                Effect::Completed { v } => {
                    self.record(Entity::Switch(sw), Event::ExpireApply { v });
                    self.ctrl.switch_retired(v, sw, self.now);
                    self.note_retire(v);
                }
                Effect::Replaced { v } => self.record(Entity::Switch(sw), Event::NaiveApply { v }),
                Effect::Ignored { v, kind, reason } => {
                    self.record(Entity::Switch(sw), Event::Ignored { v, kind, reason: reason.to_string() })
                }
            }
        }
    }

    fn naive_order(&mut self, idx: usize) -> Vec<SwitchId> {
        let members: Vec<SwitchId> = self.sc.updates[idx].request.switches().collect();
        match &self.sc.naive_order {
            Some(order) => {
                let mut out: Vec<SwitchId> = order.iter().copied().filter(|s| members.contains(s)).collect();
                out.extend(members.iter().copied().filter(|s| !out.contains(s)).collect::<Vec<_>>());
                out
            }
            None => {
                let mut out = members;
                out.shuffle(&mut self.rng);
                out
            }
        }
    }

    fn submit(&mut self, idx: usize) {
        self.record(Entity::Controller, Event::UpdateSubmit { idx: idx as u32 });
        let order = if self.sc.mechanisms.naive { self.naive_order(idx) } else { Vec::new() };
        let request = self.sc.updates[idx].request.clone();
        let res = if self.sc.mechanisms.naive {
            self.ctrl.begin_update_ordered(request, self.now, order)
        } else {
            self.ctrl.begin_update(request, self.now)
        };
        match res {
            Ok((v, effects)) => {
                self.record(Entity::Controller, Event::UpdateAdmit { idx: idx as u32, v });
                self.ctrl_effects(effects);
            }
            Err(rej) => {
                let retry = self.sc.updates[idx].retry_every;
                let (reason, next) = match rej {
                    Rejection::Conflict { with } => (RejectReason::Conflict { with }, retry.map(|r| self.now + r)),
                    Rejection::Quiescence { blocking, earliest } => {
                        (RejectReason::Quiescence { blocking, earliest }, retry.map(|_| earliest))
                    }
                    Rejection::Malformed(m) => unreachable!("scenario updates are validated on load: {m}"),
                };
                self.record(Entity::Controller, Event::UpdateReject { idx: idx as u32, reason });
                if let Some(t) = next {
                    self.push(t, Ev::Submit { idx });
                }
            }
        }
    }

    fn inject(&mut self, flow: usize, k: u32) {
        let f = &self.sc.workload[flow];
        let (ingress, header, interval, count) = (f.ingress, f.header, f.interval, f.count);
        if k + 1 < count {
            self.push(self.now + interval, Ev::Inject { flow, k: k + 1 });
        }
        let id = PacketId(self.next_pkt);
        self.next_pkt += 1;
        self.record(Entity::Switch(ingress), Event::Inject { pkt: id, flow: flow as u32, header });
        let pkt = Packet::new(id, header, ingress, self.now);
        self.arrive(Box::new(pkt), ingress);
    }

    fn drop_pkt(&mut self, at: SwitchId, pkt: PacketId, reason: DropReason) {
        self.record(Entity::Switch(at), Event::Drop { pkt, reason });
    }

    fn arrive(&mut self, mut pkt: Box<Packet>, at: SwitchId) {
        let local = self.local(at);
        pkt.hop_count += 1;
        if pkt.ppcu.is_none() {
            ingress_encapsulate(&mut pkt, local, self.sc.timing.ts_granularity)
                .expect("clock readings stay below the inactive sentinel");
        }
        let h = pkt.ppcu.expect("encapsulated above");
        self.record(
            Entity::Switch(at),
            Event::Arrive { pkt: pkt.id, hop: pkt.hop_count, ts: h.ts, fp1: h.fp1, fp2: h.fp2 },
        );
        if self.now - pkt.birth > self.sc.timing.max_lifetime {
            return self.drop_pkt(at, pkt.id, DropReason::Lifetime);
        }
        if pkt.hop_count > self.sc.max_hops {
            return self.drop_pkt(at, pkt.id, DropReason::HopLimit);
        }
        let decision = process_packet(at, &self.switches[at.0 as usize].table, &mut pkt, local, &self.sc.mechanisms)
            .expect("packet is encapsulated");
        for m in decision.trace {
            self.record(
                Entity::Switch(at),
                Event::Match {
                    pkt: pkt.id,
                    rule: m.rule,
                    flag: m.flag,
                    v: m.update,
                    branch: m.branch,
                    fp1: m.fp1,
                    fp2: m.fp2,
                    f1: m.f1,
                    f2: m.f2,
                },
            );
        }
        match decision.action {
            Action::Drop(r) => self.drop_pkt(at, pkt.id, r),
            Action::Forward(port) => match self.sc.topology.port(at, port) {
                Some(PortTarget::Switch { to, delay }) => {
                    let t = self.now + self.sc.timing.processing + delay;
                    self.push(t, Ev::Arrive { pkt, at: to });
                }
                Some(PortTarget::Host { .. }) => {
                    egress_decapsulate(&mut pkt).expect("encapsulated");
                    self.record(Entity::Switch(at), Event::Exit { pkt: pkt.id, port, field_f: pkt.field_f });
                }
                None => self.drop_pkt(at, pkt.id, DropReason::NoMatch),
            },
        }
    }

    fn step(&mut self, ev: Ev) {
        match ev {
            Ev::Submit { idx } => self.submit(idx),
            Ev::Inject { flow, k } => self.inject(flow, k),
            Ev::Arrive { pkt, at } => self.arrive(pkt, at),
            Ev::ToSwitch { sw, msg } => {
                self.record(Entity::Switch(sw), Event::Recv { peer: Entity::Controller, msg: Self::summary(&msg) });
                let local = self.local(sw);
                let eff = self.switches[sw.0 as usize].on_message(msg, local);
                self.switch_effects(sw, eff);
            }
            Ev::ToController { from, msg } => {
                self.record(Entity::Controller, Event::Recv { peer: Entity::Switch(from), msg: Self::summary(&msg) });
                let eff = self.ctrl.on_message(from, msg, self.now);
                self.ctrl_effects(eff);
            }
            Ev::Apply { sw, batch } => {
                let commit = match &batch {
                    Batch::Commit { v, .. } => Some(*v),
                    _ => None,
                };
                let local = self.local(sw);
                let eff = self.switches[sw.0 as usize].apply(batch, local);
                if let Some(v) = commit {
                    if !eff.iter().any(|e| matches!(e, Effect::CommitFailed { .. })) {
                        self.record(Entity::Switch(sw), Event::CommitApply { v });
                    }
                }
                self.switch_effects(sw, eff);
            }
            Ev::Timer { sw, v } => {
                self.record(Entity::Switch(sw), Event::TimerFire { v });
                let eff = self.switches[sw.0 as usize].timer_fired(v);
                self.switch_effects(sw, eff);
            }
        }
    }
}

/// Runs `scenario` to quiescence or the timing horizon.
pub fn run(scenario: &Scenario, seed: u64) -> RunOutcome {
    let n = scenario.topology.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets = scenario.timing.resolve_offsets(n, &mut rng);
    let t = &scenario.timing;
    let switches = scenario
        .topology
        .ids()
        .map(|s| {
            SwitchAgent::new(s, scenario.initial.table(s).clone(), scenario.mechanisms.clone(), t.latencies, t.max_lifetime)
        })
        .collect();
    let mut sim = Sim {
        sc: scenario,
        rng,
        queue: BinaryHeap::new(),
        seq: 0,
        now: Time::ZERO,
        offsets,
        switches,
        ctrl: Controller::new(t.max_lifetime, scenario.mechanisms.naive),
        trace: Trace::default(),
        down_last: vec![Time::ZERO; n],
        up_last: vec![Time::ZERO; n],
        sent: BTreeMap::new(),
        retire_logged: BTreeSet::new(),
        next_pkt: 0,
    };
    for (idx, u) in scenario.updates.iter().enumerate() {
        sim.push(u.at, Ev::Submit { idx });
    }
    for (i, f) in scenario.workload.iter().enumerate() {
        if f.count == 0 {
            continue;
        }
        let phase = scenario.timing.flow_phase(f.interval, &mut sim.rng);
        sim.push(f.start + phase, Ev::Inject { flow: i, k: 0 });
    }
    let mut quiescent = true;
    while let Some(q) = sim.queue.pop() {
        if q.at > scenario.timing.horizon {
            quiescent = false;
            break;
        }
        sim.now = q.at;
        sim.step(q.ev);
    }
    let packets = sim.next_pkt;
    RunOutcome { trace: sim.trace, quiescent, end: sim.now, offsets: sim.offsets, packets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    #[test]
    fn deterministic_per_seed() {
        let s = bundled::load("tiny").unwrap();
        let a = run(&s, 7);
        let b = run(&s, 7);
        assert_eq!(a.trace, b.trace);
        assert!(a.quiescent);
        assert_eq!(a.packets, s.packet_count());
    }

    #[test]
    fn every_packet_ends() {
        let s = bundled::load("tiny").unwrap();
        let out = run(&s, 1);
        let ended = out
            .trace
            .records
            .iter()
            .filter(|r| matches!(r.event, Event::Exit { .. } | Event::Drop { .. }))
            .count() as u64;
        assert_eq!(ended, out.packets);
        let retired = out.trace.records.iter().any(|r| matches!(r.event, Event::UpdateRetire { .. }));
        assert!(retired);
    }

    #[test]
    fn lost_message_stalls_update() {
        let mut s = bundled::load("tiny").unwrap();
        let b = s.switch_id("b").unwrap();
        s.faults.push(crate::scenario::MessageFault {
            kind: MsgKind::CommitOk,
            switch: b,
            update: UpdateId(1),
            occurrence: 1,
        });
        let out = run(&s, 1);
        assert!(out.trace.records.iter().any(|r| matches!(r.event, Event::Lost { .. })));
        assert!(!out.trace.records.iter().any(|r| matches!(r.event, Event::UpdateComplete { .. })));
    }
}
