// SPDX-License-Identifier: Apache-2.0

//! Exhaustive interleaving search for small scenarios.
//!
//! Time is logical and all clocks are synchronized. The enabled steps from a
//! state are the head message of each controller/switch channel, the next
//! injection of each flow, the next hop of each packet in flight, armed
//! timers, and a clock tick. A tick is only enabled once the current clock
//! value has been read (stamped into a packet or used by a switch), so
//! events between two ticks share one timestamp granule. Packets are stamped
//! with the start of the granule and switches read a time inside it, as with
//! real clocks where stamps are floored and switch readings are not. A timer fires only
//! once no packet stamped at or before its guard time is still in the
//! network, which is what the lifetime bound guarantees in timed runs, and
//! moves the clock to the guard time plus the lifetime.
//! Switch batches apply in the same step as the message that causes them.
//!
//! The controller's own clock only feeds admission control, which a single
//! update never consults, so it is held at zero.
//!
//! States are memoized by a 128-bit fingerprint, so the number of complete
//! orderings is counted without enumerating them one by one.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::controller::{Controller, CtrlEffect};
use crate::dataplane::{ingress_encapsulate, process_packet, Action, Branch, DropReason};
use crate::packet::Packet;
use crate::scenario::Scenario;
use crate::sim::{PortTarget, Topology};
use crate::switch_agent::{Effect, Message, SwitchAgent};
use crate::{PacketId, SwitchId, Time, UpdateId};

use super::snapshot::{snapshot_path, Hop, PathEnd, SnapshotPath};

pub const DEFAULT_BOUND: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("state space exceeds the bound of {bound} distinct states")]
    BoundExceeded { bound: u64 },
    #[error("scenario not supported by the exhaustive search: {0}")]
    Unsupported(String),
}

/// A complete ordering prefix that ends with a packet leaving on a path that
/// is neither the old nor the new one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub steps: Vec<String>,
    pub packet: PacketId,
    pub observed: Vec<Hop>,
    pub end: PathEnd,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Verified,
    Counterexample(Counterexample),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exploration {
    pub verdict: Verdict,
    /// Distinct states visited.
    pub states: u64,
    /// Complete orderings covered. Only exact for a verified search.
    pub orderings: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Flight {
    pkt: Packet,
    at: SwitchId,
    hops: Vec<Hop>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Timer {
    sw: SwitchId,
    v: UpdateId,
    guard: Time,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct State {
    clock: Time,
    switches: Vec<SwitchAgent>,
    ctrl: Controller,
    down: Vec<VecDeque<Message>>,
    up: Vec<VecDeque<Message>>,
    timers: Vec<Timer>,
    injected: Vec<u32>,
    flights: Vec<Flight>,
    next_pkt: u64,
    /// The current clock value has been observed since the last tick.
    read: bool,
}

#[derive(Clone, Copy, Debug)]
enum Step {
    Down(usize),
    Up(usize),
    Inject(usize),
    Hop(usize),
    Fire(usize),
    Tick,
}

enum Outcome {
    Continue,
    Finished { pkt: PacketId, hops: Vec<Hop>, end: PathEnd },
}

struct Search<'a> {
    sc: &'a Scenario,
    tick: Time,
    old: Vec<SnapshotPath>,
    new: Vec<SnapshotPath>,
    memo: HashMap<u128, u128>,
    bound: u64,
    labels: Vec<String>,
}

fn fingerprint(s: &State) -> u128 {
    let mut a = DefaultHasher::new();
    0u8.hash(&mut a);
    s.hash(&mut a);
    let mut b = DefaultHasher::new();
    1u8.hash(&mut b);
    s.hash(&mut b);
    (u128::from(a.finish()) << 64) | u128::from(b.finish())
}

fn describe(topo: &Topology, hops: &[Hop]) -> String {
    let parts: Vec<String> = hops
        .iter()
        .map(|h| match h.rule {
            Some(r) => format!("{}:{}", topo.name(h.switch), r),
            None => format!("{}:-", topo.name(h.switch)),
        })
        .collect();
    parts.join(" ")
}

impl Search<'_> {
    /// A clock reading inside the current granule.
    fn inside(&self, s: &State) -> Time {
        s.clock + Time::from_ns(self.tick.as_ns() / 2)
    }

    fn enabled(&self, s: &State) -> Vec<Step> {
        let mut out = Vec::new();
        for (i, q) in s.down.iter().enumerate() {
            if !q.is_empty() {
                out.push(Step::Down(i));
            }
        }
        for (i, q) in s.up.iter().enumerate() {
            if !q.is_empty() {
                out.push(Step::Up(i));
            }
        }
        for (i, f) in self.sc.workload.iter().enumerate() {
            if s.injected[i] < f.count {
                out.push(Step::Inject(i));
            }
        }
        for i in 0..s.flights.len() {
            out.push(Step::Hop(i));
        }
        for (i, t) in s.timers.iter().enumerate() {
            let blocked = s.flights.iter().any(|f| f.pkt.ppcu.is_some_and(|h| h.ts <= t.guard));
            if !blocked {
                out.push(Step::Fire(i));
            }
        }
        if s.read && !out.is_empty() {
            out.push(Step::Tick);
        }
        out
    }

    fn label(&self, s: &State, step: Step) -> String {
        let topo = &self.sc.topology;
        match step {
            Step::Down(i) => {
                let m = s.down[i].front().expect("enabled");
                format!("{} receives {} v={}", topo.name(SwitchId(i as u16)), m.kind(), m.v())
            }
            Step::Up(i) => {
                let m = s.up[i].front().expect("enabled");
                format!("controller receives {} v={} from {}", m.kind(), m.v(), topo.name(SwitchId(i as u16)))
            }
            Step::Inject(i) => format!("inject pkt={} at {}", s.next_pkt, topo.name(self.sc.workload[i].ingress)),
            Step::Hop(i) => {
                let f = &s.flights[i];
                format!("pkt={} arrives at {}", f.pkt.id, topo.name(f.at))
            }
            Step::Fire(i) => {
                let t = &s.timers[i];
                format!("{} timer fires v={}", topo.name(t.sw), t.v)
            }
            Step::Tick => format!("clock advances to {}", s.clock + self.tick),
        }
    }

    fn switch_effects(&self, s: &mut State, sw: SwitchId, effects: Vec<Effect>) {
        let mut work: VecDeque<Effect> = effects.into();
        while let Some(e) = work.pop_front() {
            match e {
                Effect::Schedule { batch, .. } => {
                    let now = self.inside(s);
                    let more = s.switches[sw.0 as usize].apply(batch, now);
                    work.extend(more);
                }
                Effect::Reply(msg) => s.up[sw.0 as usize].push_back(msg),
                Effect::ArmTimer { v, duration } => {
                    let guard = self.inside(s) + duration - self.sc.timing.max_lifetime;
                    s.timers.push(Timer { sw, v, guard });
                }
                Effect::Completed { v } => s.ctrl.switch_retired(v, sw, Time::ZERO),
                Effect::Activated { .. }
                | Effect::CommitFailed { .. }
                | Effect::Replaced { .. }
                | Effect::Ignored { .. } => {}
            }
        }
    }

    fn ctrl_effects(s: &mut State, effects: Vec<CtrlEffect>) {
        for e in effects {
            if let CtrlEffect::Send { to, msg } = e {
                s.down[to.0 as usize].push_back(msg);
            }
        }
    }

    fn hop(&self, s: &mut State, mut f: Flight) -> Outcome {
        let at = f.at;
        f.pkt.hop_count += 1;
        if f.pkt.ppcu.is_none() {
            ingress_encapsulate(&mut f.pkt, s.clock, self.tick)
                .expect("logical clock stays below the inactive sentinel");
        }
        let decision =
            process_packet(at, &s.switches[at.0 as usize].table, &mut f.pkt, self.inside(s), &self.sc.mechanisms)
                .expect("packet is encapsulated");
        let rule = decision.trace.iter().rev().find(|m| m.branch == Branch::Execute).map(|m| m.rule);
        f.hops.push(Hop { switch: at, rule });
        let end = match decision.action {
            Action::Drop(reason) => PathEnd::Drop { switch: at, reason },
            Action::Forward(port) => match self.sc.topology.port(at, port) {
                Some(PortTarget::Switch { to, .. }) => {
                    if f.hops.len() as u32 >= self.sc.max_hops {
                        PathEnd::Drop { switch: to, reason: DropReason::HopLimit }
                    } else {
                        f.at = to;
                        let pos = s.flights.partition_point(|g| g.pkt.id < f.pkt.id);
                        s.flights.insert(pos, f);
                        return Outcome::Continue;
                    }
                }
                Some(PortTarget::Host { .. }) => PathEnd::Exit { switch: at, port },
                None => PathEnd::Drop { switch: at, reason: DropReason::NoMatch },
            },
        };
        Outcome::Finished { pkt: f.pkt.id, hops: f.hops, end }
    }

    fn advance(&self, s: &mut State, step: Step) -> Outcome {
        match step {
            Step::Tick => {
                s.clock += self.tick;
                s.read = false;
            }
            Step::Down(i) => {
                let msg = s.down[i].pop_front().expect("enabled");
                let sw = SwitchId(i as u16);
                let now = self.inside(s);
                // Commit and CommitOK make the switch report its clock.
                s.read |= matches!(msg, Message::Commit { .. } | Message::CommitOk { .. });
                let eff = s.switches[i].on_message(msg, now);
                self.switch_effects(s, sw, eff);
            }
            Step::Up(i) => {
                let msg = s.up[i].pop_front().expect("enabled");
                let eff = s.ctrl.on_message(SwitchId(i as u16), msg, Time::ZERO);
                Self::ctrl_effects(s, eff);
            }
            Step::Fire(i) => {
                let t = s.timers.remove(i);
                // The timer expires a full lifetime after its guard.
                let at = (t.guard + self.sc.timing.max_lifetime).floor_to(self.tick);
                if at > s.clock {
                    s.clock = at;
                }
                s.read = true;
                let eff = s.switches[t.sw.0 as usize].timer_fired(t.v);
                self.switch_effects(s, t.sw, eff);
            }
            Step::Inject(i) => {
                let flow = &self.sc.workload[i];
                s.injected[i] += 1;
                s.read = true;
                let id = PacketId(s.next_pkt);
                s.next_pkt += 1;
                let f = Flight { pkt: Packet::new(id, flow.header, flow.ingress, s.clock), at: flow.ingress, hops: Vec::new() };
                return self.hop(s, f);
            }
            Step::Hop(i) => {
                let f = s.flights.remove(i);
                return self.hop(s, f);
            }
        }
        Outcome::Continue
    }

    fn consistent(&self, flow: usize, hops: &[Hop], end: PathEnd) -> bool {
        [&self.old[flow], &self.new[flow]].iter().any(|p| p.hops == hops && p.end == end)
    }

    /// Number of complete orderings from `s`, or the counterexample found.
    fn dfs(&mut self, s: &State) -> Result<u128, Result<Counterexample, ExploreError>> {
        let key = fingerprint(s);
        if let Some(&n) = self.memo.get(&key) {
            return Ok(n);
        }
        if self.memo.len() as u64 >= self.bound {
            return Err(Err(ExploreError::BoundExceeded { bound: self.bound }));
        }
        let steps = self.enabled(s);
        let mut total: u128 = if steps.is_empty() { 1 } else { 0 };
        for step in steps {
            let mut next = s.clone();
            self.labels.push(self.label(s, step));
            let flow = match step {
                Step::Inject(i) => Some(i),
                _ => None,
            };
            let tracked = match step {
                Step::Hop(i) => Some(s.flights[i].pkt.id),
                _ => None,
            };
            match self.advance(&mut next, step) {
                Outcome::Continue => {}
                Outcome::Finished { pkt, hops, end } => {
                    let flow = flow.unwrap_or_else(|| self.flow_index(s, tracked.expect("hop step")));
                    if !self.consistent(flow, &hops, end) {
                        return Err(Ok(Counterexample { steps: self.labels.clone(), packet: pkt, observed: hops, end }));
                    }
                }
            }
            total = total.saturating_add(self.dfs(&next)?);
            self.labels.pop();
        }
        self.memo.insert(key, total);
        Ok(total)
    }

    fn flow_index(&self, s: &State, pkt: PacketId) -> usize {
        let f = s.flights.iter().find(|f| f.pkt.id == pkt).expect("packet in flight");
        self.sc
            .workload
            .iter()
            .position(|w| w.ingress == f.pkt.ingress && w.header == f.pkt.header)
            .expect("packet belongs to a flow")
    }
}

/// Explores every admissible ordering of `scenario` with at most `bound`
/// distinct states. The scenario must contain exactly one update, which is
/// submitted before anything else happens.
pub fn explore(scenario: &Scenario, bound: u64) -> Result<Exploration, ExploreError> {
    if scenario.updates.len() != 1 {
        return Err(ExploreError::Unsupported("exactly one update is required".into()));
    }
    if scenario.mechanisms.naive {
        return Err(ExploreError::Unsupported("the naive baseline is not explored".into()));
    }
    if !scenario.faults.is_empty() {
        return Err(ExploreError::Unsupported("message faults are not explored".into()));
    }
    let snaps = scenario.snapshots(&[0]).map_err(ExploreError::Unsupported)?;
    let t = &scenario.timing;
    let path = |cfg, f: &crate::scenario::Flow| {
        snapshot_path(cfg, &scenario.topology, f.header, f.ingress, scenario.max_hops, t.processing)
            .map_err(|e| ExploreError::Unsupported(e.to_string()))
    };
    let old = scenario.workload.iter().map(|f| path(&snaps[0], f)).collect::<Result<Vec<_>, _>>()?;
    let new = scenario.workload.iter().map(|f| path(&snaps[1], f)).collect::<Result<Vec<_>, _>>()?;

    let n = scenario.topology.len();
    let mut ctrl = Controller::new(t.max_lifetime, false);
    let clock = Time::ZERO;
    let (_, effects) = ctrl
        .begin_update(scenario.updates[0].request.clone(), clock)
        .map_err(|e| ExploreError::Unsupported(e.to_string()))?;
    let switches = scenario
        .topology
        .ids()
        .map(|s| SwitchAgent::new(s, scenario.initial.table(s).clone(), scenario.mechanisms.clone(), t.latencies, t.max_lifetime))
        .collect();
    let mut start = State {
        clock,
        switches,
        ctrl,
        down: vec![VecDeque::new(); n],
        up: vec![VecDeque::new(); n],
        timers: Vec::new(),
        injected: vec![0; scenario.workload.len()],
        flights: Vec::new(),
        next_pkt: 0,
        read: false,
    };
    Search::ctrl_effects(&mut start, effects);

    let tick = t.ts_granularity.max(Time::from_ns(2));
    let mut search = Search { sc: scenario, tick, old, new, memo: HashMap::new(), bound, labels: Vec::new() };
    match search.dfs(&start) {
        Ok(orderings) => Ok(Exploration { verdict: Verdict::Verified, states: search.memo.len() as u64, orderings }),
        Err(Ok(cx)) => Ok(Exploration {
            verdict: Verdict::Counterexample(cx),
            states: search.memo.len() as u64,
            orderings: 0,
        }),
        Err(Err(e)) => Err(e),
    }
}

impl Counterexample {
    pub fn render(&self, topo: &Topology) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{:>3}. {s}\n", i + 1));
        }
        let end = match self.end {
            PathEnd::Exit { switch, port } => format!("exit {}:{}", topo.name(switch), port),
            PathEnd::Drop { switch, reason } => format!("drop at {} ({})", topo.name(switch), reason.as_str()),
        };
        out.push_str(&format!("pkt={} took {} then {end}\n", self.packet, describe(topo, &self.observed)));
        out
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Verified => f.write_str("verified"),
            Verdict::Counterexample(c) => write!(f, "counterexample (pkt={})", c.packet),
        }
    }
}
