// SPDX-License-Identifier: Apache-2.0

//! Post-hoc trace verification.
//!
//! Every packet's observed path is replayed against frozen configurations:
//! for each update that could have been in progress while the packet was
//! alive, both the configuration before and after it are admissible, and
//! the observed hops (switch plus executed action) and ending must equal
//! one admissible replay. On top of that the checker looks for drops and
//! loops, impossible flag combinations, excess resubmissions, and the four
//! invariants the protocol's correctness argument relies on.

pub mod explore;
mod snapshot;

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use crate::dataplane::{Branch, DropReason};
use crate::match_engine::{ActionSpec, Header, MatchPattern, RuleFlag, UpdateRequest};
use crate::scenario::Scenario;
use crate::sim::{Event, Record, Topology, Trace};
use crate::{PacketId, Port, RuleId, SwitchId, Time, UpdateId};

pub(crate) use snapshot::walk;
pub use snapshot::{snapshot_path, ConfigSnapshot, Hop, PathEnd, SnapshotError, SnapshotPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    Ppc,
    Drop,
    Loop,
    Property1,
    Property2_1,
    Property2_2,
    Property3,
    Property4,
    FlagExclusion,
    ResubmitBudget,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 10] = [
        ViolationKind::Ppc,
        ViolationKind::Drop,
        ViolationKind::Loop,
        ViolationKind::Property1,
        ViolationKind::Property2_1,
        ViolationKind::Property2_2,
        ViolationKind::Property3,
        ViolationKind::Property4,
        ViolationKind::FlagExclusion,
        ViolationKind::ResubmitBudget,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Ppc => "PPC",
            ViolationKind::Drop => "Drop",
            ViolationKind::Loop => "Loop",
            ViolationKind::Property1 => "Property1",
            ViolationKind::Property2_1 => "Property2.1",
            ViolationKind::Property2_2 => "Property2.2",
            ViolationKind::Property3 => "Property3",
            ViolationKind::Property4 => "Property4",
            ViolationKind::FlagExclusion => "FlagExclusion",
            ViolationKind::ResubmitBudget => "ResubmitBudget",
        }
    }

    /// Property 2.1 and 2.2.
    pub fn is_p2(self) -> bool {
        matches!(self, ViolationKind::Property2_1 | ViolationKind::Property2_2)
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub packet: PacketId,
    pub v: Option<UpdateId>,
    pub detail: String,
    /// The packet's trace records.
    pub witness: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("packet {0} has no exit or drop record; the trace is incomplete")]
    Incomplete(PacketId),
    #[error("malformed trace: {0}")]
    Malformed(String),
}

/// How one affected packet was forwarded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathCounts {
    /// Matches the configuration before every update it overlapped, and not
    /// the one after.
    pub old: u64,
    pub new: u64,
    /// Before and after are indistinguishable for this packet.
    pub both: u64,
    /// Consistent only with a mix of per-update states (several overlapping
    /// updates), or with nothing.
    pub other: u64,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub naive: bool,
    pub packets: u64,
    pub affected: u64,
    pub paths: PathCounts,
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    pub fn counts(&self) -> BTreeMap<ViolationKind, usize> {
        let mut m = BTreeMap::new();
        for v in &self.violations {
            *m.entry(v.kind).or_insert(0) += 1;
        }
        m
    }

    pub fn merge(&mut self, other: Report) {
        self.packets += other.packets;
        self.affected += other.affected;
        self.paths.old += other.paths.old;
        self.paths.new += other.paths.new;
        self.paths.both += other.paths.both;
        self.paths.other += other.paths.other;
        self.violations.extend(other.violations);
    }

    /// Human-readable summary; at most `witnesses` violations are printed
    /// with their records.
    pub fn render(&self, topo: &Topology, witnesses: usize) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "packets {} affected {} old {} new {} both {} other {}",
            self.packets, self.affected, self.paths.old, self.paths.new, self.paths.both, self.paths.other
        );
        if self.naive {
            s.push_str("naive mode: protocol properties not checked\n");
        }
        if self.is_clean() {
            s.push_str("no violations\n");
            return s;
        }
        for (k, n) in self.counts() {
            let _ = writeln!(s, "{k}: {n}");
        }
        for v in self.violations.iter().take(witnesses) {
            let upd = v.v.map(|v| format!(" v={v}")).unwrap_or_default();
            let _ = writeln!(s, "\n{} packet {}{}: {}", v.kind, v.packet, upd, v.detail);
            for r in &v.witness {
                s.push_str("  ");
                let _ = crate::sim::trace::write_record(&mut s, r, topo);
                s.push('\n');
            }
        }
        s
    }

    pub fn to_json(&self, topo: &Topology) -> serde_json::Value {
        let vs: Vec<serde_json::Value> = self
            .violations
            .iter()
            .map(|v| {
                serde_json::json!({
                    "kind": v.kind.as_str(),
                    "packet": v.packet.0,
                    "v": v.v.map(|v| v.0),
                    "detail": v.detail,
                    "witness": v.witness.iter().map(|r| {
                        let mut s = String::new();
                        let _ = crate::sim::trace::write_record(&mut s, r, topo);
                        s
                    }).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "naive": self.naive,
            "packets": self.packets,
            "affected": self.affected,
            "paths": {
                "old": self.paths.old,
                "new": self.paths.new,
                "both": self.paths.both,
                "other": self.paths.other,
            },
            "counts": self.counts().into_iter().map(|(k, n)| (k.as_str().to_string(), n)).collect::<BTreeMap<_, _>>(),
            "violations": vs,
        })
    }
}

// ---------------------------------------------------------------------------
// Rule catalog: every rule a switch ever holds, tagged with the updates that
// insert and delete it, so any combination of per-update states can be
// replayed without materializing tables.

#[derive(Clone, Debug)]
struct Entry {
    id: RuleId,
    pattern: MatchPattern,
    action: ActionSpec,
    inserted: Option<usize>,
    deleted: Option<usize>,
}

impl Entry {
    #[inline]
    fn present(&self, new: &dyn Fn(usize) -> bool) -> bool {
        self.inserted.is_none_or(new) && !self.deleted.is_some_and(new)
    }

    fn belongs_to(&self, pos: usize) -> bool {
        self.inserted == Some(pos) || self.deleted == Some(pos)
    }
}

struct Catalog {
    tables: Vec<Vec<Entry>>,
}

impl Catalog {
    fn build(initial: &ConfigSnapshot, updates: &[&UpdateRequest]) -> Result<Catalog, CheckError> {
        let mut tables: Vec<Vec<(i32, Entry)>> = initial
            .tables
            .iter()
            .map(|t| {
                t.iter()
                    .map(|r| {
                        (r.priority, Entry { id: r.id, pattern: r.pattern, action: r.action, inserted: None, deleted: None })
                    })
                    .collect()
            })
            .collect();
        for (pos, u) in updates.iter().enumerate() {
            for (sw, su) in &u.per_switch {
                let t = tables
                    .get_mut(sw.0 as usize)
                    .ok_or_else(|| CheckError::Malformed(format!("update names switch {}", sw.0)))?;
                for r in &su.r0 {
                    match t.iter_mut().find(|(_, e)| e.id == r.id && e.deleted.is_none()) {
                        Some((_, e)) => e.deleted = Some(pos),
                        None => return Err(CheckError::Malformed(format!("rule {} deleted twice", r.id))),
                    }
                }
                for r in &su.r1 {
                    t.push((
                        r.priority,
                        Entry { id: r.id, pattern: r.pattern, action: r.action, inserted: Some(pos), deleted: None },
                    ));
                }
            }
        }
        let tables = tables
            .into_iter()
            .map(|mut t| {
                // Stable: equal priorities keep installation order, matching
                // how tables insert.
                t.sort_by_key(|(p, _)| std::cmp::Reverse(*p));
                t.into_iter().map(|(_, e)| e).collect()
            })
            .collect();
        Ok(Catalog { tables })
    }

    fn lookup(&self, sw: SwitchId, header: Header, new: &dyn Fn(usize) -> bool) -> Option<&Entry> {
        self.tables[sw.0 as usize].iter().find(|e| e.pattern.matches_unchecked(header) && e.present(new))
    }

    fn action(&self, sw: SwitchId, id: RuleId) -> Option<ActionSpec> {
        self.tables.get(sw.0 as usize)?.iter().find(|e| e.id == id).map(|e| e.action)
    }
}

// ---------------------------------------------------------------------------
// Trace index.

#[derive(Clone, Copy, Debug)]
struct MatchEv {
    rule: RuleId,
    flag: RuleFlag,
    v: Option<UpdateId>,
    branch: Branch,
    fp1: bool,
    fp2: bool,
}

#[derive(Clone, Debug)]
struct HopLog {
    switch: SwitchId,
    at: Time,
    ts: Time,
    fp1: bool,
    fp2: bool,
    matches: Vec<MatchEv>,
}

impl HopLog {
    fn executed(&self) -> Option<RuleId> {
        self.matches.iter().rev().find(|m| m.branch == Branch::Execute).map(|m| m.rule)
    }

    fn leaving(&self) -> (bool, bool) {
        self.matches.last().map_or((self.fp1, self.fp2), |m| (m.fp1, m.fp2))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ObsEnd {
    Exit { switch: SwitchId, port: Port },
    Drop { switch: SwitchId, reason: DropReason },
}

#[derive(Clone, Debug)]
struct PacketLog {
    id: PacketId,
    header: Header,
    ingress: SwitchId,
    birth: Time,
    hops: Vec<HopLog>,
    end: Option<(Time, ObsEnd)>,
    records: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
struct UpdInfo {
    v: UpdateId,
    first_apply: Option<Time>,
    retire: Option<Time>,
    commit_at: BTreeMap<SwitchId, Time>,
    expire_at: BTreeMap<SwitchId, Time>,
    t_eff: BTreeMap<SwitchId, Time>,
    timer_fires: Vec<Time>,
    patterns: Vec<MatchPattern>,
    switches: Vec<SwitchId>,
}

fn min_opt(a: Option<Time>, b: Time) -> Option<Time> {
    Some(a.map_or(b, |a| a.min(b)))
}

/// Indexed view of a trace against the scenario it came from.
pub struct TraceIndex<'a> {
    scenario: &'a Scenario,
    trace: &'a Trace,
    updates: Vec<UpdInfo>,
    packets: Vec<PacketLog>,
    catalog: Catalog,
}

impl<'a> TraceIndex<'a> {
    pub fn build(scenario: &'a Scenario, trace: &'a Trace) -> Result<TraceIndex<'a>, CheckError> {
        let mut order: Vec<(usize, UpdateId)> = Vec::new();
        for r in &trace.records {
            if let Event::UpdateAdmit { idx, v } = r.event {
                let idx = idx as usize;
                if idx >= scenario.updates.len() {
                    return Err(CheckError::Malformed(format!("admitted update index {idx} is not in the scenario")));
                }
                order.push((idx, v));
            }
        }
        let requests: Vec<&UpdateRequest> = order.iter().map(|(i, _)| &scenario.updates[*i].request).collect();
        let catalog = Catalog::build(&scenario.initial, &requests)?;
        let mut updates: Vec<UpdInfo> = order
            .iter()
            .map(|(i, v)| {
                let req = &scenario.updates[*i].request;
                UpdInfo {
                    v: *v,
                    patterns: req.patterns().collect(),
                    switches: req.switches().collect(),
                    ..UpdInfo::default()
                }
            })
            .collect();
        let by_v: HashMap<UpdateId, usize> = order.iter().enumerate().map(|(p, (_, v))| (*v, p)).collect();

        let mut packets: Vec<PacketLog> = Vec::new();
        let mut pkt_pos: HashMap<PacketId, usize> = HashMap::new();
        for (ri, r) in trace.records.iter().enumerate() {
            let upd = |v: &UpdateId| {
                by_v.get(v).copied().ok_or_else(|| CheckError::Malformed(format!("record for unknown update {v}")))
            };
            let sw = r.entity.switch();
            match &r.event {
                Event::CommitApply { v } | Event::NaiveApply { v } => {
                    let u = &mut updates[upd(v)?];
                    u.first_apply = min_opt(u.first_apply, r.global);
                    if let (Event::CommitApply { .. }, Some(s)) = (&r.event, sw) {
                        u.commit_at.entry(s).or_insert(r.global);
                    }
                }
                Event::ExpireApply { v } => {
                    if let Some(s) = sw {
                        updates[upd(v)?].expire_at.entry(s).or_insert(r.global);
                    }
                }
                Event::SetT { v, t_eff } => {
                    if let Some(s) = sw {
                        updates[upd(v)?].t_eff.insert(s, *t_eff);
                    }
                }
                Event::TimerFire { v } => updates[upd(v)?].timer_fires.push(r.global),
                Event::UpdateRetire { v } => {
                    let u = &mut updates[upd(v)?];
                    u.retire = u.retire.or(Some(r.global));
                }
                Event::Inject { pkt, header, .. } => {
                    let ingress = sw.ok_or_else(|| CheckError::Malformed("inject outside a switch".into()))?;
                    if pkt_pos.insert(*pkt, packets.len()).is_some() {
                        return Err(CheckError::Malformed(format!("packet {pkt} injected twice")));
                    }
                    packets.push(PacketLog {
                        id: *pkt,
                        header: *header,
                        ingress,
                        birth: r.global,
                        hops: Vec::new(),
                        end: None,
                        records: vec![ri],
                    });
                }
                Event::Arrive { .. } | Event::Match { .. } | Event::Exit { .. } | Event::Drop { .. } => {
                    let pkt = &r.event.packet().expect("packet record");
                    let Some(&p) = pkt_pos.get(pkt) else {
                        return Err(CheckError::Malformed(format!("packet {pkt} used before injection")));
                    };
                    let s = sw.ok_or_else(|| CheckError::Malformed("packet record outside a switch".into()))?;
                    let log = &mut packets[p];
                    log.records.push(ri);
                    match &r.event {
                        Event::Arrive { ts, fp1, fp2, .. } => log.hops.push(HopLog {
                            switch: s,
                            at: r.global,
                            ts: *ts,
                            fp1: *fp1,
                            fp2: *fp2,
                            matches: Vec::new(),
                        }),
                        Event::Match { rule, flag, v, branch, fp1, fp2, .. } => {
                            let h = log
                                .hops
                                .last_mut()
                                .ok_or_else(|| CheckError::Malformed(format!("packet {pkt} matched before arriving")))?;
                            h.matches.push(MatchEv { rule: *rule, flag: *flag, v: *v, branch: *branch, fp1: *fp1, fp2: *fp2 });
                        }
                        Event::Exit { port, .. } => log.end = Some((r.global, ObsEnd::Exit { switch: s, port: *port })),
                        Event::Drop { reason, .. } => log.end = Some((r.global, ObsEnd::Drop { switch: s, reason: *reason })),
                        _ => unreachable!(),
                    }
                }
                _ => {}
            }
        }
        for p in &packets {
            if p.end.is_none() {
                return Err(CheckError::Incomplete(p.id));
            }
        }
        Ok(TraceIndex { scenario, trace, updates, packets, catalog })
    }

    fn witness(&self, p: &PacketLog) -> Vec<Record> {
        p.records.iter().map(|&i| self.trace.records[i].clone()).collect()
    }
}

// ---------------------------------------------------------------------------
// Per-packet admissible configurations.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Old,
    New,
    Either,
}

/// Updates whose rules can match the header and that may have been in
/// progress while the packet was alive; all others have a fixed state.
struct Admissible {
    fixed: Vec<State>,
    ambiguous: Vec<usize>,
}

const MAX_AMBIGUOUS: usize = 10;

impl TraceIndex<'_> {
    fn admissible(&self, p: &PacketLog) -> Admissible {
        let end = p.end.expect("complete").0;
        let mut fixed = Vec::with_capacity(self.updates.len());
        let mut ambiguous = Vec::new();
        for (pos, u) in self.updates.iter().enumerate() {
            let s = if u.retire.is_some_and(|t| t <= p.birth) {
                State::New
            } else if u.first_apply.is_none_or(|t| t > end) {
                State::Old
            } else {
                State::Either
            };
            if s == State::Either && u.patterns.iter().any(|m| m.matches_unchecked(p.header)) {
                ambiguous.push(pos);
            }
            // Updates that cannot match the header do not change its path.
            fixed.push(if s == State::Either { State::Old } else { s });
        }
        Admissible { fixed, ambiguous }
    }

    fn replay(&self, p: &PacketLog, new: &dyn Fn(usize) -> bool) -> Option<SnapshotPath> {
        let sc = self.scenario;
        walk(&sc.topology, p.header, p.ingress, sc.max_hops, sc.timing.processing, |sw| {
            self.catalog.lookup(sw, p.header, new).map(|e| (e.id, e.action.output))
        })
        .ok()
    }

    fn same_path(&self, p: &PacketLog, snap: &SnapshotPath) -> bool {
        let (_, end) = p.end.expect("complete");
        let end_ok = match (end, snap.end) {
            (ObsEnd::Exit { switch: a, port: x }, PathEnd::Exit { switch: b, port: y }) => a == b && x == y,
            (ObsEnd::Drop { switch: a, reason: x }, PathEnd::Drop { switch: b, reason: y }) => a == b && x == y,
            _ => false,
        };
        if !end_ok || p.hops.len() != snap.hops.len() {
            return false;
        }
        p.hops.iter().zip(&snap.hops).all(|(o, s)| {
            o.switch == s.switch
                && match (o.executed(), s.rule) {
                    (None, None) => true,
                    (Some(a), Some(b)) => {
                        a == b || self.catalog.action(o.switch, a) == self.catalog.action(s.switch, b)
                    }
                    _ => false,
                }
        })
    }
}

type ReplayCache = HashMap<(SwitchId, Header, Vec<u32>), Vec<(u32, Option<SnapshotPath>)>>;

struct PacketEval {
    adm: Admissible,
    /// Per enumerated assignment of the ambiguous updates (bit i set: the
    /// i-th ambiguous update is in its new state): the replay.
    replays: Vec<(u32, Option<SnapshotPath>)>,
    matched: Vec<u32>,
}

impl PacketEval {
    fn state_in(&self, mask: u32, pos: usize) -> bool {
        match self.adm.ambiguous.iter().position(|&a| a == pos) {
            Some(i) => i < 32 && mask & (1 << i) != 0,
            None => self.adm.fixed[pos] == State::New,
        }
    }
}

fn evaluate(ix: &TraceIndex<'_>, p: &PacketLog, cache: &mut ReplayCache) -> PacketEval {
    let adm = ix.admissible(p);
    let k = adm.ambiguous.len().min(MAX_AMBIGUOUS);
    let masks: Vec<u32> = if adm.ambiguous.len() <= MAX_AMBIGUOUS {
        (0..1u32 << k).collect()
    } else {
        vec![0, (1u32 << MAX_AMBIGUOUS) - 1]
    };
    // Only updates that can match the header influence its replay.
    let key: Vec<u32> = ix
        .updates
        .iter()
        .enumerate()
        .filter(|(pos, u)| adm.ambiguous.contains(pos) || u.patterns.iter().any(|m| m.matches_unchecked(p.header)))
        .map(|(pos, _)| {
            let s = if adm.ambiguous.contains(&pos) { State::Either } else { adm.fixed[pos] };
            pos as u32 * 3 + s as u32
        })
        .collect();
    let replays = match cache.get(&(p.ingress, p.header, key.clone())) {
        Some(r) => r.clone(),
        None => {
            let r: Vec<(u32, Option<SnapshotPath>)> = masks
                .iter()
                .map(|&mask| {
                    let new = |pos: usize| match adm.ambiguous.iter().position(|&a| a == pos) {
                        Some(i) => i < 32 && mask & (1 << i) != 0,
                        None => adm.fixed[pos] == State::New,
                    };
                    (mask, ix.replay(p, &new))
                })
                .collect();
            cache.insert((p.ingress, p.header, key), r.clone());
            r
        }
    };
    let matched = replays
        .iter()
        .filter(|(_, s)| s.as_ref().is_some_and(|s| ix.same_path(p, s)))
        .map(|(m, _)| *m)
        .collect();
    PacketEval { adm, replays, matched }
}

// ---------------------------------------------------------------------------
// Checks.

fn push(out: &mut Vec<Violation>, ix: &TraceIndex<'_>, p: &PacketLog, kind: ViolationKind, v: Option<UpdateId>, detail: String) {
    out.push(Violation { kind, packet: p.id, v, detail, witness: ix.witness(p) });
}

fn describe(ix: &TraceIndex<'_>, p: &PacketLog) -> String {
    let topo = &ix.scenario.topology;
    let mut s = String::new();
    for h in &p.hops {
        let _ = write!(s, "{}", topo.name(h.switch));
        if let Some(r) = h.executed() {
            let _ = write!(s, "/{r}");
        }
        s.push(' ');
    }
    match p.end.expect("complete").1 {
        ObsEnd::Exit { port, .. } => {
            let _ = write!(s, "-> port {port}");
        }
        ObsEnd::Drop { reason, .. } => {
            let _ = write!(s, "-> drop ({})", reason.as_str());
        }
    }
    s
}

fn check_packet_paths(ix: &TraceIndex<'_>, p: &PacketLog, ev: &PacketEval, counts: &mut PathCounts, out: &mut Vec<Violation>) {
    let affected = !ev.adm.ambiguous.is_empty();
    if affected {
        let all_new = ev.replays.last().map(|(m, _)| *m);
        let old = ev.matched.contains(&0);
        let new = all_new.is_some_and(|m| ev.matched.contains(&m));
        match (old, new) {
            (true, true) => counts.both += 1,
            (true, false) => counts.old += 1,
            (false, true) => counts.new += 1,
            (false, false) => counts.other += 1,
        }
    }
    let v = ev.adm.ambiguous.first().map(|&pos| ix.updates[pos].v);

    // Liveness.
    let (_, end) = p.end.expect("complete");
    let mut seen: Vec<SwitchId> = Vec::with_capacity(p.hops.len());
    let revisit = p.hops.iter().any(|h| {
        let r = seen.contains(&h.switch);
        seen.push(h.switch);
        r
    });
    let looped = revisit || matches!(end, ObsEnd::Drop { reason: DropReason::HopLimit, .. });
    if looped {
        push(out, ix, p, ViolationKind::Loop, v, describe(ix, p));
    } else if let ObsEnd::Drop { switch, reason } = end {
        let admissible_same = ev.replays.iter().any(|(_, s)| {
            s.as_ref().is_some_and(|s| reason == DropReason::Rule && s.end == PathEnd::Drop { switch, reason })
        });
        let some_delivers = ev.replays.iter().any(|(_, s)| s.as_ref().is_some_and(|s| s.end.delivered()));
        if !admissible_same && some_delivers {
            push(out, ix, p, ViolationKind::Drop, v, describe(ix, p));
        }
    }

    if ev.matched.is_empty() {
        push(out, ix, p, ViolationKind::Ppc, v, format!("observed {} matches no admissible configuration", describe(ix, p)));
    }
}

fn check_packet_flags(ix: &TraceIndex<'_>, p: &PacketLog, out: &mut Vec<Violation>) {
    let both = p.hops.iter().any(|h| h.fp1 && h.fp2 || h.matches.iter().any(|m| m.fp1 && m.fp2));
    if both {
        push(out, ix, p, ViolationKind::FlagExclusion, None, "fp1 and fp2 both set".into());
    }
    let first_marked = p.hops.iter().position(|h| h.matches.iter().any(|m| m.flag != RuleFlag::U));
    for (i, h) in p.hops.iter().enumerate() {
        let n = h.matches.iter().filter(|m| m.branch == Branch::Resubmit).count();
        if n > 1 {
            push(out, ix, p, ViolationKind::ResubmitBudget, None, format!("{n} resubmissions at hop {}", i + 1));
        } else if n == 1 && first_marked != Some(i) {
            push(
                out,
                ix,
                p,
                ViolationKind::ResubmitBudget,
                None,
                format!("resubmitted at hop {} after the first affected switch", i + 1),
            );
        }
    }
}

fn check_packet_properties(ix: &TraceIndex<'_>, p: &PacketLog, ev: &PacketEval, out: &mut Vec<Violation>) {
    let g = ix.scenario.timing.ts_granularity;
    let end = p.end.expect("complete").0;
    for &pos in &ev.adm.ambiguous {
        let u = &ix.updates[pos];
        let v = Some(u.v);
        let base = ev.matched.first().copied().unwrap_or(0);
        let hits = |h: &HopLog| {
            if !u.switches.contains(&h.switch) {
                return false;
            }
            [false, true].iter().any(|&state| {
                let new = |q: usize| if q == pos { state } else { ev.state_in(base, q) };
                ix.catalog.lookup(h.switch, p.header, &new).is_some_and(|e| e.belongs_to(pos))
            })
        };
        let Some(f) = p.hops.iter().position(hits) else { continue };
        let sf = &p.hops[f];
        let commit = u.commit_at.get(&sf.switch).copied();
        let expire = u.expire_at.get(&sf.switch).copied();
        let dropped_at = |i: usize| i + 1 == p.hops.len() && matches!(p.end, Some((_, ObsEnd::Drop { .. })));

        // P1: before Commit at s_f the packet follows the configuration
        // without this update.
        if commit.is_none_or(|c| sf.at < c) {
            let old = ev.matched.iter().any(|&m| !ev.state_in(m, pos));
            if !old {
                push(out, ix, p, ViolationKind::Property1, v, format!("reached {} before Commit but did not follow the old path", ix.scenario.topology.name(sf.switch)));
            }
        }

        let in_window = commit.is_some_and(|c| c <= sf.at) && expire.is_none_or(|e| sf.at < e);
        // P2.1: between Commit and expiry, exactly one mark leaves s_f.
        if in_window && !dropped_at(f) {
            let (a, b) = sf.leaving();
            if a == b {
                push(out, ix, p, ViolationKind::Property2_1, v, format!("left {} with fp1={} fp2={}", ix.scenario.topology.name(sf.switch), a as u8, b as u8));
            }
        }

        // P2.2: downstream affected switches only see old-marked,
        // new-marked, or unmarked packets stamped before activation.
        if expire.is_none_or(|e| sf.at < e) {
            for h in p.hops[f + 1..].iter().filter(|h| hits(h)) {
                if u.expire_at.get(&h.switch).is_some_and(|&e| e <= h.at) {
                    continue;
                }
                if let Some(&t) = u.t_eff.get(&h.switch) {
                    if !h.fp1 && !h.fp2 && h.ts >= t {
                        push(out, ix, p, ViolationKind::Property2_2, v, format!(
                            "unmarked packet with TS {} >= T {} reached {}",
                            h.ts, t, ix.scenario.topology.name(h.switch)
                        ));
                    }
                }
            }
        }

        // P3: packets that used an OLD rule are gone before any timer fires.
        let used_old = p.hops.iter().any(|h| {
            h.matches.iter().any(|m| m.flag == RuleFlag::Old && m.v == v && m.branch == Branch::Execute)
        });
        if used_old {
            if let Some(t) = u.timer_fires.iter().find(|&&t| p.birth <= t && t <= end) {
                push(out, ix, p, ViolationKind::Property3, v, format!("used an OLD rule and was in flight when a timer fired at {t}"));
            }
        }

        // P4: after expiry at s_f only new packets leave it.
        if let (Some(e), Some(&t)) = (expire, u.t_eff.get(&sf.switch)) {
            if e < sf.at && !dropped_at(f) {
                let (a, b) = sf.leaving();
                if a || !(b || sf.ts >= t.floor_to(g)) {
                    push(out, ix, p, ViolationKind::Property4, v, format!(
                        "left {} after expiry with fp1={} fp2={} TS {}",
                        ix.scenario.topology.name(sf.switch), a as u8, b as u8, sf.ts
                    ));
                }
            }
        }
    }
}

/// Runs every check. Protocol properties are skipped in naive mode.
pub fn check(scenario: &Scenario, trace: &Trace) -> Result<Report, CheckError> {
    let ix = TraceIndex::build(scenario, trace)?;
    let mut report = Report { naive: scenario.mechanisms.naive, packets: ix.packets.len() as u64, ..Report::default() };
    let mut cache = HashMap::new();
    for p in &ix.packets {
        let ev = evaluate(&ix, p, &mut cache);
        let affected = !ev.adm.ambiguous.is_empty() || p.hops.iter().any(|h| h.matches.iter().any(|m| m.v.is_some()));
        if affected {
            report.affected += 1;
        }
        check_packet_paths(&ix, p, &ev, &mut report.paths, &mut report.violations);
        check_packet_flags(&ix, p, &mut report.violations);
        if !scenario.mechanisms.naive {
            check_packet_properties(&ix, p, &ev, &mut report.violations);
        }
    }
    Ok(report)
}

/// Only the path-consistency check.
pub fn check_ppc(scenario: &Scenario, trace: &Trace) -> Result<Vec<Violation>, CheckError> {
    check_filtered(scenario, trace, |k| k == ViolationKind::Ppc)
}

/// Drop and loop freedom.
pub fn check_liveness(scenario: &Scenario, trace: &Trace) -> Result<Vec<Violation>, CheckError> {
    check_filtered(scenario, trace, |k| matches!(k, ViolationKind::Drop | ViolationKind::Loop))
}

/// Properties 1 to 4, flag exclusion and the resubmission budget.
pub fn check_properties(scenario: &Scenario, trace: &Trace) -> Result<Vec<Violation>, CheckError> {
    check_filtered(scenario, trace, |k| !matches!(k, ViolationKind::Ppc | ViolationKind::Drop | ViolationKind::Loop))
}

fn check_filtered(scenario: &Scenario, trace: &Trace, keep: impl Fn(ViolationKind) -> bool) -> Result<Vec<Violation>, CheckError> {
    Ok(check(scenario, trace)?.violations.into_iter().filter(|v| keep(v.kind)).collect())
}
