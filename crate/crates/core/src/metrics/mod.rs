// SPDX-License-Identifier: Apache-2.0

//! Per-update costs measured from a trace, and the analytic comparison table.
//!
//! Round durations are taken per switch and maximized over the update's
//! switches:
//!
//! - `R1`: Commit received to the commit batch applied (ReadyToCommit sent).
//! - `R2`: CommitOK received to the activation time written
//!   (AckCommitOK sent).
//! - `R3`: DiscardOld received to the expiry batch applied.
//!
//! Overlap runs from the first Commit reaching a switch to the last expiry
//! batch; transition runs from the controller sending the first Commit to the
//! last activation time being written.

pub mod analytic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::dataplane::Branch;
use crate::scenario::Scenario;
use crate::sim::{Entity, Event, Topology, Trace};
use crate::{SwitchId, Time, UpdateId};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct UpdateMetrics {
    pub v: UpdateId,
    /// Index of the update in the scenario.
    pub index: u32,
    /// `k_a`: switches named in the update.
    pub affected: Vec<SwitchId>,
    /// Switches that sent or received any message of the update.
    pub contacted: Vec<SwitchId>,
    /// Messages delivered, both directions.
    pub message_count: u64,
    pub lost: u64,
    /// `k_a / contacted`, as numerator and denominator.
    pub fp: (u64, u64),
    pub r1: Option<Time>,
    pub r2: Option<Time>,
    pub r3: Option<Time>,
    pub overlap: Option<Time>,
    pub transition: Option<Time>,
    /// Admission to the last switch removing its OLD rules.
    pub total: Option<Time>,
    pub resubmissions: u64,
    /// First and last resubmission caused by this update's rules.
    pub resubmit_window: Option<(Time, Time)>,
    /// The update did not retire within the trace.
    pub partial: bool,
}

impl UpdateMetrics {
    pub fn fp_is_one(&self) -> bool {
        self.fp.0 == self.fp.1
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MetricsReport {
    pub updates: Vec<UpdateMetrics>,
    /// Violation counts by kind, filled in by whoever ran the checker.
    pub violations: BTreeMap<String, usize>,
}

#[derive(Default)]
struct Acc {
    index: u32,
    admitted: Option<Time>,
    retired: Option<Time>,
    contacted: BTreeSet<SwitchId>,
    delivered: u64,
    lost: u64,
    first_commit_send: Option<Time>,
    first_commit_recv: Option<Time>,
    last_set_t: Option<Time>,
    last_expire: Option<Time>,
    commit_recv: BTreeMap<SwitchId, Time>,
    commit_ok_recv: BTreeMap<SwitchId, Time>,
    discard_recv: BTreeMap<SwitchId, Time>,
    r1: Option<Time>,
    r2: Option<Time>,
    r3: Option<Time>,
    resubmits: u64,
    window: Option<(Time, Time)>,
}

fn max_opt(a: Option<Time>, b: Time) -> Option<Time> {
    Some(a.map_or(b, |a| a.max(b)))
}

fn min_opt(a: Option<Time>, b: Time) -> Option<Time> {
    Some(a.map_or(b, |a| a.min(b)))
}

/// Measures every admitted update in `trace`. Updates that never retire are
/// reported with `partial` set and the rounds that did happen.
pub fn measure(scenario: &Scenario, trace: &Trace) -> MetricsReport {
    use crate::switch_agent::MsgKind as K;
    let mut acc: BTreeMap<UpdateId, Acc> = BTreeMap::new();
    for r in &trace.records {
        let t = r.global;
        match &r.event {
            Event::UpdateAdmit { idx, v } => {
                let a = acc.entry(*v).or_default();
                a.index = *idx;
                a.admitted = Some(t);
            }
            Event::UpdateRetire { v } => acc.entry(*v).or_default().retired = Some(t),
            Event::Send { peer, msg } => {
                let a = acc.entry(msg.v).or_default();
                if let Some(s) = peer.switch().or(r.entity.switch()) {
                    a.contacted.insert(s);
                }
                if msg.kind == K::Commit {
                    a.first_commit_send = min_opt(a.first_commit_send, t);
                }
            }
            Event::Lost { msg, .. } => acc.entry(msg.v).or_default().lost += 1,
            Event::Recv { peer, msg } => {
                let a = acc.entry(msg.v).or_default();
                a.delivered += 1;
                let sw = match (r.entity, *peer) {
                    (Entity::Switch(s), _) | (_, Entity::Switch(s)) => s,
                    _ => continue,
                };
                a.contacted.insert(sw);
                if r.entity == Entity::Switch(sw) {
                    match msg.kind {
                        K::Commit => {
                            a.first_commit_recv = min_opt(a.first_commit_recv, t);
                            a.commit_recv.insert(sw, t);
                        }
                        K::CommitOk => {
                            a.commit_ok_recv.insert(sw, t);
                        }
                        K::DiscardOld => {
                            a.discard_recv.insert(sw, t);
                        }
                        _ => {}
                    }
                }
            }
            Event::CommitApply { v } => {
                let Some(sw) = r.entity.switch() else { continue };
                let a = acc.entry(*v).or_default();
                if let Some(&start) = a.commit_recv.get(&sw) {
                    a.r1 = max_opt(a.r1, t - start);
                }
            }
            Event::SetT { v, .. } => {
                let Some(sw) = r.entity.switch() else { continue };
                let a = acc.entry(*v).or_default();
                a.last_set_t = max_opt(a.last_set_t, t);
                if let Some(&start) = a.commit_ok_recv.get(&sw) {
                    a.r2 = max_opt(a.r2, t - start);
                }
            }
            Event::ExpireApply { v } => {
                let Some(sw) = r.entity.switch() else { continue };
                let a = acc.entry(*v).or_default();
                a.last_expire = max_opt(a.last_expire, t);
                if let Some(&start) = a.discard_recv.get(&sw) {
                    a.r3 = max_opt(a.r3, t - start);
                }
            }
            Event::Match { v: Some(v), branch: Branch::Resubmit, .. } => {
                let a = acc.entry(*v).or_default();
                a.resubmits += 1;
                a.window = Some(a.window.map_or((t, t), |(lo, _)| (lo, t)));
            }
            _ => {}
        }
    }

    let updates = acc
        .into_iter()
        .filter(|(_, a)| a.admitted.is_some())
        .map(|(v, a)| {
            let affected: Vec<SwitchId> = scenario
                .updates
                .get(a.index as usize)
                .map(|u| u.request.switches().collect())
                .unwrap_or_default();
            let contacted: Vec<SwitchId> = a.contacted.iter().copied().collect();
            let partial = a.retired.is_none();
            UpdateMetrics {
                v,
                index: a.index,
                fp: (affected.len() as u64, contacted.len() as u64),
                affected,
                contacted,
                message_count: a.delivered,
                lost: a.lost,
                r1: a.r1,
                r2: a.r2,
                r3: a.r3,
                overlap: match (a.first_commit_recv, a.last_expire) {
                    (Some(s), Some(e)) if !partial => Some(e - s),
                    _ => None,
                },
                transition: match (a.first_commit_send, a.last_set_t) {
                    (Some(s), Some(e)) if !partial => Some(e - s),
                    _ => None,
                },
                total: a.retired.zip(a.admitted).map(|(r, s)| r - s),
                resubmissions: a.resubmits,
                resubmit_window: a.window,
                partial,
            }
        })
        .collect();
    MetricsReport { updates, violations: BTreeMap::new() }
}

fn opt(t: Option<Time>) -> String {
    t.map_or_else(|| "-".to_string(), |t| t.to_string())
}

impl MetricsReport {
    pub fn render(&self, topo: &Topology) -> String {
        let mut out = String::new();
        for u in &self.updates {
            let names: Vec<&str> = u.contacted.iter().map(|s| topo.name(*s)).collect();
            let _ = writeln!(
                out,
                "update v={}{}: k_a={} messages={} lost={} contacted=[{}] fp={}/{}",
                u.v,
                if u.partial { " (partial)" } else { "" },
                u.affected.len(),
                u.message_count,
                u.lost,
                names.join(","),
                u.fp.0,
                u.fp.1,
            );
            let _ = writeln!(
                out,
                "  r1={} r2={} r3={} overlap={} transition={} total={}",
                opt(u.r1),
                opt(u.r2),
                opt(u.r3),
                opt(u.overlap),
                opt(u.transition),
                opt(u.total)
            );
            match u.resubmit_window {
                Some((a, b)) => {
                    let _ = writeln!(out, "  resubmissions={} window=[{a}, {b}]", u.resubmissions);
                }
                None => {
                    let _ = writeln!(out, "  resubmissions=0");
                }
            }
        }
        if self.violations.is_empty() {
            out.push_str("violations: none\n");
        } else {
            let parts: Vec<String> = self.violations.iter().map(|(k, n)| format!("{k}={n}")).collect();
            let _ = writeln!(out, "violations: {}", parts.join(" "));
        }
        out
    }
}
