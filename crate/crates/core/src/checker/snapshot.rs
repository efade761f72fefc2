// SPDX-License-Identifier: Apache-2.0

//! Frozen configurations and plain replay through them.

use crate::dataplane::DropReason;
use crate::match_engine::{Header, Output, RuleSet, UpdateRequest};
use crate::sim::{PortTarget, Topology};
use crate::{Port, RuleId, SwitchId, Time};

/// One table per switch, indexed by switch id. Rules carry no update state.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConfigSnapshot {
    pub tables: Vec<RuleSet>,
}

impl ConfigSnapshot {
    /// The configuration after `update` completes: `R0` removed, `R1`
    /// present as unaffected rules.
    pub fn apply(&self, update: &UpdateRequest) -> Result<ConfigSnapshot, String> {
        let mut next = self.clone();
        for (sw, u) in &update.per_switch {
            let table = &mut next.tables[sw.0 as usize];
            for r in &u.r0 {
                if table.remove(r.id).is_none() {
                    return Err(format!("rule {} is not installed at switch {}", r.id, sw.0));
                }
            }
            for r in &u.r1 {
                table.insert(r.clone().into_unaffected()).map_err(|e| e.to_string())?;
            }
        }
        Ok(next)
    }

    pub fn table(&self, sw: SwitchId) -> &RuleSet {
        &self.tables[sw.0 as usize]
    }
}

/// A visited switch and the rule executed there (`None`: nothing matched).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Hop {
    pub switch: SwitchId,
    pub rule: Option<RuleId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathEnd {
    Exit { switch: SwitchId, port: Port },
    Drop { switch: SwitchId, reason: DropReason },
}

impl PathEnd {
    pub fn delivered(self) -> bool {
        matches!(self, PathEnd::Exit { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SnapshotPath {
    pub hops: Vec<Hop>,
    pub end: PathEnd,
    /// Processing plus link delay along the path.
    pub delay: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("header {header} from `{ingress}` loops in the static configuration at `{at}`")]
    Loop { header: Header, ingress: String, at: String },
    #[error("header {header} from `{ingress}` exceeds {max_hops} hops in the static configuration")]
    TooLong { header: Header, ingress: String, max_hops: u32 },
}

/// Replays `header` entering at `ingress` through `config` with plain
/// priority lookup.
pub fn snapshot_path(
    config: &ConfigSnapshot,
    topo: &Topology,
    header: Header,
    ingress: SwitchId,
    max_hops: u32,
    processing: Time,
) -> Result<SnapshotPath, SnapshotError> {
    walk(topo, header, ingress, max_hops, processing, |sw| {
        config.table(sw).plain_lookup(header).map(|r| (r.id, r.action.output))
    })
}

/// Follows the rule chosen by `lookup` at each switch.
pub(crate) fn walk(
    topo: &Topology,
    header: Header,
    ingress: SwitchId,
    max_hops: u32,
    processing: Time,
    mut lookup: impl FnMut(SwitchId) -> Option<(RuleId, Output)>,
) -> Result<SnapshotPath, SnapshotError> {
    let mut hops: Vec<Hop> = Vec::new();
    let mut delay = Time::ZERO;
    let mut at = ingress;
    loop {
        if hops.iter().any(|h| h.switch == at) {
            return Err(SnapshotError::Loop {
                header,
                ingress: topo.name(ingress).to_string(),
                at: topo.name(at).to_string(),
            });
        }
        if hops.len() as u32 >= max_hops {
            return Err(SnapshotError::TooLong { header, ingress: topo.name(ingress).to_string(), max_hops });
        }
        delay += processing;
        let Some((rule, output)) = lookup(at) else {
            hops.push(Hop { switch: at, rule: None });
            return Ok(SnapshotPath { hops, end: PathEnd::Drop { switch: at, reason: DropReason::NoMatch }, delay });
        };
        hops.push(Hop { switch: at, rule: Some(rule) });
        match output {
            Output::Drop => {
                return Ok(SnapshotPath { hops, end: PathEnd::Drop { switch: at, reason: DropReason::Rule }, delay })
            }
            Output::Forward(port) => match topo.port(at, port) {
                Some(PortTarget::Switch { to, delay: d }) => {
                    delay += d;
                    at = to;
                }
                Some(PortTarget::Host { .. }) => {
                    return Ok(SnapshotPath { hops, end: PathEnd::Exit { switch: at, port }, delay });
                }
                None => {
                    // Ports are validated when scenarios load; treat as a
                    // black hole otherwise.
                    return Ok(SnapshotPath { hops, end: PathEnd::Drop { switch: at, reason: DropReason::NoMatch }, delay });
                }
            },
        }
    }
}
