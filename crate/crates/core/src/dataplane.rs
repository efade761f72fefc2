// SPDX-License-Identifier: Apache-2.0

//! Per-switch packet processing: ingress stamping, the NEW/OLD/U rule
//! actions with resubmission, and egress stripping.
//!
//! A NEW rule executes when `TS >= T` or the packet is already marked
//! new-only (`fp2`); it then marks `fp2`. Otherwise it sets `f1` and the
//! packet is resubmitted, where `f1` hides every NEW rule. OLD rules mirror
//! this with `TS < T`, `fp1` and `f2`. A U rule reached after a resubmission
//! turns the metadata bit into the matching header bit so downstream
//! switches keep the decision.

use crate::match_engine::{Output, RuleFlag, RuleSet};
use crate::packet::{Packet, PacketMeta, PpcuHeader};
use crate::{Ablation, Mechanisms, Port, RuleId, SwitchId, Time, UpdateId};

/// Hard cap on pipeline passes in one traversal. The protocol needs at
/// most two; the cap only stops runaway ablated configurations.
pub const MAX_PASSES: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Execute,
    Resubmit,
    /// Condition failed and the rule was passed over without resubmitting.
    /// Only produced by the resubmit ablations.
    Skip,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Execute => "execute",
            Branch::Resubmit => "resubmit",
            Branch::Skip => "skip",
        }
    }

    pub fn parse(s: &str) -> Option<Branch> {
        match s {
            "execute" => Some(Branch::Execute),
            "resubmit" => Some(Branch::Resubmit),
            "skip" => Some(Branch::Skip),
            _ => None,
        }
    }
}

/// One pipeline pass over a matched rule. Flag bits are as they were after
/// the rule's action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MatchRecord {
    pub switch: SwitchId,
    pub rule: RuleId,
    pub flag: RuleFlag,
    pub update: Option<UpdateId>,
    pub branch: Branch,
    pub fp1: bool,
    pub fp2: bool,
    pub f1: bool,
    pub f2: bool,
    pub local: Time,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    /// No rule matched.
    NoMatch,
    /// The executed rule's action is drop.
    Rule,
    /// Exceeded [`MAX_PASSES`] in a single traversal.
    ResubmitLimit,
    /// Exceeded the scenario's hop bound.
    HopLimit,
    /// Older than the maximum packet lifetime.
    Lifetime,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoMatch => "no-match",
            DropReason::Rule => "rule",
            DropReason::ResubmitLimit => "resubmit-limit",
            DropReason::HopLimit => "hop-limit",
            DropReason::Lifetime => "lifetime",
        }
    }

    pub fn parse(s: &str) -> Option<DropReason> {
        match s {
            "no-match" => Some(DropReason::NoMatch),
            "rule" => Some(DropReason::Rule),
            "resubmit-limit" => Some(DropReason::ResubmitLimit),
            "hop-limit" => Some(DropReason::HopLimit),
            "lifetime" => Some(DropReason::Lifetime),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Forward(Port),
    Drop(DropReason),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForwardingDecision {
    pub action: Action,
    pub trace: Vec<MatchRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataplaneError {
    #[error("packet {0:?} already carries a consistency header")]
    DoubleEncapsulation(crate::PacketId),
    #[error("packet {0:?} has no consistency header")]
    MissingHeader(crate::PacketId),
    #[error("timestamp {0} is not below the inactive sentinel")]
    TimestampOverflow(Time),
}

/// Stamps a packet entering the network. `TS` is the ingress clock reading
/// floored to `granularity` (and to zero for negative readings).
pub fn ingress_encapsulate(packet: &mut Packet, local: Time, granularity: Time) -> Result<(), DataplaneError> {
    if packet.ppcu.is_some() {
        return Err(DataplaneError::DoubleEncapsulation(packet.id));
    }
    let ts = local.floor_to(granularity).max0();
    if ts >= crate::match_engine::T_MAX {
        return Err(DataplaneError::TimestampOverflow(ts));
    }
    packet.ppcu = Some(PpcuHeader { ts, fp1: false, fp2: false });
    Ok(())
}

/// Removes the consistency header at the network edge.
pub fn egress_decapsulate(packet: &mut Packet) -> Result<PpcuHeader, DataplaneError> {
    packet.ppcu.take().ok_or(DataplaneError::MissingHeader(packet.id))
}

/// Runs one switch traversal. Metadata starts zeroed; the packet's flag
/// bits and scratch field are updated in place.
pub fn process_packet(
    switch: SwitchId,
    table: &RuleSet,
    packet: &mut Packet,
    local: Time,
    mech: &Mechanisms,
) -> Result<ForwardingDecision, DataplaneError> {
    let mut hdr = packet.ppcu.ok_or(DataplaneError::MissingHeader(packet.id))?;
    let mut meta = PacketMeta::default();
    let mut skipped: Vec<RuleId> = Vec::new();
    let mut trace = Vec::new();
    let mut passes = 0u8;

    let action = loop {
        if passes >= MAX_PASSES {
            break Action::Drop(DropReason::ResubmitLimit);
        }
        passes += 1;
        let Some(rule) = table.lookup_excluding(packet.header, &meta, (hdr.fp1, hdr.fp2), &skipped) else {
            break Action::Drop(DropReason::NoMatch);
        };
        let branch = match rule.flag {
            RuleFlag::New => {
                if hdr.ts >= rule.t || hdr.fp2 {
                    if !mech.ablated(Ablation::NoFp2Mark) {
                        hdr.fp2 = true;
                    }
                    Branch::Execute
                } else if mech.ablated(Ablation::NoF1Resubmit) {
                    Branch::Skip
                } else {
                    meta.f1 = true;
                    Branch::Resubmit
                }
            }
            RuleFlag::Old => {
                if hdr.ts < rule.t || hdr.fp1 {
                    if !mech.ablated(Ablation::NoFp1Mark) {
                        hdr.fp1 = true;
                    }
                    Branch::Execute
                } else if mech.ablated(Ablation::NoF2Resubmit) {
                    Branch::Skip
                } else {
                    meta.f2 = true;
                    Branch::Resubmit
                }
            }
            RuleFlag::U => {
                if meta.f1 {
                    hdr.fp1 = true;
                } else if meta.f2 {
                    hdr.fp2 = true;
                }
                Branch::Execute
            }
        };
        trace.push(MatchRecord {
            switch,
            rule: rule.id,
            flag: rule.flag,
            update: rule.update,
            branch,
            fp1: hdr.fp1,
            fp2: hdr.fp2,
            f1: meta.f1,
            f2: meta.f2,
            local,
        });
        match branch {
            Branch::Execute => {
                if let Some(op) = rule.action.field {
                    op.apply(&mut packet.field_f);
                }
                break match rule.action.output {
                    Output::Forward(p) => Action::Forward(p),
                    Output::Drop => Action::Drop(DropReason::Rule),
                };
            }
            Branch::Resubmit => meta.resubmit_count = meta.resubmit_count.saturating_add(1),
            Branch::Skip => skipped.push(rule.id),
        }
    };
    packet.ppcu = Some(hdr);
    Ok(ForwardingDecision { action, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::match_engine::{ActionSpec, FieldOp, FlagGuard, Header, Rule, T_MAX};
    use crate::PacketId;

    fn header(s: &str) -> Header {
        s.parse().unwrap()
    }

    fn flagged(id: u32, prio: i32, pat: &str, port: u16, flag: RuleFlag, t: Time) -> Rule {
        let mut r = Rule::new(RuleId(id), prio, pat.parse().unwrap(), ActionSpec::forward(port));
        r.flag = flag;
        r.t = t;
        if flag != RuleFlag::U {
            r.update = Some(UpdateId(1));
        }
        r.guard = match flag {
            RuleFlag::New => FlagGuard::NEW,
            RuleFlag::Old => FlagGuard::OLD,
            RuleFlag::U => FlagGuard::ANY,
        };
        r
    }

    fn packet(ts_ms: i64) -> Packet {
        let mut p = Packet::new(PacketId(1), header("0010"), SwitchId(0), Time::ZERO);
        ingress_encapsulate(&mut p, Time::from_ms(ts_ms), Time::from_ms(1)).unwrap();
        p
    }

    fn run(table: &RuleSet, p: &mut Packet, mech: &Mechanisms) -> ForwardingDecision {
        process_packet(SwitchId(0), table, p, Time::ZERO, mech).unwrap()
    }

    #[test]
    fn stamping_and_stripping() {
        let mut p = Packet::new(PacketId(7), header("1000"), SwitchId(0), Time::ZERO);
        ingress_encapsulate(&mut p, Time::from_us(1_000_700), Time::from_ms(1)).unwrap();
        assert_eq!(p.ppcu.unwrap().ts, Time::from_ms(1000));
        assert_eq!(p.flags(), (false, false));
        assert_eq!(
            ingress_encapsulate(&mut p, Time::ZERO, Time::from_ms(1)),
            Err(DataplaneError::DoubleEncapsulation(PacketId(7)))
        );
        p.field_f = 3;
        egress_decapsulate(&mut p).unwrap();
        assert_eq!(p.header, header("1000"));
        assert_eq!(p.field_f, 3);
        assert!(egress_decapsulate(&mut p).is_err());
    }

    #[test]
    fn inactive_new_rule_resubmits_to_old() {
        let table = RuleSet::from_rules([
            flagged(1, 6, "00**", 2, RuleFlag::New, T_MAX),
            flagged(0, 5, "00**", 1, RuleFlag::Old, T_MAX),
        ])
        .unwrap();
        let mut p = packet(100);
        let d = run(&table, &mut p, &Mechanisms::default());
        assert_eq!(d.action, Action::Forward(Port(1)));
        assert_eq!(d.trace.len(), 2);
        assert_eq!(d.trace[0].branch, Branch::Resubmit);
        assert!(d.trace[0].f1);
        assert_eq!(d.trace[1].branch, Branch::Execute);
        assert_eq!(p.flags(), (true, false));
    }

    #[test]
    fn fp2_packet_takes_new_rule_before_commit_ok() {
        let table = RuleSet::from_rules([
            flagged(1, 6, "00**", 2, RuleFlag::New, T_MAX),
            flagged(0, 5, "00**", 1, RuleFlag::Old, T_MAX),
        ])
        .unwrap();
        let mut p = packet(100);
        p.ppcu.as_mut().unwrap().fp2 = true;
        let d = run(&table, &mut p, &Mechanisms::default());
        assert_eq!(d.action, Action::Forward(Port(2)));
        assert_eq!(d.trace.len(), 1);
    }

    #[test]
    fn old_rule_past_activation_hands_over_to_unaffected_rule() {
        let table = RuleSet::from_rules([
            flagged(0, 5, "00**", 1, RuleFlag::Old, Time::from_ms(50)),
            flagged(9, 4, "0***", 3, RuleFlag::U, T_MAX),
        ])
        .unwrap();
        let mut p = packet(60);
        let d = run(&table, &mut p, &Mechanisms::default());
        assert_eq!(d.action, Action::Forward(Port(3)));
        assert_eq!(d.trace[0].branch, Branch::Resubmit);
        assert!(d.trace[0].f2);
        assert_eq!(p.flags(), (false, true));
    }

    #[test]
    fn marking_ablations() {
        let table = RuleSet::from_rules([flagged(1, 6, "00**", 2, RuleFlag::New, Time::ZERO)]).unwrap();
        let mut p = packet(5);
        run(&table, &mut p, &Mechanisms::default().with_ablation(Ablation::NoFp2Mark));
        assert_eq!(p.flags(), (false, false));
        let mut p = packet(5);
        run(&table, &mut p, &Mechanisms::default());
        assert_eq!(p.flags(), (false, true));
    }

    #[test]
    fn resubmit_ablation_falls_through() {
        let table = RuleSet::from_rules([
            flagged(1, 6, "00**", 2, RuleFlag::New, T_MAX),
            flagged(9, 4, "0***", 3, RuleFlag::U, T_MAX),
        ])
        .unwrap();
        let mut p = packet(5);
        let d = run(&table, &mut p, &Mechanisms::default().with_ablation(Ablation::NoF1Resubmit));
        assert_eq!(d.trace[0].branch, Branch::Skip);
        assert_eq!(d.action, Action::Forward(Port(3)));
        assert_eq!(p.flags(), (false, false));
        let mut p = packet(5);
        run(&table, &mut p, &Mechanisms::default());
        assert_eq!(p.flags(), (true, false));
    }

    #[test]
    fn field_ops_and_drops() {
        let mut r = Rule::new(RuleId(3), 1, "****".parse().unwrap(), ActionSpec::drop());
        r.action = r.action.with_field(FieldOp::Set(4));
        let table = RuleSet::from_rules([r]).unwrap();
        let mut p = packet(0);
        let d = run(&table, &mut p, &Mechanisms::default());
        assert_eq!(d.action, Action::Drop(DropReason::Rule));
        assert_eq!(p.field_f, 4);
        let d = run(&RuleSet::new(), &mut p, &Mechanisms::default());
        assert_eq!(d.action, Action::Drop(DropReason::NoMatch));
        assert!(d.trace.is_empty());
    }
}
