// SPDX-License-Identifier: Apache-2.0

//! Simulation traces.
//!
//! One record per line, five tab-separated fields:
//!
//! ```text
//! global  local  entity  kind  payload
//! ```
//!
//! Times are fixed-point milliseconds. `entity` is `controller` or a switch
//! name. The payload is a space-separated list of `key=value` pairs whose
//! keys depend on `kind`. Parsing needs the topology to resolve names.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::dataplane::{Branch, DropReason};
use crate::match_engine::{Header, RuleFlag};
use crate::switch_agent::MsgKind;
use crate::{PacketId, Port, RuleId, SwitchId, Time, UpdateId};

use super::Topology;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entity {
    Controller,
    Switch(SwitchId),
}

impl Entity {
    pub fn switch(self) -> Option<SwitchId> {
        match self {
            Entity::Switch(s) => Some(s),
            Entity::Controller => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MsgSummary {
    pub kind: MsgKind,
    pub v: UpdateId,
    pub t: Option<Time>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Conflict { with: UpdateId },
    Quiescence { blocking: UpdateId, earliest: Time },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    UpdateSubmit { idx: u32 },
    UpdateAdmit { idx: u32, v: UpdateId },
    UpdateReject { idx: u32, reason: RejectReason },
    /// Every switch acknowledged DiscardOld (naive mode: every switch
    /// replaced its rules).
    UpdateComplete { v: UpdateId },
    /// Every switch removed the update's OLD rules.
    UpdateRetire { v: UpdateId },
    Send { peer: Entity, msg: MsgSummary },
    Recv { peer: Entity, msg: MsgSummary },
    Lost { peer: Entity, msg: MsgSummary },
    Inject { pkt: PacketId, flow: u32, header: Header },
    /// Packet entered a switch; flags as they arrived.
    Arrive { pkt: PacketId, hop: u32, ts: Time, fp1: bool, fp2: bool },
    /// One pipeline pass; flags after the rule's action.
    Match {
        pkt: PacketId,
        rule: RuleId,
        flag: RuleFlag,
        v: Option<UpdateId>,
        branch: Branch,
        fp1: bool,
        fp2: bool,
        f1: bool,
        f2: bool,
    },
    Exit { pkt: PacketId, port: Port, field_f: i64 },
    Drop { pkt: PacketId, reason: DropReason },
    CommitApply { v: UpdateId },
    SetT { v: UpdateId, t_eff: Time },
    /// `expiry` is in the switch's local time.
    TimerArm { v: UpdateId, expiry: Time },
    TimerFire { v: UpdateId },
    ExpireApply { v: UpdateId },
    NaiveApply { v: UpdateId },
    CommitFail { v: UpdateId, rule: RuleId },
    Ignored { v: UpdateId, kind: MsgKind, reason: String },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::UpdateSubmit { .. } => "update-submit",
            Event::UpdateAdmit { .. } => "update-admit",
            Event::UpdateReject { .. } => "update-reject",
            Event::UpdateComplete { .. } => "update-complete",
            Event::UpdateRetire { .. } => "update-retire",
            Event::Send { .. } => "send",
            Event::Recv { .. } => "recv",
            Event::Lost { .. } => "lost",
            Event::Inject { .. } => "inject",
            Event::Arrive { .. } => "arrive",
            Event::Match { .. } => "match",
            Event::Exit { .. } => "exit",
            Event::Drop { .. } => "drop",
            Event::CommitApply { .. } => "commit-apply",
            Event::SetT { .. } => "set-t",
            Event::TimerArm { .. } => "timer-arm",
            Event::TimerFire { .. } => "timer-fire",
            Event::ExpireApply { .. } => "expire-apply",
            Event::NaiveApply { .. } => "naive-apply",
            Event::CommitFail { .. } => "commit-fail",
            Event::Ignored { .. } => "ignored",
        }
    }

    pub fn packet(&self) -> Option<PacketId> {
        match self {
            Event::Inject { pkt, .. }
            | Event::Arrive { pkt, .. }
            | Event::Match { pkt, .. }
            | Event::Exit { pkt, .. }
            | Event::Drop { pkt, .. } => Some(*pkt),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Record {
    pub global: Time,
    pub local: Time,
    pub entity: Entity,
    pub event: Event,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

fn b(x: bool) -> u8 {
    u8::from(x)
}

struct Names<'a>(&'a Topology);

impl Names<'_> {
    fn entity(&self, e: Entity) -> &str {
        match e {
            Entity::Controller => "controller",
            Entity::Switch(s) => self.0.name(s),
        }
    }
}

impl Trace {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Renders the whole trace.
    pub fn to_text(&self, topo: &Topology) -> String {
        let mut out = String::with_capacity(self.records.len() * 64);
        for r in &self.records {
            write_record(&mut out, r, topo).expect("writing to a String cannot fail");
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, topo: &Topology) -> Result<Trace, TraceParseError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let r = parse_record(line, topo).map_err(|message| TraceParseError { line: i + 1, message })?;
            records.push(r);
        }
        Ok(Trace { records })
    }
}

fn write_msg(out: &mut String, m: &MsgSummary) -> fmt::Result {
    write!(out, "msg={} v={}", m.kind, m.v.0)?;
    if let Some(t) = m.t {
        write!(out, " t={t}")?;
    }
    Ok(())
}

pub fn write_record(out: &mut String, r: &Record, topo: &Topology) -> fmt::Result {
    let names = Names(topo);
    write!(out, "{}\t{}\t{}\t{}\t", r.global, r.local, names.entity(r.entity), r.event.name())?;
    match &r.event {
        Event::UpdateSubmit { idx } => write!(out, "idx={idx}"),
        Event::UpdateAdmit { idx, v } => write!(out, "idx={idx} v={}", v.0),
        Event::UpdateReject { idx, reason } => match reason {
            RejectReason::Conflict { with } => write!(out, "idx={idx} reason=conflict with={}", with.0),
            RejectReason::Quiescence { blocking, earliest } => {
                write!(out, "idx={idx} reason=quiescence with={} earliest={earliest}", blocking.0)
            }
        },
        Event::UpdateComplete { v } | Event::UpdateRetire { v } => write!(out, "v={}", v.0),
        Event::Send { peer, msg } | Event::Recv { peer, msg } | Event::Lost { peer, msg } => {
            write!(out, "peer={} ", names.entity(*peer))?;
            write_msg(out, msg)
        }
        Event::Inject { pkt, flow, header } => write!(out, "pkt={} flow={flow} header={header}", pkt.0),
        Event::Arrive { pkt, hop, ts, fp1, fp2 } => {
            write!(out, "pkt={} hop={hop} ts={ts} fp1={} fp2={}", pkt.0, b(*fp1), b(*fp2))
        }
        Event::Match { pkt, rule, flag, v, branch, fp1, fp2, f1, f2 } => {
            write!(out, "pkt={} rule={rule} flag={flag} v=", pkt.0)?;
            match v {
                Some(v) => write!(out, "{}", v.0)?,
                None => out.push('-'),
            }
            write!(
                out,
                " branch={} fp1={} fp2={} f1={} f2={}",
                branch.as_str(),
                b(*fp1),
                b(*fp2),
                b(*f1),
                b(*f2)
            )
        }
        Event::Exit { pkt, port, field_f } => write!(out, "pkt={} port={} field_f={field_f}", pkt.0, port.0),
        Event::Drop { pkt, reason } => write!(out, "pkt={} reason={}", pkt.0, reason.as_str()),
        Event::CommitApply { v }
        | Event::TimerFire { v }
        | Event::ExpireApply { v }
        | Event::NaiveApply { v } => write!(out, "v={}", v.0),
        Event::SetT { v, t_eff } => write!(out, "v={} t_eff={t_eff}", v.0),
        Event::TimerArm { v, expiry } => write!(out, "v={} expiry={expiry}", v.0),
        Event::CommitFail { v, rule } => write!(out, "v={} rule={rule}", v.0),
        Event::Ignored { v, kind, reason } => write!(out, "v={} msg={kind} reason={reason}", v.0),
    }
}

struct Fields<'a> {
    map: HashMap<&'a str, &'a str>,
    topo: &'a Topology,
}

impl<'a> Fields<'a> {
    fn new(payload: &'a str, topo: &'a Topology) -> Result<Fields<'a>, String> {
        let mut map = HashMap::new();
        for kv in payload.split(' ').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| format!("`{kv}` is not key=value"))?;
            map.insert(k, v);
        }
        Ok(Fields { map, topo })
    }

    fn raw(&self, k: &str) -> Result<&'a str, String> {
        self.map.get(k).copied().ok_or_else(|| format!("missing `{k}`"))
    }

    fn num<T: std::str::FromStr>(&self, k: &str) -> Result<T, String> {
        let s = self.raw(k)?;
        s.parse().map_err(|_| format!("bad `{k}` value `{s}`"))
    }

    fn time(&self, k: &str) -> Result<Time, String> {
        self.raw(k)?.parse().map_err(|e: crate::time::ParseTimeError| e.to_string())
    }

    fn bit(&self, k: &str) -> Result<bool, String> {
        match self.raw(k)? {
            "0" => Ok(false),
            "1" => Ok(true),
            s => Err(format!("bad `{k}` bit `{s}`")),
        }
    }

    fn v(&self) -> Result<UpdateId, String> {
        self.num("v").map(UpdateId)
    }

    fn pkt(&self) -> Result<PacketId, String> {
        self.num("pkt").map(PacketId)
    }

    fn rule(&self) -> Result<RuleId, String> {
        let s = self.raw("rule")?;
        s.strip_prefix('r').and_then(|n| n.parse().ok()).map(RuleId).ok_or_else(|| format!("bad rule `{s}`"))
    }

    fn entity(&self, k: &str) -> Result<Entity, String> {
        parse_entity(self.raw(k)?, self.topo)
    }

    fn msg_kind(&self) -> Result<MsgKind, String> {
        let s = self.raw("msg")?;
        MsgKind::parse(s).ok_or_else(|| format!("unknown message `{s}`"))
    }

    fn msg(&self) -> Result<MsgSummary, String> {
        let t = if self.map.contains_key("t") { Some(self.time("t")?) } else { None };
        Ok(MsgSummary { kind: self.msg_kind()?, v: self.v()?, t })
    }
}

fn parse_entity(s: &str, topo: &Topology) -> Result<Entity, String> {
    if s == "controller" {
        return Ok(Entity::Controller);
    }
    topo.id(s).map(Entity::Switch).ok_or_else(|| format!("unknown entity `{s}`"))
}

fn parse_record(line: &str, topo: &Topology) -> Result<Record, String> {
    let mut cols = line.splitn(5, '\t');
    let mut col = |name: &str| cols.next().ok_or_else(|| format!("missing {name} column"));
    let global: Time = col("global")?.parse().map_err(|e: crate::time::ParseTimeError| e.to_string())?;
    let local: Time = col("local")?.parse().map_err(|e: crate::time::ParseTimeError| e.to_string())?;
    let entity = parse_entity(col("entity")?, topo)?;
    let kind = col("kind")?;
    let f = Fields::new(col("payload")?, topo)?;
    let event = match kind {
        "update-submit" => Event::UpdateSubmit { idx: f.num("idx")? },
        "update-admit" => Event::UpdateAdmit { idx: f.num("idx")?, v: f.v()? },
        "update-reject" => {
            let with = UpdateId(f.num("with")?);
            let reason = match f.raw("reason")? {
                "conflict" => RejectReason::Conflict { with },
                "quiescence" => RejectReason::Quiescence { blocking: with, earliest: f.time("earliest")? },
                s => return Err(format!("unknown rejection `{s}`")),
            };
            Event::UpdateReject { idx: f.num("idx")?, reason }
        }
        "update-complete" => Event::UpdateComplete { v: f.v()? },
        "update-retire" => Event::UpdateRetire { v: f.v()? },
        "send" => Event::Send { peer: f.entity("peer")?, msg: f.msg()? },
        "recv" => Event::Recv { peer: f.entity("peer")?, msg: f.msg()? },
        "lost" => Event::Lost { peer: f.entity("peer")?, msg: f.msg()? },
        "inject" => Event::Inject {
            pkt: f.pkt()?,
            flow: f.num("flow")?,
            header: f.raw("header")?.parse().map_err(|e: crate::match_engine::MatchError| e.to_string())?,
        },
        "arrive" => Event::Arrive {
            pkt: f.pkt()?,
            hop: f.num("hop")?,
            ts: f.time("ts")?,
            fp1: f.bit("fp1")?,
            fp2: f.bit("fp2")?,
        },
        "match" => {
            let v = match f.raw("v")? {
                "-" => None,
                _ => Some(f.v()?),
            };
            let flag = f.raw("flag")?;
            let branch = f.raw("branch")?;
            Event::Match {
                pkt: f.pkt()?,
                rule: f.rule()?,
                flag: RuleFlag::parse(flag).ok_or_else(|| format!("bad flag `{flag}`"))?,
                v,
                branch: Branch::parse(branch).ok_or_else(|| format!("bad branch `{branch}`"))?,
                fp1: f.bit("fp1")?,
                fp2: f.bit("fp2")?,
                f1: f.bit("f1")?,
                f2: f.bit("f2")?,
            }
        }
        "exit" => Event::Exit { pkt: f.pkt()?, port: Port(f.num("port")?), field_f: f.num("field_f")? },
        "drop" => {
            let r = f.raw("reason")?;
            Event::Drop { pkt: f.pkt()?, reason: DropReason::parse(r).ok_or_else(|| format!("bad drop reason `{r}`"))? }
        }
        "commit-apply" => Event::CommitApply { v: f.v()? },
        "set-t" => Event::SetT { v: f.v()?, t_eff: f.time("t_eff")? },
        "timer-arm" => Event::TimerArm { v: f.v()?, expiry: f.time("expiry")? },
        "timer-fire" => Event::TimerFire { v: f.v()? },
        "expire-apply" => Event::ExpireApply { v: f.v()? },
        "naive-apply" => Event::NaiveApply { v: f.v()? },
        "commit-fail" => Event::CommitFail { v: f.v()?, rule: f.rule()? },
        "ignored" => Event::Ignored { v: f.v()?, kind: f.msg_kind()?, reason: f.raw("reason")?.to_string() },
        other => return Err(format!("unknown record kind `{other}`")),
    };
    Ok(Record { global, local, entity, event })
}
