// SPDX-License-Identifier: Apache-2.0

//! Scenario documents: topology, initial rules, updates, workload, timing,
//! faults and protocol switches, as JSON.
//!
//! ```json
//! {
//!   "name": "tiny",
//!   "header_width": 4,
//!   "topology": {
//!     "switches": [{"name": "a", "ingress": true}, {"name": "b", "egress": true}],
//!     "links": [{"from": "a", "port": 1, "to": "b", "delay_ms": 0.1}],
//!     "hosts": [{"name": "h", "switch": "b", "port": 9}]
//!   },
//!   "initial_rules": {
//!     "a": [{"id": 1, "priority": 5, "match": "00**", "action": {"forward": 1}}],
//!     "b": [{"id": 2, "priority": 5, "match": "00**", "action": {"forward": 9}}]
//!   },
//!   "updates": [{"at_ms": 1, "switches": {
//!     "b": {"delete": [2], "insert": [
//!       {"id": 3, "priority": 6, "match": "00**", "action": {"forward": 9, "increment_f": 1}}]}}}],
//!   "workload": [{"ingress": "a", "header": "0010", "interval_ms": 0.2, "count": 50}],
//!   "timing": {"delta_ms": 1, "max_lifetime_ms": 10}
//! }
//! ```
//!
//! Loading validates every cross reference and rejects configurations the
//! protocol cannot handle: static loops, NEW rules not above the OLD rules
//! they overlap, and paths longer than the packet lifetime allows.

pub mod bundled;
pub mod format;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::checker::{snapshot_path, ConfigSnapshot};
use crate::match_engine::{Header, Output, Rule, RuleSet, SwitchUpdate, UpdateRequest};
use crate::sim::{Profile, TimingModel, Topology};
use crate::switch_agent::{Latencies, MsgKind};
use crate::{Ablation, Mechanisms, Port, RuleId, SwitchId, Time, UpdateId};

pub use format::ScenarioFile;

pub const DEFAULT_MAX_HOPS: u32 = 32;

/// Packets with one header entering at one ingress at a fixed interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flow {
    pub ingress: SwitchId,
    pub header: Header,
    pub start: Time,
    pub interval: Time,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateSpec {
    /// Submission time at the controller.
    pub at: Time,
    pub retry_every: Option<Time>,
    pub request: UpdateRequest,
}

/// Drop the `occurrence`-th message of `kind` between the controller and
/// `switch` for update `update`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MessageFault {
    pub kind: MsgKind,
    pub switch: SwitchId,
    pub update: UpdateId,
    pub occurrence: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub width: u8,
    pub topology: Topology,
    pub initial: ConfigSnapshot,
    pub updates: Vec<UpdateSpec>,
    pub workload: Vec<Flow>,
    pub timing: TimingModel,
    pub faults: Vec<MessageFault>,
    pub mechanisms: Mechanisms,
    pub naive_order: Option<Vec<SwitchId>>,
    pub max_hops: u32,
    /// Longest static path delay over every flow and configuration.
    pub longest_path: Time,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Scenario::from_file(file)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Scenario::parse(&text)
    }

    pub fn from_file(f: ScenarioFile) -> Result<Scenario, ScenarioError> {
        Builder::new(&f)?.build(f)
    }

    pub fn switch_id(&self, name: &str) -> Option<SwitchId> {
        self.topology.id(name)
    }

    /// Overrides the clamp setting from the file.
    pub fn set_clamp(&mut self, on: bool) {
        self.mechanisms.clamp = on;
    }

    pub fn set_naive(&mut self, on: bool) {
        self.mechanisms.naive = on;
    }

    pub fn ablate(&mut self, a: Ablation) {
        self.mechanisms.ablate(a);
    }

    /// Total number of packets the workload injects.
    pub fn packet_count(&self) -> u64 {
        self.workload.iter().map(|f| f.count as u64).sum()
    }

    /// Configurations `C_0 .. C_k` obtained by applying updates in the given
    /// order of scenario indices.
    pub fn snapshots(&self, order: &[usize]) -> Result<Vec<ConfigSnapshot>, String> {
        let mut out = vec![self.initial.clone()];
        for &i in order {
            let next = out.last().expect("nonempty").apply(&self.updates[i].request)?;
            out.push(next);
        }
        Ok(out)
    }
}

struct Builder {
    width: u8,
    topo: Topology,
}

impl Builder {
    fn new(f: &ScenarioFile) -> Result<Builder, ScenarioError> {
        if f.header_width == 0 || f.header_width > crate::match_engine::MAX_WIDTH {
            return invalid(format!("header_width {} is outside 1..=32", f.header_width));
        }
        let mut topo = Topology::new();
        if f.topology.switches.is_empty() {
            return invalid("topology has no switches");
        }
        for s in &f.topology.switches {
            topo.add_switch(&s.name, s.ingress, s.egress).map_err(ScenarioError::Invalid)?;
        }
        let b = Builder { width: f.header_width, topo };
        let mut topo = b.topo.clone();
        for (i, l) in f.topology.links.iter().enumerate() {
            let from = b.switch(&l.from, &format!("topology.links[{i}].from"))?;
            let to = b.switch(&l.to, &format!("topology.links[{i}].to"))?;
            topo.add_link(from, Port(l.port), to, l.delay_ms)
                .map_err(|e| ScenarioError::Invalid(format!("topology.links[{i}]: {e}")))?;
        }
        for (i, h) in f.topology.hosts.iter().enumerate() {
            let sw = b.switch(&h.switch, &format!("topology.hosts[{i}].switch"))?;
            topo.add_host(&h.name, sw, Port(h.port))
                .map_err(|e| ScenarioError::Invalid(format!("topology.hosts[{i}]: {e}")))?;
        }
        Ok(Builder { width: b.width, topo })
    }

    fn switch(&self, name: &str, at: &str) -> Result<SwitchId, ScenarioError> {
        match self.topo.id(name) {
            Some(id) => Ok(id),
            None => invalid(format!("{at}: unknown switch `{name}`")),
        }
    }

    fn rule(&self, sw: SwitchId, r: &format::RuleFile, at: &str) -> Result<Rule, ScenarioError> {
        if r.pattern.width() != self.width {
            return invalid(format!(
                "{at}: rule {} has a {}-bit match, expected {}",
                r.id,
                r.pattern.width(),
                self.width
            ));
        }
        if let Output::Forward(p) = r.action.output {
            if self.topo.port(sw, p).is_none() {
                return invalid(format!("{at}: rule {} forwards to port {} of `{}`, which is not connected", r.id, p.0, self.topo.name(sw)));
            }
        }
        Ok(Rule::new(RuleId(r.id), r.priority, r.pattern, r.action))
    }

    fn build(self, f: ScenarioFile) -> Result<Scenario, ScenarioError> {
        let n = self.topo.len();
        let mut used: Vec<BTreeSet<RuleId>> = vec![BTreeSet::new(); n];
        let mut initial = ConfigSnapshot { tables: vec![RuleSet::new(); n] };
        for (name, rules) in &f.initial_rules {
            let sw = self.switch(name, "initial_rules")?;
            for r in rules {
                let at = format!("initial_rules.{name}");
                let rule = self.rule(sw, r, &at)?;
                if !used[sw.0 as usize].insert(rule.id) {
                    return invalid(format!("{at}: duplicate rule id {}", r.id));
                }
                initial.tables[sw.0 as usize].insert(rule).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            }
        }

        let mut updates = Vec::new();
        let mut evolving = initial.clone();
        for (i, u) in f.updates.iter().enumerate() {
            let mut per_switch = BTreeMap::new();
            for (name, su) in &u.switches {
                let at = format!("updates[{i}].switches.{name}");
                let sw = self.switch(name, &at)?;
                let table = evolving.table(sw);
                let mut r0 = RuleSet::new();
                for id in &su.delete {
                    let Some(r) = table.get(RuleId(*id)) else {
                        return invalid(format!("{at}.delete: rule {id} is not installed at `{name}` when this update runs"));
                    };
                    r0.insert(r.clone()).map_err(|e| ScenarioError::Invalid(format!("{at}.delete: {e}")))?;
                }
                let mut r1 = RuleSet::new();
                for r in &su.insert {
                    let rule = self.rule(sw, r, &format!("{at}.insert"))?;
                    if !used[sw.0 as usize].insert(rule.id) {
                        return invalid(format!("{at}.insert: rule id {} is already used at `{name}`", r.id));
                    }
                    for old in &r0 {
                        if old.pattern.intersects(rule.pattern) && rule.priority <= old.priority {
                            return invalid(format!(
                                "{at}: inserted rule {} overlaps deleted rule {} but does not have a higher priority",
                                rule.id, old.id
                            ));
                        }
                    }
                    r1.insert(rule).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                }
                per_switch.insert(sw, SwitchUpdate { r0, r1 });
            }
            let request = UpdateRequest { per_switch };
            request.well_formed().map_err(|e| ScenarioError::Invalid(format!("updates[{i}]: {e}")))?;
            evolving = evolving.apply(&request).map_err(|e| ScenarioError::Invalid(format!("updates[{i}]: {e}")))?;
            if u.at_ms < Time::ZERO || u.retry_every_ms.is_some_and(|r| r <= Time::ZERO) {
                return invalid(format!("updates[{i}]: times must be positive"));
            }
            updates.push(UpdateSpec { at: u.at_ms, retry_every: u.retry_every_ms, request });
        }

        let mut workload = Vec::new();
        for (i, w) in f.workload.iter().enumerate() {
            let at = format!("workload[{i}]");
            let ingress = self.switch(&w.ingress, &format!("{at}.ingress"))?;
            if !self.topo.switch(ingress).ingress {
                return invalid(format!("{at}: `{}` is not an ingress switch", w.ingress));
            }
            if w.header.width() != self.width {
                return invalid(format!("{at}: header has {} bits, expected {}", w.header.width(), self.width));
            }
            if w.start_ms < Time::ZERO || (w.count > 1 && w.interval_ms <= Time::ZERO) {
                return invalid(format!("{at}: start must be nonnegative and interval positive"));
            }
            workload.push(Flow { ingress, header: w.header, start: w.start_ms, interval: w.interval_ms, count: w.count });
        }

        let t = &f.timing;
        let nonneg = [
            ("delta_ms", t.delta_ms),
            ("gamma_ms", t.gamma_ms),
            ("max_lifetime_ms", t.max_lifetime_ms),
            ("t_i_ms", t.t_i_ms),
            ("t_m_ms", t.t_m_ms),
            ("t_d_ms", t.t_d_ms),
            ("t_v_ms", t.t_v_ms),
            ("processing_ms", t.processing_ms),
        ];
        for (name, v) in nonneg {
            if v < Time::ZERO {
                return invalid(format!("timing.{name} must be nonnegative"));
            }
        }
        if t.ts_granularity_ms <= Time::ZERO || t.horizon_ms <= Time::ZERO {
            return invalid("timing.ts_granularity_ms and timing.horizon_ms must be positive");
        }
        if !(t.jitter >= 0.0 && t.jitter.is_finite()) {
            return invalid("timing.jitter must be a nonnegative number");
        }
        let mut delta_overrides = BTreeMap::new();
        for (name, d) in &t.delta_overrides {
            if *d < Time::ZERO {
                return invalid("timing.delta_overrides must be nonnegative");
            }
            delta_overrides.insert(self.switch(name, "timing.delta_overrides")?, *d);
        }
        let mut offsets = BTreeMap::new();
        for (name, o) in &t.offsets_ms {
            offsets.insert(self.switch(name, "timing.offsets_ms")?, *o);
        }
        if !offsets.is_empty() {
            let all: Vec<Time> = self.topo.ids().map(|s| offsets.get(&s).copied().unwrap_or(Time::ZERO)).collect();
            let spread = *all.iter().max().unwrap() - *all.iter().min().unwrap();
            if spread > t.gamma_ms {
                return invalid(format!("timing.offsets_ms spread {spread} ms exceeds gamma {} ms", t.gamma_ms));
            }
        }
        let timing = TimingModel {
            delta: t.delta_ms,
            delta_overrides,
            gamma: t.gamma_ms,
            max_lifetime: t.max_lifetime_ms,
            latencies: Latencies { t_i: t.t_i_ms, t_m: t.t_m_ms, t_d: t.t_d_ms, t_v: t.t_v_ms },
            processing: t.processing_ms,
            ts_granularity: t.ts_granularity_ms,
            offsets,
            profile: match t.profile {
                format::ProfileFile::Fuzz => Profile::Fuzz,
                format::ProfileFile::Analytic => Profile::Analytic,
            },
            jitter: t.jitter,
            horizon: t.horizon_ms,
        };

        let mut faults = Vec::new();
        for (i, d) in f.faults.drop_messages.iter().enumerate() {
            let at = format!("faults.drop_messages[{i}]");
            let Some(kind) = MsgKind::parse(&d.kind) else {
                return invalid(format!("{at}: unknown message kind `{}`", d.kind));
            };
            if d.update == 0 || d.occurrence == 0 {
                return invalid(format!("{at}: update and occurrence count from 1"));
            }
            let switch = self.switch(&d.switch, &at)?;
            faults.push(MessageFault { kind, switch, update: UpdateId(d.update), occurrence: d.occurrence });
        }

        let mut mechanisms = Mechanisms::default();
        mechanisms.naive = f.ablations.naive;
        mechanisms.clamp = f.ablations.clamp.unwrap_or(timing.gamma > Time::ZERO);
        mechanisms.gamma = timing.gamma;
        mechanisms.ts_granularity = timing.ts_granularity;
        for a in &f.ablations.ablate {
            let a: Ablation = a.parse().map_err(|e: crate::mechanisms::UnknownAblation| ScenarioError::Invalid(format!("ablations.ablate: {e}")))?;
            mechanisms.ablate(a);
        }
        let naive_order = match &f.ablations.naive_order {
            None => None,
            Some(names) => Some(
                names.iter().map(|n| self.switch(n, "ablations.naive_order")).collect::<Result<Vec<_>, _>>()?,
            ),
        };

        let max_hops = f.max_hops.unwrap_or(DEFAULT_MAX_HOPS);
        if max_hops == 0 {
            return invalid("max_hops must be positive");
        }

        let mut scenario = Scenario {
            name: f.name,
            description: f.description,
            width: self.width,
            topology: self.topo,
            initial,
            updates,
            workload,
            timing,
            faults,
            mechanisms,
            naive_order,
            max_hops,
            longest_path: Time::ZERO,
        };
        scenario.longest_path = check_static_paths(&scenario)?;
        if scenario.longest_path + scenario.timing.gamma > scenario.timing.max_lifetime {
            return invalid(format!(
                "longest path takes {} ms; with drift {} ms it exceeds the packet lifetime {} ms",
                scenario.longest_path, scenario.timing.gamma, scenario.timing.max_lifetime
            ));
        }
        Ok(scenario)
    }
}

/// Every flow must terminate in the initial configuration and after each
/// update, applied in file order.
fn check_static_paths(s: &Scenario) -> Result<Time, ScenarioError> {
    let order: Vec<usize> = (0..s.updates.len()).collect();
    let configs = s.snapshots(&order).map_err(ScenarioError::Invalid)?;
    let mut longest = Time::ZERO;
    for c in &configs {
        for flow in &s.workload {
            let p = snapshot_path(c, &s.topology, flow.header, flow.ingress, s.max_hops, s.timing.processing)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            longest = longest.max(p.delay);
        }
    }
    Ok(longest)
}
