// SPDX-License-Identifier: Apache-2.0

//! The on-disk scenario document. Everything here is unvalidated; see
//! [`super::Scenario::from_file`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::match_engine::{ActionSpec, Header, MatchPattern};
use crate::Time;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub header_width: u8,
    pub topology: TopologyFile,
    #[serde(default)]
    pub initial_rules: BTreeMap<String, Vec<RuleFile>>,
    #[serde(default)]
    pub updates: Vec<UpdateFile>,
    #[serde(default)]
    pub workload: Vec<FlowFile>,
    #[serde(default)]
    pub timing: TimingFile,
    #[serde(default)]
    pub faults: FaultsFile,
    #[serde(default)]
    pub ablations: AblationsFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_hops: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub switches: Vec<SwitchFile>,
    #[serde(default)]
    pub links: Vec<LinkFile>,
    #[serde(default)]
    pub hosts: Vec<HostFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchFile {
    pub name: String,
    #[serde(default)]
    pub ingress: bool,
    #[serde(default)]
    pub egress: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFile {
    pub from: String,
    pub port: u16,
    pub to: String,
    #[serde(default)]
    pub delay_ms: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostFile {
    pub name: String,
    pub switch: String,
    pub port: u16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleFile {
    pub id: u32,
    pub priority: i32,
    #[serde(rename = "match")]
    pub pattern: MatchPattern,
    pub action: ActionSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateFile {
    pub at_ms: Time,
    /// Retry a rejected submission this often. Quiescence rejections retry
    /// at the earliest admissible time instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_every_ms: Option<Time>,
    pub switches: BTreeMap<String, SwitchUpdateFile>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchUpdateFile {
    #[serde(default)]
    pub delete: Vec<u32>,
    #[serde(default)]
    pub insert: Vec<RuleFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFile {
    pub ingress: String,
    pub header: Header,
    #[serde(default)]
    pub start_ms: Time,
    pub interval_ms: Time,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingFile {
    pub delta_ms: Time,
    pub delta_overrides: BTreeMap<String, Time>,
    pub gamma_ms: Time,
    pub max_lifetime_ms: Time,
    pub t_i_ms: Time,
    pub t_m_ms: Time,
    pub t_d_ms: Time,
    pub t_v_ms: Time,
    pub processing_ms: Time,
    pub ts_granularity_ms: Time,
    pub offsets_ms: BTreeMap<String, Time>,
    pub profile: ProfileFile,
    pub jitter: f64,
    pub horizon_ms: Time,
}

impl Default for TimingFile {
    fn default() -> TimingFile {
        TimingFile {
            delta_ms: Time::from_ms(1),
            delta_overrides: BTreeMap::new(),
            gamma_ms: Time::ZERO,
            max_lifetime_ms: Time::from_ms(10),
            t_i_ms: Time::ZERO,
            t_m_ms: Time::ZERO,
            t_d_ms: Time::ZERO,
            t_v_ms: Time::ZERO,
            processing_ms: Time::from_us(1),
            ts_granularity_ms: Time::from_ms(1),
            offsets_ms: BTreeMap::new(),
            profile: ProfileFile::Fuzz,
            jitter: 0.5,
            horizon_ms: Time::from_ms(10_000),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileFile {
    #[default]
    Fuzz,
    Analytic,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultsFile {
    #[serde(default)]
    pub drop_messages: Vec<MessageFaultFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageFaultFile {
    /// `Commit`, `ReadyToCommit`, `CommitOK`, `AckCommitOK`, `DiscardOld`
    /// or `DiscardOldAck`.
    pub kind: String,
    pub switch: String,
    /// Update identifier, counted from 1 in admission order.
    #[serde(default = "one")]
    pub update: u32,
    /// Which matching message to drop, counted from 1.
    #[serde(default = "one")]
    pub occurrence: u32,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationsFile {
    #[serde(default)]
    pub naive: bool,
    /// Defaults to on whenever the drift bound is positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<bool>,
    #[serde(default)]
    pub ablate: Vec<String>,
    /// Order of switch updates in naive mode. Random per seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_order: Option<Vec<String>>,
}
