// SPDX-License-Identifier: Apache-2.0

//! Per-packet consistent rule updates for software defined networks.
//!
//! The crate contains four layers that are meant to be used together:
//!
//! - the protocol itself: [`match_engine`] (ternary rules and rule-set
//!   algebra), [`packet`], [`dataplane`] (per-switch rule actions with
//!   resubmission), [`switch_agent`] and [`controller`];
//! - a deterministic, seeded discrete-event [`sim`]ulator that drives the
//!   protocol over a topology with drifting switch clocks and jittered
//!   control channels, emitting a [`sim::Trace`];
//! - the [`checker`], which replays every packet against frozen old/new
//!   configurations, checks drop and loop freedom and the protocol's
//!   correctness properties, and can exhaustively explore message
//!   interleavings of small scenarios;
//! - [`metrics`] measured from traces plus the analytic cost table used to
//!   compare against two other consistent-update schemes.
//!
//! Scenarios are JSON documents, see [`scenario`]. A handful of them ship
//! with the crate in [`scenario::bundled`].

pub mod campaign;
pub mod checker;
pub mod controller;
pub mod dataplane;
mod id;
pub mod match_engine;
pub mod mechanisms;
pub mod metrics;
pub mod packet;
pub mod scenario;
pub mod sim;
pub mod switch_agent;
pub mod time;

pub use id::{PacketId, Port, RuleId, SwitchId, UpdateId};
pub use mechanisms::{Ablation, Mechanisms};
pub use time::Time;
