// SPDX-License-Identifier: Apache-2.0

//! Seeded discrete-event simulation of the controller, switches and data
//! plane.
//!
//! A run is fully determined by the scenario and the seed. Control messages
//! on each controller/switch channel are delivered in FIFO order; switch
//! clocks are offset from global time by at most `gamma`.

mod engine;
mod timing;
mod topology;
pub mod trace;

pub use engine::{run, RunOutcome};
pub use timing::{Profile, TimingModel};
pub use topology::{Host, PortTarget, SwitchInfo, Topology};
pub use trace::{Entity, Event, MsgSummary, Record, RejectReason, Trace, TraceParseError};
