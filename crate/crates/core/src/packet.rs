// SPDX-License-Identifier: Apache-2.0

//! Packets, the consistency header added at network ingress, and per-switch
//! pipeline metadata.

use crate::match_engine::Header;
use crate::{PacketId, SwitchId, Time};

/// Fields carried by every packet while it is inside the network.
///
/// `fp1` forces old-only matching downstream, `fp2` forces new-only
/// matching. The two bits are never both set by the protocol; the checker
/// reports any trace where they are.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PpcuHeader {
    /// Ingress timestamp, quantized to the stamping granularity. Never
    /// modified after stamping.
    pub ts: Time,
    pub fp1: bool,
    pub fp2: bool,
}

/// Pipeline metadata. Zeroed whenever the packet enters a switch, kept
/// across resubmission within that switch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PacketMeta {
    /// Set before resubmission: the packet must not match a NEW rule.
    pub f1: bool,
    /// Set before resubmission: the packet must not match an OLD rule.
    pub f2: bool,
    pub resubmit_count: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Packet {
    pub id: PacketId,
    pub header: Header,
    pub ppcu: Option<PpcuHeader>,
    pub hop_count: u32,
    pub birth: Time,
    pub ingress: SwitchId,
    /// Scratch field rewritten by rule actions. Not part of the match key.
    pub field_f: i64,
}

impl Packet {
    pub fn new(id: PacketId, header: Header, ingress: SwitchId, birth: Time) -> Packet {
        Packet { id, header, ppcu: None, hop_count: 0, birth, ingress, field_f: 0 }
    }

    /// `(fp1, fp2)`, both false outside the network.
    pub fn flags(&self) -> (bool, bool) {
        self.ppcu.map_or((false, false), |h| (h.fp1, h.fp2))
    }
}
