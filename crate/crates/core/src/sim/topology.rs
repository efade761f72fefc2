// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::{Port, SwitchId, Time};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwitchInfo {
    pub name: String,
    /// Packets may enter the network here.
    pub ingress: bool,
    /// Hosts may be attached here.
    pub egress: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PortTarget {
    Switch { to: SwitchId, delay: Time },
    Host { host: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Host {
    pub name: String,
    pub switch: SwitchId,
    pub port: Port,
}

/// Switches, directed links and host attachment points. Switch ids are
/// indices into [`Topology::switches`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    switches: Vec<SwitchInfo>,
    ports: BTreeMap<(SwitchId, Port), PortTarget>,
    hosts: Vec<Host>,
}

impl Topology {
    pub fn new() -> Topology {
        Topology::default()
    }

    pub fn add_switch(&mut self, name: &str, ingress: bool, egress: bool) -> Result<SwitchId, String> {
        if name == "controller" || name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("`{name}` is not a valid switch name"));
        }
        if self.id(name).is_some() {
            return Err(format!("duplicate switch `{name}`"));
        }
        let id = u16::try_from(self.switches.len()).map_err(|_| "too many switches".to_string())?;
        self.switches.push(SwitchInfo { name: name.to_string(), ingress, egress });
        Ok(SwitchId(id))
    }

    fn claim(&mut self, sw: SwitchId, port: Port, target: PortTarget) -> Result<(), String> {
        if self.ports.insert((sw, port), target).is_some() {
            return Err(format!("port {} of `{}` is used twice", port.0, self.name(sw)));
        }
        Ok(())
    }

    pub fn add_link(&mut self, from: SwitchId, port: Port, to: SwitchId, delay: Time) -> Result<(), String> {
        if delay < Time::ZERO {
            return Err("link delay must be nonnegative".into());
        }
        self.claim(from, port, PortTarget::Switch { to, delay })
    }

    pub fn add_host(&mut self, name: &str, switch: SwitchId, port: Port) -> Result<usize, String> {
        if !self.switches[switch.0 as usize].egress {
            return Err(format!("host `{name}` is attached to `{}`, which is not an egress switch", self.name(switch)));
        }
        let idx = self.hosts.len();
        self.claim(switch, port, PortTarget::Host { host: idx })?;
        self.hosts.push(Host { name: name.to_string(), switch, port });
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.switches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.switches.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = SwitchId> {
        (0..self.switches.len() as u16).map(SwitchId)
    }

    pub fn switch(&self, id: SwitchId) -> &SwitchInfo {
        &self.switches[id.0 as usize]
    }

    pub fn name(&self, id: SwitchId) -> &str {
        &self.switches[id.0 as usize].name
    }

    pub fn id(&self, name: &str) -> Option<SwitchId> {
        self.switches.iter().position(|s| s.name == name).map(|i| SwitchId(i as u16))
    }

    pub fn port(&self, sw: SwitchId, port: Port) -> Option<PortTarget> {
        self.ports.get(&(sw, port)).copied()
    }

    pub fn hosts(&self) -> &[Host] {
        &self.hosts
    }
}
