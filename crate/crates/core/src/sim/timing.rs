// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::Rng;

use crate::switch_agent::Latencies;
use crate::{SwitchId, Time};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Profile {
    /// Control delays drawn from `[delta, delta * (1 + jitter)]`, random
    /// clock offsets within the drift bound, random flow phases.
    #[default]
    Fuzz,
    /// Fixed delays and offsets, so measured rounds follow the formulas.
    Analytic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingModel {
    /// Controller to switch propagation delay.
    pub delta: Time,
    pub delta_overrides: BTreeMap<SwitchId, Time>,
    /// Maximum pairwise clock drift.
    pub gamma: Time,
    /// Maximum packet lifetime.
    pub max_lifetime: Time,
    pub latencies: Latencies,
    /// Per-hop packet processing time.
    pub processing: Time,
    pub ts_granularity: Time,
    /// Fixed clock offsets. When empty the profile decides.
    pub offsets: BTreeMap<SwitchId, Time>,
    pub profile: Profile,
    pub jitter: f64,
    pub horizon: Time,
}

impl Default for TimingModel {
    fn default() -> TimingModel {
        TimingModel {
            delta: Time::from_ms(1),
            delta_overrides: BTreeMap::new(),
            gamma: Time::ZERO,
            max_lifetime: Time::from_ms(10),
            latencies: Latencies::default(),
            processing: Time::from_us(1),
            ts_granularity: Time::from_ms(1),
            offsets: BTreeMap::new(),
            profile: Profile::Fuzz,
            jitter: 0.5,
            horizon: Time::from_ms(10_000),
        }
    }
}

fn uniform_ns<R: Rng>(rng: &mut R, lo: i64, hi: i64) -> i64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

impl TimingModel {
    pub fn delta_for(&self, sw: SwitchId) -> Time {
        self.delta_overrides.get(&sw).copied().unwrap_or(self.delta)
    }

    /// One-way controller/switch delay for a single message.
    pub fn sample_delay<R: Rng>(&self, sw: SwitchId, rng: &mut R) -> Time {
        let d = self.delta_for(sw);
        match self.profile {
            Profile::Analytic => d,
            Profile::Fuzz => {
                let extra = (d.as_ns() as f64 * self.jitter) as i64;
                Time::from_ns(d.as_ns() + uniform_ns(rng, 0, extra))
            }
        }
    }

    /// Clock offset of every switch, indexed by id.
    pub fn resolve_offsets<R: Rng>(&self, switches: usize, rng: &mut R) -> Vec<Time> {
        if !self.offsets.is_empty() || self.profile == Profile::Analytic {
            return (0..switches).map(|i| self.offsets.get(&SwitchId(i as u16)).copied().unwrap_or(Time::ZERO)).collect();
        }
        let half = self.gamma.as_ns() / 2;
        (0..switches).map(|_| Time::from_ns(uniform_ns(rng, -half, half))).collect()
    }

    /// Random phase added to a flow's start time.
    pub fn flow_phase<R: Rng>(&self, interval: Time, rng: &mut R) -> Time {
        match self.profile {
            Profile::Analytic => Time::ZERO,
            Profile::Fuzz => Time::from_ns(uniform_ns(rng, 0, interval.as_ns() - 1)),
        }
    }
}
