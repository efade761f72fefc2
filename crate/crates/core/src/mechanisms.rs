// SPDX-License-Identifier: Apache-2.0

//! Protocol configuration shared by switches, the controller and the data
//! plane: the timestamp clamp, the naive baseline and the ablation switches
//! that each disable one mechanism of the rule actions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Time;

/// One disabled mechanism. Each is paired with the race scenario that it is
/// needed for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// NEW rules are active as soon as they are installed (`T = 0`).
    NewImmediate,
    /// Each switch activates the update's rules at its own ReadyToCommit
    /// time, without waiting for the other switches to install theirs.
    OwnTime,
    /// NEW rules do not mark executed packets with `fp2`.
    NoFp2Mark,
    /// OLD rules do not mark executed packets with `fp1`.
    NoFp1Mark,
    /// A NEW rule whose condition fails falls through to the next rule
    /// without setting `f1` and resubmitting.
    NoF1Resubmit,
    /// OLD rules do not require `fp2 = 0` in their match.
    NoOldFp2Guard,
    /// An OLD rule whose condition fails falls through without setting `f2`
    /// and resubmitting.
    NoF2Resubmit,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::NewImmediate,
        Ablation::OwnTime,
        Ablation::NoFp2Mark,
        Ablation::NoFp1Mark,
        Ablation::NoF1Resubmit,
        Ablation::NoOldFp2Guard,
        Ablation::NoF2Resubmit,
    ];

    /// Race case (1..=7) this mechanism protects against.
    pub fn case(self) -> u8 {
        match self {
            Ablation::NewImmediate => 1,
            Ablation::OwnTime => 2,
            Ablation::NoFp2Mark => 3,
            Ablation::NoFp1Mark => 4,
            Ablation::NoF1Resubmit => 5,
            Ablation::NoOldFp2Guard => 6,
            Ablation::NoF2Resubmit => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NewImmediate => "new-immediate",
            Ablation::OwnTime => "own-time",
            Ablation::NoFp2Mark => "no-fp2-mark",
            Ablation::NoFp1Mark => "no-fp1-mark",
            Ablation::NoF1Resubmit => "no-f1-resubmit",
            Ablation::NoOldFp2Guard => "no-old-fp2-guard",
            Ablation::NoF2Resubmit => "no-f2-resubmit",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown ablation `{0}` (expected case1..case7, fp1, fp2, f1-resubmit, f2-resubmit, old-fp2 or a full name)")]
pub struct UnknownAblation(String);

impl FromStr for Ablation {
    type Err = UnknownAblation;

    fn from_str(s: &str) -> Result<Ablation, UnknownAblation> {
        let a = match s {
            "case1" | "new-immediate" => Ablation::NewImmediate,
            "case2" | "own-time" => Ablation::OwnTime,
            "case3" | "fp2" | "no-fp2-mark" => Ablation::NoFp2Mark,
            "case4" | "fp1" | "no-fp1-mark" => Ablation::NoFp1Mark,
            "case5" | "f1-resubmit" | "no-f1-resubmit" => Ablation::NoF1Resubmit,
            "case6" | "old-fp2" | "no-old-fp2-guard" => Ablation::NoOldFp2Guard,
            "case7" | "f2-resubmit" | "no-f2-resubmit" => Ablation::NoF2Resubmit,
            _ => return Err(UnknownAblation(s.to_string())),
        };
        Ok(a)
    }
}

/// Knobs that change protocol behaviour. The default is the full protocol
/// with synchronized clocks.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mechanisms {
    /// Baseline: switches replace rules directly on Commit and the
    /// controller updates switches one at a time.
    pub naive: bool,
    /// Activate new rules at `ceil(T_last + gamma + 1 granule)` instead of
    /// `T_last`.
    pub clamp: bool,
    /// Maximum pairwise clock drift.
    pub gamma: Time,
    /// Timestamp granularity for ingress stamping and the clamp.
    pub ts_granularity: Time,
    ablations: u8,
}

impl Default for Mechanisms {
    fn default() -> Mechanisms {
        Mechanisms {
            naive: false,
            clamp: false,
            gamma: Time::ZERO,
            ts_granularity: Time::from_ms(1),
            ablations: 0,
        }
    }
}

impl Mechanisms {
    pub fn ablated(&self, a: Ablation) -> bool {
        self.ablations & (1 << a as u8) != 0
    }

    pub fn ablate(&mut self, a: Ablation) {
        self.ablations |= 1 << a as u8;
    }

    pub fn with_ablation(mut self, a: Ablation) -> Mechanisms {
        self.ablate(a);
        self
    }

    pub fn ablations(&self) -> impl Iterator<Item = Ablation> + '_ {
        Ablation::ALL.into_iter().filter(|a| self.ablated(*a))
    }

    /// Rule activation time derived from the controller's `T_last`.
    pub fn activation_time(&self, t_last: Time) -> Time {
        if self.clamp {
            (t_last + self.gamma + self.ts_granularity).ceil_to(self.ts_granularity)
        } else {
            t_last
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_rounds_up_after_drift_and_one_granule() {
        let mut m = Mechanisms::default();
        assert_eq!(m.activation_time(Time::from_ms(1000)), Time::from_ms(1000));
        m.clamp = true;
        m.gamma = Time::from_us(1);
        assert_eq!(m.activation_time(Time::from_ms(1000)), Time::from_ms(1002));
    }

    #[test]
    fn ablation_aliases() {
        assert_eq!("fp2".parse::<Ablation>().unwrap(), Ablation::NoFp2Mark);
        assert_eq!("case4".parse::<Ablation>().unwrap(), Ablation::NoFp1Mark);
        assert_eq!("f2-resubmit".parse::<Ablation>().unwrap(), Ablation::NoF2Resubmit);
        assert!("case8".parse::<Ablation>().is_err());
        for a in Ablation::ALL {
            assert_eq!(format!("case{}", a.case()).parse::<Ablation>().unwrap(), a);
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
    }

    #[test]
    fn ablation_set() {
        let m = Mechanisms::default().with_ablation(Ablation::NoF1Resubmit);
        assert!(m.ablated(Ablation::NoF1Resubmit));
        assert!(!m.ablated(Ablation::NoF2Resubmit));
        assert_eq!(m.ablations().collect::<Vec<_>>(), vec![Ablation::NoF1Resubmit]);
    }
}
