// SPDX-License-Identifier: Apache-2.0

//! Simulated time.
//!
//! All times are signed integer nanoseconds so that arithmetic and ordering
//! are exact and identical on every platform. Times are rendered as
//! fixed-point milliseconds with six fractional digits (`12.000500`).

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const NS_PER_MS: i64 = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(i64);

impl Time {
    pub const ZERO: Time = Time(0);
    pub const MAX: Time = Time(i64::MAX);

    pub const fn from_ns(ns: i64) -> Time {
        Time(ns)
    }

    pub const fn from_us(us: i64) -> Time {
        Time(us * 1_000)
    }

    pub const fn from_ms(ms: i64) -> Time {
        Time(ms * NS_PER_MS)
    }

    /// Converts a floating-point millisecond value, rounding to the nearest
    /// nanosecond. Scenario files carry times this way.
    pub fn from_ms_f64(ms: f64) -> Time {
        Time((ms * NS_PER_MS as f64).round() as i64)
    }

    pub const fn as_ns(self) -> i64 {
        self.0
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / NS_PER_MS as f64
    }

    /// Largest multiple of `step` not greater than `self`.
    pub fn floor_to(self, step: Time) -> Time {
        debug_assert!(step.0 > 0);
        Time(self.0.div_euclid(step.0) * step.0)
    }

    /// Smallest multiple of `step` not less than `self`.
    pub fn ceil_to(self, step: Time) -> Time {
        debug_assert!(step.0 > 0);
        let q = self.0.div_euclid(step.0);
        let r = self.0.rem_euclid(step.0);
        Time(if r == 0 { q } else { q + 1 } * step.0)
    }

    pub fn saturating_sub(self, rhs: Time) -> Time {
        Time(self.0.saturating_sub(rhs.0))
    }

    pub fn max0(self) -> Time {
        Time(self.0.max(0))
    }

    pub fn abs(self) -> Time {
        Time(self.0.abs())
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl AddAssign for Time {
    fn add_assign(&mut self, rhs: Time) {
        self.0 += rhs.0;
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl Mul<i64> for Time {
    type Output = Time;
    fn mul(self, rhs: i64) -> Time {
        Time(self.0 * rhs)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let ms = abs / NS_PER_MS as u64;
        let frac = abs % NS_PER_MS as u64;
        write!(f, "{sign}{ms}.{frac:06}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid fixed-point millisecond value `{0}`")]
pub struct ParseTimeError(String);

impl FromStr for Time {
    type Err = ParseTimeError;

    /// Parses fixed-point milliseconds with at most six fractional digits.
    fn from_str(s: &str) -> Result<Time, ParseTimeError> {
        let err = || ParseTimeError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() || frac.len() > 6 || !int.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let ms: i64 = int.parse().map_err(|_| err())?;
        let mut frac_ns: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        for _ in frac.len()..6 {
            frac_ns *= 10;
        }
        let ns = ms
            .checked_mul(NS_PER_MS)
            .and_then(|v| v.checked_add(frac_ns))
            .ok_or_else(err)?;
        Ok(Time(if neg { -ns } else { ns }))
    }
}

/// Serialized as a millisecond number; deserialized from a millisecond
/// number or a fixed-point string.
impl Serialize for Time {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_ms_f64())
    }
}

impl<'de> Deserialize<'de> for Time {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Time, D::Error> {
        struct MsVisitor;

        impl Visitor<'_> for MsVisitor {
            type Value = Time;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a time in milliseconds")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Time, E> {
                if !v.is_finite() {
                    return Err(E::custom("time must be finite"));
                }
                Ok(Time::from_ms_f64(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Time, E> {
                Ok(Time::from_ms(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Time, E> {
                i64::try_from(v)
                    .map(Time::from_ms)
                    .map_err(|_| E::custom("time out of range"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Time, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(MsVisitor)
    }
}
