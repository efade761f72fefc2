// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MatchError;

pub const MAX_WIDTH: u8 = 32;

fn width_mask(width: u8) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

/// A concrete packet match key, written most significant bit first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Header {
    width: u8,
    bits: u32,
}

impl Header {
    pub fn new(width: u8, bits: u32) -> Result<Header, MatchError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(MatchError::BadWidth(width));
        }
        if bits & !width_mask(width) != 0 {
            return Err(MatchError::Overflow { width, bits });
        }
        Ok(Header { width, bits })
    }

    pub fn width(self) -> u8 {
        self.width
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// Every header of the given width. Only sensible for small widths.
    pub fn all(width: u8) -> impl Iterator<Item = Header> {
        let count = 1u64 << width;
        (0..count).map(move |b| Header { width, bits: b as u32 })
    }
}

impl fmt::Display for Header {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.width).rev() {
            f.write_str(if self.bits >> i & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Header {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Header, MatchError> {
        let p: MatchPattern = s.parse()?;
        if p.care != width_mask(p.width) {
            return Err(MatchError::NotConcrete(s.to_string()));
        }
        Ok(Header { width: p.width, bits: p.value })
    }
}

/// A ternary string over `{0, 1, *}`: a cube in header space.
///
/// Bits whose `care` bit is clear are wildcards; `value` is zero there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchPattern {
    width: u8,
    value: u32,
    care: u32,
}

impl MatchPattern {
    pub fn new(width: u8, value: u32, care: u32) -> Result<MatchPattern, MatchError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(MatchError::BadWidth(width));
        }
        let m = width_mask(width);
        if (value | care) & !m != 0 {
            return Err(MatchError::Overflow { width, bits: value | care });
        }
        Ok(MatchPattern { width, value: value & care, care })
    }

    pub fn wildcard(width: u8) -> MatchPattern {
        MatchPattern { width, value: 0, care: 0 }
    }

    pub fn exact(header: Header) -> MatchPattern {
        MatchPattern { width: header.width, value: header.bits, care: width_mask(header.width) }
    }

    pub fn width(self) -> u8 {
        self.width
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn care(self) -> u32 {
        self.care
    }

    /// Bit-by-bit containment test; widths must already agree.
    #[inline]
    pub fn matches_unchecked(self, header: Header) -> bool {
        debug_assert_eq!(self.width, header.width);
        (header.bits ^ self.value) & self.care == 0
    }

    /// Number of wildcard positions.
    pub fn free_bits(self) -> u32 {
        self.width as u32 - self.care.count_ones()
    }

    /// Number of concrete headers in the cube.
    pub fn size(self) -> u64 {
        1u64 << self.free_bits()
    }

    pub fn intersects(self, other: MatchPattern) -> bool {
        debug_assert_eq!(self.width, other.width);
        (self.value ^ other.value) & self.care & other.care == 0
    }

    pub fn intersection(self, other: MatchPattern) -> Option<MatchPattern> {
        self.intersects(other).then_some(MatchPattern {
            width: self.width,
            value: self.value | other.value,
            care: self.care | other.care,
        })
    }

    /// Whether every header of `self` is a header of `other`.
    pub fn is_subset_of(self, other: MatchPattern) -> bool {
        debug_assert_eq!(self.width, other.width);
        other.care & !self.care == 0 && (self.value ^ other.value) & other.care == 0
    }

    /// `self \ other` as pairwise disjoint cubes.
    pub fn subtract(self, other: MatchPattern) -> Vec<MatchPattern> {
        let Some(common) = self.intersection(other) else {
            return vec![self];
        };
        let mut out = Vec::new();
        let mut rest = self;
        // Split on every position that `other` fixes and `self` leaves open.
        let mut open = other.care & !self.care;
        while open != 0 {
            let bit = open & open.wrapping_neg();
            open &= !bit;
            out.push(MatchPattern {
                width: self.width,
                value: rest.value | (!common.value & bit),
                care: rest.care | bit,
            });
            rest = MatchPattern {
                width: self.width,
                value: rest.value | (common.value & bit),
                care: rest.care | bit,
            };
        }
        out
    }

    /// Every concrete header of the cube, in ascending bit order.
    pub fn headers(self) -> impl Iterator<Item = Header> {
        let free: Vec<u32> = (0..self.width as u32).filter(|i| self.care >> i & 1 == 0).collect();
        let n = 1u64 << free.len();
        (0..n).map(move |k| {
            let mut bits = self.value;
            for (j, pos) in free.iter().enumerate() {
                if k >> j & 1 == 1 {
                    bits |= 1 << pos;
                }
            }
            Header { width: self.width, bits }
        })
    }
}

/// Checked containment test.
pub fn pattern_matches(pattern: MatchPattern, header: Header) -> Result<bool, MatchError> {
    if pattern.width != header.width {
        return Err(MatchError::WidthMismatch { expected: pattern.width, found: header.width });
    }
    Ok(pattern.matches_unchecked(header))
}

impl fmt::Display for MatchPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.width).rev() {
            let c = if self.care >> i & 1 == 0 {
                "*"
            } else if self.value >> i & 1 == 1 {
                "1"
            } else {
                "0"
            };
            f.write_str(c)?;
        }
        Ok(())
    }
}

impl FromStr for MatchPattern {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<MatchPattern, MatchError> {
        let width = u8::try_from(s.len()).map_err(|_| MatchError::BadWidth(u8::MAX))?;
        if width == 0 || width > MAX_WIDTH {
            return Err(MatchError::BadWidth(width));
        }
        let (mut value, mut care) = (0u32, 0u32);
        for c in s.chars() {
            value <<= 1;
            care <<= 1;
            match c {
                '0' => care |= 1,
                '1' => {
                    care |= 1;
                    value |= 1;
                }
                '*' => {}
                other => return Err(MatchError::BadSymbol(other)),
            }
        }
        Ok(MatchPattern { width, value, care })
    }
}

impl Serialize for MatchPattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MatchPattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<MatchPattern, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for Header {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Header {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Header, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> MatchPattern {
        s.parse().unwrap()
    }

    fn h(s: &str) -> Header {
        s.parse().unwrap()
    }

    #[test]
    fn containment_examples() {
        assert!(pattern_matches(p("1***"), h("1000")).unwrap());
        assert!(!pattern_matches(p("1111"), h("1000")).unwrap());
        for hd in Header::all(4) {
            assert!(pattern_matches(p("****"), hd).unwrap());
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        assert_eq!(
            pattern_matches(p("1**"), h("1000")),
            Err(MatchError::WidthMismatch { expected: 3, found: 4 })
        );
    }

    #[test]
    fn parse_rejects_garbage() {
        assert_eq!("10x1".parse::<MatchPattern>(), Err(MatchError::BadSymbol('x')));
        assert!("".parse::<MatchPattern>().is_err());
        assert!("1*".parse::<Header>().is_err());
        assert_eq!(p("01*1").to_string(), "01*1");
    }

    #[test]
    fn enumerates_cube() {
        let hs: Vec<String> = p("0*1*").headers().map(|x| x.to_string()).collect();
        assert_eq!(hs, ["0010", "0011", "0110", "0111"]);
    }

    fn arb_pattern(width: u8) -> impl Strategy<Value = MatchPattern> {
        let m = width_mask(width);
        (0..=m, 0..=m).prop_map(move |(v, c)| MatchPattern::new(width, v & c, c).unwrap())
    }

    proptest! {
        #[test]
        fn cube_ops_agree_with_enumeration(a in arb_pattern(6), b in arb_pattern(6)) {
            let hs: Vec<Header> = Header::all(6).collect();
            let brute_inter = hs.iter().any(|x| a.matches_unchecked(*x) && b.matches_unchecked(*x));
            prop_assert_eq!(a.intersects(b), brute_inter);
            let brute_sub = hs.iter().all(|x| !a.matches_unchecked(*x) || b.matches_unchecked(*x));
            prop_assert_eq!(a.is_subset_of(b), brute_sub);
            let pieces = a.subtract(b);
            for x in &hs {
                let in_diff = a.matches_unchecked(*x) && !b.matches_unchecked(*x);
                let hits = pieces.iter().filter(|q| q.matches_unchecked(*x)).count();
                prop_assert_eq!(hits, usize::from(in_diff));
            }
            prop_assert_eq!(a.size(), a.headers().count() as u64);
        }

        #[test]
        fn display_parse_round_trip(a in arb_pattern(12)) {
            prop_assert_eq!(a.to_string().parse::<MatchPattern>().unwrap(), a);
        }
    }
}
