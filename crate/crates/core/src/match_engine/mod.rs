// SPDX-License-Identifier: Apache-2.0

//! Ternary match patterns, priority tables and the rule-set relations used
//! to reason about updates.
//!
//! A [`Rule`] is `[priority, pattern, action]` plus the per-update state a
//! switch keeps for it: the flag (`NEW`, `OLD` or `U`), the activation
//! timestamp register `T` and the owning update. Lookup honours the flag
//! guards a rule carries, so NEW rules can be hidden from packets marked
//! old-only and vice versa.

mod algebra;
mod pattern;
mod rule;

pub use algebra::{
    covered_by, inverse_special_difference, match_field_equivalent, special_difference,
    updates_disjoint, SwitchUpdate, UpdateRequest,
};
pub use pattern::{pattern_matches, Header, MatchPattern, MAX_WIDTH};
pub use rule::{ActionSpec, FieldOp, FlagGuard, Output, Rule, RuleFlag, RuleSet, T_MAX};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("header width {0} is outside 1..=32")]
    BadWidth(u8),
    #[error("value {bits:#x} does not fit in {width} bits")]
    Overflow { width: u8, bits: u32 },
    #[error("`{0}` contains wildcards but a concrete header was expected")]
    NotConcrete(String),
    #[error("unexpected symbol `{0}` in ternary pattern")]
    BadSymbol(char),
    #[error("width mismatch: pattern has {expected} bits, header has {found}")]
    WidthMismatch { expected: u8, found: u8 },
    #[error("duplicate rule id {0}")]
    DuplicateRule(crate::RuleId),
}
