// SPDX-License-Identifier: Apache-2.0

//! Closed-form costs of PPCU, E2PU and CCU in exact rational arithmetic.
//!
//! Parameter files are JSON: either one object or a list of objects with the
//! fields of [`AnalyticParams`] plus an optional `name`. Each value is a JSON
//! integer or a string holding an integer, a fraction (`"3/2"`) or a decimal
//! (`"0.25"`).

use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact rational.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Q(pub Ratio<i128>);

impl Q {
    pub fn int(n: i128) -> Q {
        Q(Ratio::from_integer(n))
    }

    pub fn new(n: i128, d: i128) -> Q {
        Q(Ratio::new(n, d))
    }

    pub fn zero() -> Q {
        Q::int(0)
    }
}

impl std::ops::Add for Q {
    type Output = Q;
    fn add(self, o: Q) -> Q {
        Q(self.0 + o.0)
    }
}

impl std::ops::Sub for Q {
    type Output = Q;
    fn sub(self, o: Q) -> Q {
        Q(self.0 - o.0)
    }
}

impl std::ops::Mul for Q {
    type Output = Q;
    fn mul(self, o: Q) -> Q {
        Q(self.0 * o.0)
    }
}

impl std::ops::Div for Q {
    type Output = Q;
    fn div(self, o: Q) -> Q {
        Q(self.0 / o.0)
    }
}

impl fmt::Display for Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamsError {
    #[error("not a rational number: `{0}`")]
    Number(String),
    #[error("invalid parameter file: {0}")]
    Json(String),
    #[error("parameter set `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

impl FromStr for Q {
    type Err = ParamsError;

    fn from_str(s: &str) -> Result<Q, ParamsError> {
        let bad = || ParamsError::Number(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| bad())?;
            let d: i128 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Q::new(n, d));
        }
        if let Some((w, frac)) = s.split_once('.') {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 18 {
                return Err(bad());
            }
            let neg = w.starts_with('-');
            let w: i128 = if w.is_empty() || w == "-" { 0 } else { w.parse().map_err(|_| bad())? };
            let scale = 10i128.pow(frac.len() as u32);
            let f: i128 = frac.parse().map_err(|_| bad())?;
            let n = w.abs() * scale + f;
            return Ok(Q::new(if neg { -n } else { n }, scale));
        }
        s.parse::<i128>().map(Q::int).map_err(|_| bad())
    }
}

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(Q::int(n.into())),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Symbols of the cost model. Times share one unit of the caller's choice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticParams {
    #[serde(default)]
    pub name: Option<String>,
    pub delta: Q,
    pub t_i: Q,
    pub t_d: Q,
    pub t_m: Q,
    pub t_v: Q,
    pub t_s: Q,
    pub n_o: Q,
    pub n_n: Q,
    pub n: Q,
    pub k_a: Q,
    pub k_i: Q,
    pub k_t: Q,
}

impl AnalyticParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("delta", self.delta),
            ("t_i", self.t_i),
            ("t_d", self.t_d),
            ("t_m", self.t_m),
            ("t_v", self.t_v),
            ("t_s", self.t_s),
            ("n_o", self.n_o),
            ("n_n", self.n_n),
            ("n", self.n),
            ("k_a", self.k_a),
            ("k_i", self.k_i),
            ("k_t", self.k_t),
        ];
        if let Some((f, _)) = fields.iter().find(|(_, v)| *v < Q::zero()) {
            return Err(format!("{f} is negative"));
        }
        if self.k_a > self.k_t {
            return Err("k_a exceeds k_t".into());
        }
        if self.k_t == Q::zero() {
            return Err("k_t must be positive".into());
        }
        if self.k_a + self.k_i == Q::zero() {
            return Err("k_a + k_i must be positive".into());
        }
        Ok(())
    }

    /// The same parameters with every `t_v` term dropped.
    pub fn without_t_v(&self) -> AnalyticParams {
        AnalyticParams { t_v: Q::zero(), ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scheme {
    #[serde(rename = "PPCU")]
    Ppcu,
    #[serde(rename = "E2PU")]
    E2pu,
    #[serde(rename = "CCU")]
    Ccu,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Ppcu, Scheme::E2pu, Scheme::Ccu];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ppcu => "PPCU",
            Scheme::E2pu => "E2PU",
            Scheme::Ccu => "CCU",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Costs {
    pub scheme: Scheme,
    pub messages: Q,
    pub fp: Q,
    pub r1: Q,
    pub r2: Q,
    pub r3: Q,
    pub r4: Option<Q>,
    pub propagation: Q,
    pub time: Q,
    pub overlap: Q,
    pub transition: Q,
    pub concurrency: &'static str,
}

/// Costs of one scheme.
pub fn costs(scheme: Scheme, p: &AnalyticParams) -> Costs {
    let i = Q::int;
    let (messages, fp, r1, r2, r3, r4, propagation, concurrency) = match scheme {
        Scheme::Ppcu => (
            i(6) * p.k_a,
            i(1),
            p.n_o * (p.t_m + p.t_v) + p.n_n * (p.t_i + p.t_v),
            (p.n_o + p.n_n) * p.t_v,
            p.t_s + p.n_n * (p.t_m + p.t_v) + p.n_o * p.t_d,
            None,
            i(6) * p.delta,
            "unlimited",
        ),
        Scheme::E2pu => (
            i(4) * p.k_t,
            p.k_a / p.k_t,
            (p.n - p.n_o + p.n_n) * p.t_i,
            (p.n - p.n_o) * p.t_m + p.n_n * p.t_i,
            p.t_s + p.n * p.t_d,
            None,
            i(6) * p.delta,
            "0",
        ),
        Scheme::Ccu => (
            i(4) * p.k_a + i(4) * p.k_i,
            p.k_a / (p.k_a + p.k_i),
            p.n_o * p.t_m + p.n_n * p.t_i,
            p.n * p.t_m,
            p.t_s + p.n_n * p.t_m + p.n_o * p.t_d,
            Some(p.n * p.t_m),
            i(8) * p.delta,
            "version-field bits",
        ),
    };
    let time = propagation + r1 + r2 + r3 + r4.unwrap_or_default();
    Costs {
        scheme,
        messages,
        fp,
        r1,
        r2,
        r3,
        r4,
        propagation,
        time,
        overlap: i(4) * p.delta + r1 + r2 + r3,
        transition: i(3) * p.delta + r1 + r2,
        concurrency,
    }
}

/// Whether PPCU uses fewer messages than CCU, against the condition
/// `k_i > k_a / 2` under which it should.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MessageClaim {
    pub ppcu: Q,
    pub ccu: Q,
    pub ppcu_fewer: bool,
    pub k_i_exceeds_half_k_a: bool,
    /// `ppcu_fewer == k_i_exceeds_half_k_a`.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Comparison {
    pub params: AnalyticParams,
    pub full: Vec<Costs>,
    pub without_t_v: Vec<Costs>,
    pub claim: MessageClaim,
}

pub fn analytic_compare(p: &AnalyticParams) -> Comparison {
    let full: Vec<Costs> = Scheme::ALL.iter().map(|s| costs(*s, p)).collect();
    let q = p.without_t_v();
    let without_t_v = Scheme::ALL.iter().map(|s| costs(*s, &q)).collect();
    let ppcu = full[0].messages;
    let ccu = full[2].messages;
    let ppcu_fewer = ppcu < ccu;
    let k_i_exceeds_half_k_a = p.k_i > p.k_a / Q::int(2);
    let claim = MessageClaim { ppcu, ccu, ppcu_fewer, k_i_exceeds_half_k_a, holds: ppcu_fewer == k_i_exceeds_half_k_a };
    Comparison { params: p.clone(), full, without_t_v, claim }
}

/// Parses and validates a parameter file.
pub fn parse_params(text: &str) -> Result<Vec<AnalyticParams>, ParamsError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum File {
        Many(Vec<AnalyticParams>),
        One(Box<AnalyticParams>),
    }
    let file: File = serde_json::from_str(text).map_err(|e| ParamsError::Json(e.to_string()))?;
    let sets = match file {
        File::Many(v) => v,
        File::One(p) => vec![*p],
    };
    for (k, p) in sets.iter().enumerate() {
        p.validate().map_err(|reason| ParamsError::Invalid { name: set_name(p, k), reason })?;
    }
    Ok(sets)
}

fn set_name(p: &AnalyticParams, k: usize) -> String {
    p.name.clone().unwrap_or_else(|| format!("set{}", k + 1))
}

fn row(out: &mut String, label: &str, cells: [String; 3]) {
    let _ = writeln!(out, "  {label:<14} {:>24} {:>24} {:>24}", cells[0], cells[1], cells[2]);
}

fn table(out: &mut String, rows: &[Costs]) {
    let r = |f: &dyn Fn(&Costs) -> String| [f(&rows[0]), f(&rows[1]), f(&rows[2])];
    row(out, "", r(&|c| c.scheme.as_str().to_string()));
    row(out, "messages", r(&|c| c.messages.to_string()));
    row(out, "FP", r(&|c| c.fp.to_string()));
    row(out, "R1", r(&|c| c.r1.to_string()));
    row(out, "R2", r(&|c| c.r2.to_string()));
    row(out, "R3", r(&|c| c.r3.to_string()));
    row(out, "R4", r(&|c| c.r4.map_or_else(|| "n/a".to_string(), |q| q.to_string())));
    row(out, "propagation", r(&|c| c.propagation.to_string()));
    row(out, "time", r(&|c| c.time.to_string()));
    row(out, "overlap", r(&|c| c.overlap.to_string()));
    row(out, "transition", r(&|c| c.transition.to_string()));
    row(out, "concurrency", r(&|c| c.concurrency.to_string()));
}

impl Comparison {
    pub fn render(&self, k: usize) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "parameter set {}", set_name(p, k));
        let _ = writeln!(
            out,
            "  delta={} t_i={} t_d={} t_m={} t_v={} t_s={} n_o={} n_n={} n={} k_a={} k_i={} k_t={}",
            p.delta, p.t_i, p.t_d, p.t_m, p.t_v, p.t_s, p.n_o, p.n_n, p.n, p.k_a, p.k_i, p.k_t
        );
        out.push_str(" with t_v terms\n");
        table(&mut out, &self.full);
        out.push_str(" t_v terms dropped\n");
        table(&mut out, &self.without_t_v);
        let c = &self.claim;
        let _ = writeln!(
            out,
            " messages: PPCU {} {} CCU {}; k_i > k_a/2 is {}; claim {}",
            c.ppcu,
            if c.ppcu_fewer { "<" } else { ">=" },
            c.ccu,
            c.k_i_exceeds_half_k_a,
            if c.holds { "holds" } else { "FAILS" }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(k_a: i128, k_i: i128, k_t: i128) -> AnalyticParams {
        AnalyticParams {
            name: None,
            delta: Q::int(1),
            t_i: Q::int(2),
            t_d: Q::int(1),
            t_m: Q::int(1),
            t_v: Q::new(1, 100),
            t_s: Q::int(5),
            n_o: Q::int(1),
            n_n: Q::int(1),
            n: Q::int(4),
            k_a: Q::int(k_a),
            k_i: Q::int(k_i),
            k_t: Q::int(k_t),
        }
    }

    #[test]
    fn message_rows() {
        let c = analytic_compare(&params(3, 15, 20));
        let m: Vec<Q> = c.full.iter().map(|r| r.messages).collect();
        assert_eq!(m, vec![Q::int(18), Q::int(80), Q::int(72)]);
        assert_eq!(c.full[1].fp, Q::new(3, 20));
        assert_eq!(c.full[2].fp, Q::new(3, 18));
        assert!(c.claim.holds);
    }

    #[test]
    fn empty_update_rounds() {
        let mut p = params(1, 1, 1);
        p.n_o = Q::zero();
        p.n_n = Q::zero();
        let c = costs(Scheme::Ppcu, &p);
        assert_eq!((c.r1, c.r2, c.r3), (Q::zero(), Q::zero(), p.t_s));
    }

    #[test]
    fn t_v_is_only_dropped_where_it_appears() {
        let c = analytic_compare(&params(3, 15, 20));
        assert_eq!(c.full[0].r2, Q::new(2, 100));
        assert_eq!(c.without_t_v[0].r2, Q::zero());
        assert_eq!(c.full[1], c.without_t_v[1]);
        assert_eq!(c.full[2], c.without_t_v[2]);
    }

    #[test]
    fn rational_syntax() {
        assert_eq!("3/6".parse::<Q>().unwrap(), Q::new(1, 2));
        assert_eq!("0.25".parse::<Q>().unwrap(), Q::new(1, 4));
        assert_eq!("-1.5".parse::<Q>().unwrap(), Q::new(-3, 2));
        assert_eq!("7".parse::<Q>().unwrap(), Q::int(7));
        assert!("1/0".parse::<Q>().is_err());
        assert!("x".parse::<Q>().is_err());
    }

    #[test]
    fn files_are_validated() {
        let one = r#"{"delta":1,"t_i":"0.2","t_d":1,"t_m":1,"t_v":0,"t_s":0,"n_o":1,"n_n":1,"n":2,"k_a":5,"k_i":1,"k_t":4}"#;
        assert!(matches!(parse_params(one), Err(ParamsError::Invalid { .. })));
        let ok = one.replace("\"k_t\":4", "\"k_t\":9");
        assert_eq!(parse_params(&format!("[{ok},{ok}]")).unwrap().len(), 2);
    }

    proptest! {
        #[test]
        fn message_claim_matches_condition(k_a in 1i128..500, k_i in 0i128..500) {
            let c = analytic_compare(&params(k_a, k_i, k_a + 1));
            prop_assert!(c.claim.holds);
        }

        #[test]
        fn comparison_is_deterministic(k_a in 1i128..50, k_i in 0i128..50) {
            let p = params(k_a, k_i, 60);
            prop_assert_eq!(analytic_compare(&p), analytic_compare(&p));
        }
    }
}
