//! Serde adapters that keep non-finite floats round-trippable in JSON, which
//! has no literal for them: finite values stay numbers, others become the
//! strings `"inf"`, `"-inf"` and `"nan"`.

use serde::de::{self, Deserializer, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use std::fmt;

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

struct FloatVisitor;

impl Visitor<'_> for FloatVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
        match v {
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
        }
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    d.deserialize_any(FloatVisitor)
}

#[derive(Serialize, Deserialize)]
struct Wrapped(#[serde(with = "self")] f64);

/// The same encoding for `Vec<[f64; 3]>`.
pub mod triples {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[[f64; 3]], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for t in v {
            seq.serialize_element(&[Wrapped(t[0]), Wrapped(t[1]), Wrapped(t[2])])?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[f64; 3]>, D::Error> {
        let raw: Vec<[Wrapped; 3]> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|[a, b, c]| [a.0, b.0, c.0]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Probe {
        #[serde(with = "super")]
        x: f64,
        #[serde(with = "triples")]
        t: Vec<[f64; 3]>,
    }

    #[test]
    fn round_trips_non_finite() {
        let p = Probe { x: f64::INFINITY, t: vec![[1.5, f64::NEG_INFINITY, 0.0]] };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"x":"inf","t":[[1.5,"-inf",0.0]]}"#);
        assert_eq!(serde_json::from_str::<Probe>(&s).unwrap(), p);
        let n: Probe = serde_json::from_str(r#"{"x":"nan","t":[]}"#).unwrap();
        assert!(n.x.is_nan());
        assert_eq!(serde_json::from_str::<Probe>(r#"{"x":2,"t":[]}"#).unwrap().x, 2.0);
        assert!(serde_json::from_str::<Probe>(r#"{"x":"big","t":[]}"#).is_err());
    }
}
