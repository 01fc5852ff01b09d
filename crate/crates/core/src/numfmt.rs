//! Float formatting with 17 significant digits, which round-trips every f64
//! bit-exactly through its decimal text.

use serde::ser::{Serialize, SerializeSeq, Serializer};
use serde_json::value::RawValue;

/// Formats a finite float with 17 significant digits in scientific notation.
/// Non-finite values map to `null` in JSON contexts and are rendered here as
/// `inf`, `-inf` or `NaN`.
pub fn sig17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn raw(v: f64) -> Box<RawValue> {
    let text = if v.is_finite() { sig17(v) } else { "null".to_string() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub(crate) mod f64_sig17 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        raw(*v).serialize(s)
    }
}

pub(crate) mod opt_f64_sig17 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => raw(*x).serialize(s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        <Option<f64> as serde::Deserialize>::deserialize(d)
    }
}

pub(crate) mod vec_f64_sig17 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            seq.serialize_element(&raw(x))?;
        }
        seq.end()
    }
}

pub(crate) mod points_sig17 {
    use super::*;

    struct Row<'a>(&'a [f64]);

    impl Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            vec_f64_sig17::serialize(self.0, s)
        }
    }

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for p in v {
            seq.serialize_element(&Row(p))?;
        }
        seq.end()
    }
}
