//! Serde helpers for floats that may be `±∞`.
//!
//! Growth rates in this crate use `f64::NEG_INFINITY` as the explicit marker
//! for fully collapsed directions (the zero vector, exactly singular
//! products).  JSON has no literal for infinities, so report fields that can
//! carry the marker serialize non-finite values as the strings `"-inf"`,
//! `"inf"` and `"nan"`, and accept either numbers or those strings on input.

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use std::fmt;

fn encode<S: Serializer>(value: f64, ser: S) -> Result<S::Ok, S::Error> {
    if value.is_finite() {
        ser.serialize_f64(value)
    } else if value.is_nan() {
        ser.serialize_str("nan")
    } else if value > 0.0 {
        ser.serialize_str("inf")
    } else {
        ser.serialize_str("-inf")
    }
}

fn decode_str<E: de::Error>(s: &str) -> Result<f64, E> {
    match s {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "nan" => Ok(f64::NAN),
        other => other
            .parse::<f64>()
            .map_err(|_| E::custom(format!("not a float or inf marker: {other:?}"))),
    }
}

struct MaybeInfVisitor;

impl<'de> Visitor<'de> for MaybeInfVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a float or one of \"inf\", \"-inf\", \"nan\"")
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
        decode_str(v)
    }
}

/// Field attribute target: `#[serde(with = "crate::serde_ext::maybe_inf")]`.
pub mod maybe_inf {
    use super::*;

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        encode(*value, ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        de.deserialize_any(MaybeInfVisitor)
    }
}

/// Field attribute target for vectors:
/// `#[serde(with = "crate::serde_ext::maybe_inf_vec")]`.
pub mod maybe_inf_vec {
    use super::*;

    pub fn serialize<S: Serializer>(values: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        struct Wrap(f64);
        impl serde::Serialize for Wrap {
            fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
                encode(self.0, ser)
            }
        }
        let mut seq = ser.serialize_seq(Some(values.len()))?;
        for &v in values {
            seq.serialize_element(&Wrap(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        struct VecVisitor;
        impl<'de> Visitor<'de> for VecVisitor {
            type Value = Vec<f64>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a sequence of floats or inf markers")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                struct Wrap(f64);
                impl<'de> serde::Deserialize<'de> for Wrap {
                    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Wrap, D::Error> {
                        de.deserialize_any(MaybeInfVisitor).map(Wrap)
                    }
                }
                let mut out = Vec::new();
                while let Some(Wrap(v)) = seq.next_element()? {
                    out.push(v);
                }
                Ok(out)
            }
        }
        de.deserialize_seq(VecVisitor)
    }
}
