//! `.milp.json` instance files.

use super::{MilpInstance, Row};
use crate::{Error, Result};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::path::Path;

pub const INSTANCE_EXTENSION: &str = "milp.json";

/// A bound value that serializes infinities as the strings `"inf"`/`"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BoundValue(f64);

impl Serialize for BoundValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for BoundValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = BoundValue;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<BoundValue, E> {
                Ok(BoundValue(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<BoundValue, E> {
                Ok(BoundValue(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<BoundValue, E> {
                Ok(BoundValue(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<BoundValue, E> {
                match v {
                    "inf" | "+inf" => Ok(BoundValue(f64::INFINITY)),
                    "-inf" => Ok(BoundValue(f64::NEG_INFINITY)),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    name: String,
    num_vars: usize,
    num_cons: usize,
    objective: Vec<f64>,
    rows: Vec<Row>,
    lb: Vec<BoundValue>,
    ub: Vec<BoundValue>,
    is_integer: Vec<bool>,
}

/// Serializes an instance to the instance JSON format. Output is a pure
/// function of the instance, so equal instances give identical bytes.
pub fn encode(inst: &MilpInstance) -> Result<Vec<u8>> {
    if let Some(v) = inst.validate().first() {
        return Err(Error::Contract(format!("refusing to encode invalid instance: {v}")));
    }
    let file = InstanceFile {
        name: inst.name.clone(),
        num_vars: inst.num_vars,
        num_cons: inst.num_cons,
        objective: inst.objective.clone(),
        rows: inst.rows.clone(),
        lb: inst.lower.iter().copied().map(BoundValue).collect(),
        ub: inst.upper.iter().copied().map(BoundValue).collect(),
        is_integer: inst.is_integer.clone(),
    };
    serde_json::to_vec(&file).map_err(|e| Error::parse("instance encode", e))
}

/// Parses instance JSON. Errors carry the line/column and field name
/// reported by the parser, or the field whose length disagrees with the
/// declared dimensions.
pub fn decode(bytes: &[u8]) -> Result<MilpInstance> {
    let file: InstanceFile =
        serde_json::from_slice(bytes).map_err(|e| Error::parse("instance JSON", e))?;
    let n = file.num_vars;
    for (field, len) in [
        ("objective", file.objective.len()),
        ("lb", file.lb.len()),
        ("ub", file.ub.len()),
        ("is_integer", file.is_integer.len()),
    ] {
        if len != n {
            return Err(Error::parse(
                format!("instance field \"{field}\""),
                format!("has {len} entries but num_vars = {n}"),
            ));
        }
    }
    if file.rows.len() != file.num_cons {
        return Err(Error::parse(
            "instance field \"rows\"",
            format!("has {} entries but num_cons = {}", file.rows.len(), file.num_cons),
        ));
    }
    Ok(MilpInstance {
        name: file.name,
        num_vars: file.num_vars,
        num_cons: file.num_cons,
        objective: file.objective,
        rows: file.rows,
        lower: file.lb.into_iter().map(|b| b.0).collect(),
        upper: file.ub.into_iter().map(|b| b.0).collect(),
        is_integer: file.is_integer,
    })
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<MilpInstance> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{} ({context})", path.display()),
            message,
        },
        other => other,
    })
}

pub fn write_instance(inst: &MilpInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(inst)?).map_err(|e| Error::io(path, e))
}
