//! JSON instance files.
//!
//! ```text
//! { "schema": "capalloc-bernoulli/1", "n": 2,
//!   "rounds": [ { "p": 0.5, "c": 2, "values": [1, 1], "q": [1, 1] } ] }
//! { "schema": "capalloc-general/1", "n": 2,
//!   "rounds": [ { "realizations": [ { "p": 1, "c": 1, "values": [..], "q": [..] } ] } ] }
//! ```
//!
//! Unknown keys are accepted and reported as warnings.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::{BernoulliInstance, GeneralInstance, GeneralRound, Instance, RoundSpec};
use crate::{Error, Result};

pub const BERNOULLI_SCHEMA: &str = "capalloc-bernoulli/1";
pub const GENERAL_SCHEMA: &str = "capalloc-general/1";

const TOP_KEYS: &[&str] = &["schema", "n", "rounds"];
const ARRIVAL_KEYS: &[&str] = &["p", "c", "values", "q"];
const GENERAL_ROUND_KEYS: &[&str] = &["realizations"];

#[derive(Serialize)]
struct BernoulliDoc<'a> {
    schema: &'static str,
    n: usize,
    rounds: &'a [RoundSpec],
}

#[derive(Serialize)]
struct GeneralDoc<'a> {
    schema: &'static str,
    n: usize,
    rounds: &'a [GeneralRound],
}

pub fn to_json_string(inst: &Instance) -> Result<String> {
    let s = match inst {
        Instance::Bernoulli(b) => {
            serde_json::to_string_pretty(&BernoulliDoc { schema: BERNOULLI_SCHEMA, n: b.n, rounds: &b.rounds })?
        }
        Instance::General(g) => {
            serde_json::to_string_pretty(&GeneralDoc { schema: GENERAL_SCHEMA, n: g.n, rounds: &g.rounds })?
        }
    };
    Ok(s)
}

/// Writes atomically: a sibling temp file is renamed over `path`.
pub fn write(inst: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let mut body = to_json_string(inst)?;
    body.push('\n');
    crate::util::write_atomic(path.as_ref(), body.as_bytes())
}

pub fn read(path: impl AsRef<Path>) -> Result<Instance> {
    let (inst, warnings) = read_with_warnings(path)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(inst)
}

pub fn read_with_warnings(path: impl AsRef<Path>) -> Result<(Instance, Vec<String>)> {
    let text = fs::read_to_string(path)?;
    from_json_str(&text)
}

fn unknown_keys(obj: &serde_json::Map<String, Value>, known: &[&str], loc: &str, out: &mut Vec<String>) {
    for k in obj.keys() {
        if !known.contains(&k.as_str()) {
            out.push(format!("ignoring unknown field `{k}` at {loc}"));
        }
    }
}

fn arrival_warnings(v: &Value, loc: &str, out: &mut Vec<String>) {
    if let Some(obj) = v.as_object() {
        unknown_keys(obj, ARRIVAL_KEYS, loc, out);
    }
}

/// Parses an instance document, returning it with any warnings.
pub fn from_json_str(text: &str) -> Result<(Instance, Vec<String>)> {
    let doc: Value = serde_json::from_str(text)?;
    let obj = doc.as_object().ok_or_else(|| Error::Schema("document is not an object".into()))?;
    let schema = obj
        .get("schema")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Schema("missing string field `schema`".into()))?;
    for key in ["n", "rounds"] {
        if !obj.contains_key(key) {
            return Err(Error::Schema(format!("missing field `{key}`")));
        }
    }
    let rounds = obj["rounds"].as_array().ok_or_else(|| Error::Schema("`rounds` is not an array".into()))?;

    let mut warnings = Vec::new();
    unknown_keys(obj, TOP_KEYS, "top level", &mut warnings);

    let schema_err = |e: serde_json::Error| Error::Schema(e.to_string());
    let inst = match schema {
        BERNOULLI_SCHEMA => {
            for (t, r) in rounds.iter().enumerate() {
                arrival_warnings(r, &format!("rounds[{t}]"), &mut warnings);
            }
            let n = serde_json::from_value(obj["n"].clone()).map_err(schema_err)?;
            let rounds = serde_json::from_value(obj["rounds"].clone()).map_err(schema_err)?;
            Instance::Bernoulli(BernoulliInstance { n, rounds })
        }
        GENERAL_SCHEMA => {
            for (t, r) in rounds.iter().enumerate() {
                if let Some(ro) = r.as_object() {
                    unknown_keys(ro, GENERAL_ROUND_KEYS, &format!("rounds[{t}]"), &mut warnings);
                    if let Some(zs) = ro.get("realizations").and_then(Value::as_array) {
                        for (j, z) in zs.iter().enumerate() {
                            arrival_warnings(z, &format!("rounds[{t}].realizations[{j}]"), &mut warnings);
                        }
                    }
                }
            }
            let n = serde_json::from_value(obj["n"].clone()).map_err(schema_err)?;
            let rounds = serde_json::from_value(obj["rounds"].clone()).map_err(schema_err)?;
            Instance::General(GeneralInstance { n, rounds })
        }
        other => {
            return Err(Error::Schema(format!(
                "unsupported schema `{other}` (expected `{BERNOULLI_SCHEMA}` or `{GENERAL_SCHEMA}`)"
            )))
        }
    };
    Ok((inst, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_lp_gap;

    #[test]
    fn round_trip_lp_gap() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.json");
        let inst = Instance::Bernoulli(gen_lp_gap());
        write(&inst, &path).unwrap();
        assert_eq!(read(&path).unwrap(), inst);
    }

    #[test]
    fn round_trip_general_keeps_full_precision() {
        let mut g = gen_lp_gap().to_general();
        g.rounds[0].realizations[0].values[0] = 0.1 + 0.2;
        g.rounds[0].realizations[0].values[1] = std::f64::consts::PI;
        let inst = Instance::General(g);
        let (back, warnings) = from_json_str(&to_json_string(&inst).unwrap()).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(back, inst);
    }

    #[test]
    fn missing_rounds_is_schema_error() {
        let err = from_json_str(r#"{"schema": "capalloc-bernoulli/1", "n": 2}"#).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("rounds")));
    }

    #[test]
    fn schema_version_mismatch() {
        let err = from_json_str(r#"{"schema": "capalloc-bernoulli/2", "n": 1, "rounds": []}"#).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn unknown_fields_warn() {
        let text = r#"{"schema": "capalloc-bernoulli/1", "n": 1, "comment": "hi",
            "rounds": [{"p": 1, "c": 1, "values": [1], "q": [1], "label": "x"}]}"#;
        let (inst, warnings) = from_json_str(text).unwrap();
        assert_eq!(inst.n(), 1);
        assert_eq!(warnings.len(), 2);
        assert!(warnings[0].contains("comment"));
        assert!(warnings[1].contains("label"));
    }

    #[test]
    fn malformed_file() {
        assert!(matches!(from_json_str("{not json"), Err(Error::Json(_))));
        let err = from_json_str(r#"{"schema": "capalloc-bernoulli/1", "n": 1, "rounds": [{"p": "x"}]}"#);
        assert!(matches!(err, Err(Error::Schema(_))));
    }
}
