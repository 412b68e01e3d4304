//! Report values and their JSON/CSV encodings.
//!
//! Objects keep insertion order, and floats are written with 17 significant
//! digits, so a report is a byte-stable function of its contents.

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(u64),
    Float(f64),
    Str(String),
    Array(Vec<Value>),
    Object(Object),
}

impl Value {
    /// The CSV cell for a scalar; containers are not representable.
    fn cell(&self) -> Option<String> {
        Some(match self {
            Value::Null => String::new(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_float(*x).unwrap_or_default(),
            Value::Str(s) => s.clone(),
            Value::Array(_) | Value::Object(_) => return None,
        })
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<u64> for Value {
    fn from(i: u64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(v: Option<T>) -> Self {
        v.map_or(Value::Null, Into::into)
    }
}

impl From<Object> for Value {
    fn from(o: Object) -> Self {
        Value::Object(o)
    }
}

/// An ordered JSON object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Object(pub Vec<(String, Value)>);

impl Object {
    pub fn new() -> Self {
        Object(Vec::new())
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl Into<Value>) {
        self.0.push((key.to_string(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(k, _)| k.as_str())
    }
}

/// `{:.16e}` gives 17 significant digits; non-finite values have no JSON
/// number and become null. Negative zero prints as zero.
fn format_float(x: f64) -> Option<String> {
    let x = if x == 0.0 { 0.0 } else { x };
    x.is_finite().then(|| format!("{x:.16e}"))
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => s.serialize_unit(),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Int(i) => s.serialize_u64(*i),
            Value::Float(x) => match format_float(*x) {
                Some(text) => RawValue::from_string(text).map_err(serde::ser::Error::custom)?.serialize(s),
                None => s.serialize_unit(),
            },
            Value::Str(t) => s.serialize_str(t),
            Value::Array(items) => {
                let mut seq = s.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            Value::Object(o) => o.serialize(s),
        }
    }
}

impl Serialize for Object {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// A finished run: header fields, the config echo and one summary row per
/// point (one row without a sweep).
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub header: Object,
    pub config: Object,
    /// `(parameter, protocol)` of a sweep.
    pub sweep: Option<(String, String)>,
    pub rows: Vec<Object>,
    /// Per-row trial records, when requested.
    pub records: Option<Vec<Value>>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut doc = self.header.clone();
        doc.push("config", self.config.clone());
        match &self.sweep {
            None => {
                doc.push("summary", self.rows.first().cloned().unwrap_or_default());
                if let Some(records) = &self.records {
                    doc.push("records", records.first().cloned().unwrap_or(Value::Array(Vec::new())));
                }
            }
            Some((parameter, protocol)) => {
                let rows = self
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let mut row = row.clone();
                        if let Some(records) = &self.records {
                            row.push("records", records[i].clone());
                        }
                        Value::Object(row)
                    })
                    .collect();
                let sweep = Object::new()
                    .with("parameter", parameter.as_str())
                    .with("protocol", protocol.as_str())
                    .with("rows", Value::Array(rows));
                doc.push("sweep", sweep);
            }
        }
        let mut text = serde_json::to_string_pretty(&doc).expect("report values always serialize");
        text.push('\n');
        text
    }

    /// Header line plus one line per row; the cells are the JSON summary
    /// values in the same textual form.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // Rows of a sweep may differ in columns (e.g. over emission_order);
        // the header is the union in first-seen order.
        let mut header: Vec<&str> = Vec::new();
        for key in self.rows.iter().flat_map(Object::keys) {
            if !header.contains(&key) {
                header.push(key);
            }
        }
        w.write_record(&header).expect("writing to memory");
        for row in &self.rows {
            let cells: Vec<String> =
                header.iter().map(|k| row.get(k).and_then(Value::cell).unwrap_or_default()).collect();
            w.write_record(&cells).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            header: Object::new().with("schema_version", SCHEMA_VERSION),
            config: Object::new().with("p0", 0.01),
            sweep: None,
            rows: vec![Object::new().with("rate", 0.1).with("seed", Value::Null).with("label", "a,b")],
            records: None,
        }
    }

    #[test]
    fn floats_carry_17_significant_digits() {
        let json = sample().to_json();
        assert!(json.contains("\"rate\": 1.0000000000000001e-1"), "{json}");
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["summary"]["rate"].as_f64(), Some(0.1));
        assert_eq!(format_float(f64::NAN), None);
    }

    #[test]
    fn keys_stay_in_insertion_order() {
        let json = sample().to_json();
        let (a, b) = (json.find("schema_version").unwrap(), json.find("config").unwrap());
        let c = json.find("summary").unwrap();
        assert!(a < b && b < c);
        let o = Object::new().with("z", 1u64).with("a", 2u64);
        assert_eq!(serde_json::to_string(&o).unwrap(), r#"{"z":1,"a":2}"#);
    }

    #[test]
    fn csv_cells_match_json_text() {
        let csv = sample().to_csv();
        assert_eq!(csv, "rate,seed,label\n1.0000000000000001e-1,,\"a,b\"\n");
    }
}
