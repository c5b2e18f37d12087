//! Typed field values of profile-store records.

use std::cmp::Ordering;
use std::fmt;

use chrono::NaiveDateTime;
use serde::Serialize;

/// Canonical timestamp display format.
const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// A record field value. Strings that parse as timestamps are promoted to
/// [`Value::Timestamp`] on ingest so chronological fields order correctly.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Str(String),
    Num(f64),
    Bool(bool),
    #[serde(serialize_with = "serialize_timestamp")]
    Timestamp(NaiveDateTime),
}

fn serialize_timestamp<S: serde::Serializer>(
    ts: &NaiveDateTime,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.serialize_str(&ts.format(TS_FORMAT).to_string())
}

impl<'de> serde::Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Value, D::Error> {
        let json = serde_json::Value::deserialize(deserializer)?;
        Value::from_json(&json).ok_or_else(|| {
            serde::de::Error::custom("expected a scalar (string, number, or boolean)")
        })
    }
}

impl Value {
    /// Accepted timestamp spellings, tried in order: RFC 3339, naive
    /// datetime (`T` or space separated), bare date (midnight), bare time
    /// (on 1970-01-01).
    pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
        if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(text) {
            return Some(dt.naive_utc());
        }
        for format in [TS_FORMAT, "%Y-%m-%d %H:%M:%S"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(text, format) {
                return Some(dt);
            }
        }
        if let Ok(date) = chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d") {
            return Some(date.and_hms_opt(0, 0, 0).expect("midnight exists"));
        }
        if let Ok(time) = chrono::NaiveTime::parse_from_str(text, "%H:%M:%S") {
            let epoch_date =
                chrono::NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch exists");
            return Some(epoch_date.and_time(time));
        }
        None
    }

    /// Converts a JSON scalar, promoting timestamp-shaped strings.
    /// Non-scalar JSON yields None.
    pub fn from_json(json: &serde_json::Value) -> Option<Value> {
        match json {
            serde_json::Value::String(s) => Some(match Value::parse_timestamp(s) {
                Some(ts) => Value::Timestamp(ts),
                None => Value::Str(s.clone()),
            }),
            serde_json::Value::Number(n) => n.as_f64().map(Value::Num),
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            _ => None,
        }
    }

    /// Parses a bare literal as written in filters and predicates: booleans,
    /// numbers, timestamps, then plain strings.
    pub fn parse_literal(text: &str) -> Value {
        match text {
            "true" => return Value::Bool(true),
            "false" => return Value::Bool(false),
            _ => {}
        }
        if let Ok(n) = text.parse::<f64>() {
            return Value::Num(n);
        }
        if let Some(ts) = Value::parse_timestamp(text) {
            return Value::Timestamp(ts);
        }
        Value::Str(text.to_string())
    }

    /// Back to JSON, timestamps in canonical display form.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::Num(n) => serde_json::Number::from_f64(*n)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Timestamp(_) => serde_json::Value::String(self.to_string()),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Timestamp(_) => "timestamp",
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            _ => None,
        }
    }

    /// Same-type comparison; values of different types do not compare.
    /// Strings that parse as timestamps are coerced when compared against a
    /// timestamp.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (Value::Num(a), Value::Num(b)) => a.partial_cmp(b),
            (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
            (Value::Timestamp(a), Value::Timestamp(b)) => Some(a.cmp(b)),
            (Value::Str(a), Value::Timestamp(b)) => {
                Value::parse_timestamp(a).map(|ts| ts.cmp(b))
            }
            (Value::Timestamp(a), Value::Str(b)) => {
                Value::parse_timestamp(b).map(|ts| a.cmp(&ts))
            }
            _ => None,
        }
    }

    /// Midpoint of two values, defined for numbers and timestamps.
    pub fn midpoint(&self, other: &Value) -> Option<Value> {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => Some(Value::Num((a + b) / 2.0)),
            (Value::Timestamp(a), Value::Timestamp(b)) => {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let half = (*hi - *lo) / 2;
                Some(Value::Timestamp(*lo + half))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => f.write_str(s),
            Value::Num(n) => {
                if n.fract() == 0.0 && n.abs() < 1e15 {
                    write!(f, "{}", *n as i64)
                } else {
                    write!(f, "{n}")
                }
            }
            Value::Bool(b) => write!(f, "{b}"),
            Value::Timestamp(ts) => write!(f, "{}", ts.format(TS_FORMAT)),
        }
    }
}
