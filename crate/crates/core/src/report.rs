use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// A single report entry value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(i64),
    Flag(bool),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{:?}` on f64 round-trips exactly and keeps `inf`/`NaN` readable.
            Value::Num(x) => write!(f, "{x:?}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Flag(b) => write!(f, "{b}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

/// Ordered key/value record of a verification run.
///
/// Serializes as one `name=value` line per entry. Boolean entries are the
/// pass/fail flags; [`Report::passed`] is true iff all of them are true.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, Value)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        self.push(key, Value::Num(v))
    }

    pub fn int(&mut self, key: &str, v: i64) -> &mut Self {
        self.push(key, Value::Int(v))
    }

    pub fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        self.push(key, Value::Flag(v))
    }

    pub fn text(&mut self, key: &str, v: &str) -> &mut Self {
        self.push(key, Value::Text(v.to_string()))
    }

    fn push(&mut self, key: &str, v: Value) -> &mut Self {
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        if let Some(slot) = self.entries.iter_mut().find(|(k, _)| k == key) {
            slot.1 = v;
        } else {
            self.entries.push((key.to_string(), v));
        }
        self
    }

    /// Appends every entry of `other` with `prefix.` prepended to its key.
    pub fn merge(&mut self, prefix: &str, other: &Report) -> &mut Self {
        for (k, v) in &other.entries {
            let key = if prefix.is_empty() {
                k.clone()
            } else {
                alloc::format!("{prefix}.{k}")
            };
            self.push(&key, v.clone());
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_num(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Value::Num(x) => Some(*x),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn get_flag(&self, key: &str) -> Option<bool> {
        match self.get(key)? {
            Value::Flag(b) => Some(*b),
            _ => None,
        }
    }

    pub fn entries(&self) -> &[(String, Value)] {
        &self.entries
    }

    /// True iff every boolean entry is true.
    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|(_, v)| !matches!(v, Value::Flag(false)))
    }

    /// Keys of the boolean entries that are false.
    pub fn failures(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, v)| matches!(v, Value::Flag(false)))
            .map(|(k, _)| k.as_str())
            .collect()
    }

    /// Parses the `name=value` text form. Numbers, integers and booleans are
    /// recognized; anything else is kept as text.
    pub fn parse(text: &str) -> Self {
        let mut r = Report::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            let value = if v == "true" {
                Value::Flag(true)
            } else if v == "false" {
                Value::Flag(false)
            } else if let Ok(i) = v.parse::<i64>() {
                Value::Int(i)
            } else if let Ok(x) = v.parse::<f64>() {
                Value::Num(x)
            } else {
                Value::Text(v.to_string())
            };
            r.push(k, value);
        }
        r
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}
