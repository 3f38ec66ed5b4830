//! Line-oriented `key = value` documents with typed arrays.
//!
//! Used for model files, full-precision reports and run manifests. Scalars are
//! written as `key = value`; arrays carry their shape in the key,
//! `key[r,c] = v0 v1 ...`, and are checked against it on load. Lines starting
//! with `#` are comments. Floats use the shortest round-trip representation.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(String),
    Array { shape: Vec<usize>, data: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TextDoc {
    entries: Vec<(String, Value)>,
}

impl TextDoc {
    pub fn new() -> Self {
        TextDoc::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.insert(key.into(), Value::Scalar(value.to_string()));
        self
    }

    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.set(key, fmt_f64(value))
    }

    pub fn set_array(&mut self, key: impl Into<String>, shape: &[usize], data: &[f64]) -> &mut Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.insert(
            key.into(),
            Value::Array {
                shape: shape.to_vec(),
                data: data.to_vec(),
            },
        );
        self
    }

    fn insert(&mut self, key: String, value: Value) {
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn entries(&self) -> &[(String, Value)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        match self.get(key) {
            Some(Value::Scalar(s)) => Ok(s),
            Some(_) => Err(Error::Format(format!("`{key}` is an array, expected a scalar"))),
            None => Err(Error::Format(format!("missing key `{key}`"))),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let s = self.str(key)?;
        s.parse()
            .map_err(|_| Error::Format(format!("`{key}` has unparsable value `{s}`")))
    }

    /// Array under `key`, which must have exactly `shape`.
    pub fn array(&self, key: &str, shape: &[usize]) -> Result<&[f64]> {
        match self.get(key) {
            Some(Value::Array { shape: s, data }) if s == shape => Ok(data),
            Some(Value::Array { shape: s, .. }) => Err(Error::Format(format!(
                "`{key}` has shape {s:?}, expected {shape:?}"
            ))),
            Some(_) => Err(Error::Format(format!("`{key}` is a scalar, expected an array"))),
            None => Err(Error::Format(format!("missing array `{key}`"))),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            match v {
                Value::Scalar(s) => {
                    let _ = writeln!(out, "{k} = {s}");
                }
                Value::Array { shape, data } => {
                    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
                    let _ = write!(out, "{k}[{}] =", dims.join(","));
                    for x in data {
                        let _ = write!(out, " {}", fmt_f64(*x));
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut doc = TextDoc::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected `key = value`", n + 1)))?;
            let (lhs, rhs) = (lhs.trim(), rhs.trim());
            if let Some((key, dims)) = lhs.strip_suffix(']').and_then(|l| l.split_once('[')) {
                let shape = dims
                    .split(',')
                    .map(|d| d.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Format(format!("line {}: bad shape `{dims}`", n + 1)))?;
                let data = rhs
                    .split_ascii_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Format(format!("line {}: bad number in `{key}`", n + 1)))?;
                if data.len() != shape.iter().product::<usize>() {
                    return Err(Error::Format(format!(
                        "line {}: `{key}` declares shape {shape:?} but holds {} values",
                        n + 1,
                        data.len()
                    )));
                }
                doc.insert(key.trim().to_string(), Value::Array { shape, data });
            } else {
                if lhs.is_empty() {
                    return Err(Error::Format(format!("line {}: empty key", n + 1)));
                }
                doc.insert(lhs.to_string(), Value::Scalar(rhs.to_string()));
            }
        }
        Ok(doc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TextDoc::parse_str(&text)
    }
}

/// Shortest text that parses back to the same bits (`{:?}` keeps `1.0`).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrays_round_trip_bit_exact() {
        let mut d = TextDoc::new();
        let data = [0.1, -2.5e-300, 1.0 / 3.0, 7.0, f64::MIN_POSITIVE];
        d.set("format", 1).set_array("w", &[5, 1], &data).set_f64("lr", 1e-3);
        let back = TextDoc::parse_str(&d.render()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.array("w", &[5, 1]).unwrap(), &data);
        assert!(back.array("w", &[1, 5]).is_err());
        assert_eq!(back.parse::<f64>("lr").unwrap(), 1e-3);
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        assert!(TextDoc::parse_str("w[2,2] = 1 2 3").is_err());
        assert!(TextDoc::parse_str("no equals sign").is_err());
        assert!(TextDoc::parse_str("w[x] = 1").is_err());
        let d = TextDoc::parse_str("# comment\n\na = b = c\n").unwrap();
        assert_eq!(d.str("a").unwrap(), "b = c");
    }
}
