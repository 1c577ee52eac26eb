//! Flat `key = value` configuration text.
//!
//! One entry per line, `#` starts a comment, keys are dotted names such as
//! `foep.forgetting`. Lists are comma separated; matrices are written as a
//! row-major list of numbers. Later entries override earlier ones.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            kv.entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(kv)
    }

    /// Parses a single `key=value` override as given on the command line.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| Error::Config(format!("{key}: cannot parse `{v}`: {e}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        let Some(v) = self.entries.get(key) else { return Ok(None) };
        parse_list(v).map(Some).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    /// Row-major `rows x cols` matrix literal.
    pub fn get_matrix(&self, key: &str, rows: usize, cols: usize) -> Result<Option<DMatrix<f64>>> {
        let Some(values) = self.get_list::<f64>(key)? else { return Ok(None) };
        if values.len() != rows * cols {
            return Err(Error::Config(format!("{key}: expected {} entries for a {rows}x{cols} matrix, got {}", rows * cols, values.len())));
        }
        Ok(Some(DMatrix::from_row_slice(rows, cols, &values)))
    }
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let trimmed = v.trim().trim_start_matches('[').trim_end_matches(']');
    if trimmed.trim().is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split([',', ';'])
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("cannot parse `{s}`: {e}")))
        .collect()
}

/// Formats a matrix as a row-major list literal.
pub fn matrix_literal(m: &DMatrix<f64>) -> String {
    let mut parts = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            parts.push(format!("{}", m[(i, j)]));
        }
    }
    parts.join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_overrides_and_lists() {
        let kv = KeyValues::parse("# fixture\nfoep.forgetting = 0.995\nlags = 1, 2, 3\n\nname=cs1 # trailing\nlags = 1,2\n").unwrap();
        assert_eq!(kv.get::<f64>("foep.forgetting").unwrap(), Some(0.995));
        assert_eq!(kv.get_list::<usize>("lags").unwrap(), Some(vec![1, 2]));
        assert_eq!(kv.get_str("name"), Some("cs1"));
        assert_eq!(kv.get::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("just text").is_err());
        assert!(KeyValues::parse("= 3").is_err());
        let kv = KeyValues::parse("x = abc").unwrap();
        assert!(kv.get::<f64>("x").is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let kv = KeyValues::parse("m = 1, 2, 3, 4, 5, 6").unwrap();
        let m = kv.get_matrix("m", 2, 3).unwrap().unwrap();
        assert_eq!(m[(1, 0)], 4.0);
        let again = KeyValues::parse(&format!("m = {}", matrix_literal(&m))).unwrap();
        assert_eq!(again.get_matrix("m", 2, 3).unwrap().unwrap(), m);
        assert!(kv.get_matrix("m", 2, 2).is_err());
    }
}
