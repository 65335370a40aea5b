//! Flat `key = value` text dialect used for model, profile and run
//! definitions.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Keys are kept sorted so serialized output is deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            kv.insert_assignment(line)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(kv)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply one `key=value` assignment (as given to `--set`).
    pub fn insert_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("empty key in `{assignment}`")));
        }
        self.entries.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn set_real<T: Real>(&mut self, key: impl Into<String>, value: T) {
        // Display of f64 is the shortest string that parses back exactly
        self.set(key, value.as_f64());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    pub fn parse_value<V: FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<V>()
                .map(Some)
                .map_err(|e| Error::Config(format!("`{key}` = `{s}`: {e}"))),
        }
    }

    pub fn real<T: Real>(&self, key: &str) -> Result<Option<T>> {
        Ok(self.parse_value::<f64>(key)?.map(T::lit))
    }

    pub fn real_or<T: Real>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.real(key)?.unwrap_or(default))
    }

    pub fn require_real<T: Real>(&self, key: &str) -> Result<T> {
        self.real(key)?
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    /// Entries whose key starts with `prefix`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KeyValues {
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
            .collect();
        KeyValues { entries }
    }

    /// Insert every entry of `other` under `prefix`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(format!("{prefix}{k}"), v.clone());
        }
    }

    /// Overlay `other` on top of `self` (other wins).
    pub fn overlay(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for KeyValues {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KeyValues::parse("# header\n kind = ideal-gas \n\nN=100 # trailing\n").unwrap();
        assert_eq!(kv.get("kind"), Some("ideal-gas"));
        assert_eq!(kv.parse_value::<usize>("N").unwrap(), Some(100));
    }

    #[test]
    fn rejects_missing_equals() {
        let err = KeyValues::parse("kind ideal-gas").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn sections_and_prefixes() {
        let kv =
            KeyValues::parse("profile.kind=uniform-window\nprofile.e_max=1\nmodel.N=3").unwrap();
        let p = kv.section("profile.");
        assert_eq!(p.get("kind"), Some("uniform-window"));
        assert!(!p.contains("N"));
        let mut back = KeyValues::new();
        back.merge_prefixed("profile.", &p);
        assert_eq!(back.get("profile.e_max"), Some("1"));
    }

    #[test]
    fn display_round_trips() {
        let mut kv = KeyValues::new();
        kv.set_real("x", 0.1_f64 + 0.2);
        kv.set("name", "a b");
        let again = KeyValues::parse(&kv.to_string()).unwrap();
        assert_eq!(again, kv);
        assert_eq!(again.real::<f64>("x").unwrap(), Some(0.1 + 0.2));
    }
}
