//! Plain-text `key = value` run configuration.
//!
//! One entry per line; `#` starts a comment line; blank lines are ignored.
//! Keys are lowercase ASCII letters, digits, `_`, `-` and `.`. Values are the
//! rest of the line with surrounding whitespace trimmed. Duplicate keys are
//! rejected. Serialization sorts keys so a resolved config is byte-stable.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'_' | b'-' | b'.'))
}

fn valid_value(v: &str) -> bool {
    !v.contains(['\n', '\r']) && v.trim() == v
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Format(format!("config line {}: expected key = value", i + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(Error::Format(format!("config line {}: invalid key '{k}'", i + 1)));
            }
            if cfg.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Format(format!("config line {}: duplicate key '{k}'", i + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        let value = value.to_string();
        if !valid_key(key) {
            return Err(Error::InvalidArgument(format!("invalid config key '{key}'")));
        }
        if !valid_value(&value) {
            return Err(Error::InvalidArgument(format!("invalid value for '{key}'")));
        }
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Entries of `other` replace those of `self`.
    pub fn merged(mut self, other: &RunConfig) -> Self {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
        self
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::InvalidArgument(format!("config key '{key}': {e}"))))
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }
}
