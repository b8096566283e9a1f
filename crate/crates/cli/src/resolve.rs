use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use traj_anticipation::config::RunConfig;
use traj_anticipation::{Error, Result};

pub const RESOLVED_CONFIG: &str = "resolved_config.txt";

/// Reads settings from a merged config, filling defaults, and records every
/// value it hands out so the run can be repeated from the record alone.
pub struct Resolver {
    source: RunConfig,
    resolved: RunConfig,
}

impl Resolver {
    /// `file` entries are overridden by `flags`. The `command` key, when
    /// present, must name this command.
    pub fn new(command: &str, file: Option<&Path>, flags: RunConfig) -> Result<Self> {
        let base = match file {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::new(),
        };
        let source = base.merged(&flags);
        if let Some(c) = source.get("command") {
            if c != command {
                return Err(Error::InvalidArgument(format!("config is for command '{c}', not '{command}'")));
            }
        }
        let mut resolved = RunConfig::new();
        resolved.set("command", command)?;
        Ok(Self { source, resolved })
    }

    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.source.parsed_or(key, default)?;
        self.resolved.set(key, &v)?;
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v: Option<T> = self.source.parsed(key)?;
        if let Some(v) = &v {
            self.resolved.set(key, v)?;
        }
        Ok(v)
    }

    pub fn path(&mut self, key: &str) -> Result<PathBuf> {
        self.optional::<String>(key)?
            .map(PathBuf::from)
            .ok_or_else(|| Error::InvalidArgument(format!("missing required setting '{key}'")))
    }

    /// The record of everything read. Fails on keys no setting consumed.
    pub fn finish(self) -> Result<RunConfig> {
        if let Some(k) = self.source.keys().find(|k| !self.resolved.contains(k)) {
            return Err(Error::InvalidArgument(format!("unknown setting '{k}'")));
        }
        Ok(self.resolved)
    }
}

/// Builds the flag layer from `(key, value)` pairs, skipping absent flags.
pub fn flags<'a>(pairs: impl IntoIterator<Item = (&'a str, Option<String>)>) -> Result<RunConfig> {
    let mut cfg = RunConfig::new();
    for (k, v) in pairs {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_defaults_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.txt");
        std::fs::write(&file, "command = train\nseed = 4\nlr = 0.5\n").unwrap();
        let mut r = Resolver::new("train", Some(&file), flags([("lr", Some("0.25".into())), ("t", None)]).unwrap()).unwrap();
        assert_eq!(r.get("seed", 0u64).unwrap(), 4);
        assert_eq!(r.get("lr", 1.0f64).unwrap(), 0.25);
        assert_eq!(r.get("t", 8usize).unwrap(), 8);
        assert_eq!(r.finish().unwrap().to_text(), "command = train\nlr = 0.25\nseed = 4\nt = 8\n");
    }

    #[test]
    fn unknown_and_mismatched_keys_rejected() {
        let r = Resolver::new("eval", None, flags([("bogus", Some("1".into()))]).unwrap()).unwrap();
        assert!(r.finish().is_err());
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.txt");
        std::fs::write(&file, "command = train\n").unwrap();
        assert!(Resolver::new("eval", Some(&file), RunConfig::new()).is_err());
    }
}
