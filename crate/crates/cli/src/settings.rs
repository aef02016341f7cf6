//! `key = value` config files and flag/file/default resolution.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use llt_core::{Error, Result};

pub const OUTPUT_DIR_ENV: &str = "LLT_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "llt-out";

/// Values read from a TOML-style `key = value` file. Keys may use dashes or
/// underscores. Every key must be consumed by the subcommand, so typos are
/// reported instead of silently ignored.
#[derive(Debug, Default)]
pub struct FileSettings {
    values: HashMap<String, String>,
    used: RefCell<BTreeSet<String>>,
    origin: Option<PathBuf>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl FileSettings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (k, v) in table {
            let text = match v {
                toml::Value::String(s) => s,
                toml::Value::Array(items) => items
                    .iter()
                    .map(|i| match i {
                        toml::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            values.insert(normalize(&k), text);
        }
        Ok(FileSettings {
            values,
            used: RefCell::default(),
            origin: Some(path.to_path_buf()),
        })
    }

    fn raw(&self, key: &str) -> Option<&String> {
        let v = self.values.get(key);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    /// Flag if given, else the file value, else `None`.
    pub fn opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.raw(key).cloned();
        if flag.is_some() {
            return Ok(flag);
        }
        from_file
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| Error::Config(format!("config key `{key}` = `{s}`: {e}")))
            })
            .transpose()
    }

    pub fn get<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    /// A boolean switch: set by the flag, or by `key = true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.opt::<bool>(None, key)?.unwrap_or(false))
    }

    /// Comma-separated list.
    pub fn list<T>(&self, flag: Option<Vec<T>>, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.raw(key).cloned();
        if flag.is_some() {
            return Ok(flag);
        }
        from_file
            .map(|s| {
                s.split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| {
                        t.trim()
                            .parse::<T>()
                            .map_err(|e| Error::Config(format!("config key `{key}` item `{t}`: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Output directory: flag, file, `LLT_OUTPUT_DIR`, then `llt-out`.
    pub fn out_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        if let Some(dir) = self.opt(flag, "out-dir")? {
            return Ok(dir);
        }
        Ok(std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)))
    }

    /// Fails on file keys that no resolution step asked for.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let mut unknown: Vec<&String> = self.values.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            return Ok(());
        }
        unknown.sort();
        let origin = self.origin.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
        Err(Error::Config(format!(
            "unknown key(s) in config file {origin}: {}",
            unknown.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
        )))
    }
}
