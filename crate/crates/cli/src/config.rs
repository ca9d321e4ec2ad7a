//! Layered settings: command-line flag, then config file, then default.
//! Every resolved value is recorded so the run manifest holds the full
//! effective configuration.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

pub struct Settings {
    file: Table,
    resolved: Table,
}

impl Settings {
    /// Reads a flat TOML file. A file with a `[config]` table (such as a
    /// run manifest) contributes that table instead of its root.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            None => Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut table: Table = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                match table.remove("config") {
                    Some(Value::Table(inner)) => inner,
                    _ => table,
                }
            }
        };
        Ok(Self { file, resolved: Table::new() })
    }

    fn file_value<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.file
            .get(key)
            .map(|v| v.clone().try_into::<T>().with_context(|| format!("config key `{key}` has the wrong type")))
            .transpose()
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        if let Ok(v) = Value::try_from(value) {
            self.resolved.insert(key.to_string(), v);
        }
    }

    pub fn get<T: Serialize + DeserializeOwned>(&mut self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        let value = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Like [`Settings::get`] without a default.
    pub fn optional<T: Serialize + DeserializeOwned>(&mut self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &value {
            self.record(key, v);
        }
        Ok(value)
    }

    pub fn resolved(&self) -> &Table {
        &self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "epochs = 7\nlr = 0.5\n").unwrap();
        let mut s = Settings::load(Some(&path)).unwrap();
        assert_eq!(s.get(Some(3usize), "epochs", 20).unwrap(), 3);
        assert_eq!(s.get(None, "lr", 1e-4).unwrap(), 0.5);
        assert_eq!(s.get(None, "seed", 9u64).unwrap(), 9);
        assert_eq!(s.resolved().len(), 3);
        assert!(s.get::<String>(None, "epochs", String::new()).is_err());
    }

    #[test]
    fn manifest_config_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(&path, "command = \"train\"\n[config]\nepochs = 4\n").unwrap();
        let mut s = Settings::load(Some(&path)).unwrap();
        assert_eq!(s.get(None, "epochs", 20usize).unwrap(), 4);
    }
}
