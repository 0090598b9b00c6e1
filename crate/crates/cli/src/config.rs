//! Resolution of run settings: command-line flag, then config file, then default.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use lasso_recovery::io::read_key_values;
use serde::Serialize;

use crate::CliError;

/// Comma-separated list value, e.g. `sigmas = 0, 0.1, 0.2`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<T>().map_err(|_| format!("cannot parse list entry {v:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub config_file: Option<String>,
    pub settings: BTreeMap<String, String>,
}

pub struct Settings {
    file: BTreeMap<String, String>,
    file_path: Option<String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => read_key_values(p)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            file_path: path.map(|p| p.display().to_string()),
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        })
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        self.used.insert(key.to_string());
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse {raw:?}"))),
        }
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let file = self.file_value(key)?;
        let value = flag.or(file);
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.optional(key, flag)?.ok_or_else(|| {
            CliError::Usage(format!("missing required setting `{key}` (flag --{})", key.replace('_', "-")))
        })
    }

    /// Boolean switch: on when the flag is given or the file sets it to `true`.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = flag || self.file_value::<bool>(key)?.unwrap_or(false);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn finish(self, command: &str) -> Result<RunConfig, CliError> {
        if let Some(key) = self.file.keys().find(|k| !self.used.contains(*k)) {
            return Err(CliError::Usage(format!("unknown config key `{key}` for `{command}`")));
        }
        Ok(RunConfig { command: command.to_string(), config_file: self.file_path, settings: self.resolved })
    }
}

pub fn check(key: &str, ok: bool, expected: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!("setting `{key}` out of range: expected {expected}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_file(text: &str) -> (tempfile::TempDir, Settings) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, text).unwrap();
        let s = Settings::load(Some(&path)).unwrap();
        (dir, s)
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let (_d, mut s) = with_file("seed = 7\ntol = 1e-6\n");
        assert_eq!(s.value::<u64>("seed", Some(9), 0).unwrap(), 9);
        assert_eq!(s.value::<f64>("tol", None, 1e-8).unwrap(), 1e-6);
        assert_eq!(s.value::<f64>("lambda", None, 2.0).unwrap(), 2.0);
        let cfg = s.finish("solve").unwrap();
        assert_eq!(cfg.settings["seed"], "9");
    }

    #[test]
    fn unknown_file_key_is_named() {
        let (_d, mut s) = with_file("lamda = 2\n");
        s.value::<f64>("lambda", None, 1.0).unwrap();
        match s.finish("solve") {
            Err(CliError::Usage(msg)) => assert!(msg.contains("`lamda`")),
            _ => panic!("expected usage error"),
        }
    }

    #[test]
    fn missing_and_malformed() {
        let (_d, mut s) = with_file("lambda = abc\n");
        assert!(matches!(s.required::<f64>("lambda", None), Err(CliError::Usage(_))));
        let mut s = Settings::load(None).unwrap();
        match s.required::<f64>("lambda_min", None) {
            Err(CliError::Usage(msg)) => assert!(msg.contains("--lambda-min")),
            _ => panic!(),
        }
    }

    #[test]
    fn lists() {
        let l: List<f64> = "0, 0.1,0.2".parse().unwrap();
        assert_eq!(l.0, vec![0.0, 0.1, 0.2]);
        assert_eq!(l.to_string(), "0,0.1,0.2");
        assert!("1,x".parse::<List<f64>>().is_err());
    }
}
