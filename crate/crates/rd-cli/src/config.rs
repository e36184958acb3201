//! Flat key-value experiment configuration.
//!
//! The format is one `key = value` pair per line with dotted key names,
//! `#` starting a comment anywhere, and blank lines ignored. Every accessor
//! reports the offending line number on failure, and [`Config::finish`]
//! rejects keys that no accessor consumed, so typos surface instead of
//! silently falling back to defaults.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
    used: Cell<bool>,
}

#[derive(Debug)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(config_err(format!(
                    "line {line}: expected `key = value`, got `{stripped}`"
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(config_err(format!("line {line}: empty key")));
            }
            if value.is_empty() {
                return Err(config_err(format!("line {line}: key `{key}` has no value")));
            }
            if let Some(prev) = entries.get(&key) {
                let Entry { line: first, .. } = prev;
                return Err(config_err(format!(
                    "line {line}: duplicate key `{key}` (first set on line {first})"
                )));
            }
            entries.insert(
                key,
                Entry {
                    line,
                    value,
                    used: Cell::new(false),
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            config_err(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        let entry = self.entries.get(key)?;
        entry.used.set(true);
        Some(entry)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|e| e.value.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str, CliError> {
        self.get_str(key)
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        let Some(entry) = self.raw(key) else {
            return Ok(None);
        };
        match entry.value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(config_err(format!(
                "line {}: key `{key}`: expected a finite number, got `{}`",
                entry.line, entry.value
            ))),
        }
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, CliError> {
        self.get_f64(key)?
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        let Some(entry) = self.raw(key) else {
            return Ok(None);
        };
        entry.value.parse::<usize>().map(Some).map_err(|_| {
            config_err(format!(
                "line {}: key `{key}`: expected a nonnegative integer, got `{}`",
                entry.line, entry.value
            ))
        })
    }

    pub fn require_usize(&self, key: &str) -> Result<usize, CliError> {
        self.get_usize(key)?
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        let Some(entry) = self.raw(key) else {
            return Ok(None);
        };
        entry.value.parse::<u64>().map(Some).map_err(|_| {
            config_err(format!(
                "line {}: key `{key}`: expected a nonnegative integer, got `{}`",
                entry.line, entry.value
            ))
        })
    }

    /// Comma-separated list of numbers, e.g. `bif.taus = 0.25, 0.5, 1`.
    pub fn require_f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let entry = self
            .raw(key)
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))?;
        let mut out = Vec::new();
        for part in entry.value.split(',') {
            let part = part.trim();
            match part.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    return Err(config_err(format!(
                        "line {}: key `{key}`: expected comma-separated numbers, got `{part}`",
                        entry.line
                    )))
                }
            }
        }
        if out.is_empty() {
            return Err(config_err(format!(
                "line {}: key `{key}`: the list is empty",
                entry.line
            )));
        }
        Ok(out)
    }

    /// Comma-separated refinement levels, each `n:dt`,
    /// e.g. `verify.levels = 64:4e-3, 128:2e-3, 256:1e-3`.
    pub fn require_levels(&self, key: &str) -> Result<Vec<(usize, f64)>, CliError> {
        let entry = self
            .raw(key)
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))?;
        let mut out = Vec::new();
        for part in entry.value.split(',') {
            let part = part.trim();
            let parsed = part.split_once(':').and_then(|(n, dt)| {
                let n = n.trim().parse::<usize>().ok()?;
                let dt = dt.trim().parse::<f64>().ok().filter(|v| v.is_finite())?;
                Some((n, dt))
            });
            match parsed {
                Some(level) => out.push(level),
                None => {
                    return Err(config_err(format!(
                        "line {}: key `{key}`: expected `n:dt` pairs, got `{part}`",
                        entry.line
                    )))
                }
            }
        }
        if out.is_empty() {
            return Err(config_err(format!(
                "line {}: key `{key}`: the list is empty",
                entry.line
            )));
        }
        Ok(out)
    }

    /// Line number of a key that was already read, for error reporting.
    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|e| e.line).unwrap_or(0)
    }

    /// Fail on keys nothing consumed: these are almost always typos.
    pub fn finish(&self) -> Result<(), CliError> {
        for (key, entry) in &self.entries {
            if !entry.used.get() {
                return Err(config_err(format!(
                    "line {}: unrecognized key `{key}`",
                    entry.line
                )));
            }
        }
        Ok(())
    }
}
