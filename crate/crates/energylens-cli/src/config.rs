//! Config-file loading and flag/file/default resolution.
//!
//! The [`Resolver`] applies the precedence `flag > config file > default`
//! for each setting, records every resolved value for the run manifest, and
//! reports bad config values as usage errors naming the offending key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::errors::{CliError, CliResult};

/// A parsed (or absent) TOML config file.
pub struct FileConfig {
    root: toml::Table,
}

impl FileConfig {
    /// Loads `path`, or yields an empty config when no file was given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(FileConfig {
                root: toml::Table::new(),
            });
        };
        let body = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("--config {}: {e}", path.display()))
        })?;
        let root: toml::Table = body.parse().map_err(|e| {
            CliError::usage(format!("--config {}: {e}", path.display()))
        })?;
        Ok(FileConfig { root })
    }

    /// A top-level (global) key.
    pub fn global(&self, key: &str) -> Option<&toml::Value> {
        self.root.get(key)
    }

    /// A key inside the `[section]` table.
    fn section_key(&self, section: &str, key: &str) -> Option<&toml::Value> {
        self.root
            .get(section)
            .and_then(|v| v.as_table())
            .and_then(|t| t.get(key))
    }
}

fn type_error(section: &str, key: &str, expected: &str, got: &toml::Value) -> CliError {
    let path = if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    };
    CliError::usage(format!(
        "config key `{path}` must be {expected}, got `{got}`"
    ))
}

pub fn value_as_u64(value: &toml::Value, section: &str, key: &str) -> CliResult<u64> {
    match value.as_integer() {
        Some(i) if i >= 0 => Ok(i as u64),
        _ => Err(type_error(section, key, "a non-negative integer", value)),
    }
}

fn value_as_usize(value: &toml::Value, section: &str, key: &str) -> CliResult<usize> {
    value_as_u64(value, section, key).map(|v| v as usize)
}

fn value_as_u32(value: &toml::Value, section: &str, key: &str) -> CliResult<u32> {
    match value.as_integer() {
        Some(i) if i >= 0 && i <= i64::from(u32::MAX) => Ok(i as u32),
        _ => Err(type_error(section, key, "a non-negative integer", value)),
    }
}

fn value_as_f64(value: &toml::Value, section: &str, key: &str) -> CliResult<f64> {
    match value {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_error(section, key, "a number", value)),
    }
}

fn value_as_string(value: &toml::Value, section: &str, key: &str) -> CliResult<String> {
    match value.as_str() {
        Some(s) => Ok(s.to_string()),
        None => Err(type_error(section, key, "a string", value)),
    }
}

/// Resolves one command's settings against a `[section]` of the config file,
/// recording every resolved value.
pub struct Resolver<'a> {
    file: &'a FileConfig,
    section: &'static str,
    /// Resolved `key -> value` pairs, for the manifest.
    pub settings: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a FileConfig, section: &'static str) -> Self {
        Resolver {
            file,
            section,
            settings: BTreeMap::new(),
        }
    }

    fn record(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.to_string(), value.to_string());
    }

    /// Records a setting that is not flag-resolved (positional arguments,
    /// derived paths) so the manifest is complete.
    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.record(key, value);
    }

    fn file_value(&self, key: &str) -> Option<&'a toml::Value> {
        self.file.section_key(self.section, key)
    }

    pub fn usize(&mut self, key: &str, flag: Option<usize>, default: usize) -> CliResult<usize> {
        let v = match (flag, self.file_value(key)) {
            (Some(f), _) => f,
            (None, Some(v)) => value_as_usize(v, self.section, key)?,
            (None, None) => default,
        };
        self.record(key, v);
        Ok(v)
    }

    pub fn u32(&mut self, key: &str, flag: Option<u32>, default: u32) -> CliResult<u32> {
        let v = match (flag, self.file_value(key)) {
            (Some(f), _) => f,
            (None, Some(v)) => value_as_u32(v, self.section, key)?,
            (None, None) => default,
        };
        self.record(key, v);
        Ok(v)
    }

    pub fn opt_u32(&mut self, key: &str, flag: Option<u32>) -> CliResult<Option<u32>> {
        let v = match (flag, self.file_value(key)) {
            (Some(f), _) => Some(f),
            (None, Some(v)) => Some(value_as_u32(v, self.section, key)?),
            (None, None) => None,
        };
        if let Some(v) = v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn f64(&mut self, key: &str, flag: Option<f64>, default: f64) -> CliResult<f64> {
        let v = match (flag, self.file_value(key)) {
            (Some(f), _) => f,
            (None, Some(v)) => value_as_f64(v, self.section, key)?,
            (None, None) => default,
        };
        self.record(key, v);
        Ok(v)
    }

    pub fn opt_f64(&mut self, key: &str, flag: Option<f64>) -> CliResult<Option<f64>> {
        let v = match (flag, self.file_value(key)) {
            (Some(f), _) => Some(f),
            (None, Some(v)) => Some(value_as_f64(v, self.section, key)?),
            (None, None) => None,
        };
        if let Some(v) = v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn string(&mut self, key: &str, flag: Option<String>, default: &str) -> CliResult<String> {
        let v = match (flag, self.file_value(key)) {
            (Some(f), _) => f,
            (None, Some(v)) => value_as_string(v, self.section, key)?,
            (None, None) => default.to_string(),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn opt_string(&mut self, key: &str, flag: Option<String>) -> CliResult<Option<String>> {
        let v = match (flag, self.file_value(key)) {
            (Some(f), _) => Some(f),
            (None, Some(v)) => Some(value_as_string(v, self.section, key)?),
            (None, None) => None,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn opt_path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        let v = match (flag, self.file_value(key)) {
            (Some(f), _) => Some(f),
            (None, Some(v)) => {
                Some(PathBuf::from(value_as_string(v, self.section, key)?))
            }
            (None, None) => None,
        };
        if let Some(v) = &v {
            self.record(key, v.display());
        }
        Ok(v)
    }

    /// Output-path resolution: flag > config > `<out_dir>/<default_name>`.
    pub fn out_path(
        &mut self,
        key: &str,
        flag: Option<PathBuf>,
        out_dir: &Path,
        default_name: &str,
    ) -> CliResult<PathBuf> {
        let v = self
            .opt_path(key, flag)?
            .unwrap_or_else(|| out_dir.join(default_name));
        self.record(key, v.display());
        Ok(v)
    }
}

/// Parses `1,2,4`-style lists for axis flags; `flag` names the offender in
/// error messages.
pub fn parse_u32_list(raw: &str, flag: &str) -> CliResult<Vec<u32>> {
    let values: Vec<u32> = raw
        .split(',')
        .map(|part| {
            part.trim().parse::<u32>().map_err(|_| {
                CliError::usage(format!(
                    "invalid value for {flag}: `{part}` is not a positive integer"
                ))
            })
        })
        .collect::<CliResult<_>>()?;
    if values.is_empty() {
        return Err(CliError::usage(format!("{flag} must list at least one value")));
    }
    Ok(values)
}

/// Parses comma-separated training-size lists.
pub fn parse_usize_list(raw: &str, flag: &str) -> CliResult<Vec<usize>> {
    raw.split(',')
        .map(|part| {
            part.trim().parse::<usize>().map_err(|_| {
                CliError::usage(format!(
                    "invalid value for {flag}: `{part}` is not a positive integer"
                ))
            })
        })
        .collect()
}
