//! Config files: a JSON object or `key = value` lines. Keys are the long
//! flag names of the subcommand (`_` and `-` are interchangeable).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command};

use crate::CliError;

/// Raw `key -> value` pairs, keys normalized to flag spelling.
#[derive(Debug, Default, PartialEq)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|m| CliError::Input(format!("{}: {m}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_lines(text)
        }
    }

    fn insert(&mut self, key: &str, value: String) -> Result<(), String> {
        let key = normalize(key);
        if key.is_empty() {
            return Err("empty key".into());
        }
        if self.values.insert(key.clone(), value).is_some() {
            return Err(format!("duplicate key `{key}`"));
        }
        Ok(())
    }

    fn parse_json(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj = value.as_object().ok_or("top level must be an object")?;
        let mut cfg = Self::default();
        for (k, v) in obj {
            cfg.insert(k, json_scalar(k, v)?)?;
        }
        Ok(cfg)
    }

    fn parse_lines(text: &str) -> Result<Self, String> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let v = v.trim().trim_matches('"').to_string();
            cfg.insert(k, v)
                .map_err(|m| format!("line {}: {m}", i + 1))?;
        }
        Ok(cfg)
    }

    /// Appends `--key value` for every file entry the command line left
    /// unset. Rejects keys that are not flags of `cmd`.
    pub fn extend_args(
        &self,
        cmd: &Command,
        matches: &ArgMatches,
        args: &mut Vec<OsString>,
    ) -> Result<(), CliError> {
        for (key, value) in &self.values {
            let arg = cmd
                .get_arguments()
                .find(|a| a.get_long() == Some(key.as_str()) && key != "config")
                .ok_or_else(|| {
                    CliError::Input(format!(
                        "unknown config key `{key}` for `{}`",
                        cmd.get_name()
                    ))
                })?;
            let id = arg.get_id().as_str();
            if matches!(matches.value_source(id), Some(ValueSource::CommandLine)) {
                continue;
            }
            match arg.get_action() {
                ArgAction::SetTrue => match value.as_str() {
                    "true" => args.push(format!("--{key}").into()),
                    "false" => {}
                    other => {
                        return Err(CliError::Input(format!(
                            "config key `{key}` must be true or false, got `{other}`"
                        )))
                    }
                },
                _ => {
                    args.push(format!("--{key}").into());
                    args.push(value.into());
                }
            }
        }
        Ok(())
    }
}

fn json_scalar(key: &str, v: &serde_json::Value) -> Result<String, String> {
    use serde_json::Value;
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) => items
            .iter()
            .map(|x| match x {
                Value::Array(_) | Value::Object(_) => {
                    Err(format!("key `{key}`: nested values are not allowed"))
                }
                _ => json_scalar(key, x),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|parts| parts.join(",")),
        Value::Null | Value::Object(_) => Err(format!("key `{key}`: expected a scalar or list")),
    }
}
