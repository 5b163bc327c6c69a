//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Keys are matched
//! case-sensitively against the fields of the target config.

use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Parses `key = value` lines. Later duplicates win when applied in order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(format!("line {}", lineno + 1), "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::new(format!("line {}", lineno + 1), "empty key"));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Parses a `key=value` override as given on the command line.
pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| ConfigError::new(arg, "expected key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub(crate) fn parse_value<T: FromStr>(field: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e: T::Err| ConfigError::new(field, format!("cannot parse `{value}`: {e}")))
}

pub(crate) fn parse_bool(field: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::new(field, format!("expected a boolean, got `{value}`"))),
    }
}

/// Parses `a,b` into a pair.
pub(crate) fn parse_range<T: FromStr>(field: &str, value: &str) -> Result<(T, T), ConfigError>
where
    T::Err: Display,
{
    let (a, b) = value
        .split_once(',')
        .ok_or_else(|| ConfigError::new(field, format!("expected `min,max`, got `{value}`")))?;
    Ok((parse_value(field, a.trim())?, parse_value(field, b.trim())?))
}
