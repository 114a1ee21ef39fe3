//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Each settings type
//! implements [`KeyValue`] and claims the keys it understands, so one file
//! can configure several stages.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin}:{line}: expected `key = value`")]
    Malformed { origin: String, line: usize },
    #[error("{origin}:{line}: unknown key {key:?}")]
    UnknownKey { origin: String, line: usize, key: String },
    #[error("{origin}:{line}: invalid value for {key}: {reason}")]
    InvalidValue { origin: String, line: usize, key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_entries(text: &str, origin: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Malformed { origin: origin.into(), line: i + 1 })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(ConfigError::Malformed { origin: origin.into(), line: i + 1 });
        }
        out.push(Entry { key: key.to_string(), value: v.trim().to_string(), line: i + 1 });
    }
    Ok(out)
}

pub fn read_entries(path: &Path) -> Result<Vec<Entry>, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_entries(&text, &path.display().to_string())
}

/// A settings struct that can be updated from string key/value pairs.
pub trait KeyValue {
    /// Applies `key = value`. Returns `Ok(false)` for keys this type does not
    /// own and `Err(reason)` for owned keys with bad values.
    fn set(&mut self, key: &str, value: &str) -> Result<bool, String>;
}

/// Applies every entry to the first target that claims it; unclaimed keys
/// are errors.
pub fn apply_entries(entries: &[Entry], origin: &str, targets: &mut [&mut dyn KeyValue]) -> Result<(), ConfigError> {
    'entries: for e in entries {
        for t in targets.iter_mut() {
            match t.set(&e.key, &e.value) {
                Ok(true) => continue 'entries,
                Ok(false) => {}
                Err(reason) => {
                    return Err(ConfigError::InvalidValue {
                        origin: origin.into(),
                        line: e.line,
                        key: e.key.clone(),
                        reason,
                    })
                }
            }
        }
        return Err(ConfigError::UnknownKey { origin: origin.into(), line: e.line, key: e.key.clone() });
    }
    Ok(())
}

/// Parses a value, rendering the parse error as a string.
pub fn parse_value<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| format!("{value:?}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct Demo {
        rate: f64,
        name: String,
    }

    impl KeyValue for Demo {
        fn set(&mut self, key: &str, value: &str) -> Result<bool, String> {
            match key {
                "rate" => self.rate = parse_value(value)?,
                "name" => self.name = value.to_string(),
                _ => return Ok(false),
            }
            Ok(true)
        }
    }

    #[test]
    fn parses_and_applies() {
        let entries = parse_entries("# c\n\nrate = 0.5\nname=a b = c\n", "t").unwrap();
        assert_eq!(entries[1], Entry { key: "name".into(), value: "a b = c".into(), line: 4 });
        let mut d = Demo::default();
        apply_entries(&entries, "t", &mut [&mut d]).unwrap();
        assert_eq!((d.rate, d.name.as_str()), (0.5, "a b = c"));
    }

    #[test]
    fn errors_name_the_line() {
        assert!(matches!(parse_entries("rate\n", "t"), Err(ConfigError::Malformed { line: 1, .. })));
        let mut d = Demo::default();
        let e = parse_entries("rate = x\n", "t").unwrap();
        assert!(matches!(apply_entries(&e, "t", &mut [&mut d]), Err(ConfigError::InvalidValue { line: 1, .. })));
        let e = parse_entries("\nbogus = 1\n", "t").unwrap();
        let err = apply_entries(&e, "t", &mut [&mut d]).unwrap_err();
        assert_eq!(err.to_string(), "t:2: unknown key \"bogus\"");
    }
}
