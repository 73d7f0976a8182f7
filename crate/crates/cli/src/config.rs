//! Flat `key = value` configuration files with dotted section prefixes.
//! Values are numbers, bare strings, or bracketed comma lists; `#`
//! starts a comment. Hand-editable and diff-friendly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key '{}': {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.to_string(), message: message.into() }
}

/// A parsed configuration: ordered map of dotted keys to raw values.
#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(
                    &format!("line {}", lineno + 1),
                    format!("expected 'key = value', got '{line}'"),
                ));
            };
            let key = k.trim();
            if key.is_empty() || key.split('.').count() > 2 {
                return Err(err(key, "keys are 'name' or 'section.name'"));
            }
            entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(&path.display().to_string(), format!("cannot read: {e}")))?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> {
        self.entries
            .keys()
            .filter(move |k| k.starts_with(prefix))
            .map(|k| k.as_str())
    }

    pub fn string(&self, key: &str) -> Result<String, ConfigError> {
        self.raw(key)
            .map(|s| s.to_string())
            .ok_or_else(|| err(key, "missing"))
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        let s = self.raw(key).ok_or_else(|| err(key, "missing"))?;
        s.parse().map_err(|_| err(key, format!("not a number: '{s}'")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(_) => self.f64(key),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        let s = self.raw(key).ok_or_else(|| err(key, "missing"))?;
        s.parse().map_err(|_| err(key, format!("not an integer: '{s}'")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(_) => self.usize(key),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(err(key, format!("expected true/false, got '{other}'"))),
        }
    }

    pub fn vector(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let s = self.raw(key).ok_or_else(|| err(key, "missing"))?;
        let inner = s
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| err(key, "expected a bracketed list like [1, 2, 3]"))?;
        inner
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| err(key, format!("bad number '{}'", t.trim())))
            })
            .collect()
    }

    /// The full resolved snapshot for the manifest.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_vectors_comments() {
        let c = Config::parse(
            "# comment\nsystem.masses = [1, 2.5]\nphi.h = 1.0  # trailing\nphi.mode = free\n",
        )
        .unwrap();
        assert_eq!(c.vector("system.masses").unwrap(), vec![1.0, 2.5]);
        assert_eq!(c.f64("phi.h").unwrap(), 1.0);
        assert_eq!(c.string("phi.mode").unwrap(), "free");
        assert!(c.f64("phi.tau").is_err());
        assert_eq!(c.f64_or("phi.tau", 2.0).unwrap(), 2.0);
    }

    #[test]
    fn errors_name_the_key() {
        let c = Config::parse("phi.h = abc\n").unwrap();
        let e = c.f64("phi.h").unwrap_err();
        assert_eq!(e.key, "phi.h");
        assert!(Config::parse("a.b.c = 1\n").is_err());
        assert!(Config::parse("justaline\n").is_err());
    }
}
