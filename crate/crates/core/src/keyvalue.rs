//! Plain-text `key = value` files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. Keys
//! must be unique and, when the caller supplies an allow-list, known.

use std::collections::BTreeMap;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    /// Parses `text`. Errors carry 1-based line numbers.
    pub fn parse(text: &str, allowed: Option<&[&str]>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {line_no}: expected key=value, got {line:?}")));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line_no}: empty key")));
            }
            if let Some(allowed) = allowed {
                if !allowed.contains(&key.as_str()) {
                    return Err(Error::Config(format!(
                        "line {line_no}: unknown key {key:?} (allowed: {})",
                        allowed.join(", ")
                    )));
                }
            }
            if entries.insert(key.clone(), (v.trim().to_string(), line_no)).is_some() {
                return Err(Error::Config(format!("line {line_no}: duplicate key {key:?}")));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(_, l)| *l)
    }

    /// Inserts or overrides a value (used for command-line overrides).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (value.into(), 0));
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn context(&self, key: &str) -> String {
        match self.line_of(key) {
            Some(0) | None => format!("key {key:?}"),
            Some(l) => format!("line {l}: key {key:?}"),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    pub fn parse_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("{}: not a number: {v:?}", self.context(key)))))
            .transpose()
    }

    pub fn parse_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("{}: not a non-negative integer: {v:?}", self.context(key))))
            })
            .transpose()
    }

    pub fn parse_usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.parse_u64(key)?.map(|v| v as usize))
    }

    /// A list of numbers separated by commas and/or whitespace.
    pub fn parse_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| Error::Config(format!("{}: not a number: {t:?}", self.context(key))))
                    })
                    .collect()
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments_and_lists() {
        let kv = KeyValues::parse("# setup\na = 1.5\n\nb = 1, 2 3 # trailing\n", None).unwrap();
        assert_eq!(kv.parse_f64("a").unwrap(), Some(1.5));
        assert_eq!(kv.parse_f64_list("b").unwrap(), Some(vec![1.0, 2.0, 3.0]));
        assert_eq!(kv.get("c"), None);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = KeyValues::parse("a = 1\nnonsense\n", None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = KeyValues::parse("a = 1\nb = 2\n", Some(&["a"])).unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("unknown key"));
        let kv = KeyValues::parse("\n\nx = abc\n", None).unwrap();
        let err = kv.parse_f64("x").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(KeyValues::parse("a=1\na=2", None).is_err());
    }
}
