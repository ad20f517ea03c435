//! Flat `key = value` text format used by config, spec and checkpoint
//! headers. `#` starts a comment; blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut map = KvMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = k.trim().to_string();
            if map.entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::config(format!("bad value `{v}` for `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.parse_value(key)?
            .ok_or_else(|| Error::config(format!("missing key `{key}`")))
    }

    /// Overwrites `slot` when `key` is present.
    pub fn read_into<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.parse_value(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Comma-separated list value.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| Error::config(format!("bad list item `{s}` for `{key}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Serializes in sorted key order, one `key = value` per line.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let text = "# grid\nseqs = 10, 20,50\nlr=0.001  # tuned\n\nname = a=b\n";
        let kv = KvMap::parse(text, Path::new("x")).unwrap();
        assert_eq!(kv.list::<usize>("seqs").unwrap().unwrap(), vec![10, 20, 50]);
        assert_eq!(kv.require::<f64>("lr").unwrap(), 0.001);
        assert_eq!(kv.get("name"), Some("a=b"));
        assert!(kv.require::<f64>("missing").is_err());
    }

    #[test]
    fn reports_line_numbers() {
        let err = KvMap::parse("a = 1\nnot a pair\n", Path::new("spec.txt")).unwrap_err();
        assert!(err.to_string().contains("spec.txt:2"), "{err}");
        let err = KvMap::parse("a = 1\na = 2\n", Path::new("spec.txt")).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn float_display_roundtrips() {
        let mut kv = KvMap::new();
        let v = 0.1f64 + 0.2;
        kv.set("x", v);
        let back = KvMap::parse(&kv.to_text(), Path::new("t")).unwrap();
        assert_eq!(back.require::<f64>("x").unwrap().to_bits(), v.to_bits());
    }
}
