//! Flat `key = value` configuration files.
//!
//! One scalar per key, `#` starts a comment, blank lines are ignored. Keys are
//! namespaced with dots (`radar.n_range`, `opt.iters_ba`, ...). Readers consume
//! the keys they understand; [`KvConfig::finish`] reports anything left over so
//! typos surface as errors instead of silently falling back to defaults.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KvConfig {
    source: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
    used: RefCell<BTreeSet<String>>,
}

impl KvConfig {
    pub fn empty() -> Self {
        Self::parse_str("", "<empty>").expect("empty config parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, path)
    }

    pub fn parse_str(text: &str, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(&source, line_no, format!("expected `key = value`, got `{line}`")));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(Error::parse(&source, line_no, "empty key or value"));
            }
            if entries.insert(k.to_string(), (v.to_string(), line_no)).is_some() {
                return Err(Error::parse(&source, line_no, format!("duplicate key `{k}`")));
            }
        }
        Ok(Self { source, entries, used: RefCell::new(BTreeSet::new()) })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        let (v, _) = self.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v.as_str())
    }

    /// Typed lookup; absent keys yield `None`, unparsable values an error with
    /// the offending line.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some((v, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        self.used.borrow_mut().insert(key.to_string());
        v.parse::<T>()
            .map(Some)
            .map_err(|e| Error::parse(&self.source, *line, format!("bad value for `{key}`: {e}")))
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Overwrites `slot` when the key is present.
    pub fn set<T>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(_, l)| *l)
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    /// Errors if any key was never read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        if let Some((k, (_, line))) = self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            return Err(Error::parse(&self.source, *line, format!("unknown key `{k}`")));
        }
        Ok(())
    }
}

/// Accumulates `key = value` lines for writing a configuration back out.
#[derive(Debug, Default, Clone)]
pub struct KvWriter {
    out: String,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.out.push_str("# ");
        self.out.push_str(text);
        self.out.push('\n');
        self
    }

    pub fn put(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.out.push_str(&format!("{key} = {value}\n"));
        self
    }

    pub fn finish(self) -> String {
        self.out
    }
}
