//! Flat `key = value` configuration files layered under command-line flags.
//!
//! Precedence is command line, then file, then built-in defaults. Keys that
//! no layer below the command line knows about are rejected, so typos in a
//! file surface as errors instead of being ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed `key = value` lines; `#` starts a comment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvFile {
    pub values: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(format!("duplicate key `{k}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    CommandLine,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::CommandLine => "cli",
        })
    }
}

/// The merged configuration of one command.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResolvedConfig {
    entries: BTreeMap<String, (String, Source)>,
}

impl ResolvedConfig {
    /// Merges the layers. Every key of `file` and `cli` must appear in
    /// `defaults`; use an empty default for keys without one.
    pub fn resolve(
        defaults: &[(&str, &str)],
        file: Option<&KvFile>,
        cli: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut entries: BTreeMap<String, (String, Source)> = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), (v.to_string(), Source::Default)))
            .collect();
        let layers = file
            .map(|f| (&f.values, Source::File))
            .into_iter()
            .chain(std::iter::once((cli, Source::CommandLine)));
        for (values, source) in layers {
            for (k, v) in values {
                match entries.get_mut(k) {
                    Some(slot) => *slot = (v.clone(), source),
                    None => {
                        return Err(Error::invalid(format!(
                            "unknown config key `{k}` (from {source})"
                        )))
                    }
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries
            .get(key)
            .map(|(v, _)| v.as_str())
            .filter(|v| !v.is_empty())
    }

    pub fn source(&self, key: &str) -> Option<Source> {
        self.entries.get(key).map(|(_, s)| *s)
    }

    /// Parses a value; a missing or empty value is an error.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .raw(key)
            .ok_or_else(|| Error::invalid(format!("config key `{key}` has no value")))?;
        raw.parse()
            .map_err(|_| Error::invalid(format!("config key `{key}`: cannot parse `{raw}`")))
    }

    /// Like [`ResolvedConfig::get`] but `None` for an empty value.
    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    /// A comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.raw(key).unwrap_or("");
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| {
                    Error::invalid(format!("config key `{key}`: cannot parse list item `{s}`"))
                })
            })
            .collect()
    }

    /// `key -> value` for the manifest, with each value's origin appended
    /// as ` (source)`.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, (v, s))| (k.clone(), format!("{v} ({s})")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULTS: &[(&str, &str)] = &[
        ("lr", "0.001"),
        ("epochs", "100"),
        ("depths", "2,12"),
        ("batch", ""),
    ];

    #[test]
    fn precedence_cli_file_default() {
        let file = KvFile::parse(
            "lr = 0.01\n# comment\nepochs=5 # trailing\n",
            Path::new("c"),
        )
        .unwrap();
        let mut cli = BTreeMap::new();
        cli.insert("epochs".to_string(), "7".to_string());
        let c = ResolvedConfig::resolve(DEFAULTS, Some(&file), &cli).unwrap();
        assert_eq!(c.get::<f64>("lr").unwrap(), 0.01);
        assert_eq!(c.source("lr"), Some(Source::File));
        assert_eq!(c.get::<usize>("epochs").unwrap(), 7);
        assert_eq!(c.source("epochs"), Some(Source::CommandLine));
        assert_eq!(c.get_list::<usize>("depths").unwrap(), vec![2, 12]);
        assert_eq!(c.get_opt::<usize>("batch").unwrap(), None);
        assert_eq!(c.snapshot()["lr"], "0.01 (file)");
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let file = KvFile::parse("lrr = 1\n", Path::new("c")).unwrap();
        assert!(ResolvedConfig::resolve(DEFAULTS, Some(&file), &BTreeMap::new()).is_err());
        assert!(matches!(
            KvFile::parse("a=1\nnoequals\n", Path::new("c")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            KvFile::parse("a=1\na=2\n", Path::new("c")),
            Err(Error::Parse { line: 2, .. })
        ));
        let c = ResolvedConfig::resolve(DEFAULTS, None, &BTreeMap::new()).unwrap();
        assert!(c.get::<f64>("batch").is_err());
        let mut cli = BTreeMap::new();
        cli.insert("lr".to_string(), "fast".to_string());
        let c = ResolvedConfig::resolve(DEFAULTS, None, &cli).unwrap();
        assert!(c.get::<f64>("lr").is_err());
    }
}
