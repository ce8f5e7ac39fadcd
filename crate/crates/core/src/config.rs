//! Flat key=value configuration, point lists and set files.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, PointSet};

/// Output encoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::domain(format!("unknown format `{s}` (csv or json)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// One `key = value` line.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap().trim();
        if s.is_empty() {
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected key = value, found `{s}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Parse {
                line,
                message: format!("invalid key `{k}`"),
            });
        }
        if let Some(prev) = out.iter().find(|e| e.key == k) {
            return Err(Error::Parse {
                line,
                message: format!("key `{k}` already set on line {}", prev.line),
            });
        }
        out.push(Entry {
            line,
            key: k.to_string(),
            value: v.to_string(),
        });
    }
    Ok(out)
}

/// Keys every command understands.
pub const GLOBAL_KEYS: [&str; 4] = ["seed", "threads", "out", "format"];

/// Fully resolved run settings: flags over config file over defaults.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub out: Option<String>,
    pub format: Format,
    /// Command-specific keys with defaults applied.
    pub params: BTreeMap<String, String>,
}

/// Values given on the command line.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<String>,
    pub format: Option<Format>,
    pub params: BTreeMap<String, String>,
}

fn typed<T: std::str::FromStr>(e: &Entry) -> Result<T> {
    e.value.parse().map_err(|_| Error::Parse {
        line: e.line,
        message: format!("invalid value `{}` for `{}`", e.value, e.key),
    })
}

impl RunConfig {
    /// `defaults` lists the command-specific keys and their default values.
    pub fn resolve(file: &[Entry], flags: &Overrides, defaults: &[(&str, &str)]) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            seed: 0,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out: None,
            format: Format::Csv,
            params: defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        };
        for e in file {
            match e.key.as_str() {
                "seed" => cfg.seed = typed(e)?,
                "threads" => cfg.threads = typed(e)?,
                "out" => cfg.out = Some(e.value.clone()),
                "format" => {
                    cfg.format = e.value.parse().map_err(|_| Error::Parse {
                        line: e.line,
                        message: format!("invalid format `{}`", e.value),
                    })?
                }
                k if cfg.params.contains_key(k) => {
                    cfg.params.insert(k.to_string(), e.value.clone());
                }
                k => {
                    return Err(Error::Parse {
                        line: e.line,
                        message: Error::UnknownKey(k.to_string()).to_string(),
                    })
                }
            }
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(t) = flags.threads {
            cfg.threads = t;
        }
        if let Some(o) = &flags.out {
            cfg.out = Some(o.clone());
        }
        if let Some(f) = flags.format {
            cfg.format = f;
        }
        for (k, v) in &flags.params {
            if !cfg.params.contains_key(k) {
                return Err(Error::UnknownKey(k.clone()));
            }
            cfg.params.insert(k.clone(), v.clone());
        }
        if cfg.threads == 0 {
            return Err(Error::domain("threads must be positive"));
        }
        Ok(cfg)
    }

    /// `key=value` lines describing everything that affects outputs.
    pub fn echo(&self) -> Vec<String> {
        let mut v = vec![format!("seed={}", self.seed)];
        v.extend(self.params.iter().map(|(k, val)| format!("{k}={val}")));
        v
    }
}

/// Typed access to command-specific keys.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Params(pub BTreeMap<String, String>);

impl Params {
    pub fn from_pairs<I: IntoIterator<Item = (K, V)>, K: Into<String>, V: Into<String>>(it: I) -> Self {
        Params(it.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::UnknownKey(key.to_string()))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let s = self.raw(key)?;
        s.parse()
            .map_err(|_| Error::domain(format!("invalid value `{s}` for `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parsed(key)
    }

    pub fn u32(&self, key: &str) -> Result<u32> {
        self.parsed(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parsed(key)
    }

    pub fn str(&self, key: &str) -> Result<String> {
        self.raw(key).map(str::to_string)
    }

    /// Comma-separated numbers.
    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let s = self.raw(key)?;
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::domain(format!("invalid entry `{t}` in `{key}`")))
            })
            .collect()
    }

    pub fn points(&self, key: &str) -> Result<Vec<LatticePoint>> {
        parse_points(self.raw(key)?)
    }

    pub fn set(&self, key: &str) -> Result<PointSet> {
        Ok(self.points(key)?.into_iter().collect())
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }
}

/// Parses `x,y;x,y;...` (an empty string is the empty list).
pub fn parse_points(s: &str) -> Result<Vec<LatticePoint>> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (a, b) = t
                .split_once(',')
                .ok_or_else(|| Error::domain(format!("point `{t}` must be `x,y`")))?;
            let p = |v: &str| {
                v.trim()
                    .parse::<i32>()
                    .map_err(|_| Error::domain(format!("invalid coordinate in `{t}`")))
            };
            Ok(LatticePoint::new(p(a)?, p(b)?))
        })
        .collect()
}

/// Formats points as `x,y;x,y`.
pub fn format_points<'a>(pts: impl IntoIterator<Item = &'a LatticePoint>) -> String {
    pts.into_iter()
        .map(|p| format!("{},{}", p.x1, p.x2))
        .collect::<Vec<_>>()
        .join(";")
}

/// Set files: one `x y` integer pair per line, `#` comments.
pub fn parse_set_file(text: &str) -> Result<PointSet> {
    let mut set = PointSet::new();
    for (i, raw) in text.lines().enumerate() {
        let s = raw.split('#').next().unwrap().trim();
        if s.is_empty() {
            continue;
        }
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected two integers `x y`, found {} tokens", toks.len()),
            });
        }
        let c = |t: &str| {
            t.parse::<i32>().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("invalid integer `{t}`"),
            })
        };
        set.insert(LatticePoint::new(c(toks[0])?, c(toks[1])?));
    }
    if set.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "set file contains no points".into(),
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_precedence_and_unknown_keys() {
        let file = parse_kv("# c\nseed = 5\nn = 16\n").unwrap();
        let flags = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        let c = RunConfig::resolve(&file, &flags, &[("n", "8"), ("u", "1")]).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.params["n"], "16");
        assert_eq!(c.params["u"], "1");
        let bad = parse_kv("zzz = 1").unwrap();
        match RunConfig::resolve(&bad, &Overrides::default(), &[]) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let d = RunConfig::resolve(&[], &Overrides::default(), &[]).unwrap();
        assert_eq!(d.seed, 0);
    }

    #[test]
    fn set_files() {
        assert_eq!(parse_set_file("0 0\n1 0\n").unwrap().len(), 2);
        assert!(matches!(parse_set_file("0 0\n1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_kv("a = 1\nnot a pair"), Err(Error::Parse { line: 2, .. })));
        assert_eq!(parse_points("0,0; -3,2").unwrap()[1], LatticePoint::new(-3, 2));
    }
}
