//! Option resolution: command-line flag, then config file, then default.
//!
//! The config file is flat `key = value` text; `#` starts a comment and
//! keys are the long flag names with `-` or `_`. A run manifest (JSON) is
//! also accepted, in which case its `config` object is used, so any run
//! can be repeated with `--config <manifest>`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};

/// Misuse of the command line or config file; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn canonical(key: &str) -> String {
    key.trim().replace('-', "_")
}

pub fn parse_config_text(text: &str, source: &str) -> Result<BTreeMap<String, String>> {
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| usage(format!("{source}: not a valid manifest: {e}")))?;
        let obj = v
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| usage(format!("{source}: manifest has no config object")))?;
        return obj
            .iter()
            .map(|(k, v)| match v.as_str() {
                Some(s) => Ok((canonical(k), s.to_string())),
                None => Err(usage(format!(
                    "{source}: config value for '{k}' is not a string"
                ))),
            })
            .collect();
    }
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{source}:{}: expected key = value", n + 1)))?;
        let k = canonical(k);
        if k.is_empty() {
            return Err(usage(format!("{source}:{}: empty key", n + 1)));
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(usage(format!("{source}:{}: duplicate key '{k}'", n + 1)));
        }
    }
    Ok(map)
}

/// Resolved options of one run, in resolution order.
pub struct Settings {
    file: BTreeMap<String, String>,
    source: String,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let (file, source) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                (
                    parse_config_text(&text, &p.display().to_string())?,
                    p.display().to_string(),
                )
            }
            None => (BTreeMap::new(), String::new()),
        };
        Ok(Settings {
            file,
            source,
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        })
    }

    #[cfg(test)]
    pub fn from_map(file: BTreeMap<String, String>) -> Self {
        Settings {
            file,
            source: "test".into(),
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        }
    }

    fn lookup<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(text.parse::<T>().map_err(|e| {
                    usage(format!(
                        "{}: bad value '{text}' for {key}: {e}",
                        self.source
                    ))
                })?),
                None => None,
            },
        };
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self
            .lookup(key, flag)?
            .ok_or_else(|| usage(format!("missing required --{}", key.replace('_', "-"))))?;
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?;
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.require(key, flag.map(DisplayPath)).map(|p| p.0)
    }

    pub fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        Ok(self.optional(key, flag.map(DisplayPath))?.map(|p| p.0))
    }

    /// Flags are on when set on the command line or `true` in the file.
    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        self.get(key, flag.then_some(true), false)
    }

    /// Fails on config keys no option of this subcommand consumed.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self
            .file
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if !unknown.is_empty() {
            let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(usage(format!(
                "{}: unknown config keys: {}",
                self.source,
                list.join(", ")
            )));
        }
        Ok(())
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

/// `PathBuf` with the `FromStr`/`Display` pair `Settings` needs.
struct DisplayPath(PathBuf);

impl FromStr for DisplayPath {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(DisplayPath(PathBuf::from(s)))
    }
}

impl Display for DisplayPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.display())
    }
}

/// Comma-separated list of values.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("'{p}': {e}")))
            .collect::<Result<Vec<T>, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Writes `manifest` as pretty JSON; the file is the run's record.
pub fn write_manifest(
    path: &Path,
    command: &str,
    seed: u64,
    settings: &Settings,
    outputs: &[PathBuf],
) -> Result<()> {
    let manifest = serde_json::json!({
        "tool": "remnet",
        "cli_version": env!("CARGO_PKG_VERSION"),
        "library_version": remnet::VERSION,
        "formats": {
            "checkpoint": remnet::remnet::CHECKPOINT_VERSION,
            "qmodel": remnet::quant::QMODEL_VERSION,
        },
        "command": command,
        "seed": seed,
        "config": settings.resolved(),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing manifest {}", path.display()))?;
    Ok(())
}
