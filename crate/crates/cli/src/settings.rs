use std::fmt::Display;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use ramvid::config::KeyValues;
use ramvid::masking::MaskSpec;

use crate::args::Common;

/// Why a command stopped. Usage problems exit 1, everything else 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<ramvid::Error> for Failure {
    fn from(e: ramvid::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Fully resolved key/value settings of one invocation.
///
/// Precedence, lowest first: built-in defaults, `--config` file, `--set`
/// pairs, dedicated flags. Keys outside the defaults are rejected.
#[derive(Debug, Clone)]
pub struct Settings {
    kv: KeyValues,
}

impl Settings {
    pub fn resolve(
        defaults: &[(&str, &str)],
        common: &Common,
        steps_key: &str,
        extra: &[(&str, Option<String>)],
    ) -> Outcome<Self> {
        let mut kv = KeyValues::default();
        for (k, v) in defaults {
            kv.set(k, v);
        }
        if let Some(path) = &common.config {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let file = KeyValues::parse(&text).map_err(|e| usage(e.to_string()))?;
            kv = kv.merged(&file);
        }
        let mut overrides = KeyValues::default();
        for pair in &common.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{pair}'")))?;
            overrides.set(k.trim(), v.trim());
        }
        let flags: [(&str, Option<String>); 8] = [
            ("seed", common.seed.map(|v| v.to_string())),
            ("out", common.out.as_ref().map(|p| p.display().to_string())),
            ("data", common.data.as_ref().map(|p| p.display().to_string())),
            ("mask", common.mask.clone()),
            ("pu", common.pu.map(|v| v.to_string())),
            ("K", common.k.map(|v| v.to_string())),
            ("T", common.t.map(|v| v.to_string())),
            (steps_key, common.steps.map(|v| v.to_string())),
        ];
        for (k, v) in flags.iter().chain(extra) {
            if let Some(v) = v {
                overrides.set(k, v);
            }
        }
        kv = kv.merged(&overrides);
        let known: Vec<&str> = defaults.iter().map(|(k, _)| *k).collect();
        kv.reject_unknown(&known).map_err(|e| usage(e.to_string()))?;
        Ok(Self { kv })
    }

    /// Copy with one key overridden, bypassing the known-key check.
    pub fn with(&self, key: &str, value: &str) -> Settings {
        let mut kv = self.kv.clone();
        kv.set(key, value);
        Settings { kv }
    }

    pub fn key_values(&self) -> &KeyValues {
        &self.kv
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Outcome<T>
    where
        T::Err: Display,
    {
        let raw = self.str(key);
        raw.parse()
            .map_err(|e| usage(format!("config key '{key}': cannot parse '{raw}': {e}")))
    }

    pub fn str(&self, key: &str) -> &str {
        self.kv.get(key).unwrap_or("")
    }

    /// `None` for an empty value.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.str(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn required_path(&self, key: &str) -> Outcome<PathBuf> {
        self.path(key)
            .ok_or_else(|| usage(format!("'{key}' is required (flag --{key} or config key)")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Outcome<Vec<T>>
    where
        T::Err: Display,
    {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| usage(format!("config key '{key}': bad entry '{s}': {e}")))
            })
            .collect()
    }

    pub fn mask(&self, key: &str, frames: usize) -> Outcome<MaskSpec> {
        MaskSpec::parse(self.str(key), frames).map_err(|e| usage(e.to_string()))
    }
}
