use std::fmt::Debug;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use log::warn;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Every setting a subcommand can take, from flags or from a TOML file.
/// Unset fields fall back to per-command defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    pub instance: Option<String>,
    pub solver: Option<String>,
    pub kernel: Option<String>,
    pub mu: Option<String>,
    pub policy: Option<String>,
    #[serde(alias = "T")]
    pub horizon: Option<u64>,
    pub horizons: Option<Vec<u64>>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
    pub weight: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub zeta: Option<f64>,
    pub fallback: Option<String>,
    pub k: Option<u64>,
    pub irreducible: Option<bool>,
    pub rho: Option<f64>,
    pub alt: Option<String>,
}

impl Settings {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Combines flags with a config file. The file wins on conflicts.
    pub fn merge(flags: Settings, file: Settings) -> Settings {
        macro_rules! merge {
            ($($field:ident),*) => {
                Settings { $($field: pick(stringify!($field), flags.$field, file.$field)),* }
            };
        }
        merge!(
            instance, solver, kernel, mu, policy, horizon, horizons, runs, seed, weight, out, format, threads, zeta,
            fallback, k, irreducible, rho, alt
        )
    }

    pub fn require_seed(&self) -> anyhow::Result<u64> {
        self.seed.context("this command is stochastic; pass --seed or set `seed` in the config file")
    }

    pub fn require_instance(&self) -> anyhow::Result<&str> {
        self.instance.as_deref().context("missing --instance (a JSON file or a builtin id)")
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }
}

fn pick<T: PartialEq + Debug>(key: &str, flag: Option<T>, file: Option<T>) -> Option<T> {
    match (flag, file) {
        (Some(f), Some(c)) => {
            if f != c {
                warn!("config file sets `{key}` = {c:?}, overriding the flag value {f:?}");
            }
            Some(c)
        }
        (f, None) => f,
        (None, c) => c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_wins_and_unset_fields_pass_through() {
        let flags = Settings { seed: Some(1), runs: Some(10), ..Default::default() };
        let file: Settings = toml::from_str("seed = 7\nzeta = 3.0").unwrap();
        let merged = Settings::merge(flags, file);
        assert_eq!(merged.seed, Some(7));
        assert_eq!(merged.runs, Some(10));
        assert_eq!(merged.zeta, Some(3.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("sede = 7").is_err());
    }

    #[test]
    fn capital_t_is_accepted() {
        let s: Settings = toml::from_str("T = 1024\nformat = \"json\"").unwrap();
        assert_eq!(s.horizon, Some(1024));
        assert_eq!(s.format, Some(Format::Json));
    }
}
