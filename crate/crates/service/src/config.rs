//! Service configuration: TOML file, then environment overrides, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use presetlab_core::highlight::CONDITIONED_CORPUS;
use presetlab_core::modify::EXAMPLE_COLUMNS;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProviderSpec {
    Spectral,
    File(PathBuf),
}

impl std::str::FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spectral" => Ok(ProviderSpec::Spectral),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ProviderSpec::File(PathBuf::from(p))),
                _ => Err(format!("provider must be \"spectral\" or \"file:PATH\", got {s:?}")),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopK {
    pub search: usize,
    pub examples: usize,
    pub corpus: usize,
}

impl Default for TopK {
    fn default() -> Self {
        Self {
            search: 50,
            examples: EXAMPLE_COLUMNS,
            corpus: CONDITIONED_CORPUS,
        }
    }
}

/// How `/mix` picks a seed when the request has none.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedPolicy {
    /// Use `default_seed` every time.
    Fixed,
    /// Draw a fresh seed; it is returned and logged so the mix can be replayed.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Bank file for generation 0. When unset a bank is generated.
    pub bank: Option<PathBuf>,
    /// Schema file. When unset the reference schema is used.
    pub schema: Option<PathBuf>,
    /// `spectral` or `file:PATH`.
    pub provider: String,
    pub bind: String,
    pub port: u16,
    /// Session log and generation files go here. Unset means in-memory only.
    pub state_dir: Option<PathBuf>,
    pub bank_count: usize,
    pub bank_seed: u64,
    pub top_k: TopK,
    pub seed_policy: SeedPolicy,
    pub default_seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bank: None,
            schema: None,
            provider: "spectral".into(),
            bind: "127.0.0.1".into(),
            port: 8080,
            state_dir: None,
            bank_count: 200,
            bank_seed: 0,
            top_k: TopK::default(),
            seed_policy: SeedPolicy::Random,
            default_seed: 0,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Applies `PRESETLAB_*` overrides read through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), String> {
        if let Some(v) = var("PRESETLAB_BANK") {
            self.bank = Some(v.into());
        }
        if let Some(v) = var("PRESETLAB_SCHEMA") {
            self.schema = Some(v.into());
        }
        if let Some(v) = var("PRESETLAB_PROVIDER") {
            self.provider = v;
        }
        if let Some(v) = var("PRESETLAB_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("PRESETLAB_PORT") {
            self.port = v.parse().map_err(|_| format!("PRESETLAB_PORT: bad port {v:?}"))?;
        }
        if let Some(v) = var("PRESETLAB_STATE_DIR") {
            self.state_dir = Some(v.into());
        }
        Ok(())
    }

    pub fn provider_spec(&self) -> Result<ProviderSpec, String> {
        self.provider.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_constants() {
        let c = Config::default();
        assert_eq!(c.top_k, TopK { search: 50, examples: 10, corpus: 100 });
        assert_eq!(c.provider_spec().unwrap(), ProviderSpec::Spectral);
    }

    #[test]
    fn toml_and_env_layering() {
        let mut c = Config::from_toml("port = 9000\nprovider = \"file:/tmp/e.txt\"\n[top_k]\nsearch = 7\n").unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.top_k.search, 7);
        assert_eq!(c.top_k.corpus, 100);
        assert_eq!(c.provider_spec().unwrap(), ProviderSpec::File("/tmp/e.txt".into()));
        c.apply_env(|k| (k == "PRESETLAB_PORT").then(|| "9100".to_string())).unwrap();
        assert_eq!(c.port, 9100);
        assert!(c.apply_env(|k| (k == "PRESETLAB_PORT").then(|| "x".to_string())).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_providers() {
        assert!(Config::from_toml("colour = 1").is_err());
        assert!("clap".parse::<ProviderSpec>().is_err());
        assert!("file:".parse::<ProviderSpec>().is_err());
    }
}
