//! Optional `presetlab.toml` in the work directory. Unknown keys are ignored
//! so the same file can also configure the service.

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const DEFAULT_FILE: &str = "presetlab.toml";

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(default)]
pub struct CliConfig {
    pub schema: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub provider: Option<String>,
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads `explicit` if given (it must exist), otherwise the default file
    /// in `workdir` when present.
    pub fn discover(workdir: &Path, explicit: Option<&Path>) -> Result<Self, String> {
        let path = match explicit {
            Some(p) => workdir.join(p),
            None => {
                let p = workdir.join(DEFAULT_FILE);
                if !p.is_file() {
                    return Ok(Self::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
