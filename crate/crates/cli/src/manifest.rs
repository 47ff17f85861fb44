use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const MANIFEST_VERSION: u32 = 1;

/// Everything needed to regenerate a command's outputs.
///
/// `argv` is the exact argument list after the program name; `config` is the
/// fully resolved configuration (defaults filled in) for human readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub results: Value,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], config: Value, seed: Option<u64>) -> Self {
        RunManifest {
            format_version: MANIFEST_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: argv.to_vec(),
            config,
            seed,
            outputs: Vec::new(),
            results: Value::Null,
        }
    }

    /// Where the manifest of a primary output lives.
    pub fn path_for(primary: &Path) -> PathBuf {
        let mut s = primary.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write(&self, primary: &Path) -> Result<PathBuf, CliError> {
        let path = Self::path_for(primary);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("{}: not a run manifest: {e}", path.display())))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(CliError::input(format!(
                "{}: manifest format_version {} is not supported (expected {MANIFEST_VERSION})",
                path.display(),
                m.format_version
            )));
        }
        Ok(m)
    }
}
