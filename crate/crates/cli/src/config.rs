//! Optional TOML configuration. Values here sit below flags and environment
//! variables and above built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    #[serde(default)]
    pub forge: ForgeSection,
    #[serde(default)]
    pub presample: PresampleSection,
    #[serde(default)]
    pub pref: PrefSection,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgeSection {
    /// `name=weight` list, e.g. `"short_to_tag=2,tag_to_long=1"`.
    pub tasks: Option<String>,
    pub lengths: Option<String>,
    pub samples_per_record: Option<usize>,
    pub meta_drop: Option<f64>,
    pub meta_end: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresampleSection {
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub length: Option<String>,
    pub mode: Option<String>,
    pub temperature: Option<f64>,
    pub max_new_units: Option<usize>,
    pub timeout_secs: Option<f64>,
    pub max_attempts: Option<u32>,
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefSection {
    pub base: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub ui: Option<PathBuf>,
    pub images: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Flag or environment value, then the file, then the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Parses a value that arrived through the config file as a string.
pub fn parse_file_value<T>(key: &str, raw: Option<&str>) -> Result<Option<T>, CliError>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    raw.map(|r| {
        r.parse()
            .map_err(|e| CliError::Input(format!("config key {key}: {e}")))
    })
    .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse() {
        let cfg = FileConfig::parse(
            "seed = 9\n[presample]\nbackend = \"http\"\nlength = \"short\"\n[pref]\nbase = 1500.0\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.presample.backend.as_deref(), Some("http"));
        assert_eq!(cfg.pref.base, Some(1500.0));
        assert!(FileConfig::parse("bogus = 1").is_err());
    }

    #[test]
    fn precedence() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }
}
