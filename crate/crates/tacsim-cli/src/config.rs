//! Error taxonomy for the exit-code contract plus JSON config loading.
//!
//! Every subcommand resolves its options as defaults, then the `--config`
//! file, then explicit flags, so a config file can pin a whole experiment
//! while a flag tweaks one field on top.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use tacsim_core::CoreError;

/// Exit codes: 0 success, 1 skill failure or stall, 2 usage, 3 internal.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or config: exit code 2.
    Usage(String),
    /// Runtime failure that is not a scenario outcome: exit code 3.
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Loads a command config from JSON, or the type's defaults without a file.
/// Unknown fields and malformed values are usage errors; serde's message
/// carries the offending line and field.
pub fn load_config<T>(path: Option<&Path>) -> CliResult<T>
where
    T: DeserializeOwned + Default,
{
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Deserialize, Default, PartialEq, Debug)]
    #[serde(default, deny_unknown_fields)]
    struct Demo {
        seed: u64,
        name: String,
    }

    #[test]
    fn missing_path_yields_defaults() {
        let d: Demo = load_config(None).unwrap();
        assert_eq!(d, Demo::default());
    }

    #[test]
    fn file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"seed": 9}"#).unwrap();
        let d: Demo = load_config(Some(&p)).unwrap();
        assert_eq!(d.seed, 9);
        assert_eq!(d.name, "");
    }

    #[test]
    fn unknown_field_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"sed": 9}"#).unwrap();
        let err = load_config::<Demo>(Some(&p)).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)), "{err:?}");
    }

    #[test]
    fn malformed_json_reports_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, "{\n  \"seed\": }\n").unwrap();
        let err = load_config::<Demo>(Some(&p)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }
}
