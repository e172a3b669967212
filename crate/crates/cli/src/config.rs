//! Flat `key = value` run configuration with environment overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use stepforge::detectors::{DetectorConfig, BUILTIN_DETECTORS};
use stepforge::ingest::RawFileSchema;
use stepforge::model::AnalysisConfig;
use stepforge::summaries::{AcParams, MimsParams};

/// Prefix of environment variables that override configuration keys.
pub const ENV_PREFIX: &str = "STEPFORGE_";

/// Environment variables read by the command line itself rather than mapped
/// onto configuration keys.
pub const RESERVED_ENV: &[&str] = &["CONFIG", "SEED", "JOBS", "OUT", "LOG", "NHANES_DIR"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub analysis: AnalysisConfig,
    pub detectors: DetectorConfig,
    pub raw: RawFileSchema,
    pub ac: AcParams,
    pub mims: MimsParams,
}

impl RunConfig {
    /// Routes `raw.*`, `ac.*`, `mims.*`, `detectors` and `<detector>.*` keys to
    /// their parameter groups; anything else is an analysis key.
    pub fn set(&mut self, key: &str, value: &str) -> stepforge::Result<()> {
        let key = key.trim();
        if let Some(k) = key.strip_prefix("raw.") {
            return self.raw.set(k, value);
        }
        if let Some(k) = key.strip_prefix("ac.") {
            return self.ac.set(k, value).map_err(|e| prefix_error(e, "ac."));
        }
        if let Some(k) = key.strip_prefix("mims.") {
            return self.mims.set(k, value).map_err(|e| prefix_error(e, "mims."));
        }
        let family = key.split('.').next().unwrap_or_default();
        if key == "detectors" || (key.contains('.') && BUILTIN_DETECTORS.contains(&family)) {
            return self.detectors.set(key, value);
        }
        self.analysis.set(key, value.trim())
    }

    /// Applies every `key = value` line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<()> {
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`", source.display(), i + 1);
            };
            self.set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", source.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, path)
    }

    /// `STEPFORGE_MIN_VALID_DAYS=1` sets `min_valid_days`; a double underscore
    /// stands for a dot, as in `STEPFORGE_SPECTRAL__WINDOW_SECONDS`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (name, value) in vars {
            let suffix = &name[ENV_PREFIX.len()..];
            if RESERVED_ENV.contains(&suffix) {
                continue;
            }
            let key = suffix.to_ascii_lowercase().replace("__", ".");
            match self.set(&key, &value) {
                Ok(()) => {}
                Err(stepforge::Error::UnknownKey(_)) => log::warn!("ignoring {name}: no configuration key `{key}`"),
                Err(e) => return Err(e).with_context(|| format!("environment variable {name}")),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.analysis.validate()?;
        self.detectors.validate()?;
        Ok(())
    }
}

fn prefix_error(e: stepforge::Error, prefix: &str) -> stepforge::Error {
    match e {
        stepforge::Error::UnknownKey(k) => stepforge::Error::UnknownKey(format!("{prefix}{k}")),
        stepforge::Error::InvalidValue { key, reason } => stepforge::Error::InvalidValue {
            key: format!("{prefix}{key}"),
            reason,
        },
        other => other,
    }
}
