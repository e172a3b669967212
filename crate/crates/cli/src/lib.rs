//! Batch commands behind the `stepforge` binary.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub mod analyze;
pub mod bench;
pub mod config;
pub mod simulate;
pub mod steps;

/// Exit code for a clean run.
pub const EXIT_OK: i32 = 0;
/// Exit code when some subjects failed and the rest were processed.
pub const EXIT_PARTIAL: i32 = 1;
/// Exit code for configuration or input errors that stop the run.
pub const EXIT_FATAL: i32 = 2;

/// Per-subject bookkeeping of a batch command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub succeeded: usize,
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }
}

/// Regular, non-hidden files in `dir` accepted by `filter`, sorted by path.
pub fn list_inputs(dir: &Path, filter: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.with_context(|| format!("reading directory {}", dir.display()))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && path.is_file() && filter(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Output file name with the sensitivity suffix applied, e.g.
/// `subject_summaries_min1days.csv`.
pub fn output_name(stem: &str, suffix: &str) -> String {
    format!("{stem}{suffix}.csv")
}
