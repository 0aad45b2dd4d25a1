use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// CSV destination (stdout when absent).
    #[arg(long, short, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// JSON manifest destination. Defaults to the output path with a `.json`
    /// extension when `--out` is given.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Print the resolved plan and exit without computing.
    #[arg(long)]
    pub dry_run: bool,
}

/// Parses counts written as `1000000`, `1_000_000` or `1e6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let t = s.trim().replace('_', "");
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = t.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if !(v >= 0.0) || v.fract() != 0.0 || v > 9_007_199_254_740_992.0 {
        return Err(format!("`{s}` is not a nonnegative integer"));
    }
    Ok(v as u64)
}

pub fn parse_size(s: &str) -> Result<usize, String> {
    parse_count(s).and_then(|v| usize::try_from(v).map_err(|_| format!("`{s}` is too large")))
}

/// Overlays the non-null fields of `flags` on the config file, if any.
pub fn overlay<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Path>) -> Result<T> {
    let mut merged = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            serde_json::to_value(table)?
        }
        None => Value::Object(Default::default()),
    };
    if let (Some(base), Value::Object(top)) = (merged.as_object_mut(), serde_json::to_value(flags)?) {
        for (k, v) in top {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(merged).context("invalid configuration")
}

/// Hex SHA-256 of the canonical JSON encoding.
pub fn config_hash(value: &Value) -> String {
    format!("{:x}", Sha256::digest(value.to_string().as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(parse_count("1e6").unwrap(), 1_000_000);
        assert_eq!(parse_count("10_007").unwrap(), 10_007);
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }
}
