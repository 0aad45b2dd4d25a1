use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{config_hash, Common};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    ToleranceFailure,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value < tolerance`.
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value < tolerance }
    }
}

/// Writes CSV with a commented header carrying the resolved config, and the
/// JSON manifest.
pub struct Emitter {
    command: &'static str,
    config: Value,
    hash: String,
    out: Option<PathBuf>,
    manifest: Option<PathBuf>,
}

impl Emitter {
    pub fn new<C: Serialize>(command: &'static str, config: &C, common: &Common) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let hash = config_hash(&json!({ "command": command, "config": config }));
        let manifest = common.manifest.clone().or_else(|| common.out.as_ref().map(|p| p.with_extension("json")));
        Ok(Self { command, config, hash, out: common.out.clone(), manifest })
    }

    fn header(&self) -> String {
        format!(
            "# disclab {} {}\n# config-hash: sha256:{}\n# config: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.hash,
            self.config
        )
    }

    /// `--dry-run` output.
    pub fn plan(&self, steps: &[String]) {
        print!("{}", self.header());
        for s in steps {
            println!("# plan: {s}");
        }
    }

    pub fn write_csv(&self, body: &[u8]) -> Result<()> {
        let mut bytes = self.header().into_bytes();
        bytes.extend_from_slice(body);
        match &self.out {
            Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
            None => std::io::stdout().write_all(&bytes)?,
        }
        Ok(())
    }

    /// Reports the checks on stderr, writes the manifest and returns the status.
    pub fn finish(&self, checks: &[Check], extra: Value) -> Result<Status> {
        for c in checks {
            let mark = if c.pass { "ok" } else { "FAIL" };
            eprintln!("{mark:>4} {}: {:.3e} (tol {:.1e})", c.name, c.value, c.tolerance);
        }
        let status = if checks.iter().all(|c| c.pass) { Status::Pass } else { Status::ToleranceFailure };
        if let Some(p) = &self.manifest {
            let doc = json!({
                "tool": "disclab",
                "version": env!("CARGO_PKG_VERSION"),
                "command": self.command,
                "config": self.config,
                "config_hash": format!("sha256:{}", self.hash),
                "checks": checks,
                "results": extra,
                "status": if status == Status::Pass { "pass" } else { "tolerance-failure" },
            });
            let text = serde_json::to_string_pretty(&doc)? + "\n";
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(status)
    }
}

pub fn csv_body<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}
