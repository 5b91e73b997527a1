use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Reproducibility trace embedded in every report. Wall-clock duration is
/// printed to stderr instead of stored, so reports stay byte-identical
/// across runs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    /// File name → SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            parameters: BTreeMap::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    /// Records the digest of an input file, keyed by its role.
    pub fn input(&mut self, role: &str, path: &Path) -> std::io::Result<()> {
        let digest = Sha256::digest(fs::read(path)?);
        self.inputs.insert(role.to_string(), hex::encode(digest));
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "parameters": self.parameters,
            "inputs": self.inputs,
        })
    }

    /// `# key: value` header lines for text reports.
    pub fn to_comment_block(&self) -> String {
        let mut out = format!("# mixsar {} {}\n", env!("CARGO_PKG_VERSION"), self.command);
        for (k, v) in &self.parameters {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        for (k, v) in &self.inputs {
            out.push_str(&format!("# sha256({k}) = {v}\n"));
        }
        out
    }
}
