//! Provenance headers and all-or-nothing file output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::spec::ExperimentSpec;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub spec_sha256: String,
}

impl Provenance {
    pub fn of(spec: &ExperimentSpec) -> Self {
        let canonical = serde_json::to_vec(spec).expect("spec serializes");
        let digest = Sha256::digest(&canonical);
        Provenance {
            tool: "dcsi",
            version: env!("CARGO_PKG_VERSION"),
            seed: spec.seed(),
            spec_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }

    /// Comment line placed above CSV and table output.
    pub fn header_line(&self) -> String {
        format!("# {} {} seed={} spec_sha256={}\n", self.tool, self.version, self.seed, self.spec_sha256)
    }
}

pub fn json_document(prov: &Provenance, spec: &ExperimentSpec, result: Value) -> String {
    let doc = json!({ "provenance": prov, "spec": spec, "result": result });
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

/// Write through a temporary file in the target directory, then rename, so
/// a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
