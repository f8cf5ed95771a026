//! Run manifests and atomic artifact writes.
//!
//! Every stage collects its outputs in memory, derives the manifest digest
//! from the manifest contents (timestamp excluded), stamps each output with
//! that digest and only then writes the files, manifest last.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

pub const TOOL: &str = "atypicality";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub seed: u64,
    pub realizations: Option<usize>,
    pub strata_rule: Option<String>,
    pub percentile_rule: Option<String>,
    pub sd_substitution: Option<String>,
    pub split_scope: Option<String>,
    pub pair_mode: Option<String>,
    pub self_pairs: Option<String>,
    pub geo_version: Option<String>,
    /// Input file name to sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    /// Output file name to sha256 of its body, before the digest stamp.
    pub outputs: BTreeMap<String, String>,
    pub digest: String,
    pub created: String,
}

impl RunManifest {
    fn inherit(&mut self, upstream: &RunManifest) {
        fn take<T: Clone>(slot: &mut Option<T>, from: &Option<T>) {
            if slot.is_none() {
                slot.clone_from(from);
            }
        }
        take(&mut self.realizations, &upstream.realizations);
        take(&mut self.strata_rule, &upstream.strata_rule);
        take(&mut self.percentile_rule, &upstream.percentile_rule);
        take(&mut self.sd_substitution, &upstream.sd_substitution);
        take(&mut self.split_scope, &upstream.split_scope);
        take(&mut self.pair_mode, &upstream.pair_mode);
        take(&mut self.self_pairs, &upstream.self_pairs);
        take(&mut self.geo_version, &upstream.geo_version);
    }

    /// sha256 over the canonical JSON with `digest` and `created` blanked.
    pub fn compute_digest(&self) -> String {
        let mut blank = self.clone();
        blank.digest.clear();
        blank.created.clear();
        sha256_hex(&serde_json::to_vec(&blank).expect("manifest serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(format!("creating a file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

fn stamp(name: &str, body: &[u8], digest: &str) -> Result<Vec<u8>> {
    if name.ends_with(".json") {
        let mut value: serde_json::Value = serde_json::from_slice(body).map_err(CliError::input)?;
        if let Some(map) = value.as_object_mut() {
            map.insert("manifest".into(), digest.into());
        }
        let mut out = serde_json::to_vec_pretty(&value).map_err(CliError::input)?;
        out.push(b'\n');
        return Ok(out);
    }
    let header = if name.ends_with(".md") {
        format!("<!-- manifest: {digest} -->\n")
    } else {
        format!("# manifest: {digest}\n")
    };
    let mut out = header.into_bytes();
    out.extend_from_slice(body);
    Ok(out)
}

/// Strips the `manifest` key added to JSON artifacts.
pub fn unstamp_json(mut value: serde_json::Value) -> serde_json::Value {
    if let Some(map) = value.as_object_mut() {
        map.remove("manifest");
    }
    value
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl Context {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }
}

/// One invocation's inputs, parameters and pending outputs.
pub struct Stage {
    out: PathBuf,
    manifest_name: String,
    manifest: RunManifest,
    outputs: Vec<(String, Vec<u8>)>,
}

impl Stage {
    pub fn new(ctx: &Context, stage: &str) -> Self {
        Self::with_manifest(ctx, stage, &format!("{stage}.manifest.json"))
    }

    pub fn with_manifest(ctx: &Context, stage: &str, manifest_name: &str) -> Self {
        Self {
            out: ctx.out.clone(),
            manifest_name: manifest_name.to_string(),
            manifest: RunManifest {
                tool: TOOL.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                stage: stage.into(),
                seed: ctx.seed(),
                ..RunManifest::default()
            },
            outputs: Vec::new(),
        }
    }

    pub fn manifest_mut(&mut self) -> &mut RunManifest {
        &mut self.manifest
    }

    /// Reads an artifact from the output directory; a missing file names
    /// the subcommand that produces it.
    pub fn artifact(&mut self, rel: &str, producer: &str) -> Result<Vec<u8>> {
        let path = self.out.join(rel);
        if !path.is_file() {
            return Err(CliError::MissingArtifact {
                path,
                stage: producer.to_string(),
            });
        }
        let bytes = fs::read(&path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        self.manifest.inputs.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// Reads a user-supplied file.
    pub fn external(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        self.manifest.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    /// Copies the run settings recorded by an upstream manifest, if present.
    pub fn inherit(&mut self, manifest_rel: &str) -> Result<()> {
        let path = self.out.join(manifest_rel);
        if !path.is_file() {
            return Ok(());
        }
        let bytes = fs::read(&path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        let upstream: RunManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.manifest.inherit(&upstream);
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("parameter serializes");
        self.manifest.parameters.insert(key.to_string(), value);
    }

    pub fn output(&mut self, rel: &str, body: Vec<u8>) {
        self.outputs.retain(|(name, _)| name != rel);
        self.outputs.push((rel.to_string(), body));
    }

    /// Stamps and writes every output, then the manifest.
    pub fn commit(mut self) -> Result<RunManifest> {
        for (name, body) in &self.outputs {
            self.manifest.outputs.insert(name.clone(), sha256_hex(body));
        }
        self.manifest.digest = self.manifest.compute_digest();
        self.manifest.created = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
        for (name, body) in &self.outputs {
            let stamped = stamp(name, body, &self.manifest.digest)?;
            write_atomic(&self.out.join(name), &stamped)?;
        }
        let mut json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        json.push(b'\n');
        write_atomic(&self.out.join(&self.manifest_name), &json)?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_timestamp() {
        let mut m = RunManifest {
            stage: "score".into(),
            seed: 3,
            ..RunManifest::default()
        };
        let d = m.compute_digest();
        m.created = "2020-01-01T00:00:00Z".into();
        m.digest = "x".into();
        assert_eq!(m.compute_digest(), d);
        m.seed = 4;
        assert_ne!(m.compute_digest(), d);
    }

    #[test]
    fn stamps_by_extension() {
        let csv = stamp("a.csv", b"x\n1\n", "abc").unwrap();
        assert!(csv.starts_with(b"# manifest: abc\n"));
        let md = stamp("r.md", b"| a |\n", "abc").unwrap();
        assert!(md.starts_with(b"<!-- manifest: abc -->"));
        let json: serde_json::Value = serde_json::from_slice(&stamp("p.json", br#"{"k":1}"#, "abc").unwrap()).unwrap();
        assert_eq!(json["manifest"], "abc");
        assert_eq!(unstamp_json(json), serde_json::json!({"k": 1}));
    }

    #[test]
    fn inherits_only_unset_fields() {
        let upstream = RunManifest {
            realizations: Some(10),
            pair_mode: Some("multiset".into()),
            ..RunManifest::default()
        };
        let mut m = RunManifest {
            pair_mode: Some("dedup".into()),
            ..RunManifest::default()
        };
        m.inherit(&upstream);
        assert_eq!(m.realizations, Some(10));
        assert_eq!(m.pair_mode.as_deref(), Some("dedup"));
    }
}
