//! Result bundles: files plus a hash manifest, written via a temp dir and a rename.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const OUTPUT_ROOT_ENV: &str = "GVA_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "gva-out";
pub const MANIFEST: &str = "manifest.json";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_of(files: &BTreeMap<String, Vec<u8>>) -> Manifest {
    Manifest {
        files: files
            .iter()
            .map(|(p, b)| ManifestEntry { path: p.clone(), bytes: b.len(), sha256: sha256_hex(b) })
            .collect(),
    }
}

/// Writes `files` (flat names) and the manifest to `root/dir`, replacing any
/// previous bundle there. Returns the bundle path.
pub fn write_bundle(root: &Path, dir: &str, files: &BTreeMap<String, Vec<u8>>) -> CliResult<PathBuf> {
    if files.keys().any(|k| k.is_empty() || k.contains(['/', '\\']) || k == MANIFEST || k.starts_with('.')) {
        return Err(CliError::Data("bundle file names must be plain, non-hidden names".into()));
    }
    let target = root.join(dir);
    let parent = target.parent().unwrap_or(root).to_path_buf();
    fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
    let leaf = target.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(".{leaf}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    }
    fs::create_dir(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    for (name, bytes) in files {
        let p = tmp.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))?;
    }
    let mut manifest = serde_json::to_vec_pretty(&manifest_of(files))?;
    manifest.push(b'\n');
    let mp = tmp.join(MANIFEST);
    fs::write(&mp, manifest).map_err(|e| CliError::io(&mp, e))?;
    if target.exists() {
        fs::remove_dir_all(&target).map_err(|e| CliError::io(&target, e))?;
    }
    fs::rename(&tmp, &target).map_err(|e| CliError::io(&target, e))?;
    Ok(target)
}

/// Re-hashes every manifest entry; returns the names whose content differs.
pub fn verify_bundle(dir: &Path) -> CliResult<Vec<String>> {
    let mp = dir.join(MANIFEST);
    let text = fs::read(&mp).map_err(|e| CliError::io(&mp, e))?;
    let m: Manifest = serde_json::from_slice(&text)?;
    let mut bad = Vec::new();
    for e in &m.files {
        let p = dir.join(&e.path);
        let b = fs::read(&p).map_err(|err| CliError::io(&p, err))?;
        if sha256_hex(&b) != e.sha256 {
            bad.push(e.path.clone());
        }
    }
    Ok(bad)
}
