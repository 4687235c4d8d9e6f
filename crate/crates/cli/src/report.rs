use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mixlab_core::mixing::{DecayCurve, RateFit};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct IoError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub exit_code: i32,
    pub config: RunConfig,
    /// Wall-clock seconds per stage.
    pub stages: BTreeMap<String, f64>,
    /// `pass`, `fail` or `skipped` per certificate or check.
    pub verdicts: BTreeMap<String, String>,
    /// Scalar results by name.
    pub results: BTreeMap<String, f64>,
    /// Diagnostics of failed stages.
    pub notes: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_fit: Option<String>,
    pub files: Vec<FileEntry>,
}

/// Output directory that remembers every file written through it.
pub struct OutDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, IoError> {
        fs::create_dir_all(root).map_err(|source| IoError { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), IoError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|source| IoError { path: path.clone(), source })?;
        self.files.push(FileEntry { path: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() });
        Ok(())
    }

    /// Renders with `f` into memory, then writes.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), IoError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|source| IoError { path: self.root.join(name), source })?;
        self.write(name, &buf)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }
}

/// Writes `k,tv`, `k,fit` and `k,residual` files for `curve`. The fitted
/// column covers every `k`; residuals cover the fit window only. Returns
/// the largest absolute residual.
pub fn emit_plotdata(curve: &DecayCurve, fit: Option<&RateFit>, out: &mut OutDir, prefix: &str) -> Result<f64, IoError> {
    let mut tv = String::from("k,tv\n");
    let mut fitted = String::from("k,fit\n");
    let mut residual = String::from("k,residual\n");
    let mut worst = 0.0f64;
    for (k, v) in curve.tv.iter().enumerate() {
        tv.push_str(&format!("{k},{v}\n"));
        if let Some(fit) = fit {
            let p = fit.predict(k);
            fitted.push_str(&format!("{k},{p}\n"));
            if (fit.k_range.0..=fit.k_range.1).contains(&k) {
                residual.push_str(&format!("{k},{}\n", v - p));
                worst = worst.max((v - p).abs());
            }
        }
    }
    out.write(&format!("{prefix}_tv.csv"), tv.as_bytes())?;
    out.write(&format!("{prefix}_fit.csv"), fitted.as_bytes())?;
    out.write(&format!("{prefix}_residual.csv"), residual.as_bytes())?;
    Ok(worst)
}

pub fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<(), IoError> {
    let path = dir.join("manifest.toml");
    let text = toml::to_string(manifest).expect("manifest serializes");
    let mut f = fs::File::create(&path).map_err(|source| IoError { path: path.clone(), source })?;
    f.write_all(text.as_bytes()).map_err(|source| IoError { path, source })
}
