use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::manifest::{ArtifactManifest, MANIFEST_FILE};
use super::store::{load_model, Artifact};
use super::tensor::{Tensor, TensorError};
use super::{io_err, ArtifactError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    Manifest,
    MissingFile,
    Unreadable,
    BadMagic,
    BadVersion,
    LengthMismatch,
    DimMismatch,
    NonFinite,
    Structure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    /// Path relative to the artifact root.
    pub file: String,
    pub kind: FindingKind,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}: {}", self.file, self.kind, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub tensors_checked: usize,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }

    fn push(&mut self, file: &str, kind: FindingKind, message: impl Into<String>) {
        self.findings.push(Finding {
            file: file.to_string(),
            kind,
            message: message.into(),
        });
    }
}

fn check_file(root: &Path, rel: &str, expected: Option<&[usize]>, report: &mut ValidationReport) {
    report.tensors_checked += 1;
    let bytes = match fs::read(root.join(rel)) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return report.push(rel, FindingKind::MissingFile, "referenced file does not exist");
        }
        Err(e) => return report.push(rel, FindingKind::Unreadable, e.to_string()),
    };
    let tensor = match Tensor::decode(&bytes) {
        Ok(t) => t,
        Err(e) => {
            let kind = match e {
                TensorError::BadMagic(_) => FindingKind::BadMagic,
                TensorError::BadVersion(_) => FindingKind::BadVersion,
                _ => FindingKind::LengthMismatch,
            };
            return report.push(rel, kind, e.to_string());
        }
    };
    if let Some(dims) = expected {
        if tensor.dims() != dims {
            report.push(
                rel,
                FindingKind::DimMismatch,
                format!("manifest says {dims:?}, header says {:?}", tensor.dims()),
            );
        }
    }
    let bad = tensor.data().iter().filter(|v| !v.is_finite()).count();
    if bad > 0 {
        let first = tensor.data().iter().position(|v| !v.is_finite()).unwrap_or(0);
        report.push(
            rel,
            FindingKind::NonFinite,
            format!("{bad} non-finite values, first at flat index {first}"),
        );
    }
}

fn bin_files(root: &Path, dir: &Path, out: &mut BTreeSet<String>) -> Result<(), ArtifactError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            bin_files(root, &path, out)?;
        } else if path.extension().is_some_and(|e| e == "bin") {
            let rel = path.strip_prefix(root).expect("under root");
            out.insert(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Checks every tensor in `root`: the manifest's references against their
/// recorded dims, plus any other `.bin` file for format and finiteness.
///
/// Returns `Err` only when `root` itself cannot be read; problems with its
/// contents are findings.
pub fn validate(root: impl AsRef<Path>) -> Result<ValidationReport, ArtifactError> {
    let root = root.as_ref();
    let mut files = BTreeSet::new();
    bin_files(root, root, &mut files)?;
    let mut report = ValidationReport::default();

    let manifest: Option<ArtifactManifest> = match fs::read(root.join(MANIFEST_FILE)) {
        Err(e) => {
            report.push(MANIFEST_FILE, FindingKind::Manifest, e.to_string());
            None
        }
        Ok(bytes) => match serde_json::from_slice(&bytes) {
            Ok(m) => Some(m),
            Err(e) => {
                report.push(MANIFEST_FILE, FindingKind::Manifest, e.to_string());
                None
            }
        },
    };

    if let Some(m) = &manifest {
        for r in m.tensor_refs() {
            check_file(root, &r.file, Some(&r.dims), &mut report);
            files.remove(&r.file);
        }
    }
    for rel in &files {
        check_file(root, rel, None, &mut report);
    }

    if manifest.is_some() && report.is_ok() {
        let structural = Artifact::load(root).map(drop).and_then(|_| load_model(root).map(drop));
        if let Err(e) = structural {
            report.push(MANIFEST_FILE, FindingKind::Structure, e.to_string());
        }
    }
    Ok(report)
}
