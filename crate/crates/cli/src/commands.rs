use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use scanlens_core::artifact::{extract, Artifact, ArtifactManifest, ExtractConfig, ValidationReport};
use scanlens_core::images::ImageSource;
use scanlens_core::orders::{locality_score, permutation, OrderError};
use scanlens_core::{GridShape, ScanOrder};

/// Reads an extraction config from TOML (`.toml`) or JSON (anything else).
pub fn load_config(path: &Path) -> Result<ExtractConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(anyhow::Error::from)
    } else {
        serde_json::from_str(&text).map_err(anyhow::Error::from)
    };
    parsed.with_context(|| format!("parsing config {}", path.display()))
}

pub fn run_extract(config: &Path, images: &str, out: &Path, seed: Option<u64>) -> Result<ArtifactManifest> {
    let cfg = load_config(config)?;
    let source = ImageSource::parse(images)?;
    let seed = seed.unwrap_or(cfg.model.seed);
    let manifest = extract(&cfg, &source, out, seed)?;
    for note in &manifest.notes {
        tracing::warn!("{note}");
    }
    Ok(manifest)
}

pub fn describe_report(report: &ValidationReport) -> String {
    let mut s = String::new();
    for f in &report.findings {
        let _ = writeln!(s, "{f}");
    }
    let _ = writeln!(
        s,
        "{} tensors checked, {} findings",
        report.tensors_checked,
        report.findings.len()
    );
    s
}

/// Permutation table and locality score for one order on one grid.
pub fn describe_order(shape: GridShape, order: ScanOrder) -> Result<String, OrderError> {
    let perm = permutation(order, shape)?;
    let mut s = String::new();
    let _ = writeln!(s, "order {} on {shape}", order.name());
    let forward: Vec<String> = perm.forward().iter().map(usize::to_string).collect();
    let _ = writeln!(s, "sequence -> canonical: {}", forward.join(" "));
    let width = (shape.patch_count() - 1).to_string().len();
    let _ = writeln!(s, "sequence position per patch:");
    for r in 0..shape.rows() {
        let row: Vec<String> = (0..shape.cols())
            .map(|c| format!("{:>width$}", perm.inverse()[r * shape.cols() + c]))
            .collect();
        let _ = writeln!(s, "  {}", row.join(" "));
    }
    match locality_score(order, shape) {
        Ok(score) => {
            let _ = writeln!(s, "locality score: {score:.6}");
        }
        Err(OrderError::DegenerateGrid(_)) => {
            let _ = writeln!(s, "locality score: undefined for a single patch");
        }
        Err(e) => return Err(e),
    }
    Ok(s)
}

pub async fn serve(artifact_dir: &Path, host: &str, port: u16) -> Result<()> {
    let artifact = Artifact::load(artifact_dir)
        .with_context(|| format!("loading artifact {}", artifact_dir.display()))?;
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .with_context(|| format!("bad listen address {host}:{port}"))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(
        "serving {} ({} stages) on http://{}",
        artifact_dir.display(),
        artifact.stages().len(),
        listener.local_addr()?
    );
    axum::serve(listener, crate::api::router(Arc::new(artifact))).await?;
    Ok(())
}

pub fn parse_order(s: &str) -> Result<ScanOrder> {
    match s.parse() {
        Ok(o) => Ok(o),
        Err(e) => bail!("{e}; known orders: {}", ScanOrder::ALL.map(|o| o.name()).join(", ")),
    }
}
