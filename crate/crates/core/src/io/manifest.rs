//! Tab-separated index of distillation pairs.
//!
//! One row per image: `image_path<TAB>feature_path[<TAB>gray_feature_path]`.
//! Lines starting with `#` and blank lines are ignored. Relative paths are
//! resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub image: PathBuf,
    pub features: PathBuf,
    pub gray_features: Option<PathBuf>,
}

pub fn parse_manifest(text: &str, base: &Path, origin: &Path) -> Result<Vec<ManifestRow>> {
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::format(
                origin,
                format!("line {}: expected 2 or 3 tab-separated paths", lineno + 1),
            ));
        }
        rows.push(ManifestRow {
            image: resolve(fields[0]),
            features: resolve(fields[1]),
            gray_features: fields.get(2).map(|f| resolve(f)),
        });
    }
    Ok(rows)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base, path)
}

/// Writes rows with paths relative to the manifest directory when possible.
pub fn write_manifest(path: &Path, rows: &[ManifestRow], header: &[String]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
    let mut out = String::new();
    for h in header {
        out.push_str(&format!("# {h}\n"));
    }
    for row in rows {
        out.push_str(&rel(&row.image));
        out.push('\t');
        out.push_str(&rel(&row.features));
        if let Some(g) = &row.gray_features {
            out.push('\t');
            out.push_str(&rel(g));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
