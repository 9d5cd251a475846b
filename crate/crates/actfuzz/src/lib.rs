//! Command-line harness around the `actfuzz-core` engine: model
//! checkpoints, campaign directories, the three shipped experiments, and
//! reporting over finished campaigns.

pub mod campaign;
pub mod experiments;
pub mod formats;
pub mod report;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Compares two campaign directories file by file and returns the
/// relative paths whose bytes differ (or that exist on one side only).
/// `meta.json` carries wall-clock timestamps and is excluded; everything
/// else in a deterministic rerun must match exactly.
pub fn compare_campaign_dirs(a: &Path, b: &Path) -> Result<Vec<PathBuf>> {
    fn collect(root: &Path, prefix: &Path, out: &mut BTreeSet<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(root.join(prefix))
            .with_context(|| format!("listing {}", root.join(prefix).display()))?
        {
            let entry = entry?;
            let rel = prefix.join(entry.file_name());
            if entry.file_type()?.is_dir() {
                collect(root, &rel, out)?;
            } else if rel != Path::new("meta.json") {
                out.insert(rel);
            }
        }
        Ok(())
    }

    let mut names = BTreeSet::new();
    collect(a, Path::new(""), &mut names)?;
    collect(b, Path::new(""), &mut names)?;

    let mut differing = Vec::new();
    for rel in names {
        let (pa, pb) = (a.join(&rel), b.join(&rel));
        let same = match (fs::read(&pa), fs::read(&pb)) {
            (Ok(ba), Ok(bb)) => ba == bb,
            _ => false,
        };
        if !same {
            differing.push(rel);
        }
    }
    Ok(differing)
}
