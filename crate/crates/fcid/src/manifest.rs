//! Dataset manifests: CSV files listing image paths, labels, and optional
//! pair identifiers linking a natural image to its colorized twin.
//!
//! Format: header `path,label,pair_id`, one image per row, `pair_id`
//! optional. Relative paths resolve against the manifest's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::svm::Label;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub pair_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    /// Source line per entry when loaded from a file; 0 otherwise.
    lines: Vec<u64>,
}

impl DatasetManifest {
    /// Builds and validates a manifest from in-memory entries.
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self> {
        let lines = vec![0; entries.len()];
        let manifest = Self { entries, lines };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Reads and validates a manifest CSV. Relative image paths are
    /// resolved against the manifest's directory; every referenced file
    /// must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)?;

        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("path") || headers.get(1) != Some("label") {
            return Err(Error::Manifest {
                line: 1,
                msg: "expected header `path,label,pair_id`".into(),
            });
        }

        let mut entries = Vec::new();
        let mut lines = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let raw_path = record.get(0).unwrap_or("");
            if raw_path.is_empty() {
                return Err(Error::Manifest {
                    line,
                    msg: "missing image path".into(),
                });
            }
            let label: Label = record
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|msg| Error::Manifest { line, msg })?;
            let pair_id = record
                .get(2)
                .filter(|s| !s.is_empty())
                .map(|s| s.to_string());
            let raw = PathBuf::from(raw_path);
            let resolved = if raw.is_absolute() {
                raw
            } else {
                base.join(raw)
            };
            entries.push(ManifestEntry {
                path: resolved,
                label,
                pair_id,
            });
            lines.push(line);
        }

        let manifest = Self { entries, lines };
        manifest.validate()?;
        manifest.check_files_exist()?;
        Ok(manifest)
    }

    /// Writes the manifest as CSV with the stored (resolved) paths.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["path", "label", "pair_id"])?;
        for entry in &self.entries {
            writer.write_record([
                entry.path.to_string_lossy().as_ref(),
                entry.label.as_str(),
                entry.pair_id.as_deref().unwrap_or(""),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::EmptyManifest);
        }
        let mut seen: HashMap<&Path, u64> = HashMap::new();
        for (entry, &line) in self.entries.iter().zip(&self.lines) {
            if seen.insert(&entry.path, line).is_some() {
                return Err(Error::Manifest {
                    line,
                    msg: format!("duplicate path `{}`", entry.path.display()),
                });
            }
        }
        let mut pairs: HashMap<&str, Vec<(Label, u64)>> = HashMap::new();
        for (entry, &line) in self.entries.iter().zip(&self.lines) {
            if let Some(id) = &entry.pair_id {
                pairs.entry(id).or_default().push((entry.label, line));
            }
        }
        for (id, members) in pairs {
            let ok = members.len() == 2
                && members.iter().filter(|(l, _)| *l == Label::Fake).count() == 1;
            if !ok {
                return Err(Error::Manifest {
                    line: members.iter().map(|(_, l)| *l).max().unwrap_or(0),
                    msg: format!(
                        "pair `{id}` must link exactly one natural and one fake entry ({} member(s) found)",
                        members.len()
                    ),
                });
            }
        }
        Ok(())
    }

    fn check_files_exist(&self) -> Result<()> {
        for (entry, &line) in self.entries.iter().zip(&self.lines) {
            if !entry.path.is_file() {
                return Err(Error::Manifest {
                    line,
                    msg: format!("image file not found: `{}`", entry.path.display()),
                });
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.entries.iter().map(|e| e.path.clone()).collect()
    }

    /// Entry index groups that must stay together when splitting: linked
    /// pairs form one group, unpaired entries are singletons.
    pub fn pair_groups(&self) -> Vec<Vec<usize>> {
        let mut by_id: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut groups = Vec::new();
        for (i, entry) in self.entries.iter().enumerate() {
            match &entry.pair_id {
                Some(id) => by_id.entry(id).or_default().push(i),
                None => groups.push(vec![i]),
            }
        }
        // Deterministic order: by first member index.
        let mut paired: Vec<Vec<usize>> = by_id.into_values().collect();
        paired.sort_by_key(|g| g[0]);
        groups.extend(paired);
        groups.sort_by_key(|g| g[0]);
        groups
    }

    /// Sub-manifest with the given entry indices, in manifest order.
    pub fn subset(&self, indices: &[usize]) -> DatasetManifest {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        DatasetManifest {
            entries: idx.iter().map(|&i| self.entries[i].clone()).collect(),
            lines: idx.iter().map(|&i| self.lines[i]).collect(),
        }
    }

    /// Seeded 50/50 split that keeps natural/fake pairs on the same side.
    pub fn split_pairs(&self, seed: u64) -> (DatasetManifest, DatasetManifest) {
        let mut groups = self.pair_groups();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        groups.shuffle(&mut rng);
        let half = groups.len().div_ceil(2);
        let first: Vec<usize> = groups[..half].iter().flatten().copied().collect();
        let second: Vec<usize> = groups[half..].iter().flatten().copied().collect();
        (self.subset(&first), self.subset(&second))
    }
}

/// Errors unless the two manifests reference disjoint image paths.
pub fn assert_disjoint(a: &DatasetManifest, b: &DatasetManifest) -> Result<()> {
    let paths: std::collections::HashSet<&Path> =
        a.entries.iter().map(|e| e.path.as_path()).collect();
    let shared: Vec<&Path> = b
        .entries
        .iter()
        .map(|e| e.path.as_path())
        .filter(|p| paths.contains(p))
        .collect();
    if let Some(first) = shared.first() {
        return Err(Error::SplitOverlap {
            count: shared.len(),
            first: first.display().to_string(),
        });
    }
    Ok(())
}
