use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::load_image;
use crate::error::{Error, Result};
use crate::image::Image;

pub const REAL: u8 = 0;
pub const FAKE: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    /// Path relative to the dataset root.
    pub path: PathBuf,
    pub label: u8,
}

/// `root/{real,fake}/*.{png,jpg,jpeg}` indexed real first, then fake, each in
/// lexicographic path order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub root: PathBuf,
    pub entries: Vec<Entry>,
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(real, fake)` counts.
    pub fn counts(&self) -> (usize, usize) {
        let fake = self.entries.iter().filter(|e| e.label == FAKE).count();
        (self.entries.len() - fake, fake)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn load(&self, index: usize) -> Result<Image<f32>> {
        load_image(&self.root.join(&self.entries[index].path))
    }

    pub fn require_both_classes(&self) -> Result<()> {
        match self.counts() {
            (0, _) => Err(Error::SingleClass(format!("{} has no real images", self.root.display()))),
            (_, 0) => Err(Error::SingleClass(format!("{} has no fake images", self.root.display()))),
            _ => Ok(()),
        }
    }
}

/// Indexes and validates a dataset directory; every file is decoded once.
pub fn load_dataset(root: &Path) -> Result<LabeledDataset> {
    let mut entries = Vec::new();
    for (dir, label) in [("real", REAL), ("fake", FAKE)] {
        let sub = root.join(dir);
        if !sub.is_dir() {
            return Err(Error::MissingDir(sub));
        }
        let listing = fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))?;
        for item in listing {
            let item = item.map_err(|e| Error::io(&sub, e))?;
            let path = item.path();
            if path.is_file() && is_image(&path) {
                entries.push(Entry {
                    path: PathBuf::from(dir).join(item.file_name()),
                    label,
                });
            }
        }
    }
    // Real before fake, each class in lexicographic path order.
    entries.sort_by(|a, b| (a.label, &a.path).cmp(&(b.label, &b.path)));
    let dataset = LabeledDataset {
        root: root.to_path_buf(),
        entries,
    };
    if dataset.is_empty() {
        return Err(Error::Empty(format!(
            "no decodable images under {}",
            root.display()
        )));
    }
    dataset.require_both_classes()?;
    for i in 0..dataset.len() {
        dataset.load(i)?;
    }
    let (real, fake) = dataset.counts();
    log::info!("{}: {real} real, {fake} fake", root.display());
    Ok(dataset)
}
