//! JSON manifests: class catalog, reference manifest and dataset bundle.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::matrix::{read_matrix, write_matrix, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const BACKBONE_CLIP: &str = "clip";
pub const BACKBONE_DINO: &str = "dino";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    /// Text prompt fed to the text encoder. Defaults to `A photo of <name>`.
    #[serde(default)]
    pub prompt: String,
    pub split: Split,
}

impl ClassEntry {
    pub fn new(name: impl Into<String>, split: Split) -> Self {
        let name = name.into();
        ClassEntry {
            prompt: default_prompt(&name),
            name,
            split,
        }
    }
}

pub fn default_prompt(name: &str) -> String {
    format!("A photo of {name}")
}

/// Ordered class list. The order is the column order of every score matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCatalog {
    classes: Vec<ClassEntry>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    classes: Vec<ClassEntry>,
}

impl ClassCatalog {
    pub fn new(mut classes: Vec<ClassEntry>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Validation("catalog has no classes".into()));
        }
        let mut index = HashMap::with_capacity(classes.len());
        for (i, c) in classes.iter_mut().enumerate() {
            if c.name.trim().is_empty() {
                return Err(Error::Validation(format!("class {i} has an empty name")));
            }
            if c.prompt.is_empty() {
                c.prompt = default_prompt(&c.name);
            }
            if index.insert(c.name.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate class name {:?}",
                    c.name
                )));
            }
        }
        Ok(ClassCatalog { classes, index })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn closed_count(&self) -> usize {
        self.classes
            .iter()
            .filter(|c| c.split == Split::Closed)
            .count()
    }

    pub fn open_count(&self) -> usize {
        self.len() - self.closed_count()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&CatalogFile {
            classes: self.classes.clone(),
        })
        .map_err(|e| Error::json("catalog", e))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CatalogFile = serde_json::from_str(s).map_err(|e| Error::json("catalog", e))?;
        Self::new(file.classes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_text(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json()?)
    }
}

/// Per backbone, per class: row indices into that backbone's reference matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceManifest {
    pub backbones: BTreeMap<String, BTreeMap<String, Vec<usize>>>,
}

impl ReferenceManifest {
    pub fn indices(&self, backbone: &str, class: &str) -> Option<&[usize]> {
        self.backbones
            .get(backbone)
            .and_then(|m| m.get(class))
            .map(Vec::as_slice)
    }

    /// Reference count per class for one backbone, in catalog order.
    pub fn counts(&self, backbone: &str, catalog: &ClassCatalog) -> Vec<usize> {
        catalog
            .names()
            .map(|n| self.indices(backbone, n).map_or(0, <[usize]>::len))
            .collect()
    }

    /// Checks that every catalog class has at least one in-range reference for
    /// `backbone` and that the manifest names no unknown class.
    pub fn validate(&self, backbone: &str, catalog: &ClassCatalog, ref_rows: usize) -> Result<()> {
        let per_class = self.backbones.get(backbone).ok_or_else(|| {
            Error::Config(format!("reference manifest has no backbone {backbone:?}"))
        })?;
        for name in per_class.keys() {
            if catalog.index_of(name).is_none() {
                return Err(Error::Config(format!(
                    "reference manifest names unknown class {name:?} for backbone {backbone:?}"
                )));
            }
        }
        for name in catalog.names() {
            let idx = per_class.get(name).map(Vec::as_slice).unwrap_or(&[]);
            if idx.is_empty() {
                return Err(Error::Config(format!(
                    "class {name:?} has no reference images for backbone {backbone:?}"
                )));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= ref_rows) {
                return Err(Error::Config(format!(
                    "class {name:?} references row {bad} but the {backbone:?} reference matrix has {ref_rows} rows"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::json("references", e))?;
        write_text(path.as_ref(), &s)
    }
}

/// On-disk form of a dataset bundle. Paths are relative to the bundle file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFile {
    pub catalog: PathBuf,
    pub references: PathBuf,
    pub text: PathBuf,
    pub test: BTreeMap<String, PathBuf>,
    pub reference_embeddings: BTreeMap<String, PathBuf>,
    pub test_labels: Vec<String>,
    /// Checkpoint identifier per backbone, recorded by whoever produced the embeddings.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

/// Everything the engine needs to score one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub catalog: ClassCatalog,
    /// One text embedding per class, catalog order.
    pub text: EmbeddingMatrix,
    pub test: BTreeMap<String, EmbeddingMatrix>,
    /// Catalog index of the true class of each test row.
    pub test_labels: Vec<usize>,
    pub references: BTreeMap<String, EmbeddingMatrix>,
    pub manifest: ReferenceManifest,
    pub provenance: BTreeMap<String, String>,
}

impl DatasetBundle {
    pub fn validate(&self) -> Result<()> {
        let n = self.catalog.len();
        if self.text.rows() != n {
            return Err(Error::Validation(format!(
                "text matrix has {} rows but the catalog has {n} classes",
                self.text.rows()
            )));
        }
        let mut sizes = self.test.iter().map(|(b, m)| (b, m.rows()));
        if let Some((first_b, first_rows)) = sizes.next() {
            if let Some((b, r)) = sizes.find(|&(_, r)| r != first_rows) {
                return Err(Error::Validation(format!(
                    "test matrix for {b:?} has {r} rows, {first_b:?} has {first_rows}"
                )));
            }
            if self.test_labels.len() != first_rows {
                return Err(Error::Validation(format!(
                    "{} test labels for {first_rows} test rows",
                    self.test_labels.len()
                )));
            }
        } else {
            return Err(Error::Validation("bundle has no test embeddings".into()));
        }
        if let Some(&bad) = self.test_labels.iter().find(|&&l| l >= n) {
            return Err(Error::Validation(format!(
                "test label index {bad} out of range"
            )));
        }
        for (backbone, refs) in &self.references {
            self.manifest
                .validate(backbone, &self.catalog, refs.rows())?;
        }
        Ok(())
    }

    pub fn test_rows(&self) -> usize {
        self.test_labels.len()
    }

    pub fn test_matrix(&self, backbone: &str) -> Result<&EmbeddingMatrix> {
        self.test
            .get(backbone)
            .ok_or_else(|| Error::Config(format!("bundle has no test embeddings for {backbone:?}")))
    }

    pub fn reference_matrix(&self, backbone: &str) -> Result<&EmbeddingMatrix> {
        self.references.get(backbone).ok_or_else(|| {
            Error::Config(format!(
                "bundle has no reference embeddings for {backbone:?}"
            ))
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let file: BundleFile = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::json(path.display().to_string(), e))?;

        let catalog = ClassCatalog::load(base.join(&file.catalog))?;
        let manifest = ReferenceManifest::load(base.join(&file.references))?;
        let text = read_matrix(base.join(&file.text))?;
        let test = file
            .test
            .iter()
            .map(|(b, p)| Ok((b.clone(), read_matrix(base.join(p))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let references = file
            .reference_embeddings
            .iter()
            .map(|(b, p)| Ok((b.clone(), read_matrix(base.join(p))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let test_labels = file
            .test_labels
            .iter()
            .map(|name| {
                catalog.index_of(name).ok_or_else(|| {
                    Error::Validation(format!("test label {name:?} is not in the catalog"))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let bundle = DatasetBundle {
            catalog,
            text,
            test,
            test_labels,
            references,
            manifest,
            provenance: file.provenance,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Writes the bundle into `dir` using the standard file names and returns
    /// the path of `bundle.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        self.validate()?;
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut file = BundleFile {
            catalog: "catalog.json".into(),
            references: "references.json".into(),
            text: "text.zseb".into(),
            test: BTreeMap::new(),
            reference_embeddings: BTreeMap::new(),
            test_labels: self
                .test_labels
                .iter()
                .map(|&i| self.catalog.classes()[i].name.clone())
                .collect(),
            provenance: self.provenance.clone(),
        };
        self.catalog.save(dir.join(&file.catalog))?;
        self.manifest.save(dir.join(&file.references))?;
        write_matrix(&self.text, dir.join(&file.text))?;
        for (b, m) in &self.test {
            let name = PathBuf::from(format!("test_{b}.zseb"));
            write_matrix(m, dir.join(&name))?;
            file.test.insert(b.clone(), name);
        }
        for (b, m) in &self.references {
            let name = PathBuf::from(format!("refs_{b}.zseb"));
            write_matrix(m, dir.join(&name))?;
            file.reference_embeddings.insert(b.clone(), name);
        }
        let path = dir.join("bundle.json");
        let s = serde_json::to_string_pretty(&file).map_err(|e| Error::json("bundle", e))?;
        write_text(&path, &s)?;
        Ok(path)
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, s: &str) -> Result<()> {
    let mut body = s.to_owned();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}
