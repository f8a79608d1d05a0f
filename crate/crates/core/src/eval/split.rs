use std::collections::HashSet;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{read_text, write_text, ClassCatalog, Split};

/// Closed/open partition of a catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default)]
    pub dataset: String,
    pub m: usize,
    /// `None` when the split was taken from the catalog's own tags.
    pub seed: Option<u64>,
    /// Closed class names, catalog order.
    pub closed: Vec<String>,
    /// Open class names, catalog order.
    pub open: Vec<String>,
}

/// Seeded Fisher-Yates shuffle of `0..n`.
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`. For
/// `i` from `n - 1` down to 1, draw `u = next_u64()` and swap positions `i`
/// and `j = floor(u * (i + 1) / 2^64)`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Picks `m` closed classes: the first `m` entries of a seeded permutation of
/// the catalog. The rest are open.
pub fn split_catalog(catalog: &ClassCatalog, m: usize, seed: u64) -> Result<SplitSpec> {
    let n = catalog.len();
    if m == 0 || m >= n {
        return Err(Error::InvalidParameter(format!(
            "closed-class count must satisfy 1 <= m < {n}, got {m}"
        )));
    }
    let perm = seeded_permutation(n, seed);
    let mut is_closed = vec![false; n];
    perm[..m].iter().for_each(|&i| is_closed[i] = true);
    Ok(partition(catalog, &is_closed, Some(seed)))
}

impl SplitSpec {
    /// Split given by the catalog's own closed/open tags.
    pub fn from_catalog(catalog: &ClassCatalog) -> Self {
        let is_closed: Vec<bool> = catalog
            .classes()
            .iter()
            .map(|c| c.split == Split::Closed)
            .collect();
        partition(catalog, &is_closed, None)
    }

    pub fn with_dataset(mut self, name: impl Into<String>) -> Self {
        self.dataset = name.into();
        self
    }

    pub fn validate(&self, catalog: &ClassCatalog) -> Result<()> {
        if self.closed.len() != self.m {
            return Err(Error::Validation(format!(
                "split lists {} closed classes but m = {}",
                self.closed.len(),
                self.m
            )));
        }
        let mut seen = HashSet::new();
        for name in self.closed.iter().chain(&self.open) {
            if catalog.index_of(name).is_none() {
                return Err(Error::Validation(format!(
                    "split names unknown class {name:?}"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!(
                    "class {name:?} appears twice in the split"
                )));
            }
        }
        if seen.len() != catalog.len() {
            return Err(Error::Validation(format!(
                "split covers {} of {} catalog classes",
                seen.len(),
                catalog.len()
            )));
        }
        Ok(())
    }

    /// Catalog indices of the closed classes, ascending.
    pub fn closed_indices(&self, catalog: &ClassCatalog) -> Vec<usize> {
        indices(&self.closed, catalog)
    }

    pub fn open_indices(&self, catalog: &ClassCatalog) -> Vec<usize> {
        indices(&self.open, catalog)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&read_text(path)?)
            .map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("split", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_json()?)
    }
}

fn partition(catalog: &ClassCatalog, is_closed: &[bool], seed: Option<u64>) -> SplitSpec {
    let (mut closed, mut open) = (Vec::new(), Vec::new());
    for (c, &flag) in catalog.classes().iter().zip(is_closed) {
        if flag {
            closed.push(c.name.clone());
        } else {
            open.push(c.name.clone());
        }
    }
    SplitSpec {
        dataset: String::new(),
        m: closed.len(),
        seed,
        closed,
        open,
    }
}

fn indices(names: &[String], catalog: &ClassCatalog) -> Vec<usize> {
    let mut idx: Vec<usize> = names.iter().filter_map(|n| catalog.index_of(n)).collect();
    idx.sort_unstable();
    idx
}
