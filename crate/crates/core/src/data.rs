//! Ortholog groups and datasets.

use crate::error::{Error, Result};
use crate::model::{decode_base, encode_base, estimate_background, Base};

/// The N orthologous sequences of one gene. Missing orthologs are empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrthologGroup {
    pub gene: String,
    pub seqs: Vec<Vec<Base>>,
}

impl OrthologGroup {
    pub fn new(gene: impl Into<String>, seqs: Vec<Vec<Base>>) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::InvalidParameter("ortholog group has no species".into()));
        }
        if seqs.iter().flatten().any(|&b| b > 4) {
            return Err(Error::InvalidParameter("base code out of range".into()));
        }
        Ok(OrthologGroup {
            gene: gene.into(),
            seqs,
        })
    }

    /// Convenience constructor from text; panics on invalid characters.
    pub fn from_strs(gene: &str, seqs: &[&str]) -> Self {
        let seqs = seqs
            .iter()
            .map(|s| s.bytes().map(|c| encode_base(c).expect("ACGTN only")).collect())
            .collect();
        OrthologGroup::new(gene, seqs).expect("valid group")
    }

    pub fn n_species(&self) -> usize {
        self.seqs.len()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.seqs.iter().map(Vec::len).collect()
    }

    pub fn seq_string(&self, m: usize) -> String {
        self.seqs[m].iter().map(|&b| decode_base(b)).collect()
    }
}

/// `n` genes × `N` species.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub species: Vec<String>,
    pub groups: Vec<OrthologGroup>,
}

impl Dataset {
    pub fn new(species: Vec<String>, groups: Vec<OrthologGroup>) -> Result<Self> {
        for g in &groups {
            if g.n_species() != species.len() {
                return Err(Error::InvalidParameter(format!(
                    "gene {} has {} sequences, expected {}",
                    g.gene,
                    g.n_species(),
                    species.len()
                )));
            }
        }
        Ok(Dataset { species, groups })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_sequences(&self) -> usize {
        self.groups.len() * self.species.len()
    }

    /// Per-species background frequencies pooled over all genes.
    pub fn species_backgrounds(&self) -> Vec<[f64; 4]> {
        (0..self.n_species())
            .map(|m| estimate_background(self.groups.iter().map(|g| g.seqs[m].as_slice())))
            .collect()
    }

    /// Base frequencies pooled over every sequence.
    pub fn pooled_background(&self) -> [f64; 4] {
        estimate_background(self.groups.iter().flat_map(|g| g.seqs.iter().map(Vec::as_slice)))
    }
}
