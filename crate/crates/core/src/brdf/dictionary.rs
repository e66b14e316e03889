use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::table::Brdf;
use crate::{Error, Result};

/// An ordered set of BRDF atoms sharing a channel count. Atoms are reference
/// counted so sub-dictionaries (leave-one-out, subsets) are cheap.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: Vec<Arc<Brdf>>,
}

impl Dictionary {
    pub fn new(atoms: Vec<Brdf>) -> Result<Self> {
        Self::from_shared(atoms.into_iter().map(Arc::new).collect())
    }

    pub fn from_shared(atoms: Vec<Arc<Brdf>>) -> Result<Self> {
        let first =
            atoms.first().ok_or_else(|| Error::InvalidParameter("a dictionary needs at least one atom".into()))?;
        let channels = first.channel_count();
        if let Some(bad) = atoms.iter().find(|a| a.channel_count() != channels) {
            return Err(Error::DimensionMismatch(format!(
                "atom '{}' has {} channels, expected {channels}",
                bad.name(),
                bad.channel_count()
            )));
        }
        Ok(Dictionary { atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.atoms[0].channel_count()
    }

    pub fn atom(&self, j: usize) -> &Brdf {
        &self.atoms[j]
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Brdf> {
        self.atoms.iter().map(|a| a.as_ref())
    }

    pub fn names(&self) -> Vec<String> {
        self.atoms.iter().map(|a| a.name().to_string()).collect()
    }

    /// The dictionary with atom `j` removed (leave-one-out).
    pub fn without(&self, j: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| k != j).collect();
        self.select(&keep)
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let atoms = indices
            .iter()
            .map(|&j| {
                self.atoms
                    .get(j)
                    .cloned()
                    .ok_or_else(|| Error::InvalidParameter(format!("atom index {j} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_shared(atoms)
    }

    /// SHA-256 over atom names and sample bytes; identifies the dictionary in
    /// render caches.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        for atom in &self.atoms {
            hasher.update((atom.name().len() as u64).to_le_bytes());
            hasher.update(atom.name().as_bytes());
            hasher.update((atom.channel_count() as u64).to_le_bytes());
            for ch in atom.channels() {
                let mut buf = Vec::with_capacity(ch.len() * 8);
                for v in ch {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                hasher.update(&buf);
            }
        }
        hasher.finalize().into()
    }
}
