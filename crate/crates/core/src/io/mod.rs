//! File formats: PFM images, image stacks with a JSON manifest, abundance
//! blobs, render caches and normal/depth exports.

mod abundance;
mod cache;
mod export;
mod pfm;
mod stack;

pub use abundance::{encode_abundances, read_abundances, write_abundances, AbundanceMetadata};
pub use cache::{cache_key, read_render_cache, write_render_cache, CACHE_VERSION};
pub use export::{read_depth_pfm, read_normal_pfm, write_depth_pfm, write_normal_pfm, write_normal_png};
pub use pfm::{read_pfm, write_pfm, Pfm};
pub use stack::{
    load_stack, read_mask, save_stack, Dataset, ImageEntry, ImageFormat, Linearization, Manifest, MANIFEST_VERSION,
};

use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
