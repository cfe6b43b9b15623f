//! Short content digests used to stamp derived artifacts with the
//! configuration that produced them.

use sha2::{Digest, Sha256};

/// First 8 bytes of SHA-256, hex encoded. Stable across platforms and runs.
pub fn short_digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
