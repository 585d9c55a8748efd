//! Content digests for configs and catalogs.

use std::fmt::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in hash.iter() {
        write!(out, "{b:02x}").expect("writing to a String cannot fail");
    }
    out
}

/// SHA-256 over the compact JSON serialization of `value`.
///
/// Struct fields serialize in declaration order and maps used in configs are
/// ordered, so equal values always hash equally.
pub fn sha256_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config values serialize to JSON");
    sha256_hex(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
