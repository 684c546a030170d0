use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the canonical JSON form of `value`. Object keys are
/// sorted, so the digest does not depend on field or key order.
pub fn canonical_digest<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json's default map is ordered by key
    let canonical = serde_json::to_value(value).expect("value serializes to json");
    let bytes = serde_json::to_vec(&canonical).expect("json value serializes");
    hex(&Sha256::digest(bytes))
}

/// Hex SHA-256 of raw bytes.
pub fn bytes_digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
