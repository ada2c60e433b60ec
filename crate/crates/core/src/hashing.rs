//! Canonical JSON and content hashes for configurations.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Compact JSON with object keys sorted, so equal values hash equally.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    // `serde_json::Value` stores objects in a sorted map, which fixes key order.
    let v = serde_json::to_value(value).expect("configuration types serialize to JSON");
    serde_json::to_string(&v).expect("JSON values serialize")
}

/// Lowercase hex SHA-256 of [`canonical_json`].
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let digest = Sha256::digest(canonical_json(value).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Round-trip float formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn key_order_does_not_matter() {
        let mut a = HashMap::new();
        a.insert("b", 1.5);
        a.insert("a", 2.0);
        assert_eq!(canonical_json(&a), r#"{"a":2.0,"b":1.5}"#);
        let mut b = HashMap::new();
        b.insert("a", 2.0);
        b.insert("b", 1.5);
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
