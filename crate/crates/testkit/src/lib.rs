//! Reference implementations used as test oracles, plus shared fixtures.
//!
//! Everything here is written against plain data (vectors, strings, index
//! lists) and deliberately shares no code with `cfkit-core`.

pub mod bleu;
pub mod cover;
pub mod diversity;
pub mod gen;
pub mod lev;
pub mod surprise;
pub mod ted;

use std::path::PathBuf;

/// Directory holding the shared fixture files.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> String {
    let path = fixtures_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}
