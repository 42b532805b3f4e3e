//! Regenerates the fixtures shipped in `crates/cotrr/fixtures`.
//!
//! cargo run -p cotrr --example make_fixtures [OUT_DIR]

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    cotrr::fixture::write_all(&out)?;
    println!("fixtures written to {}", out.display());
    Ok(())
}
