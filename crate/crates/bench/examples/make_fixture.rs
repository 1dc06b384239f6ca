//! Writes the bundled synthetic fixture in the UCI HAR layout and prints a
//! `[checksums]` block for it.
//!
//! cargo run -p harlab-bench --example make_fixture -- [output-dir]

use std::path::PathBuf;

use harlab::data::fixture::{synthetic_har, FIXTURE_SEED};
use harlab::data::write_har_layout;
use sha2::{Digest, Sha256};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/har-mini"));
    let (train, test) = synthetic_har(FIXTURE_SEED);
    write_har_layout(&dir, "train", train.dataset())?;
    write_har_layout(&dir, "test", test.dataset())?;

    println!("[checksums]");
    for rel in [
        "features.txt",
        "train/X_train.txt",
        "train/y_train.txt",
        "train/subject_train.txt",
        "test/X_test.txt",
        "test/y_test.txt",
        "test/subject_test.txt",
    ] {
        let digest = Sha256::digest(std::fs::read(dir.join(rel))?);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        println!("{rel:?} = \"{hex}\"");
    }
    Ok(())
}
