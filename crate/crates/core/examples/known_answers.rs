//! Check the Trivium, SHA-256 and HMAC implementations against the
//! shipped known-answer fixtures.
//!
//!     cargo run --example known_answers [fixture-dir]

use std::path::PathBuf;

use seccs::kat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(kat::default_fixture_dir);
    let report = kat::run_all(&dir)?;
    for r in &report.results {
        let mark = if r.passed { "ok  " } else { "FAIL" };
        println!("{mark} {:<12} {}", r.suite, r.name);
    }

    let keystream = seccs::trivium::Trivium::new(&[0; 10], &[0; 10])?.keystream(8);
    println!("Trivium(0, 0) starts {}", hex::encode(keystream));
    println!("SHA-256(\"abc\") = {}", seccs::mac::sha256(b"abc").to_hex());

    if !report.all_passed() {
        std::process::exit(1);
    }
    Ok(())
}
