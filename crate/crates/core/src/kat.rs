//! Known-answer tests for the cryptographic primitives, driven by fixture
//! files of whitespace-separated hex fields:
//!
//! * `trivium_kat.txt`: `name key iv keystream` (first 64 bytes)
//! * `sha256_kat.txt`: `name message digest` (`-` for an empty message)
//! * `hmac_kat.txt`: `name key message tag`

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::mac;
use crate::trivium::Trivium;

pub const TRIVIUM_FILE: &str = "trivium_kat.txt";
pub const SHA256_FILE: &str = "sha256_kat.txt";
pub const HMAC_FILE: &str = "hmac_kat.txt";

#[derive(Debug, Error)]
pub enum KatError {
    #[error("fixture {0} is missing or unreadable")]
    Missing(PathBuf),
    #[error("fixture {0} contains no vectors")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KatResult {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct KatReport {
    pub results: Vec<KatResult>,
}

impl KatReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &KatResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

/// The fixtures shipped with this crate.
pub fn default_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn decode(field: &str) -> Result<Vec<u8>, String> {
    if field == "-" {
        return Ok(Vec::new());
    }
    hex::decode(field).map_err(|e| format!("bad hex {field:?}: {e}"))
}

fn vectors(path: &Path) -> Result<Vec<(String, Vec<String>)>, KatError> {
    let text = std::fs::read_to_string(path).map_err(|_| KatError::Missing(path.to_path_buf()))?;
    let rows: Vec<_> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut fields = l.split_whitespace().map(String::from);
            let name = fields.next().unwrap_or_default();
            (name, fields.collect())
        })
        .collect();
    if rows.is_empty() {
        return Err(KatError::Empty(path.to_path_buf()));
    }
    Ok(rows)
}

fn check(
    suite: &'static str,
    name: String,
    fields: &[String],
    arity: usize,
    f: impl FnOnce(&[Vec<u8>]) -> Vec<u8>,
) -> KatResult {
    let outcome = (|| {
        if fields.len() != arity {
            return Err(format!("expected {arity} fields, found {}", fields.len()));
        }
        let decoded = fields
            .iter()
            .map(|s| decode(s))
            .collect::<Result<Vec<_>, _>>()?;
        let (inputs, expected) = decoded.split_at(arity - 1);
        let got = f(inputs);
        if got == expected[0] {
            Ok(())
        } else {
            Err(format!("got {}", hex::encode(got)))
        }
    })();
    KatResult {
        suite,
        name,
        passed: outcome.is_ok(),
        detail: outcome.err(),
    }
}

/// Runs all three suites from `dir`.
pub fn run_all(dir: &Path) -> Result<KatReport, KatError> {
    let trivium = vectors(&dir.join(TRIVIUM_FILE))?;
    let sha = vectors(&dir.join(SHA256_FILE))?;
    let hmac = vectors(&dir.join(HMAC_FILE))?;

    let mut report = KatReport::default();
    for (name, fields) in trivium {
        report.results.push(check(
            "trivium",
            name,
            &fields,
            3,
            |inp| match Trivium::new(&inp[0], &inp[1]) {
                Ok(mut t) => {
                    let n = fields.get(2).map_or(0, |s| s.len() / 2);
                    t.keystream(n)
                }
                Err(e) => e.to_string().into_bytes(),
            },
        ));
    }
    for (name, fields) in sha {
        report
            .results
            .push(check("sha256", name, &fields, 2, |inp| {
                mac::sha256(&inp[0]).0.to_vec()
            }));
    }
    for (name, fields) in hmac {
        report
            .results
            .push(check("hmac-sha256", name, &fields, 3, |inp| {
                mac::hmac_sha256(&inp[0], &inp[1]).0.to_vec()
            }));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn copy_fixtures(dst: &Path) {
        for f in [TRIVIUM_FILE, SHA256_FILE, HMAC_FILE] {
            std::fs::copy(default_fixture_dir().join(f), dst.join(f)).unwrap();
        }
    }

    #[test]
    fn shipped_fixtures_pass() {
        let report = run_all(&default_fixture_dir()).unwrap();
        assert!(
            report.all_passed(),
            "{:?}",
            report.failures().collect::<Vec<_>>()
        );
        assert_eq!(
            report
                .results
                .iter()
                .filter(|r| r.suite == "trivium")
                .count(),
            5
        );
    }

    #[test]
    fn corrupted_vector_is_named() {
        let dir = tempfile::tempdir().unwrap();
        copy_fixtures(dir.path());
        let path = dir.path().join(SHA256_FILE);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("ba7816bf", "ba7816be")).unwrap();
        let report = run_all(dir.path()).unwrap();
        let failed: Vec<_> = report.failures().map(|r| r.name.as_str()).collect();
        assert_eq!(failed, vec!["abc"]);
    }

    #[test]
    fn missing_and_empty_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_all(dir.path()), Err(KatError::Missing(_))));
        copy_fixtures(dir.path());
        std::fs::write(dir.path().join(HMAC_FILE), "# nothing here\n").unwrap();
        assert!(matches!(run_all(dir.path()), Err(KatError::Empty(_))));
    }
}
