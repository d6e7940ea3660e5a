//! Session keys are never stored. Only two PUF challenges go to NVM, and
//! the same keys are re-derived from them after power returns.
//!
//!     cargo run --example key_regeneration

use seccs::config::DEFAULT_DEVICE_SEED;
use seccs::keygen::{KeyGenerator, StoredChallenges};
use seccs::{NvmDevice, PufDevice, Trng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let puf = PufDevice::new(DEFAULT_DEVICE_SEED, 64, 0.0)?;
    let mut keygen = KeyGenerator::new(Trng::deterministic(7), puf.clone());
    let mut key_nvm = NvmDevice::new(64, "key")?;

    for session in 0..3 {
        let keys = keygen.generate(&mut key_nvm)?;
        let stored = StoredChallenges::read_from(&key_nvm)?;
        println!(
            "session {session}: challenges {:016x}/{:016x} -> stream key {}",
            stored.base_stream,
            stored.base_mac,
            hex::encode(keys.stream_key)
        );

        // After a power cycle only the PUF and the key NVM are left.
        let again = seccs::keygen::regenerate(&puf, &key_nvm)?;
        assert_eq!(again, keys);
    }

    let other = PufDevice::new(DEFAULT_DEVICE_SEED + 1, 64, 0.0)?;
    let cloned = seccs::keygen::regenerate(&other, &key_nvm)?;
    println!(
        "a different chip reading the same NVM derives {}",
        hex::encode(cloned.stream_key)
    );
    Ok(())
}
