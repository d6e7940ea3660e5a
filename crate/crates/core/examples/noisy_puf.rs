//! With measurement noise the PUF stops answering identically, and a
//! single flipped response bit changes a session key. The scheme has no
//! error correction, so the checkpoint then fails authentication. This is
//! why a real deployment needs a fuzzy extractor or stable-bit selection.
//!
//!     cargo run --release --example noisy_puf

use seccs::config::DEFAULT_DEVICE_SEED;
use seccs::keygen::{regenerate, KeyGenerator};
use seccs::{MacMode, NvmDevice, PufDevice, Seccs, SeccsError, Trng};

const TRIALS: usize = 200;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "{:>6}  {:>13}  {:>15}",
        "sigma", "keys matching", "restores failed"
    );
    for sigma in [0.0, 0.01, 0.05, 0.1, 0.3] {
        let puf = PufDevice::new(DEFAULT_DEVICE_SEED, 64, sigma)?;
        let mut seccs = Seccs::new(
            KeyGenerator::new(Trng::deterministic(9), puf.clone()),
            MacMode::EncryptAndMac,
        );
        let (mut matching, mut failed) = (0, 0);
        for _ in 0..TRIALS {
            let mut target = NvmDevice::new(256, "target")?;
            let mut key = NvmDevice::new(64, "key")?;
            let ctx = seccs::Context::default();
            seccs.save_context(&ctx, &mut target, &mut key)?;

            let keys_now = regenerate(&puf, &key)?;
            let keys_later = regenerate(&puf, &key)?;
            matching += usize::from(keys_now == keys_later);
            if let Err(SeccsError::TamperDetected) = seccs.load_context(&target, &key) {
                failed += 1;
            }
        }
        println!(
            "{sigma:>6}  {:>9}/{TRIALS}  {:>11}/{TRIALS}",
            matching, failed
        );
    }
    Ok(())
}
