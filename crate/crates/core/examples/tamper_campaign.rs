//! Fault-injection campaigns against a saved checkpoint, in both
//! authentication modes.
//!
//!     cargo run --example tamper_campaign

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seccs::attack::{self, FlipScope, SavedSession};
use seccs::config::Config;
use seccs::MacMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for mode in [MacMode::EncryptAndMac, MacMode::EncryptThenMac] {
        let cfg = Config {
            mode,
            ..Config::default()
        };
        let mut seccs = cfg.build_seccs();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let session = SavedSession::create(&mut seccs, attack::random_context(&mut rng), 256, 64)?;

        println!("== {mode:?}");
        let reports = [
            attack::campaign_bitflip(&seccs, &session, FlipScope::Both)?,
            attack::campaign_multibit(&seccs, &session, 500, &mut rng)?,
            attack::campaign_region_zero(&seccs, &session, 500, &mut rng)?,
        ];
        for r in reports {
            println!(
                "{:<15} {:>5} cases  {:>5} detected  {} undetected  {:?}",
                r.campaign, r.cases_run, r.detected, r.undetected, r.detected_by
            );
        }
    }
    Ok(())
}
