//! The checkpoint carries no freshness counter: an old but authentic pair of
//! NVM images restores an old context. Mixing images from two sessions
//! does not.
//!
//!     cargo run --example replay_gap

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seccs::attack::{self, SavedSession};
use seccs::config::Config;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut seccs = Config::default().build_seccs();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let old = SavedSession::create(&mut seccs, attack::random_context(&mut rng), 256, 64)?;
    let new = SavedSession::create(&mut seccs, attack::random_context(&mut rng), 256, 64)?;

    let stale = seccs.load_context(&old.target, &old.key)?;
    println!(
        "old images restore the old context: {} (pc {:#x}, current session pc {:#x})",
        stale == old.context,
        stale.pc,
        new.context.pc
    );
    for (what, target, key) in [
        ("old target + new key", &old.target, &new.key),
        ("new target + old key", &new.target, &old.key),
    ] {
        match seccs.load_context(target, key) {
            Ok(_) => println!("{what}: restored"),
            Err(e) => println!("{what}: rejected ({e})"),
        }
    }

    let report = attack::campaign_replay(&mut seccs, old.context, new.context, 256, 64)?;
    print!("{report}");
    Ok(())
}
