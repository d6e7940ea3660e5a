//! Save a processor context into NVM and bring it back.
//!
//!     cargo run --example context_roundtrip

use seccs::config::Config;
use seccs::controller::{CheckpointRecord, Context};
use seccs::NvmDevice;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut seccs = Config::default().build_seccs();
    let mut target = NvmDevice::new(256, "target")?;
    let mut key = NvmDevice::new(64, "key")?;

    let mut ctx = Context::default();
    for (i, r) in ctx.gpr.iter_mut().enumerate() {
        *r = 0x1000_0000 * (i as u32 % 16) + i as u32;
    }
    ctx.pc = 0x0000_8000;
    ctx.sp = 0x2000_1000;
    ctx.status = 0b1010;

    seccs.save_context(&ctx, &mut target, &mut key)?;
    let record = CheckpointRecord::parse(&target)?;
    println!(
        "stored {} bytes, mode {:?}",
        record.stored_len(),
        record.mode()
    );
    println!("plaintext  {}", hex::encode(&ctx.to_bytes()[..16]));
    println!("ciphertext {}", hex::encode(&record.ciphertext[..16]));
    println!("tag        {}", record.tag.to_hex());

    let restored = seccs.load_context(&target, &key)?;
    assert_eq!(restored, ctx);
    println!(
        "restored context matches: pc={:#x} sp={:#x}",
        restored.pc, restored.sp
    );
    Ok(())
}
