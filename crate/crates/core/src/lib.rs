//! Secure context saving for intermittently powered devices.
//!
//! When the supply voltage drops, the processor context is encrypted with
//! Trivium under a PUF-derived key, signed with HMAC-SHA-256 and written to
//! non-volatile memory. When power returns, the keys are regenerated from
//! challenges kept in a dedicated NVM, and the context is decrypted and
//! verified before it is restored. A tampered checkpoint is refused.
//!
//! | module | contents |
//! |---|---|
//! | [`nvm`] | emulated NVM with image files and a bit-flip tamper interface |
//! | [`trivium`] | Trivium keystream generator |
//! | [`mac`] | SHA-256, HMAC-SHA-256 and constant-time tag comparison |
//! | [`puf`] | additive-delay arbiter PUF and TRNG models |
//! | [`keygen`] | session key generation and regeneration |
//! | [`controller`] | context storing and loading, checkpoint record format |
//! | [`simulator`] | workload under a voltage trace |
//! | [`attack`] | bit-flip, replay and confidentiality campaigns |
//! | [`config`], [`kat`], [`cli`] | the `seccs` command-line tool |
//!
//! ```
//! use seccs::{Context, KeyGenerator, MacMode, NvmDevice, PufDevice, Seccs, Trng};
//!
//! let puf = PufDevice::new(0x5EC5, 64, 0.0).unwrap();
//! let mut seccs = Seccs::new(KeyGenerator::new(Trng::deterministic(7), puf), MacMode::EncryptAndMac);
//! let mut target = NvmDevice::new(256, "target").unwrap();
//! let mut key = NvmDevice::new(64, "key").unwrap();
//!
//! let mut ctx = Context::default();
//! ctx.pc = 0x0800_0000;
//! seccs.save_context(&ctx, &mut target, &mut key).unwrap();
//! assert_eq!(seccs.load_context(&target, &key).unwrap(), ctx);
//!
//! target.flip_bit(40, 3).unwrap();
//! assert!(seccs.load_context(&target, &key).is_err());
//! ```

pub mod attack;
pub mod cli;
pub mod config;
pub mod controller;
pub mod kat;
pub mod keygen;
pub mod mac;
pub mod nvm;
pub mod puf;
pub mod simulator;
pub mod trivium;

pub use controller::{CheckpointRecord, Context, MacMode, Seccs, SeccsError};
pub use keygen::{KeyGenerator, SessionKeys};
pub use nvm::{NvmDevice, NvmError};
pub use puf::{Challenge, PufDevice, Trng};
pub use simulator::{run_with_power, PowerTrace, RunOutcome};
