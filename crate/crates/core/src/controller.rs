//! The secure context-saving controller.
//!
//! Storing a context: fresh session keys are drawn from the key generator,
//! the serialized context is encrypted with Trivium, an HMAC-SHA-256 tag is
//! computed, and the checkpoint record is written to offset 0 of the target
//! NVM. Loading a context reverses this. It regenerates the keys from the
//! stored challenges, decrypts, and compares tags in constant time. A
//! mismatch is reported as [`SeccsError::TamperDetected`] and the decrypted
//! bytes are dropped.
//!
//! Checkpoint record layout (all integers little-endian):
//!
//! ```text
//! 0..4       magic "SCCS"
//! 4          version 0x01
//! 5          flags (bit 0: 0 = tag over plaintext, 1 = encrypt-then-MAC)
//! 6..10      context_len, u32
//! 10..10+n   ciphertext
//! 10+n..+32  tag
//! ```
//!
//! The default tags the plaintext, as the original SECCS design does. In
//! encrypt-then-MAC mode the tag covers the keystream seed (key and IV)
//! followed by the ciphertext, and is checked before decryption. Any change
//! to the stored stream challenge therefore fails verification in both modes.

use thiserror::Error;

use crate::keygen::{KeyGenerator, KeygenError, SessionKeys};
use crate::mac::{self, Digest, DIGEST_LEN};
use crate::nvm::NvmDevice;
use crate::trivium;

pub const RECORD_MAGIC: &[u8; 4] = b"SCCS";
pub const RECORD_VERSION: u8 = 0x01;
pub const RECORD_HEADER_LEN: usize = 10;
pub const FLAG_ENCRYPT_THEN_MAC: u8 = 0x01;

pub const GPR_COUNT: usize = 16;
pub const CONTEXT_LEN: usize = (GPR_COUNT + 3) * 4;
pub const RECORD_LEN: usize = RECORD_HEADER_LEN + CONTEXT_LEN + DIGEST_LEN;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeccsError {
    #[error("target NVM holds {capacity} bytes, checkpoint needs {needed}")]
    NvmTooSmall { needed: usize, capacity: usize },
    #[error("entropy source unavailable: {0}")]
    EntropyUnavailable(String),
    #[error("no checkpoint in target NVM")]
    NoCheckpoint,
    #[error("no key record in key NVM")]
    NoKeyRecord,
    #[error("malformed checkpoint record: {0}")]
    MalformedRecord(String),
    #[error("integrity check failed: tamper detected")]
    TamperDetected,
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
}

impl From<KeygenError> for SeccsError {
    fn from(e: KeygenError) -> Self {
        match e {
            KeygenError::NvmTooSmall { needed, capacity } => {
                SeccsError::NvmTooSmall { needed, capacity }
            }
            KeygenError::EntropyUnavailable(e) => SeccsError::EntropyUnavailable(e.0),
            KeygenError::NoKeyRecord => SeccsError::NoKeyRecord,
            other => SeccsError::KeyGeneration(other.to_string()),
        }
    }
}

/// Processor state captured by a checkpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Context {
    pub gpr: [u32; GPR_COUNT],
    pub pc: u32,
    pub sp: u32,
    pub status: u32,
}

impl Context {
    pub fn to_bytes(&self) -> [u8; CONTEXT_LEN] {
        let mut out = [0u8; CONTEXT_LEN];
        let words = self.gpr.iter().chain([&self.pc, &self.sp, &self.status]);
        for (chunk, word) in out.chunks_exact_mut(4).zip(words) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != CONTEXT_LEN {
            return None;
        }
        let mut words = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()));
        let mut ctx = Context::default();
        for r in ctx.gpr.iter_mut() {
            *r = words.next()?;
        }
        ctx.pc = words.next()?;
        ctx.sp = words.next()?;
        ctx.status = words.next()?;
        Some(ctx)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MacMode {
    /// Tag computed over the plaintext context.
    #[default]
    EncryptAndMac,
    EncryptThenMac,
}

impl MacMode {
    fn flags(self) -> u8 {
        match self {
            MacMode::EncryptAndMac => 0,
            MacMode::EncryptThenMac => FLAG_ENCRYPT_THEN_MAC,
        }
    }
}

/// Parsed checkpoint record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointRecord {
    pub version: u8,
    pub flags: u8,
    pub ciphertext: Vec<u8>,
    pub tag: Digest,
}

impl CheckpointRecord {
    pub fn mode(&self) -> MacMode {
        if self.flags & FLAG_ENCRYPT_THEN_MAC != 0 {
            MacMode::EncryptThenMac
        } else {
            MacMode::EncryptAndMac
        }
    }

    pub fn stored_len(&self) -> usize {
        RECORD_HEADER_LEN + self.ciphertext.len() + DIGEST_LEN
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.stored_len());
        out.extend_from_slice(RECORD_MAGIC);
        out.push(self.version);
        out.push(self.flags);
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(self.tag.as_bytes());
        out
    }

    /// Parses the record at offset 0 of `nvm`, checking every header field.
    pub fn parse(nvm: &NvmDevice) -> Result<Self, SeccsError> {
        let cells = nvm.cells();
        if cells.len() < RECORD_MAGIC.len() || &cells[..4] != RECORD_MAGIC {
            return Err(SeccsError::NoCheckpoint);
        }
        if cells.len() < RECORD_HEADER_LEN {
            return Err(SeccsError::MalformedRecord(
                "header truncated by end of NVM".into(),
            ));
        }
        let version = cells[4];
        if version != RECORD_VERSION {
            return Err(SeccsError::MalformedRecord(format!(
                "unsupported version {version:#04x}"
            )));
        }
        let flags = cells[5];
        if flags & !FLAG_ENCRYPT_THEN_MAC != 0 {
            return Err(SeccsError::MalformedRecord(format!(
                "reserved flag bits set: {flags:#04x}"
            )));
        }
        let context_len = u32::from_le_bytes(cells[6..10].try_into().unwrap()) as usize;
        if context_len != CONTEXT_LEN {
            return Err(SeccsError::MalformedRecord(format!(
                "context_len {context_len}, expected {CONTEXT_LEN}"
            )));
        }
        let end = RECORD_HEADER_LEN + context_len + DIGEST_LEN;
        if end > cells.len() {
            return Err(SeccsError::MalformedRecord(format!(
                "record of {end} bytes exceeds NVM capacity {}",
                cells.len()
            )));
        }
        let ct_end = RECORD_HEADER_LEN + context_len;
        Ok(Self {
            version,
            flags,
            ciphertext: cells[RECORD_HEADER_LEN..ct_end].to_vec(),
            tag: Digest(cells[ct_end..end].try_into().unwrap()),
        })
    }
}

fn etm_tag_input(keys: &SessionKeys, ciphertext: &[u8]) -> Vec<u8> {
    let mut input = Vec::with_capacity(trivium::KEY_LEN + trivium::IV_LEN + ciphertext.len());
    input.extend_from_slice(&keys.stream_key);
    input.extend_from_slice(&keys.stream_iv);
    input.extend_from_slice(ciphertext);
    input
}

/// Encrypts and signs `ctx` under `keys`.
pub fn seal(ctx: &Context, keys: &SessionKeys, mode: MacMode) -> CheckpointRecord {
    let plaintext = ctx.to_bytes();
    let ciphertext = trivium::xor_transform(&keys.stream_key, &keys.stream_iv, &plaintext)
        .expect("session keys have Trivium key and IV widths");
    let tag = match mode {
        MacMode::EncryptAndMac => mac::sign(&keys.mac_key, &plaintext),
        MacMode::EncryptThenMac => mac::sign(&keys.mac_key, &etm_tag_input(keys, &ciphertext)),
    };
    CheckpointRecord {
        version: RECORD_VERSION,
        flags: mode.flags(),
        ciphertext,
        tag,
    }
}

/// Decrypts and verifies a record. Nothing decrypted escapes on failure.
pub fn open(record: &CheckpointRecord, keys: &SessionKeys) -> Result<Context, SeccsError> {
    let decrypt = |ct: &[u8]| {
        trivium::xor_transform(&keys.stream_key, &keys.stream_iv, ct)
            .expect("session keys have Trivium key and IV widths")
    };
    let plaintext = match record.mode() {
        MacMode::EncryptAndMac => {
            let plaintext = decrypt(&record.ciphertext);
            if !mac::verify(&keys.mac_key, &plaintext, &record.tag) {
                return Err(SeccsError::TamperDetected);
            }
            plaintext
        }
        MacMode::EncryptThenMac => {
            let input = etm_tag_input(keys, &record.ciphertext);
            if !mac::verify(&keys.mac_key, &input, &record.tag) {
                return Err(SeccsError::TamperDetected);
            }
            decrypt(&record.ciphertext)
        }
    };
    Context::from_bytes(&plaintext)
        .ok_or_else(|| SeccsError::MalformedRecord("decrypted context has wrong length".into()))
}

/// The SECCS module: key generator plus cipher and MAC engines.
#[derive(Debug)]
pub struct Seccs {
    keygen: KeyGenerator,
    mode: MacMode,
}

impl Seccs {
    pub fn new(keygen: KeyGenerator, mode: MacMode) -> Self {
        Self { keygen, mode }
    }

    pub fn mode(&self) -> MacMode {
        self.mode
    }

    pub fn keygen(&self) -> &KeyGenerator {
        &self.keygen
    }

    /// Context storing phase.
    pub fn save_context(
        &mut self,
        ctx: &Context,
        target_nvm: &mut NvmDevice,
        key_nvm: &mut NvmDevice,
    ) -> Result<(), SeccsError> {
        if target_nvm.capacity() < RECORD_LEN {
            return Err(SeccsError::NvmTooSmall {
                needed: RECORD_LEN,
                capacity: target_nvm.capacity(),
            });
        }
        let keys = self.keygen.generate(key_nvm)?;
        let record = seal(ctx, &keys, self.mode);
        target_nvm
            .write(0, &record.encode())
            .expect("capacity checked above");
        Ok(())
    }

    /// Context loading phase.
    pub fn load_context(
        &self,
        target_nvm: &NvmDevice,
        key_nvm: &NvmDevice,
    ) -> Result<Context, SeccsError> {
        let record = CheckpointRecord::parse(target_nvm)?;
        let keys = self.keygen.regenerate(key_nvm)?;
        open(&record, &keys)
    }
}

/// Invalidates the checkpoint slot by erasing the record.
pub fn retire_checkpoint(target_nvm: &mut NvmDevice) {
    let len = RECORD_LEN.min(target_nvm.capacity());
    target_nvm
        .erase_range(0, len)
        .expect("range clamped to capacity");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puf::{PufDevice, Trng};
    use proptest::prelude::*;

    fn stack(mode: MacMode, seed: u64) -> Seccs {
        Seccs::new(
            KeyGenerator::new(
                Trng::deterministic(seed),
                PufDevice::new(0x5EC5, 64, 0.0).unwrap(),
            ),
            mode,
        )
    }

    fn nvms() -> (NvmDevice, NvmDevice) {
        (
            NvmDevice::new(256, "target").unwrap(),
            NvmDevice::new(64, "key").unwrap(),
        )
    }

    fn sample_context() -> Context {
        let mut ctx = Context::default();
        for (i, r) in ctx.gpr.iter_mut().enumerate() {
            *r = 0x1111_1111u32.wrapping_mul(i as u32 + 1);
        }
        ctx.pc = 0x0800_0100;
        ctx.sp = 0x2000_8000;
        ctx.status = 0x6100_0000;
        ctx
    }

    #[test]
    fn context_layout() {
        let ctx = sample_context();
        let bytes = ctx.to_bytes();
        assert_eq!(bytes.len(), 76);
        assert_eq!(&bytes[4..8], &0x2222_2222u32.to_le_bytes());
        assert_eq!(&bytes[64..68], &0x0800_0100u32.to_le_bytes());
        assert_eq!(&bytes[72..76], &0x6100_0000u32.to_le_bytes());
        assert_eq!(Context::from_bytes(&bytes), Some(ctx));
        assert_eq!(Context::from_bytes(&bytes[..75]), None);
    }

    #[test]
    fn save_load_round_trip_both_modes() {
        for mode in [MacMode::EncryptAndMac, MacMode::EncryptThenMac] {
            let mut seccs = stack(mode, 1);
            let (mut target, mut key) = nvms();
            let ctx = sample_context();
            seccs.save_context(&ctx, &mut target, &mut key).unwrap();
            assert_eq!(&target.cells()[..4], b"SCCS");
            assert_eq!(target.cells()[5], mode.flags());
            assert_eq!(&target.cells()[6..10], &76u32.to_le_bytes());
            assert_eq!(seccs.load_context(&target, &key).unwrap(), ctx);
        }
    }

    #[test]
    fn record_encoding_matches_nvm_bytes() {
        let mut seccs = stack(MacMode::EncryptAndMac, 2);
        let (mut target, mut key) = nvms();
        seccs
            .save_context(&sample_context(), &mut target, &mut key)
            .unwrap();
        let record = CheckpointRecord::parse(&target).unwrap();
        assert_eq!(record.stored_len(), RECORD_LEN);
        assert_eq!(record.encode(), target.cells()[..RECORD_LEN]);
    }

    #[test]
    fn encrypt_and_mac_tags_plaintext_and_etm_tags_seed_and_ciphertext() {
        let (mut target, mut key) = nvms();
        let mut seccs = stack(MacMode::EncryptAndMac, 3);
        let ctx = sample_context();
        seccs.save_context(&ctx, &mut target, &mut key).unwrap();
        let keys = seccs.keygen().regenerate(&key).unwrap();
        let record = CheckpointRecord::parse(&target).unwrap();
        assert_eq!(record.tag, mac::sign(&keys.mac_key, &ctx.to_bytes()));

        let mut seccs = stack(MacMode::EncryptThenMac, 3);
        seccs.save_context(&ctx, &mut target, &mut key).unwrap();
        let keys = seccs.keygen().regenerate(&key).unwrap();
        let record = CheckpointRecord::parse(&target).unwrap();
        let mut input = keys.stream_key.to_vec();
        input.extend_from_slice(&keys.stream_iv);
        input.extend_from_slice(&record.ciphertext);
        assert_eq!(record.tag, mac::sign(&keys.mac_key, &input));
    }

    #[test]
    fn erased_or_missing_state() {
        let seccs = stack(MacMode::EncryptAndMac, 4);
        let (mut target, key) = nvms();
        assert_eq!(
            seccs.load_context(&target, &key),
            Err(SeccsError::NoCheckpoint)
        );

        let mut seccs = stack(MacMode::EncryptAndMac, 4);
        let mut key2 = key.clone();
        seccs
            .save_context(&sample_context(), &mut target, &mut key2)
            .unwrap();
        assert_eq!(
            seccs.load_context(&target, &key),
            Err(SeccsError::NoKeyRecord)
        );

        retire_checkpoint(&mut target);
        assert_eq!(
            seccs.load_context(&target, &key2),
            Err(SeccsError::NoCheckpoint)
        );
    }

    #[test]
    fn small_target_rejected_before_keygen() {
        let mut seccs = stack(MacMode::EncryptAndMac, 5);
        let mut target = NvmDevice::new(100, "target").unwrap();
        let mut key = NvmDevice::new(64, "key").unwrap();
        assert_eq!(
            seccs.save_context(&sample_context(), &mut target, &mut key),
            Err(SeccsError::NvmTooSmall {
                needed: 118,
                capacity: 100
            })
        );
        assert!(key.cells().iter().all(|&b| b == 0xFF));
    }

    #[test]
    fn header_fields_are_validated() {
        let mut seccs = stack(MacMode::EncryptAndMac, 6);
        let (mut target, mut key) = nvms();
        seccs
            .save_context(&sample_context(), &mut target, &mut key)
            .unwrap();

        let mut t = target.clone();
        t.write(4, &[2]).unwrap();
        assert!(matches!(
            seccs.load_context(&t, &key),
            Err(SeccsError::MalformedRecord(_))
        ));

        let mut t = target.clone();
        t.write(5, &[0x02]).unwrap();
        assert!(matches!(
            seccs.load_context(&t, &key),
            Err(SeccsError::MalformedRecord(_))
        ));

        let mut t = target.clone();
        t.write(6, &1000u32.to_le_bytes()).unwrap();
        assert!(matches!(
            seccs.load_context(&t, &key),
            Err(SeccsError::MalformedRecord(_))
        ));

        // Mode bit flipped: the tag no longer matches its input.
        let mut t = target.clone();
        t.flip_bit(5, 0).unwrap();
        assert_eq!(
            seccs.load_context(&t, &key),
            Err(SeccsError::TamperDetected)
        );
    }

    #[test]
    fn every_ciphertext_and_tag_bit_flip_is_detected() {
        for mode in [MacMode::EncryptAndMac, MacMode::EncryptThenMac] {
            let mut seccs = stack(mode, 7);
            let (mut target, mut key) = nvms();
            seccs
                .save_context(&sample_context(), &mut target, &mut key)
                .unwrap();
            for byte in RECORD_HEADER_LEN..RECORD_LEN {
                for bit in 0..8 {
                    let mut t = target.clone();
                    t.flip_bit(byte, bit).unwrap();
                    assert_eq!(
                        seccs.load_context(&t, &key),
                        Err(SeccsError::TamperDetected),
                        "{mode:?} byte {byte} bit {bit}"
                    );
                }
            }
        }
    }

    #[test]
    fn same_context_twice_gives_fresh_ciphertext() {
        let mut seccs = stack(MacMode::EncryptAndMac, 8);
        let (mut target, mut key) = nvms();
        let ctx = sample_context();
        seccs.save_context(&ctx, &mut target, &mut key).unwrap();
        let first = CheckpointRecord::parse(&target).unwrap();
        seccs.save_context(&ctx, &mut target, &mut key).unwrap();
        let second = CheckpointRecord::parse(&target).unwrap();
        assert_ne!(first.ciphertext, second.ciphertext);
        assert_ne!(first.tag, second.tag);
    }

    proptest! {
        #[test]
        fn context_bytes_round_trip(gpr in any::<[u32; 16]>(), pc: u32, sp: u32, status: u32) {
            let ctx = Context { gpr, pc, sp, status };
            prop_assert_eq!(Context::from_bytes(&ctx.to_bytes()), Some(ctx));
        }

        #[test]
        fn plaintext_never_stored(gpr in any::<[u32; 16]>(), pc: u32, sp: u32, status: u32, seed: u64) {
            let ctx = Context { gpr, pc, sp, status };
            let mut seccs = stack(MacMode::EncryptAndMac, seed);
            let (mut target, mut key) = nvms();
            seccs.save_context(&ctx, &mut target, &mut key).unwrap();
            let plain = ctx.to_bytes();
            prop_assert!(!target.cells().windows(CONTEXT_LEN).any(|w| w == plain));
            prop_assert_eq!(seccs.load_context(&target, &key).unwrap(), ctx);
        }
    }
}
