//! PUF-based session key generation.
//!
//! On save, two base challenges are drawn from the TRNG and persisted in the
//! dedicated key NVM. The PUF responses to those challenges become the
//! stream-cipher key/IV and the MAC key. On load, the stored challenges are
//! replayed through the same PUF to regenerate the keys. The key NVM never
//! holds key material, only challenges.
//!
//! Key record layout at offset 0 of the key NVM:
//!
//! ```text
//! 0..4    magic "SKEY"
//! 4       version 0x01
//! 5..8    reserved, 0x00
//! 8..16   base_stream, u64 little-endian
//! 16..24  base_mac,    u64 little-endian
//! ```

use std::fmt;

use thiserror::Error;

use crate::mac::{MacKey, MAC_KEY_LEN};
use crate::nvm::{NvmDevice, NvmError};
use crate::puf::{EntropyUnavailable, PufDevice, PufError, Trng};
use crate::trivium::{IV_LEN, KEY_LEN};

pub const KEY_RECORD_MAGIC: &[u8; 4] = b"SKEY";
pub const KEY_RECORD_VERSION: u8 = 0x01;
pub const KEY_RECORD_LEN: usize = 24;

const STREAM_BITS: usize = (KEY_LEN + IV_LEN) * 8;
const MAC_BITS: usize = MAC_KEY_LEN * 8;

#[derive(Debug, Error)]
pub enum KeygenError {
    #[error("key NVM holds {capacity} bytes, key record needs {needed}")]
    NvmTooSmall { needed: usize, capacity: usize },
    #[error(transparent)]
    EntropyUnavailable(#[from] EntropyUnavailable),
    #[error("no valid key record in key NVM")]
    NoKeyRecord,
    #[error(transparent)]
    Puf(#[from] PufError),
    #[error(transparent)]
    Nvm(#[from] NvmError),
}

#[derive(Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub stream_key: [u8; KEY_LEN],
    pub stream_iv: [u8; IV_LEN],
    pub mac_key: MacKey,
}

impl fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKeys(..)")
    }
}

/// The two base challenges persisted in the key NVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoredChallenges {
    pub base_stream: u64,
    pub base_mac: u64,
}

impl StoredChallenges {
    pub fn encode(&self) -> [u8; KEY_RECORD_LEN] {
        let mut rec = [0u8; KEY_RECORD_LEN];
        rec[0..4].copy_from_slice(KEY_RECORD_MAGIC);
        rec[4] = KEY_RECORD_VERSION;
        rec[8..16].copy_from_slice(&self.base_stream.to_le_bytes());
        rec[16..24].copy_from_slice(&self.base_mac.to_le_bytes());
        rec
    }

    pub fn decode(rec: &[u8]) -> Option<Self> {
        if rec.len() < KEY_RECORD_LEN
            || &rec[0..4] != KEY_RECORD_MAGIC
            || rec[4] != KEY_RECORD_VERSION
            || rec[5..8] != [0; 3]
        {
            return None;
        }
        Some(Self {
            base_stream: u64::from_le_bytes(rec[8..16].try_into().unwrap()),
            base_mac: u64::from_le_bytes(rec[16..24].try_into().unwrap()),
        })
    }

    pub fn read_from(key_nvm: &NvmDevice) -> Result<Self, KeygenError> {
        if key_nvm.capacity() < KEY_RECORD_LEN {
            return Err(KeygenError::NoKeyRecord);
        }
        Self::decode(&key_nvm.read(0, KEY_RECORD_LEN)?).ok_or(KeygenError::NoKeyRecord)
    }
}

/// Key generator: a TRNG feeding challenges to a PUF.
#[derive(Debug)]
pub struct KeyGenerator {
    trng: Trng,
    puf: PufDevice,
}

impl KeyGenerator {
    pub fn new(trng: Trng, puf: PufDevice) -> Self {
        Self { trng, puf }
    }

    pub fn puf(&self) -> &PufDevice {
        &self.puf
    }

    /// Fresh keys for a new session; overwrites the key record.
    pub fn generate(&mut self, key_nvm: &mut NvmDevice) -> Result<SessionKeys, KeygenError> {
        if key_nvm.capacity() < KEY_RECORD_LEN {
            return Err(KeygenError::NvmTooSmall {
                needed: KEY_RECORD_LEN,
                capacity: key_nvm.capacity(),
            });
        }
        let challenges = StoredChallenges {
            base_stream: self.trng.next_u64()?,
            base_mac: self.trng.next_u64()?,
        };
        key_nvm.write(0, &challenges.encode())?;
        derive_keys(&self.puf, &challenges)
    }

    /// Keys for the session whose challenges are stored in `key_nvm`.
    pub fn regenerate(&self, key_nvm: &NvmDevice) -> Result<SessionKeys, KeygenError> {
        regenerate(&self.puf, key_nvm)
    }
}

pub fn regenerate(puf: &PufDevice, key_nvm: &NvmDevice) -> Result<SessionKeys, KeygenError> {
    let challenges = StoredChallenges::read_from(key_nvm)?;
    derive_keys(puf, &challenges)
}

pub fn derive_keys(puf: &PufDevice, ch: &StoredChallenges) -> Result<SessionKeys, KeygenError> {
    let stream = puf.respond_bits(&puf.challenge(ch.base_stream), STREAM_BITS)?;
    let mac = puf.respond_bits(&puf.challenge(ch.base_mac), MAC_BITS)?;
    let mut keys = SessionKeys {
        stream_key: [0; KEY_LEN],
        stream_iv: [0; IV_LEN],
        mac_key: MacKey([0; MAC_KEY_LEN]),
    };
    keys.stream_key.copy_from_slice(&stream[..KEY_LEN]);
    keys.stream_iv.copy_from_slice(&stream[KEY_LEN..]);
    keys.mac_key.0.copy_from_slice(&mac);
    Ok(keys)
}
