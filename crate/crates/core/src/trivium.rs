//! The Trivium stream cipher.
//!
//! The 288-bit state is held as three shift registers (93, 84 and 111 bits),
//! each in a `u128` where bit `k` holds the `k+1`-th cell of that register.
//! Key and IV bits are read least-significant-bit first and loaded the way
//! the eSTREAM reference code does: key bit `m` lands in `s(80-m)`, IV bit
//! `m` in `s(173-m)`. Keystream bits are packed into bytes LSB-first.
//!
//! Encryption and decryption are the same XOR transform.

use thiserror::Error;

pub const KEY_LEN: usize = 10;
pub const IV_LEN: usize = 10;

const WARM_UP_ROUNDS: usize = 4 * 288;

const MASK_A: u128 = (1 << 93) - 1;
const MASK_B: u128 = (1 << 84) - 1;
const MASK_C: u128 = (1 << 111) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("Trivium {what} must be {expected} bytes, got {got}")]
pub struct InvalidKeyLength {
    pub what: &'static str,
    pub expected: usize,
    pub got: usize,
}

#[derive(Clone)]
pub struct Trivium {
    a: u128,
    b: u128,
    c: u128,
}

impl std::fmt::Debug for Trivium {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trivium").finish_non_exhaustive()
    }
}

#[inline(always)]
fn bit(reg: u128, idx: u32) -> u128 {
    (reg >> idx) & 1
}

/// Loads 80 bits LSB-first into bits 79..=0 of a register (bit `m` of the
/// input ends up at register bit `79 - m`).
fn load_reversed(bytes: &[u8]) -> u128 {
    let mut reg = 0u128;
    for m in 0..80 {
        let b = (bytes[m / 8] >> (m % 8)) & 1;
        reg |= (b as u128) << (79 - m);
    }
    reg
}

impl Trivium {
    /// Loads key and IV and runs the 1152-round warm-up.
    pub fn new(key: &[u8], iv: &[u8]) -> Result<Self, InvalidKeyLength> {
        if key.len() != KEY_LEN {
            return Err(InvalidKeyLength {
                what: "key",
                expected: KEY_LEN,
                got: key.len(),
            });
        }
        if iv.len() != IV_LEN {
            return Err(InvalidKeyLength {
                what: "iv",
                expected: IV_LEN,
                got: iv.len(),
            });
        }
        let mut st = Self {
            a: load_reversed(key),
            b: load_reversed(iv),
            // s286, s287, s288
            c: 0b111 << 108,
        };
        for _ in 0..WARM_UP_ROUNDS {
            st.clock();
        }
        Ok(st)
    }

    /// One clocking of the cipher; returns the output bit.
    #[inline]
    fn clock(&mut self) -> u8 {
        let (a, b, c) = (self.a, self.b, self.c);
        // s66 ^ s93, s162 ^ s177, s243 ^ s288
        let mut t1 = bit(a, 65) ^ bit(a, 92);
        let mut t2 = bit(b, 68) ^ bit(b, 83);
        let mut t3 = bit(c, 65) ^ bit(c, 110);
        let z = t1 ^ t2 ^ t3;
        t1 ^= (bit(a, 90) & bit(a, 91)) ^ bit(b, 77);
        t2 ^= (bit(b, 81) & bit(b, 82)) ^ bit(c, 86);
        t3 ^= (bit(c, 108) & bit(c, 109)) ^ bit(a, 68);
        self.a = ((a << 1) | t3) & MASK_A;
        self.b = ((b << 1) | t1) & MASK_B;
        self.c = ((c << 1) | t2) & MASK_C;
        z as u8
    }

    pub fn next_byte(&mut self) -> u8 {
        (0..8).fold(0u8, |acc, i| acc | (self.clock() << i))
    }

    pub fn keystream(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.next_byte()).collect()
    }

    pub fn apply_keystream(&mut self, data: &mut [u8]) {
        for byte in data {
            *byte ^= self.next_byte();
        }
    }
}

/// XORs `data` with the keystream for `(key, iv)`.
pub fn xor_transform(key: &[u8], iv: &[u8], data: &[u8]) -> Result<Vec<u8>, InvalidKeyLength> {
    let mut cipher = Trivium::new(key, iv)?;
    let mut out = data.to_vec();
    cipher.apply_keystream(&mut out);
    Ok(out)
}
