//! Emulated non-volatile memory.
//!
//! An [`NvmDevice`] is a flat byte array that reads `0xFF` when erased, can be
//! persisted to an image file, and exposes [`NvmDevice::flip_bit`] so attack
//! campaigns can tamper with stored data the way a physical attacker would.
//!
//! Image file layout:
//!
//! ```text
//! 0..4   magic "NVMI"
//! 4      version 0x01
//! 5..8   reserved, 0x00
//! 8..16  capacity, u64 little-endian
//! 16..   raw cells
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

/// Value of every cell after creation or erase.
pub const ERASED: u8 = 0xFF;

pub const IMAGE_MAGIC: &[u8; 4] = b"NVMI";
pub const IMAGE_VERSION: u8 = 0x01;
pub const IMAGE_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum NvmError {
    #[error("NVM capacity must be non-zero")]
    InvalidCapacity,
    #[error("access of {len} bytes at {addr} exceeds capacity {capacity}")]
    AddressOutOfRange {
        addr: usize,
        len: usize,
        capacity: usize,
    },
    #[error("bit index {0} is not in 0..=7")]
    InvalidBit(u8),
    #[error("corrupt NVM image: {0}")]
    CorruptImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NvmDevice {
    label: String,
    cells: Vec<u8>,
}

impl NvmDevice {
    pub fn new(capacity: usize, label: impl Into<String>) -> Result<Self, NvmError> {
        if capacity == 0 {
            return Err(NvmError::InvalidCapacity);
        }
        Ok(Self {
            label: label.into(),
            cells: vec![ERASED; capacity],
        })
    }

    pub fn capacity(&self) -> usize {
        self.cells.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The whole cell array, as an attacker with a probe would see it.
    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    fn check_range(&self, addr: usize, len: usize) -> Result<(), NvmError> {
        match addr.checked_add(len) {
            Some(end) if end <= self.cells.len() => Ok(()),
            _ => Err(NvmError::AddressOutOfRange {
                addr,
                len,
                capacity: self.cells.len(),
            }),
        }
    }

    pub fn write(&mut self, addr: usize, data: &[u8]) -> Result<(), NvmError> {
        self.check_range(addr, data.len())?;
        self.cells[addr..addr + data.len()].copy_from_slice(data);
        Ok(())
    }

    pub fn read(&self, addr: usize, len: usize) -> Result<Vec<u8>, NvmError> {
        self.check_range(addr, len)?;
        Ok(self.cells[addr..addr + len].to_vec())
    }

    /// Resets every cell to [`ERASED`].
    pub fn erase(&mut self) {
        self.cells.fill(ERASED);
    }

    /// Erases `len` bytes starting at `addr`.
    pub fn erase_range(&mut self, addr: usize, len: usize) -> Result<(), NvmError> {
        self.check_range(addr, len)?;
        self.cells[addr..addr + len].fill(ERASED);
        Ok(())
    }

    /// Inverts a single bit. Tamper interface for attack campaigns.
    pub fn flip_bit(&mut self, addr: usize, bit: u8) -> Result<(), NvmError> {
        if bit > 7 {
            return Err(NvmError::InvalidBit(bit));
        }
        self.check_range(addr, 1)?;
        self.cells[addr] ^= 1 << bit;
        Ok(())
    }

    /// Serializes the device into the image file format.
    pub fn to_image(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + self.cells.len());
        out.extend_from_slice(IMAGE_MAGIC);
        out.push(IMAGE_VERSION);
        out.extend_from_slice(&[0; 3]);
        out.extend_from_slice(&(self.cells.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.cells);
        out
    }

    /// Parses an image. The label is not part of the file format and is
    /// supplied by the caller.
    pub fn from_image(bytes: &[u8], label: impl Into<String>) -> Result<Self, NvmError> {
        if bytes.len() < IMAGE_HEADER_LEN {
            return Err(NvmError::CorruptImage(format!(
                "file is {} bytes, shorter than the {IMAGE_HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != IMAGE_MAGIC {
            return Err(NvmError::CorruptImage(
                "bad magic, expected \"NVMI\"".into(),
            ));
        }
        if bytes[4] != IMAGE_VERSION {
            return Err(NvmError::CorruptImage(format!(
                "unsupported version {:#04x}",
                bytes[4]
            )));
        }
        if bytes[5..8] != [0; 3] {
            return Err(NvmError::CorruptImage("reserved bytes are not zero".into()));
        }
        let capacity = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let body = &bytes[IMAGE_HEADER_LEN..];
        if capacity == 0 || body.len() as u64 != capacity {
            return Err(NvmError::CorruptImage(format!(
                "header declares capacity {capacity} but {} cell bytes follow",
                body.len()
            )));
        }
        Ok(Self {
            label: label.into(),
            cells: body.to_vec(),
        })
    }

    pub fn save_image(&self, path: impl AsRef<Path>) -> Result<(), NvmError> {
        fs::write(path, self.to_image())?;
        Ok(())
    }

    /// Loads an image file, using the file stem as the label.
    pub fn load_image(path: impl AsRef<Path>) -> Result<Self, NvmError> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_image(&bytes, label)
    }
}
