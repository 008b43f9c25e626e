//! Binary code-table files.
//!
//! Layout, all integers little-endian:
//!
//! | field          | size                 |
//! |----------------|----------------------|
//! | magic `PQCT`   | 4                    |
//! | format version | u16                  |
//! | n              | u8                   |
//! | channel tag    | u8 (0 = BSC, 1 = BI-AWGN) |
//! | channel param  | f64                  |
//! | target FER     | f64                  |
//! | DE bin count   | u32                  |
//! | frozen mask    | ceil(2^n / 8), bit `i` at byte `i / 8`, bit `i % 8` |
//! | checksum       | u64, XXH64 (seed 0) of every preceding byte |

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;
use twox_hash::XxHash64;

use super::{CodeMetadata, ConstructionError, PolarCode, MAX_BLOCK_EXPONENT};
use crate::channel::ChannelModel;

pub const TABLE_MAGIC: &[u8; 4] = b"PQCT";
pub const TABLE_FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 8 + 8 + 4;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("not a code table (bad magic)")]
    BadMagic,
    #[error("unsupported code table version {0}")]
    UnsupportedVersion(u16),
    #[error("code table truncated: {got} bytes, expected {expected}")]
    Truncated { got: usize, expected: usize },
    #[error("code table checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    BadChecksum { stored: u64, computed: u64 },
    #[error("unknown channel tag {0}")]
    UnknownChannel(u8),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn body_bytes(code: &PolarCode) -> Vec<u8> {
    let meta = code.metadata();
    let mut out = Vec::with_capacity(HEADER_LEN + code.block_len().div_ceil(8) + 8);
    out.extend_from_slice(TABLE_MAGIC);
    out.extend_from_slice(&TABLE_FORMAT_VERSION.to_le_bytes());
    out.push(code.n());
    let (tag, param) = match meta.channel {
        ChannelModel::Bsc { p } => (0u8, p),
        ChannelModel::BiAwgn { snr } => (1u8, snr),
    };
    out.push(tag);
    out.extend_from_slice(&param.to_le_bytes());
    out.extend_from_slice(&meta.target_fer.to_le_bytes());
    out.extend_from_slice(&meta.quantization_bins.to_le_bytes());
    out.extend(pack_bits(code.frozen_mask().iter().map(|&f| f as u8)));
    out
}

/// Packs bits LSB-first: bit `i` goes to byte `i / 8`, position `i % 8`.
pub fn pack_bits(bits: impl IntoIterator<Item = u8>) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, b) in bits.into_iter().enumerate() {
        if i % 8 == 0 {
            out.push(0);
        }
        *out.last_mut().expect("pushed above") |= (b & 1) << (i % 8);
    }
    out
}

pub fn unpack_bits(bytes: &[u8], count: usize) -> Vec<u8> {
    (0..count).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect()
}

pub(super) fn table_checksum(code: &PolarCode) -> u64 {
    XxHash64::oneshot(0, &body_bytes(code))
}

impl PolarCode {
    /// Serializes the code into the code-table format.
    pub fn to_table_bytes(&self) -> Vec<u8> {
        let mut out = body_bytes(self);
        let sum = XxHash64::oneshot(0, &out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Parses and verifies a code table.
    pub fn from_table_bytes(bytes: &[u8]) -> Result<Self, ConstructionError> {
        if bytes.len() < 4 || &bytes[..4] != TABLE_MAGIC {
            return Err(TableError::BadMagic.into());
        }
        if bytes.len() < HEADER_LEN + 8 {
            return Err(TableError::Truncated {
                got: bytes.len(),
                expected: HEADER_LEN + 8,
            }
            .into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != TABLE_FORMAT_VERSION {
            return Err(TableError::UnsupportedVersion(version).into());
        }
        let n = bytes[6];
        if !(1..=MAX_BLOCK_EXPONENT).contains(&n) {
            return Err(TableError::InvalidField(format!("block exponent {n}")).into());
        }
        let mask_len = (1usize << n).div_ceil(8);
        let expected = HEADER_LEN + mask_len + 8;
        if bytes.len() != expected {
            return Err(TableError::Truncated {
                got: bytes.len(),
                expected,
            }
            .into());
        }
        let body = &bytes[..expected - 8];
        let stored = u64::from_le_bytes(bytes[expected - 8..].try_into().expect("8 bytes"));
        let computed = XxHash64::oneshot(0, body);
        if stored != computed {
            return Err(TableError::BadChecksum { stored, computed }.into());
        }
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let param = f64_at(8);
        let channel = match bytes[7] {
            0 => ChannelModel::bsc(param)?,
            1 => ChannelModel::bi_awgn(param)?,
            t => return Err(TableError::UnknownChannel(t).into()),
        };
        let target_fer = f64_at(16);
        let bins = u32::from_le_bytes(bytes[24..28].try_into().expect("4 bytes"));
        let frozen = unpack_bits(&bytes[HEADER_LEN..HEADER_LEN + mask_len], 1 << n)
            .into_iter()
            .map(|b| b == 1)
            .collect();
        PolarCode::new(
            n,
            frozen,
            CodeMetadata {
                channel,
                target_fer,
                quantization_bins: bins,
                format_version: version,
                fer_bound: None,
            },
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConstructionError> {
        fs::write(path, self.to_table_bytes()).map_err(TableError::from)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConstructionError> {
        let bytes = fs::read(path).map_err(TableError::from)?;
        Self::from_table_bytes(&bytes)
    }
}
