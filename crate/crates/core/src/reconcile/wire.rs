//! Length-prefixed frames for the classical channel.
//!
//! Every frame is `version: u8, length: u32, kind: u8, payload`, where
//! `length` counts the kind byte and the payload. Integers are
//! little-endian.
//!
//! | kind | frame      | payload |
//! |------|------------|---------|
//! | 1    | HELLO      | code-table checksum u64, n u8 |
//! | 2    | HELLO_ACK  | accepted u8 |
//! | 3    | DISCLOSE   | block_id u64, n u8, frozen_count u32, frozen values packed LSB-first, hash u64 |
//! | 4    | RESULT     | block_id u64, verdict u8 (1 verified, 0 discarded) |
//! | 5    | BYE        | empty |

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{Disclosure, Outcome, HASH_BITS};
use crate::construction::{pack_bits, unpack_bits, MAX_BLOCK_EXPONENT};

pub const WIRE_VERSION: u8 = 1;
/// Largest accepted frame body: a DISCLOSE for the biggest block.
pub const MAX_FRAME_LEN: usize = 1 + 8 + 1 + 4 + (1 << MAX_BLOCK_EXPONENT) / 8 + 8;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("frame length {0} out of range")]
    BadLength(usize),
    #[error("malformed {kind} frame: {reason}")]
    Malformed { kind: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Hello { checksum: u64, n: u8 },
    HelloAck { accepted: bool },
    Disclose(Disclosure),
    Result { block_id: u64, outcome: Outcome },
    Bye,
}

const HELLO: u8 = 1;
const HELLO_ACK: u8 = 2;
const DISCLOSE: u8 = 3;
const RESULT: u8 = 4;
const BYE: u8 = 5;

impl Frame {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Frame::Hello { .. } => "HELLO",
            Frame::HelloAck { .. } => "HELLO_ACK",
            Frame::Disclose(_) => "DISCLOSE",
            Frame::Result { .. } => "RESULT",
            Frame::Bye => "BYE",
        }
    }

    /// Key-dependent bits carried by this frame: the frozen values and the
    /// hash of a DISCLOSE, nothing for the others.
    pub fn leakage_bits(&self) -> usize {
        match self {
            Frame::Disclose(d) => d.frozen_values.len() + HASH_BITS,
            _ => 0,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            Frame::Hello { checksum, n } => {
                body.push(HELLO);
                body.extend_from_slice(&checksum.to_le_bytes());
                body.push(*n);
            }
            Frame::HelloAck { accepted } => {
                body.push(HELLO_ACK);
                body.push(u8::from(*accepted));
            }
            Frame::Disclose(d) => {
                body.push(DISCLOSE);
                body.extend_from_slice(&d.block_id.to_le_bytes());
                body.push(d.n);
                body.extend_from_slice(&(d.frozen_values.len() as u32).to_le_bytes());
                body.extend(pack_bits(d.frozen_values.iter().copied()));
                body.extend_from_slice(&d.hash.to_le_bytes());
            }
            Frame::Result { block_id, outcome } => {
                body.push(RESULT);
                body.extend_from_slice(&block_id.to_le_bytes());
                body.push(u8::from(*outcome == Outcome::Verified));
            }
            Frame::Bye => body.push(BYE),
        }
        let mut out = Vec::with_capacity(body.len() + 5);
        out.push(WIRE_VERSION);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend(body);
        out
    }

    fn decode_body(body: &[u8]) -> Result<Frame, WireError> {
        let (&kind, rest) = body.split_first().ok_or(WireError::BadLength(0))?;
        let name = match kind {
            HELLO => "HELLO",
            HELLO_ACK => "HELLO_ACK",
            DISCLOSE => "DISCLOSE",
            RESULT => "RESULT",
            BYE => "BYE",
            k => return Err(WireError::UnknownKind(k)),
        };
        let malformed = |reason: String| WireError::Malformed { kind: name, reason };
        let exact = |want: usize| {
            if rest.len() == want {
                Ok(())
            } else {
                Err(malformed(format!("payload is {} bytes, expected {want}", rest.len())))
            }
        };
        let u64_at = |o: usize| u64::from_le_bytes(rest[o..o + 8].try_into().expect("8 bytes"));
        Ok(match kind {
            HELLO => {
                exact(9)?;
                Frame::Hello {
                    checksum: u64_at(0),
                    n: rest[8],
                }
            }
            HELLO_ACK => {
                exact(1)?;
                Frame::HelloAck { accepted: rest[0] == 1 }
            }
            DISCLOSE => {
                if rest.len() < 8 + 1 + 4 + 8 {
                    return Err(malformed(format!("payload is only {} bytes", rest.len())));
                }
                let block_id = u64_at(0);
                let n = rest[8];
                let count = u32::from_le_bytes(rest[9..13].try_into().expect("4 bytes")) as usize;
                if n > MAX_BLOCK_EXPONENT || count > 1usize << n {
                    return Err(malformed(format!("{count} frozen values for n = {n}")));
                }
                let packed = count.div_ceil(8);
                exact(13 + packed + 8)?;
                let bytes = &rest[13..13 + packed];
                // padding bits must be zero so the frame carries exactly `count` bits
                if !count.is_multiple_of(8) && bytes[packed - 1] >> (count % 8) != 0 {
                    return Err(malformed("non-zero padding bits".into()));
                }
                Frame::Disclose(Disclosure {
                    block_id,
                    n,
                    frozen_values: unpack_bits(bytes, count),
                    hash: u64_at(13 + packed),
                })
            }
            RESULT => {
                exact(9)?;
                let outcome = match rest[8] {
                    1 => Outcome::Verified,
                    0 => Outcome::Discarded,
                    v => return Err(malformed(format!("verdict {v}"))),
                };
                Frame::Result {
                    block_id: u64_at(0),
                    outcome,
                }
            }
            _ => {
                exact(0)?;
                Frame::Bye
            }
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame, WireError> {
        read_frame(&mut &bytes[..])?.ok_or_else(|| io::Error::from(io::ErrorKind::UnexpectedEof).into())
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<(), WireError> {
    w.write_all(&frame.encode())?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a frame.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, WireError> {
    let mut version = [0u8; 1];
    match r.read_exact(&mut version) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    if version[0] != WIRE_VERSION {
        return Err(WireError::UnsupportedVersion(version[0]));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(WireError::BadLength(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Frame::decode_body(&body).map(Some)
}
