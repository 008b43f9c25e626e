//! One-way reconciliation with polar codes, and key-rate arithmetic.
//!
//! Alice holds the raw key block `x` and is the reference. She computes
//! `u = x F^{⊗n}` (the transform is its own inverse), reveals `u` on the
//! frozen positions plus a 64-bit hash of `x`, and nothing else. Bob
//! SC-decodes his noisy view of `x` with those frozen values, re-encodes
//! `x̂ = û F^{⊗n}` and keeps the block only if the hash matches. A verified
//! block differs from Alice's with probability about `2^-64`.

pub mod net;
pub mod wire;

use thiserror::Error;
use twox_hash::XxHash64;

use crate::channel::{ChannelError, ChannelModel, Observations};
use crate::construction::{efficiency_of_rate, pack_bits, ConstructionError, PolarCode};
use crate::polar_core::{
    butterflies, BitBlock, FixedArithmetic, FloatArithmetic, LlrBlock, PolarError, Representation, ScDecoder,
};

/// Bits leaked by the verification hash.
pub const HASH_BITS: usize = 64;

#[derive(Debug, Error)]
pub enum ReconcileError {
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("observations come from {observed} but the code was built for {code}")]
    ChannelFamilyMismatch { code: String, observed: String },
    #[error("session {block_id} is {state:?}, cannot {action}")]
    SessionState {
        block_id: u64,
        state: Outcome,
        action: &'static str,
    },
    #[error("invalid key-rate parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Polar(#[from] PolarError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pending,
    Verified,
    Discarded,
}

/// 64-bit XXH64 of the block's bits packed LSB-first, seeded with `block_id`.
pub fn verification_hash(bits: &[u8], block_id: u64) -> u64 {
    XxHash64::oneshot(block_id, &pack_bits(bits.iter().copied()))
}

/// What Alice reveals for one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disclosure {
    pub block_id: u64,
    pub n: u8,
    /// `u` at the frozen positions, ascending index order.
    pub frozen_values: Vec<u8>,
    pub hash: u64,
}

impl Disclosure {
    /// Classical bits this disclosure reveals.
    pub fn leakage_bits(&self) -> usize {
        self.frozen_values.len() + HASH_BITS
    }
}

/// Alice's side: frozen values of `u = x F^{⊗n}` and the hash of `x`.
pub fn alice_disclose(code: &PolarCode, x: &BitBlock, block_id: u64) -> Result<Disclosure, ReconcileError> {
    if x.len() != code.block_len() {
        return Err(ReconcileError::LengthMismatch {
            what: "raw key block",
            expected: code.block_len(),
            got: x.len(),
        });
    }
    let mut u = x.as_slice().to_vec();
    butterflies(&mut u);
    Ok(Disclosure {
        block_id,
        n: code.n(),
        frozen_values: code.frozen_indices().map(|i| u[i]).collect(),
        hash: verification_hash(x.as_slice(), block_id),
    })
}

/// Reusable decoding state for Bob.
#[derive(Debug, Clone)]
pub struct BobDecoder {
    representation: Representation,
    fixed: ScDecoder<FixedArithmetic>,
    float: ScDecoder<FloatArithmetic>,
    u: Vec<u8>,
    fixed_llrs: Vec<i16>,
}

impl Default for BobDecoder {
    fn default() -> Self {
        Self::new(Representation::Fixed16)
    }
}

impl BobDecoder {
    pub fn new(representation: Representation) -> Self {
        BobDecoder {
            representation,
            fixed: ScDecoder::new(FixedArithmetic::default()),
            float: ScDecoder::new(FloatArithmetic),
            u: Vec::new(),
            fixed_llrs: Vec::new(),
        }
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Decodes from channel LLRs and returns `x̂`.
    pub fn decode_llrs(
        &mut self,
        code: &PolarCode,
        llrs: &[f64],
        frozen_values: &[u8],
    ) -> Result<&[u8], ReconcileError> {
        self.u.resize(code.block_len(), 0);
        match self.representation {
            Representation::Float64 => {
                self.float.decode_into(code, llrs, frozen_values, &mut self.u)?;
                Ok(self.float.encoded())
            }
            Representation::Fixed16 => {
                let quantized = LlrBlock::quantize(llrs)?;
                let LlrBlock::Fixed(values) = quantized else {
                    unreachable!("quantize yields fixed point")
                };
                self.fixed_llrs = values;
                self.fixed.decode_into(code, &self.fixed_llrs, frozen_values, &mut self.u)?;
                Ok(self.fixed.encoded())
            }
        }
    }
}

/// Result of Bob's decoding attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BobResult {
    pub outcome: Outcome,
    pub estimate: BitBlock,
}

/// Bob's side with a fresh fixed-point decoder.
pub fn bob_decode(
    code: &PolarCode,
    obs: &Observations,
    channel: &ChannelModel,
    disclosure: &Disclosure,
) -> Result<BobResult, ReconcileError> {
    bob_decode_with(&mut BobDecoder::default(), code, obs, channel, disclosure)
}

/// Bob's side reusing decoder buffers.
pub fn bob_decode_with(
    decoder: &mut BobDecoder,
    code: &PolarCode,
    obs: &Observations,
    channel: &ChannelModel,
    disclosure: &Disclosure,
) -> Result<BobResult, ReconcileError> {
    let built_for = &code.metadata().channel;
    if !built_for.same_family(channel) {
        return Err(ReconcileError::ChannelFamilyMismatch {
            code: built_for.to_string(),
            observed: channel.to_string(),
        });
    }
    if obs.len() != code.block_len() {
        return Err(ReconcileError::LengthMismatch {
            what: "observations",
            expected: code.block_len(),
            got: obs.len(),
        });
    }
    if disclosure.frozen_values.len() != code.frozen_count() {
        return Err(ReconcileError::LengthMismatch {
            what: "frozen values",
            expected: code.frozen_count(),
            got: disclosure.frozen_values.len(),
        });
    }
    let llrs = channel.llrs(obs)?;
    let x_hat = decoder.decode_llrs(code, &llrs, &disclosure.frozen_values)?;
    let outcome = if verification_hash(x_hat, disclosure.block_id) == disclosure.hash {
        Outcome::Verified
    } else {
        Outcome::Discarded
    };
    Ok(BobResult {
        outcome,
        estimate: BitBlock::new(x_hat.to_vec())?,
    })
}

/// Per-block protocol state shared by both roles.
#[derive(Debug, Clone)]
pub struct ReconciliationSession<'a> {
    code: &'a PolarCode,
    role: Role,
    block_id: u64,
    disclosed: Vec<u8>,
    verification: u64,
    outcome: Outcome,
}

impl<'a> ReconciliationSession<'a> {
    /// Alice starts a session by computing her disclosure.
    pub fn alice(code: &'a PolarCode, block_id: u64, x: &BitBlock) -> Result<(Self, Disclosure), ReconcileError> {
        let d = alice_disclose(code, x, block_id)?;
        let session = ReconciliationSession {
            code,
            role: Role::Alice,
            block_id,
            disclosed: d.frozen_values.clone(),
            verification: d.hash,
            outcome: Outcome::Pending,
        };
        Ok((session, d))
    }

    /// Bob starts a session from a received disclosure.
    pub fn bob(code: &'a PolarCode, disclosure: &Disclosure) -> Result<Self, ReconcileError> {
        if disclosure.frozen_values.len() != code.frozen_count() {
            return Err(ReconcileError::LengthMismatch {
                what: "frozen values",
                expected: code.frozen_count(),
                got: disclosure.frozen_values.len(),
            });
        }
        Ok(ReconciliationSession {
            code,
            role: Role::Bob,
            block_id: disclosure.block_id,
            disclosed: disclosure.frozen_values.clone(),
            verification: disclosure.hash,
            outcome: Outcome::Pending,
        })
    }

    /// Bob decodes and settles the session.
    pub fn decode(
        &mut self,
        decoder: &mut BobDecoder,
        obs: &Observations,
        channel: &ChannelModel,
    ) -> Result<BobResult, ReconcileError> {
        if self.role != Role::Bob {
            return Err(ReconcileError::SessionState {
                block_id: self.block_id,
                state: self.outcome,
                action: "decode as Alice",
            });
        }
        let disclosure = Disclosure {
            block_id: self.block_id,
            n: self.code.n(),
            frozen_values: std::mem::take(&mut self.disclosed),
            hash: self.verification,
        };
        let res = bob_decode_with(decoder, self.code, obs, channel, &disclosure);
        self.disclosed = disclosure.frozen_values;
        let res = res?;
        self.settle(res.outcome)?;
        Ok(res)
    }

    /// Records the final verdict; only `Pending` sessions can be settled.
    pub fn settle(&mut self, outcome: Outcome) -> Result<(), ReconcileError> {
        if self.outcome != Outcome::Pending || outcome == Outcome::Pending {
            return Err(ReconcileError::SessionState {
                block_id: self.block_id,
                state: self.outcome,
                action: "settle",
            });
        }
        self.outcome = outcome;
        Ok(())
    }

    pub fn code(&self) -> &PolarCode {
        self.code
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn block_id(&self) -> u64 {
        self.block_id
    }

    pub fn disclosed(&self) -> &[u8] {
        &self.disclosed
    }

    pub fn verification(&self) -> u64 {
        self.verification
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn leakage_bits(&self) -> usize {
        self.disclosed.len() + HASH_BITS
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageReport {
    pub leakage_bits: usize,
    /// `(1 - leakage / N)` over the same denominator as `efficiency().beta`.
    pub effective_beta: f64,
    /// BI-AWGN only: against the binary-input capacity.
    pub effective_beta_alt: Option<f64>,
    /// Set when the effective efficiency exceeds 1, which no real
    /// reconciliation can achieve.
    pub non_physical: bool,
}

pub fn leakage_report(session: &ReconciliationSession<'_>) -> Result<LeakageReport, ReconcileError> {
    if session.outcome == Outcome::Pending {
        return Err(ReconcileError::SessionState {
            block_id: session.block_id,
            state: session.outcome,
            action: "report leakage",
        });
    }
    let leakage_bits = session.leakage_bits();
    let len = session.code.block_len() as f64;
    let channel = session.code.metadata().channel;
    let e = efficiency_of_rate(1.0 - leakage_bits as f64 / len, &channel, &channel)?;
    if e.beta > 1.0 {
        log::warn!("effective efficiency {:.4} exceeds 1: non-physical configuration", e.beta);
    }
    Ok(LeakageReport {
        leakage_bits,
        effective_beta: e.beta,
        effective_beta_alt: e.beta_alt,
        non_physical: e.beta > 1.0,
    })
}

/// Inputs to the secret key rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateParams {
    pub beta: f64,
    /// `I(x:y)` in bits per symbol.
    pub mutual_info: f64,
    /// Holevo bound `S(x:E)` in bits per symbol, supplied by the caller.
    pub holevo: f64,
    /// Fraction of symbols the decoder keeps up with, `D_out / D_in`.
    pub alpha: f64,
    pub fer: f64,
}

impl KeyRateParams {
    pub fn new(beta: f64, mutual_info: f64, holevo: f64, alpha: f64, fer: f64) -> Result<Self, ReconcileError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ReconcileError::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ReconcileError::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        unit("beta", beta)?;
        unit("alpha", alpha)?;
        unit("fer", fer)?;
        nonneg("mutual information", mutual_info)?;
        nonneg("holevo bound", holevo)?;
        Ok(KeyRateParams {
            beta,
            mutual_info,
            holevo,
            alpha,
            fer,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRate {
    /// `alpha (1 - FER) (beta I - S)`.
    pub k: f64,
    /// `beta I - S`.
    pub k_real: f64,
    /// `alpha (beta I - S)`.
    pub k_sys: f64,
    /// True when `k <= 0`.
    pub no_secret_key: bool,
}

pub fn key_rate(p: &KeyRateParams) -> KeyRate {
    let k_real = p.beta * p.mutual_info - p.holevo;
    let k_sys = p.alpha * k_real;
    let k = k_sys * (1.0 - p.fer);
    KeyRate {
        k,
        k_real,
        k_sys,
        no_secret_key: k <= 0.0,
    }
}
