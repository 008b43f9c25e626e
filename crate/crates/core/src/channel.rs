//! Binary-input symmetric channel models.
//!
//! Two channels are modelled: the binary symmetric channel used for
//! discrete-variable QKD, where the crossover probability is the QBER, and the
//! binary-input AWGN channel that stands in for continuous-variable QKD after
//! binary reconciliation encoding.
//!
//! Conventions used throughout the crate:
//!
//! * LLRs are natural-log ratios `ln P(y|0) / P(y|1)`; positive favours bit 0.
//! * BI-AWGN uses unit-energy antipodal signalling `b -> 1 - 2b` and noise
//!   variance `1 / snr`.
//! * Every LLR magnitude is clamped to [`LLR_SATURATION`].

use std::fmt;
use std::str::FromStr;

use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Largest LLR magnitude produced anywhere in the crate.
pub const LLR_SATURATION: f64 = 30.0;

/// Number of integration intervals for the BI-AWGN capacity.
const CAPACITY_POINTS: usize = 1 << 15;
/// Half-width of the integration window in units of the noise standard deviation.
const CAPACITY_WINDOW: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("BSC crossover probability must lie in [0, 0.5), got {0}")]
    InvalidCrossover(f64),
    #[error("SNR must be finite and strictly positive, got {0}")]
    InvalidSnr(f64),
    #[error("probability must lie in [0, 1], got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("cannot transmit an empty block")]
    EmptyInput,
    #[error("observation does not match the {0} channel")]
    ObservationMismatch(&'static str),
    #[error("invalid channel spec {0:?}; expected bsc:<p> or biawgn:<snr>")]
    Parse(String),
}

/// A symmetric binary-input memoryless channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelModel {
    Bsc { p: f64 },
    BiAwgn { snr: f64 },
}

/// A single channel output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Bit(u8),
    Sample(f64),
}

/// A block of channel outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Bits(Vec<u8>),
    Samples(Vec<f64>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Bits(b) => b.len(),
            Observations::Samples(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Option<Observation> {
        match self {
            Observations::Bits(b) => b.get(i).map(|&v| Observation::Bit(v)),
            Observations::Samples(s) => s.get(i).map(|&v| Observation::Sample(v)),
        }
    }
}

impl ChannelModel {
    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self, ChannelError> {
        let ch = ChannelModel::Bsc { p };
        ch.validate()?;
        Ok(ch)
    }

    /// Binary-input AWGN channel with `snr = Es / sigma^2`.
    pub fn bi_awgn(snr: f64) -> Result<Self, ChannelError> {
        let ch = ChannelModel::BiAwgn { snr };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        match *self {
            ChannelModel::Bsc { p } if (0.0..0.5).contains(&p) => Ok(()),
            ChannelModel::Bsc { p } => Err(ChannelError::InvalidCrossover(p)),
            ChannelModel::BiAwgn { snr } if snr.is_finite() && snr > 0.0 => Ok(()),
            ChannelModel::BiAwgn { snr } => Err(ChannelError::InvalidSnr(snr)),
        }
    }

    /// Short family name, `"bsc"` or `"biawgn"`.
    pub fn family(&self) -> &'static str {
        match self {
            ChannelModel::Bsc { .. } => "bsc",
            ChannelModel::BiAwgn { .. } => "biawgn",
        }
    }

    /// The single real parameter of the channel (crossover probability or SNR).
    pub fn parameter(&self) -> f64 {
        match *self {
            ChannelModel::Bsc { p } => p,
            ChannelModel::BiAwgn { snr } => snr,
        }
    }

    pub fn same_family(&self, other: &ChannelModel) -> bool {
        self.family() == other.family()
    }

    /// Noise standard deviation of the BI-AWGN channel.
    pub fn sigma(&self) -> Option<f64> {
        match *self {
            ChannelModel::BiAwgn { snr } => Some((1.0 / snr).sqrt()),
            ChannelModel::Bsc { .. } => None,
        }
    }

    /// Channel capacity in bits per use.
    pub fn capacity(&self) -> f64 {
        match *self {
            ChannelModel::Bsc { p } => 1.0 - entropy_unchecked(p),
            ChannelModel::BiAwgn { snr } => bi_awgn_capacity(snr),
        }
    }

    /// Sends `bits` through the channel. Deterministic in `seed`.
    pub fn transmit(&self, bits: &[u8], seed: u64) -> Result<Observations, ChannelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.transmit_with(bits, &mut rng)
    }

    /// Same as [`ChannelModel::transmit`] but drawing noise from a caller-owned generator.
    pub fn transmit_with(
        &self,
        bits: &[u8],
        rng: &mut ChaCha8Rng,
    ) -> Result<Observations, ChannelError> {
        if bits.is_empty() {
            return Err(ChannelError::EmptyInput);
        }
        self.validate()?;
        match *self {
            ChannelModel::Bsc { p } => {
                let flip = Bernoulli::new(p).expect("validated crossover probability");
                let out = bits
                    .iter()
                    .map(|&b| (b & 1) ^ flip.sample(rng) as u8)
                    .collect();
                Ok(Observations::Bits(out))
            }
            ChannelModel::BiAwgn { snr } => {
                let sigma = (1.0 / snr).sqrt();
                let out = bits
                    .iter()
                    .map(|&b| {
                        let z: f64 = StandardNormal.sample(rng);
                        (1.0 - 2.0 * f64::from(b & 1)) + sigma * z
                    })
                    .collect();
                Ok(Observations::Samples(out))
            }
        }
    }

    /// LLR of one observation, clamped to `±LLR_SATURATION`.
    pub fn llr(&self, obs: Observation) -> Result<f64, ChannelError> {
        match (*self, obs) {
            (ChannelModel::Bsc { p }, Observation::Bit(b)) => {
                let mag = bsc_llr_magnitude(p);
                Ok(if b & 1 == 0 { mag } else { -mag })
            }
            (ChannelModel::BiAwgn { snr }, Observation::Sample(y)) if y.is_finite() => {
                Ok((2.0 * y * snr).clamp(-LLR_SATURATION, LLR_SATURATION))
            }
            (ChannelModel::Bsc { .. }, _) => Err(ChannelError::ObservationMismatch("bsc")),
            (ChannelModel::BiAwgn { .. }, _) => Err(ChannelError::ObservationMismatch("biawgn")),
        }
    }

    /// LLRs of a whole block of observations.
    pub fn llrs(&self, obs: &Observations) -> Result<Vec<f64>, ChannelError> {
        match (*self, obs) {
            (ChannelModel::Bsc { p }, Observations::Bits(bits)) => {
                let mag = bsc_llr_magnitude(p);
                Ok(bits
                    .iter()
                    .map(|&b| if b & 1 == 0 { mag } else { -mag })
                    .collect())
            }
            (ChannelModel::BiAwgn { .. }, Observations::Samples(ys)) => ys
                .iter()
                .map(|&y| self.llr(Observation::Sample(y)))
                .collect(),
            (ChannelModel::Bsc { .. }, _) => Err(ChannelError::ObservationMismatch("bsc")),
            (ChannelModel::BiAwgn { .. }, _) => Err(ChannelError::ObservationMismatch("biawgn")),
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family(), self.parameter())
    }
}

impl FromStr for ChannelModel {
    type Err = ChannelError;

    /// Parses `bsc:<p>` or `biawgn:<snr>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (family, value) = s
            .split_once(':')
            .ok_or_else(|| ChannelError::Parse(s.to_string()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| ChannelError::Parse(s.to_string()))?;
        match family.trim().to_ascii_lowercase().as_str() {
            "bsc" => ChannelModel::bsc(value),
            "biawgn" | "awgn" => ChannelModel::bi_awgn(value),
            _ => Err(ChannelError::Parse(s.to_string())),
        }
    }
}

fn bsc_llr_magnitude(p: f64) -> f64 {
    if p <= 0.0 {
        return LLR_SATURATION;
    }
    ((1.0 - p) / p).ln().min(LLR_SATURATION)
}

/// Binary entropy `h(p)` in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64, ChannelError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ChannelError::ProbabilityOutOfRange(p));
    }
    Ok(entropy_unchecked(p))
}

fn entropy_unchecked(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Mutual information `0.5 log2(1 + snr)` of the Gaussian-input Gaussian channel.
pub fn gaussian_mutual_information(snr: f64) -> Result<f64, ChannelError> {
    if !(snr.is_finite() && snr > 0.0) {
        return Err(ChannelError::InvalidSnr(snr));
    }
    Ok(0.5 * (1.0 + snr).log2())
}

/// `log2(1 + e^{-t})` without overflow.
fn log2_one_plus_exp_neg(t: f64) -> f64 {
    let v = if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    };
    v / std::f64::consts::LN_2
}

/// Capacity of the BI-AWGN channel, `1 - E[log2(1 + e^{-L})]` with
/// `L = 2y/sigma^2` and `y ~ N(1, sigma^2)`, by Simpson's rule over ±10 sigma.
fn bi_awgn_capacity(snr: f64) -> f64 {
    let sigma = (1.0 / snr).sqrt();
    let h = 2.0 * CAPACITY_WINDOW / CAPACITY_POINTS as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let integrand = |z: f64| {
        let y = 1.0 + sigma * z;
        norm * (-0.5 * z * z).exp() * log2_one_plus_exp_neg(2.0 * y * snr)
    };
    let mut acc = integrand(-CAPACITY_WINDOW) + integrand(CAPACITY_WINDOW);
    for k in 1..CAPACITY_POINTS {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(-CAPACITY_WINDOW + k as f64 * h);
    }
    (1.0 - acc * h / 3.0).clamp(0.0, 1.0)
}
