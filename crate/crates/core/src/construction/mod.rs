//! Polar code construction by quantized density evolution.
//!
//! [`density_evolution`] tracks the LLR density of every synthetic channel
//! under genie-aided successive cancellation and reports its hard-decision
//! error probability. [`select_frozen`] then keeps the most reliable channels
//! for information while the union bound on the frame error rate stays under
//! the target, and freezes the rest.
//!
//! Index convention: synthetic channel `i` is reached by applying, from the
//! most significant bit of `i` down to the least significant, the check-node
//! transform for a `0` bit and the variable-node transform for a `1` bit. This
//! is the natural (non bit-reversed) order used by the decoder.

mod density;
mod table;

use std::time::Instant;

use thiserror::Error;

use crate::channel::{gaussian_mutual_information, ChannelError, ChannelModel};
use density::{Density, Evolver};
pub use table::{TableError, TABLE_FORMAT_VERSION, TABLE_MAGIC};
pub use table::{pack_bits, unpack_bits};

/// Largest supported block exponent.
pub const MAX_BLOCK_EXPONENT: u8 = 27;

#[derive(Debug, Error)]
pub enum ConstructionError {
    #[error("block exponent must lie in 1..={MAX_BLOCK_EXPONENT}, got {0}")]
    InvalidBlockExponent(u8),
    #[error("invalid quantization: {0}")]
    InvalidQuantization(String),
    #[error("quantization grid too coarse: the base channel collapses into a single bin")]
    GridTooCoarse,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("target FER must lie strictly between 0 and 1, got {0}")]
    InvalidTargetFer(f64),
    #[error("frozen mask has length {got}, expected {expected}")]
    MaskLength { got: usize, expected: usize },
    #[error("code has block exponent {code} but the construction result has {result}")]
    MismatchedBlockLength { code: u8, result: u8 },
    #[error("code was built for {code} but efficiency was requested for {channel}")]
    ChannelFamilyMismatch { code: String, channel: String },
    #[error("channel {0} has zero capacity")]
    ZeroCapacity(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Uniform LLR grid used by density evolution.
///
/// `bins` intervals of width `step = 2 * max_llr / bins` cover
/// `[-max_llr, max_llr]`; grid points sit at `k * step` for
/// `k in -bins/2..=bins/2`. Mass beyond the range goes to `±inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantization {
    bins: u32,
    max_llr: f64,
}

impl Default for Quantization {
    fn default() -> Self {
        Quantization {
            bins: 2048,
            max_llr: crate::channel::LLR_SATURATION,
        }
    }
}

impl Quantization {
    pub fn new(bins: u32, max_llr: f64) -> Result<Self, ConstructionError> {
        if bins < 256 || !bins.is_power_of_two() {
            return Err(ConstructionError::InvalidQuantization(format!(
                "bin count must be a power of two >= 256, got {bins}"
            )));
        }
        if !(max_llr.is_finite() && max_llr > 0.0) {
            return Err(ConstructionError::InvalidQuantization(format!(
                "LLR range must be positive, got {max_llr}"
            )));
        }
        Ok(Quantization { bins, max_llr })
    }

    /// Grid with `bins` intervals over the default `[-30, 30]` range.
    pub fn with_bins(bins: u32) -> Result<Self, ConstructionError> {
        Self::new(bins, crate::channel::LLR_SATURATION)
    }

    pub fn bins(&self) -> u32 {
        self.bins
    }

    pub fn max_llr(&self) -> f64 {
        self.max_llr
    }

    pub fn step(&self) -> f64 {
        2.0 * self.max_llr / self.bins as f64
    }

    pub(crate) fn half(&self) -> usize {
        self.bins as usize / 2
    }
}

/// When to stop refining a subtree of synthetic channels.
///
/// Exact fixed points (all mass at `+inf`, or all mass at LLR 0) are always
/// pruned since density evolution cannot change them. `Bounded` additionally
/// prunes
///
/// * nearly perfect channels whose Bhattacharyya parameter `Z` satisfies
///   `Z * 2^m <= perfect_tolerance` with `m` levels left. Since
///   `Z(W-) + Z(W+) <= 2 Z(W)` and `Pe <= Z`, the error probabilities of all
///   descendants sum to at most `perfect_tolerance`; they are recorded as 0;
/// * nearly useless channels whose Bhattacharyya parameter `Z` keeps every
///   descendant's error probability above `useless_floor`, using
///   `Z(W+) = Z^2`, `Z(W-) >= Z` and `Pe >= (1 - sqrt(1 - Z^2)) / 2`.
///   Descendants are recorded with that lower bound.
///
/// Channels recorded with a lower bound above `useless_floor` are never
/// selected by [`select_frozen`] for any target FER below the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pruning {
    Exact,
    Bounded {
        perfect_tolerance: f64,
        useless_floor: f64,
    },
}

impl Default for Pruning {
    fn default() -> Self {
        Pruning::Bounded {
            perfect_tolerance: 1e-12,
            useless_floor: 0.25,
        }
    }
}

/// Per-synthetic-channel error probabilities for one (channel, n) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionResult {
    pub n: u8,
    pub channel: ChannelModel,
    /// `pe[i]` is the genie-aided error probability of synthetic channel `i`.
    pub pe: Vec<f64>,
    pub quantization: Quantization,
    /// Number of density transforms evaluated.
    pub transforms: u64,
    pub elapsed_secs: f64,
}

impl ConstructionResult {
    pub fn block_len(&self) -> usize {
        1 << self.n
    }
}

/// Runs density evolution with the default pruning rule.
pub fn density_evolution(
    channel: &ChannelModel,
    n: u8,
    quant: &Quantization,
) -> Result<ConstructionResult, ConstructionError> {
    density_evolution_with(channel, n, quant, Pruning::default())
}

pub fn density_evolution_with(
    channel: &ChannelModel,
    n: u8,
    quant: &Quantization,
    pruning: Pruning,
) -> Result<ConstructionResult, ConstructionError> {
    if !(1..=MAX_BLOCK_EXPONENT).contains(&n) {
        return Err(ConstructionError::InvalidBlockExponent(n));
    }
    let start = Instant::now();
    let base = base_density(channel, quant)?;
    let half = quant.half();
    let mut stack = Vec::with_capacity(n as usize + 1);
    stack.push(base);
    stack.extend((0..n).map(|_| Density::zeroed(half)));
    let mut walk = Walk {
        n: n as usize,
        pe: vec![0.0; 1usize << n],
        evolver: Evolver::new(quant),
        stack,
        pruning,
        transforms: 0,
    };
    walk.descend(0, 0);
    log::debug!(
        "density evolution {channel} n={n}: {} transforms in {:.2?}",
        walk.transforms,
        start.elapsed()
    );
    Ok(ConstructionResult {
        n,
        channel: *channel,
        pe: walk.pe,
        quantization: *quant,
        transforms: walk.transforms,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Quantized LLR density of the base channel, conditioned on bit 0.
///
/// A BSC at `p = 0.5` is accepted here: it is exactly representable and
/// polarizes to nothing.
fn base_density(channel: &ChannelModel, quant: &Quantization) -> Result<Density, ConstructionError> {
    let half = quant.half();
    let step = quant.step();
    let mut d = Density::zeroed(half);
    match *channel {
        ChannelModel::Bsc { p } => {
            if !(0.0..=0.5).contains(&p) {
                return Err(ChannelError::InvalidCrossover(p).into());
            }
            if p == 0.0 {
                d.pos_inf = 1.0;
                return Ok(d);
            }
            let llr = ((1.0 - p) / p).ln();
            let k = (llr / step).round() as usize;
            if k == 0 && p != 0.5 {
                return Err(ConstructionError::GridTooCoarse);
            }
            if k > half {
                d.pos_inf = 1.0 - p;
                d.neg_inf = p;
            } else {
                d.bins[half + k] += 1.0 - p;
                d.bins[half - k] += p;
            }
        }
        ChannelModel::BiAwgn { snr } => {
            channel.validate()?;
            // L = 2 y snr with y ~ N(1, 1/snr), so L ~ N(2 snr, 4 snr)
            let mean = 2.0 * snr;
            let sd = 2.0 * snr.sqrt();
            let edge = |k: f64| (k * step - mean) / sd;
            for (i, slot) in d.bins.iter_mut().enumerate() {
                let k = i as f64 - half as f64;
                *slot = normal_interval(edge(k - 0.5), edge(k + 0.5));
            }
            d.neg_inf = normal_interval(f64::NEG_INFINITY, edge(-(half as f64) - 0.5));
            d.pos_inf = normal_interval(edge(half as f64 + 0.5), f64::INFINITY);
            if d.single_bin().is_some() {
                return Err(ConstructionError::GridTooCoarse);
            }
        }
    }
    Ok(d)
}

/// `P(a < Z < b)` for a standard normal `Z`, accurate in both tails.
fn normal_interval(a: f64, b: f64) -> f64 {
    let upper = |x: f64| 0.5 * libm::erfc(x / std::f64::consts::SQRT_2);
    if a >= 0.0 {
        upper(a) - upper(b)
    } else if b <= 0.0 {
        upper(-b) - upper(-a)
    } else {
        1.0 - upper(-a) - upper(b)
    }
    .max(0.0)
}

fn error_lower_bound(z: f64) -> f64 {
    let z = z.clamp(0.0, 1.0);
    0.5 * (1.0 - (1.0 - z * z).sqrt())
}

struct Walk {
    n: usize,
    pe: Vec<f64>,
    evolver: Evolver,
    stack: Vec<Density>,
    pruning: Pruning,
    transforms: u64,
}

impl Walk {
    fn descend(&mut self, depth: usize, prefix: usize) {
        let remaining = self.n - depth;
        let node = &self.stack[depth];
        if remaining == 0 {
            self.pe[prefix] = node.error_probability();
            return;
        }
        let span = 1usize << remaining;
        let range = prefix << remaining..(prefix + 1) << remaining;

        let perfect = match self.pruning {
            Pruning::Exact => node.uncertain_mass() == 0.0,
            Pruning::Bounded {
                perfect_tolerance, ..
            } => {
                let z = self.evolver.bhattacharyya(node) + 2.0 * node.neg_inf;
                z * span as f64 <= perfect_tolerance
            }
        };
        if perfect {
            self.pe[range].iter_mut().for_each(|v| *v = 0.0);
            return;
        }

        if node.bins[node.half()] == 1.0 {
            self.pe[range].iter_mut().for_each(|v| *v = 0.5);
            return;
        }
        if let Pruning::Bounded { useless_floor, .. } = self.pruning {
            let z = self.evolver.bhattacharyya(node);
            if z < 1.0 && error_lower_bound(z.powf(span as f64)) >= useless_floor {
                // squaring z once per plus step gives each descendant's bound
                let mut by_plus_steps = Vec::with_capacity(remaining + 1);
                let mut zq = z;
                for _ in 0..=remaining {
                    by_plus_steps.push(error_lower_bound(zq));
                    zq *= zq;
                }
                for (offset, v) in self.pe[range].iter_mut().enumerate() {
                    *v = by_plus_steps[offset.count_ones() as usize];
                }
                return;
            }
        }

        if remaining == 1 {
            let node = &self.stack[depth];
            self.pe[2 * prefix] = self.evolver.check_error_probability(node);
            self.pe[2 * prefix + 1] = self.evolver.var_error_probability(node);
            return;
        }

        let (done, rest) = self.stack.split_at_mut(depth + 1);
        let parent = &done[depth];
        let child = &mut rest[0];
        self.evolver.check(parent, child);
        self.transforms += 1;
        self.descend(depth + 1, prefix << 1);

        let (done, rest) = self.stack.split_at_mut(depth + 1);
        self.evolver.var(&done[depth], &mut rest[0]);
        self.transforms += 1;
        self.descend(depth + 1, (prefix << 1) | 1);
    }
}

/// Metadata carried by a [`PolarCode`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeMetadata {
    pub channel: ChannelModel,
    pub target_fer: f64,
    pub quantization_bins: u32,
    pub format_version: u16,
    /// Union bound at construction time; not stored in code-table files.
    pub fer_bound: Option<f64>,
}

/// A polar code: block exponent, frozen mask (`true` = frozen) and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCode {
    n: u8,
    frozen: Vec<bool>,
    metadata: CodeMetadata,
}

impl PolarCode {
    pub fn new(n: u8, frozen: Vec<bool>, metadata: CodeMetadata) -> Result<Self, ConstructionError> {
        if !(1..=MAX_BLOCK_EXPONENT).contains(&n) {
            return Err(ConstructionError::InvalidBlockExponent(n));
        }
        if frozen.len() != 1usize << n {
            return Err(ConstructionError::MaskLength {
                got: frozen.len(),
                expected: 1 << n,
            });
        }
        Ok(PolarCode {
            n,
            frozen,
            metadata,
        })
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn block_len(&self) -> usize {
        self.frozen.len()
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|&&f| f).count()
    }

    pub fn info_count(&self) -> usize {
        self.block_len() - self.frozen_count()
    }

    /// Frozen positions in ascending order.
    pub fn frozen_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.frozen
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
    }

    pub fn rate(&self) -> f64 {
        self.info_count() as f64 / self.block_len() as f64
    }

    pub fn metadata(&self) -> &CodeMetadata {
        &self.metadata
    }

    /// Checksum of the serialized code table; identifies the code on the wire.
    pub fn checksum(&self) -> u64 {
        table::table_checksum(self)
    }
}

/// Greedy frozen-set selection under a union bound on the frame error rate.
///
/// Channels are visited by ascending error probability (ties by ascending
/// index) and made information bits while the running sum stays within
/// `target_fer`; the first channel that would exceed it stops the scan.
pub fn select_frozen(res: &ConstructionResult, target_fer: f64) -> Result<PolarCode, ConstructionError> {
    if !(target_fer > 0.0 && target_fer < 1.0) {
        return Err(ConstructionError::InvalidTargetFer(target_fer));
    }
    let mut order: Vec<u32> = (0..res.pe.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        res.pe[a as usize]
            .total_cmp(&res.pe[b as usize])
            .then(a.cmp(&b))
    });
    let mut frozen = vec![true; res.pe.len()];
    let mut bound = 0.0;
    for &i in &order {
        let next = bound + res.pe[i as usize];
        if next > target_fer {
            break;
        }
        bound = next;
        frozen[i as usize] = false;
    }
    PolarCode::new(
        res.n,
        frozen,
        CodeMetadata {
            channel: res.channel,
            target_fer,
            quantization_bins: res.quantization.bins(),
            format_version: TABLE_FORMAT_VERSION,
            fer_bound: Some(bound.min(1.0)),
        },
    )
}

/// Reconciliation efficiency of a code on a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    /// BSC: `R / (1 - h(p))`. BI-AWGN: `R / (0.5 log2(1 + snr))`.
    pub beta: f64,
    /// BI-AWGN only: `R / C_biawgn`, against the binary-input capacity.
    pub beta_alt: Option<f64>,
}

pub fn efficiency(code: &PolarCode, channel: &ChannelModel) -> Result<Efficiency, ConstructionError> {
    efficiency_of_rate(code.rate(), &code.metadata().channel, channel)
}

/// [`efficiency`] for a bare rate, checking that `built_for` and `channel`
/// share a family.
pub fn efficiency_of_rate(
    rate: f64,
    built_for: &ChannelModel,
    channel: &ChannelModel,
) -> Result<Efficiency, ConstructionError> {
    if !built_for.same_family(channel) {
        return Err(ConstructionError::ChannelFamilyMismatch {
            code: built_for.to_string(),
            channel: channel.to_string(),
        });
    }
    channel.validate()?;
    let capacity = channel.capacity();
    if capacity <= 0.0 {
        return Err(ConstructionError::ZeroCapacity(channel.to_string()));
    }
    Ok(match *channel {
        ChannelModel::Bsc { .. } => Efficiency {
            beta: rate / capacity,
            beta_alt: None,
        },
        ChannelModel::BiAwgn { snr } => Efficiency {
            beta: rate / gaussian_mutual_information(snr)?,
            beta_alt: Some(rate / capacity),
        },
    })
}

/// Union bound `sum pe[i]` over information positions, clamped to 1.
pub fn fer_upper_bound(code: &PolarCode, res: &ConstructionResult) -> Result<f64, ConstructionError> {
    if code.n() != res.n {
        return Err(ConstructionError::MismatchedBlockLength {
            code: code.n(),
            result: res.n,
        });
    }
    let sum: f64 = code
        .frozen_mask()
        .iter()
        .zip(&res.pe)
        .filter(|(&f, _)| !f)
        .map(|(_, &p)| p)
        .sum();
    Ok(sum.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn synthetic(pe: Vec<f64>) -> ConstructionResult {
        let n = pe.len().trailing_zeros() as u8;
        ConstructionResult {
            n,
            channel: ChannelModel::Bsc { p: 0.1 },
            pe,
            quantization: Quantization::default(),
            transforms: 0,
            elapsed_secs: 0.0,
        }
    }

    #[test]
    fn quantization_validation() {
        assert!(Quantization::new(128, 30.0).is_err());
        assert!(Quantization::new(1000, 30.0).is_err());
        assert!(Quantization::new(2048, 0.0).is_err());
        let q = Quantization::default();
        assert_eq!(q.bins(), 2048);
        assert!((q.step() - 60.0 / 2048.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_channel_gives_zero_error() {
        let res = density_evolution(&ChannelModel::Bsc { p: 0.0 }, 3, &Quantization::default()).unwrap();
        assert_eq!(res.pe, vec![0.0; 8]);
    }

    #[test]
    fn useless_channel_polarizes_to_nothing() {
        let res = density_evolution(&ChannelModel::Bsc { p: 0.5 }, 1, &Quantization::default()).unwrap();
        assert_eq!(res.pe, vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = Quantization::default();
        let ch = ChannelModel::Bsc { p: 0.1 };
        assert!(matches!(
            density_evolution(&ch, 0, &q),
            Err(ConstructionError::InvalidBlockExponent(0))
        ));
        assert!(density_evolution(&ch, 28, &q).is_err());
        // LLR of 0.49 is 0.04, below half a bin on a 256-bin grid
        let q256 = Quantization::with_bins(256).unwrap();
        assert!(matches!(
            density_evolution(&ChannelModel::Bsc { p: 0.49 }, 2, &q256),
            Err(ConstructionError::GridTooCoarse)
        ));
    }

    #[test]
    fn select_frozen_examples() {
        let code = select_frozen(&synthetic(vec![0.0; 4]), 0.1).unwrap();
        assert_eq!(code.rate(), 1.0);
        assert_eq!(code.frozen_count(), 0);
        let code = select_frozen(&synthetic(vec![0.5; 4]), 0.1).unwrap();
        assert_eq!(code.rate(), 0.0);
        assert_eq!(code.frozen_count(), 4);
        assert!(select_frozen(&synthetic(vec![0.0; 4]), 0.0).is_err());
        assert!(select_frozen(&synthetic(vec![0.0; 4]), 1.0).is_err());
    }

    #[test]
    fn select_frozen_is_greedy_with_index_ties() {
        let res = synthetic(vec![0.04, 0.01, 0.04, 0.3, 0.02, 0.04, 0.0, 0.5]);
        let code = select_frozen(&res, 0.1).unwrap();
        // order: 6 (0), 1 (.01), 4 (.02), 0 (.04) -> sum .07; index 2 would give .11
        let info: Vec<usize> = (0..8).filter(|&i| !code.is_frozen(i)).collect();
        assert_eq!(info, vec![0, 1, 4, 6]);
        assert!((code.metadata().fer_bound.unwrap() - 0.07).abs() < 1e-12);
        assert!((fer_upper_bound(&code, &res).unwrap() - 0.07).abs() < 1e-12);
    }

    #[test]
    fn fer_bound_examples() {
        let res = synthetic(vec![0.3, 0.07, 0.2, 0.5]);
        let all_frozen = PolarCode::new(2, vec![true; 4], select_frozen(&res, 0.1).unwrap().metadata).unwrap();
        assert_eq!(fer_upper_bound(&all_frozen, &res).unwrap(), 0.0);
        let single = select_frozen(&res, 0.1).unwrap();
        assert_eq!(single.info_count(), 1);
        assert!((fer_upper_bound(&single, &res).unwrap() - 0.07).abs() < 1e-15);
        let other = synthetic(vec![0.0; 8]);
        assert!(fer_upper_bound(&single, &other).is_err());
    }

    #[test]
    fn efficiency_examples() {
        let ch = ChannelModel::Bsc { p: 0.02 };
        let cap = ch.capacity();
        assert!((efficiency_of_rate(cap, &ch, &ch).unwrap().beta - 1.0).abs() < 1e-12);
        let b = efficiency_of_rate(0.8027, &ch, &ch).unwrap().beta;
        assert!((b - 0.935).abs() < 1e-3, "{b}");
        assert_eq!(efficiency_of_rate(0.0, &ch, &ch).unwrap().beta, 0.0);
        let awgn = ChannelModel::BiAwgn { snr: 1.097 };
        assert!(efficiency_of_rate(0.5, &ch, &awgn).is_err());
        let e = efficiency_of_rate(0.5, &awgn, &awgn).unwrap();
        assert!((e.beta - 0.5 / 0.534163).abs() < 1e-5);
        assert!(e.beta_alt.unwrap() > e.beta);
    }

    #[test]
    fn mask_length_is_checked() {
        let meta = select_frozen(&synthetic(vec![0.0; 4]), 0.1).unwrap().metadata;
        assert!(PolarCode::new(2, vec![false; 3], meta).is_err());
        assert!(PolarCode::new(0, vec![false; 1], meta).is_err());
    }
}
