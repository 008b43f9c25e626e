//! Monte-Carlo frame error rates, efficiency sweeps and decoder throughput.
//!
//! Trial `t` of a run with seed `s` draws its raw key block and channel noise
//! from ChaCha8 seeded with `s` on stream `t`, so every trial can be
//! reproduced on its own and results do not depend on the worker count.

pub mod manifest;

use std::io::Write;
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{ChannelError, ChannelModel, Observations};
use crate::construction::{
    density_evolution, efficiency, select_frozen, ConstructionError, PolarCode, Quantization,
};
use crate::polar_core::{BitBlock, Representation};
use crate::reconcile::{alice_disclose, verification_hash, BobDecoder, ReconcileError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("at least one trial is required")]
    NoTrials,
    #[error("report is empty")]
    EmptyReport,
    #[error("block exponents must be sorted ascending, got {0:?}")]
    UnsortedBlockSizes(Vec<u8>),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Reconcile(#[from] ReconcileError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raw key block and Bob's channel output for trial `index`.
pub fn trial_input(channel: &ChannelModel, n: u8, seed: u64, index: u64) -> Result<(BitBlock, Observations), ChannelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let len = 1usize << n;
    let mut x = vec![0u8; len];
    rng.fill(&mut x[..]);
    x.iter_mut().for_each(|b| *b &= 1);
    let obs = channel.transmit_with(&x, &mut rng)?;
    let x = BitBlock::new(x).expect("length is a power of two");
    Ok((x, obs))
}

/// One line of a report. Trial fields are empty for construction-only rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub channel: ChannelModel,
    pub n: u8,
    pub beta: f64,
    pub beta_alt: Option<f64>,
    pub fer_bound: Option<f64>,
    pub fer_measured: Option<f64>,
    pub trials: usize,
    /// Block bits decoded per second, in units of 10^6.
    pub throughput_mbps: Option<f64>,
    pub wall_time_secs: f64,
    pub seed: u64,
    pub representation: Option<Representation>,
    pub workers: usize,
    pub code_checksum: u64,
    /// Verified blocks whose estimate nevertheless differs from Alice's.
    pub undetected_errors: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub trials: usize,
    pub seed: u64,
    pub representation: Representation,
    /// Worker threads. Throughput with more than one worker is the aggregate
    /// over the decode phase's wall time.
    pub workers: usize,
}

impl TrialConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        TrialConfig {
            trials,
            seed,
            representation: Representation::Fixed16,
            workers: 1,
        }
    }

    pub fn with_representation(self, representation: Representation) -> Self {
        TrialConfig { representation, ..self }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        TrialConfig { workers, ..self }
    }
}

/// Default trial count for a block size.
pub fn default_trials(n: u8) -> usize {
    match n {
        0..=20 => 500,
        21..=24 => 100,
        _ => 30,
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    discarded: usize,
    undetected: usize,
    decode_time: Duration,
}

fn run_worker(
    code: &PolarCode,
    channel: &ChannelModel,
    cfg: &TrialConfig,
    indices: impl Iterator<Item = usize>,
) -> Result<Tally, BenchError> {
    let mut decoder = BobDecoder::new(cfg.representation);
    let mut tally = Tally::default();
    let mut warmed = false;
    for t in indices {
        let (x, obs) = trial_input(channel, code.n(), cfg.seed, t as u64)?;
        let d = alice_disclose(code, &x, t as u64)?;
        let llrs = channel.llrs(&obs)?;
        if !warmed {
            // one discarded decode to fault in buffers and tables
            decoder.decode_llrs(code, &llrs, &d.frozen_values)?;
            warmed = true;
        }
        let start = Instant::now();
        let x_hat = decoder.decode_llrs(code, &llrs, &d.frozen_values)?;
        tally.decode_time += start.elapsed();
        if verification_hash(x_hat, t as u64) != d.hash {
            tally.discarded += 1;
        } else if x_hat != x.as_slice() {
            tally.undetected += 1;
        }
    }
    Ok(tally)
}

/// Runs `cfg.trials` full reconciliations of fresh blocks over `channel`.
pub fn run_trials(code: &PolarCode, channel: &ChannelModel, cfg: &TrialConfig) -> Result<BenchRow, BenchError> {
    if cfg.trials == 0 {
        return Err(BenchError::NoTrials);
    }
    let workers = cfg.workers.clamp(1, cfg.trials);
    let eff = efficiency(code, channel)?;
    let wall = Instant::now();
    let (tally, decode_secs) = if workers == 1 {
        let t = run_worker(code, channel, cfg, 0..cfg.trials)?;
        (t, t.decode_time.as_secs_f64())
    } else {
        let parts = thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| scope.spawn(move || run_worker(code, channel, cfg, (w..cfg.trials).step_by(workers))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let total = parts.iter().fold(Tally::default(), |a, t| Tally {
            discarded: a.discarded + t.discarded,
            undetected: a.undetected + t.undetected,
            decode_time: a.decode_time.max(t.decode_time),
        });
        // the slowest worker bounds the decode phase
        (total, total.decode_time.as_secs_f64())
    };
    let bits = (cfg.trials * code.block_len()) as f64;
    let row = BenchRow {
        channel: *channel,
        n: code.n(),
        beta: eff.beta,
        beta_alt: eff.beta_alt,
        fer_bound: code.metadata().fer_bound,
        fer_measured: Some(tally.discarded as f64 / cfg.trials as f64),
        trials: cfg.trials,
        throughput_mbps: Some(bits / decode_secs.max(1e-9) / 1e6),
        wall_time_secs: wall.elapsed().as_secs_f64(),
        seed: cfg.seed,
        representation: Some(cfg.representation),
        workers,
        code_checksum: code.checksum(),
        undetected_errors: tally.undetected,
    };
    log::info!(
        "{} n={} {}: FER {:.4} over {} trials, {:.2} Mb/s",
        channel,
        code.n(),
        cfg.representation,
        row.fer_measured.unwrap_or(f64::NAN),
        cfg.trials,
        row.throughput_mbps.unwrap_or(f64::NAN)
    );
    Ok(row)
}

/// Frame-level comparison of the fixed-point and float decoders on the same blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationComparison {
    pub trials: usize,
    /// Frames where both decoders reach the same verdict (both recover the
    /// block or both fail).
    pub agreeing: usize,
    /// Frames where both decoders output the very same estimate. Two failed
    /// decodes almost never go wrong the same way, so this is roughly
    /// `agreeing` minus the frames both lose.
    pub identical: usize,
    pub fer_fixed: f64,
    pub fer_float: f64,
}

impl RepresentationComparison {
    /// Fraction of frames with the same verdict.
    pub fn agreement(&self) -> f64 {
        self.agreeing as f64 / self.trials as f64
    }
}

pub fn compare_representations(
    code: &PolarCode,
    channel: &ChannelModel,
    trials: usize,
    seed: u64,
) -> Result<RepresentationComparison, BenchError> {
    if trials == 0 {
        return Err(BenchError::NoTrials);
    }
    let mut fixed = BobDecoder::new(Representation::Fixed16);
    let mut float = BobDecoder::new(Representation::Float64);
    let (mut agreeing, mut identical, mut fail_fixed, mut fail_float) = (0, 0, 0, 0);
    for t in 0..trials {
        let (x, obs) = trial_input(channel, code.n(), seed, t as u64)?;
        let d = alice_disclose(code, &x, t as u64)?;
        let llrs = channel.llrs(&obs)?;
        let a = fixed.decode_llrs(code, &llrs, &d.frozen_values)?.to_vec();
        let b = float.decode_llrs(code, &llrs, &d.frozen_values)?;
        let (ok_fixed, ok_float) = (a == x.as_slice(), b == x.as_slice());
        agreeing += usize::from(ok_fixed == ok_float);
        identical += usize::from(a == b);
        fail_fixed += usize::from(!ok_fixed);
        fail_float += usize::from(!ok_float);
    }
    Ok(RepresentationComparison {
        trials,
        agreeing,
        identical,
        fer_fixed: fail_fixed as f64 / trials as f64,
        fer_float: fail_float as f64 / trials as f64,
    })
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub target_fer: f64,
    pub quantization: Quantization,
    /// Also measure FER for every constructed code.
    pub trials: Option<TrialConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            target_fer: 0.1,
            quantization: Quantization::default(),
            trials: None,
        }
    }
}

/// Constructs a code for every `(channel, n)` pair and records its efficiency.
pub fn sweep_efficiency(channels: &[ChannelModel], ns: &[u8], cfg: &SweepConfig) -> Result<BenchReport, BenchError> {
    let (report, _) = sweep_with_codes(channels, ns, cfg)?;
    Ok(report)
}

/// [`sweep_efficiency`], also returning the constructed codes in row order.
pub fn sweep_with_codes(
    channels: &[ChannelModel],
    ns: &[u8],
    cfg: &SweepConfig,
) -> Result<(BenchReport, Vec<PolarCode>), BenchError> {
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::UnsortedBlockSizes(ns.to_vec()));
    }
    let mut report = BenchReport::default();
    let mut codes = Vec::new();
    for ch in channels {
        for &n in ns {
            let res = density_evolution(ch, n, &cfg.quantization)?;
            let code = select_frozen(&res, cfg.target_fer)?;
            let eff = efficiency(&code, ch)?;
            log::info!(
                "{ch} n={n}: rate {:.5}, beta {:.4}, constructed in {:.1}s",
                code.rate(),
                eff.beta,
                res.elapsed_secs
            );
            let row = match &cfg.trials {
                Some(t) => {
                    let mut row = run_trials(&code, ch, t)?;
                    row.wall_time_secs += res.elapsed_secs;
                    row
                }
                None => BenchRow {
                    channel: *ch,
                    n,
                    beta: eff.beta,
                    beta_alt: eff.beta_alt,
                    fer_bound: code.metadata().fer_bound,
                    fer_measured: None,
                    trials: 0,
                    throughput_mbps: None,
                    wall_time_secs: res.elapsed_secs,
                    seed: 0,
                    representation: None,
                    workers: 1,
                    code_checksum: code.checksum(),
                    undetected_errors: 0,
                },
            };
            report.rows.push(row);
            codes.push(code);
        }
    }
    Ok((report, codes))
}

/// Whether timing columns are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvMode {
    Full,
    /// Throughput and wall time are left empty so replays compare equal byte for byte.
    Reproducible,
}

pub const CSV_HEADER: [&str; 14] = [
    "channel",
    "n",
    "beta",
    "beta_alt",
    "fer_bound",
    "fer_measured",
    "trials",
    "throughput_mbps",
    "wall_time_s",
    "seed",
    "representation",
    "workers",
    "code_checksum",
    "undetected_errors",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_csv(report: &BenchReport, out: impl Write, mode: CsvMode) -> Result<(), BenchError> {
    if report.rows.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &report.rows {
        let timing = mode == CsvMode::Full;
        w.write_record([
            r.channel.to_string(),
            r.n.to_string(),
            r.beta.to_string(),
            opt(r.beta_alt),
            opt(r.fer_bound),
            opt(r.fer_measured),
            r.trials.to_string(),
            opt(r.throughput_mbps.filter(|_| timing)),
            if timing { r.wall_time_secs.to_string() } else { String::new() },
            r.seed.to_string(),
            opt(r.representation),
            r.workers.to_string(),
            format!("{:016x}", r.code_checksum),
            r.undetected_errors.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(report: &BenchReport, path: impl AsRef<Path>, mode: CsvMode) -> Result<(), BenchError> {
    if report.rows.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    let file = std::fs::File::create(path)?;
    write_csv(report, std::io::BufWriter::new(file), mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{CodeMetadata, TABLE_FORMAT_VERSION};

    fn code(n: u8, frozen: usize, channel: ChannelModel) -> PolarCode {
        PolarCode::new(
            n,
            (0..1usize << n).map(|i| i < frozen).collect(),
            CodeMetadata {
                channel,
                target_fer: 0.1,
                quantization_bins: 2048,
                format_version: TABLE_FORMAT_VERSION,
                fer_bound: Some(0.05),
            },
        )
        .unwrap()
    }

    #[test]
    fn trial_inputs_are_reproducible() {
        let ch = ChannelModel::Bsc { p: 0.1 };
        let a = trial_input(&ch, 8, 5, 3).unwrap();
        assert_eq!(a, trial_input(&ch, 8, 5, 3).unwrap());
        assert_ne!(a, trial_input(&ch, 8, 5, 4).unwrap());
        assert_ne!(a, trial_input(&ch, 8, 6, 3).unwrap());
    }

    #[test]
    fn noiseless_trials_never_fail() {
        let c = code(8, 100, ChannelModel::Bsc { p: 0.02 });
        for repr in [Representation::Fixed16, Representation::Float64] {
            let cfg = TrialConfig::new(50, 1).with_representation(repr);
            let row = run_trials(&c, &ChannelModel::Bsc { p: 0.0 }, &cfg).unwrap();
            assert_eq!(row.fer_measured, Some(0.0));
            assert_eq!(row.trials, 50);
            assert!(row.throughput_mbps.unwrap() > 0.0);
            assert_eq!(row.code_checksum, c.checksum());
            assert_eq!(row.fer_bound, Some(0.05));
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let ch = ChannelModel::Bsc { p: 0.08 };
        let c = code(7, 70, ch);
        let one = run_trials(&c, &ch, &TrialConfig::new(60, 9)).unwrap();
        let three = run_trials(&c, &ch, &TrialConfig::new(60, 9).with_workers(3)).unwrap();
        assert!(one.fer_measured.unwrap() > 0.0);
        assert_eq!(one.fer_measured, three.fer_measured);
        assert_eq!(three.workers, 3);
        assert!(run_trials(&c, &ch, &TrialConfig::new(0, 9)).is_err());
    }

    #[test]
    fn fixed_and_float_agree_on_easy_blocks() {
        let ch = ChannelModel::Bsc { p: 0.01 };
        let c = code(8, 128, ch);
        let cmp = compare_representations(&c, &ch, 40, 2).unwrap();
        assert_eq!(cmp.trials, 40);
        assert!(cmp.agreement() >= 0.95);
    }

    #[test]
    fn sweep_rejects_unsorted_sizes() {
        let ch = [ChannelModel::Bsc { p: 0.05 }];
        assert!(matches!(
            sweep_efficiency(&ch, &[8, 6], &SweepConfig::default()),
            Err(BenchError::UnsortedBlockSizes(_))
        ));
    }

    #[test]
    fn sweep_efficiency_grows_with_block_size() {
        let ch = [ChannelModel::Bsc { p: 0.05 }];
        let report = sweep_efficiency(&ch, &[6, 8, 10], &SweepConfig::default()).unwrap();
        let betas: Vec<f64> = report.rows.iter().map(|r| r.beta).collect();
        assert!(betas.windows(2).all(|w| w[0] < w[1]), "{betas:?}");
        assert!(report.rows.iter().all(|r| r.fer_measured.is_none() && r.trials == 0));
    }

    #[test]
    fn csv_output() {
        let ch = ChannelModel::BiAwgn { snr: 1.0 };
        let c = code(6, 40, ch);
        let row = run_trials(&c, &ch, &TrialConfig::new(5, 3)).unwrap();
        let report = BenchReport { rows: vec![row] };
        let mut full = Vec::new();
        write_csv(&report, &mut full, CsvMode::Full).unwrap();
        let text = String::from_utf8(full).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[1].starts_with("biawgn:1,6,"));

        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        emit_csv(&report, &a, CsvMode::Reproducible).unwrap();
        let again = BenchReport {
            rows: vec![run_trials(&c, &ch, &TrialConfig::new(5, 3)).unwrap()],
        };
        emit_csv(&again, &b, CsvMode::Reproducible).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

        assert!(matches!(
            emit_csv(&BenchReport::default(), &a, CsvMode::Full),
            Err(BenchError::EmptyReport)
        ));
        assert!(emit_csv(&report, dir.path().join("missing/x.csv"), CsvMode::Full).is_err());
    }
}
