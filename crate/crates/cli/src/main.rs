//! `pqkd`: polar-code reconciliation from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 a sweep
//! manifest threshold failed. Log verbosity comes from `PQKD_LOG`
//! (`error`, `warn`, `info`, `debug`, `trace`; default `warn`).

mod files;

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pqkd_core::bench::manifest::{run_manifest, Manifest};
use pqkd_core::bench::{
    compare_representations, default_trials, emit_csv, run_trials, sweep_efficiency, trial_input, BenchReport,
    CsvMode, SweepConfig, TrialConfig,
};
use pqkd_core::channel::{gaussian_mutual_information, ChannelModel};
use pqkd_core::construction::{
    density_evolution, efficiency, fer_upper_bound, select_frozen, PolarCode, Quantization,
};
use pqkd_core::polar_core::Representation;
use pqkd_core::reconcile::net::{run_alice, run_bob, RunSummary};
use pqkd_core::reconcile::{key_rate, BobDecoder, KeyRateParams, Outcome};

use files::{encode_observations, load_keys, KeyLog, ObservationFile};

#[derive(Debug, Parser)]
#[command(name = "pqkd", version, about = "Polar-code information reconciliation for QKD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a code table for a channel and block size.
    Construct(ConstructArgs),
    /// Measure FER and decoder throughput on simulated blocks.
    Bench(BenchArgs),
    /// Efficiency over several channels and block sizes, or a manifest.
    Sweep(SweepArgs),
    /// Alice: serve disclosures for a run of key blocks.
    ReconcileServe(ServeArgs),
    /// Bob: connect, decode and verify each block.
    ReconcileConnect(ConnectArgs),
    /// Secret key rate from efficiency, mutual information and Eve's information.
    Keyrate(KeyrateArgs),
}

#[derive(Debug, Args)]
struct ConstructArgs {
    /// Channel as `bsc:<p>` or `biawgn:<snr>`.
    #[arg(long)]
    channel: ChannelModel,
    /// Block length exponent (N = 2^n).
    #[arg(long)]
    n: u8,
    #[arg(long, default_value_t = 0.1)]
    target_fer: f64,
    /// Density-evolution quantization intervals.
    #[arg(long)]
    bins: Option<u32>,
    /// Output path; defaults to `<family>-<param>_n<n>.pqct`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CodeSource {
    /// Code table to use.
    #[arg(long, conflicts_with_all = ["channel", "n"])]
    table: Option<PathBuf>,
    /// Construct on the fly for this channel (with --n).
    #[arg(long, requires = "n")]
    channel: Option<ChannelModel>,
    #[arg(long, requires = "channel")]
    n: Option<u8>,
    #[arg(long, default_value_t = 0.1)]
    target_fer: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    code: CodeSource,
    /// Number of simulated blocks (default depends on n).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = Representation::Fixed16)]
    representation: Representation,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Also decode every block in both representations and report agreement.
    #[arg(long)]
    compare: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Leave timing columns empty so the CSV is byte-identical across runs.
    #[arg(long)]
    reproducible: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// TOML manifest with runs and thresholds.
    #[arg(long, conflicts_with_all = ["channels", "n"])]
    manifest: Option<PathBuf>,
    /// Comma-separated channels.
    #[arg(long, value_delimiter = ',', requires = "n")]
    channels: Vec<ChannelModel>,
    /// Comma-separated block exponents.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u8>,
    #[arg(long, default_value_t = 0.1)]
    target_fer: f64,
    /// Monte-Carlo trials per row; omit for construction only.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    reproducible: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    table: PathBuf,
    /// Address to listen on; port 0 picks a free port.
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    /// Number of simulated key blocks (ignored with --keys-in).
    #[arg(long, default_value_t = 10)]
    blocks: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Channel to simulate; defaults to the table's channel.
    #[arg(long)]
    channel: Option<ChannelModel>,
    /// Where to write Bob's simulated observations.
    #[arg(long, required_unless_present = "keys_in")]
    observations_out: Option<PathBuf>,
    /// Replay mode: read Alice's key blocks instead of simulating them.
    #[arg(long)]
    keys_in: Option<PathBuf>,
    /// Log of verified keys (`id u64 LE`, packed key).
    #[arg(long)]
    keys_out: Option<PathBuf>,
    /// Blocks disclosed ahead of their verdicts.
    #[arg(long, default_value_t = 8)]
    window: usize,
}

#[derive(Debug, Args)]
struct ConnectArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    connect: String,
    /// Observation file, one block per block id.
    #[arg(long)]
    observations: PathBuf,
    /// Channel the observations came through; defaults to the table's channel.
    #[arg(long)]
    channel: Option<ChannelModel>,
    #[arg(long, default_value_t = Representation::Fixed16)]
    representation: Representation,
    #[arg(long)]
    keys_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("info").required(true).args(["mutual_info", "channel"])))]
struct KeyrateArgs {
    /// Sifting factor.
    #[arg(long)]
    alpha: f64,
    /// Reconciliation efficiency.
    #[arg(long)]
    beta: f64,
    /// Mutual information between Alice and Bob per symbol.
    #[arg(long)]
    mutual_info: Option<f64>,
    /// Take the mutual information from this channel's capacity.
    #[arg(long)]
    channel: Option<ChannelModel>,
    /// Eve's information per symbol.
    #[arg(long)]
    holevo: f64,
    #[arg(long)]
    fer: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&std::env::var("PQKD_LOG").unwrap_or_else(|_| "warn".into()))
        .format_timestamp(None)
        .init();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    println!("# pqkd {} started {started}", env!("CARGO_PKG_VERSION"));
    println!("# config: {:?}", cli.command);
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Construct(a) => construct(a),
        Command::Bench(a) => bench(a),
        Command::Sweep(a) => sweep(a),
        Command::ReconcileServe(a) => serve(a),
        Command::ReconcileConnect(a) => connect(a),
        Command::Keyrate(a) => keyrate(a),
    }
    .map(|()| ExitCode::SUCCESS)
    .or_else(|e| match e.downcast::<ThresholdFailure>() {
        Ok(_) => Ok(ExitCode::from(3)),
        Err(e) => Err(e),
    })
}

/// A manifest threshold did not hold; reported through exit code 3.
#[derive(Debug)]
struct ThresholdFailure(usize);

impl std::fmt::Display for ThresholdFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} manifest check(s) failed", self.0)
    }
}

impl std::error::Error for ThresholdFailure {}

fn default_table_name(channel: &ChannelModel, n: u8) -> PathBuf {
    PathBuf::from(format!("{}-{}_n{n}.pqct", channel.family(), channel.parameter()))
}

fn quantization(bins: Option<u32>) -> Result<Quantization> {
    Ok(match bins {
        Some(b) => Quantization::with_bins(b)?,
        None => Quantization::default(),
    })
}

fn build_code(channel: &ChannelModel, n: u8, target_fer: f64, bins: Option<u32>) -> Result<PolarCode> {
    let res = density_evolution(channel, n, &quantization(bins)?)?;
    log::info!("density evolution for {channel}, n = {n}: {:.1} s", res.elapsed_secs);
    let code = select_frozen(&res, target_fer)?;
    log::debug!("FER bound {:.4}", fer_upper_bound(&code, &res)?);
    Ok(code)
}

fn print_code(code: &PolarCode) -> Result<()> {
    let channel = code.metadata().channel;
    let eff = efficiency(code, &channel)?;
    println!("channel {channel}");
    println!("n {}", code.n());
    println!("rate {:.6}", code.rate());
    println!("beta {:.4}", eff.beta);
    if let Some(alt) = eff.beta_alt {
        println!("beta_alt {alt:.4}");
    }
    match code.metadata().fer_bound {
        Some(b) => println!("fer_upper_bound {b:.4}"),
        None => println!("fer_upper_bound unknown"),
    }
    println!("frozen {} info {}", code.frozen_count(), code.info_count());
    println!("checksum {:016x}", code.checksum());
    Ok(())
}

fn construct(a: ConstructArgs) -> Result<()> {
    a.channel.validate()?;
    let code = build_code(&a.channel, a.n, a.target_fer, a.bins)?;
    let path = a.output.unwrap_or_else(|| default_table_name(&a.channel, a.n));
    code.save(&path).with_context(|| format!("writing {}", path.display()))?;
    println!("table {}", path.display());
    print_code(&code)
}

fn load_table(path: &Path) -> Result<PolarCode> {
    PolarCode::load(path).with_context(|| format!("loading code table {}", path.display()))
}

impl CodeSource {
    fn resolve(&self) -> Result<(PolarCode, ChannelModel)> {
        match (&self.table, self.channel, self.n) {
            (Some(path), _, _) => {
                let code = load_table(path)?;
                let ch = code.metadata().channel;
                Ok((code, ch))
            }
            (None, Some(ch), Some(n)) => Ok((build_code(&ch, n, self.target_fer, None)?, ch)),
            _ => bail!("give either --table or both --channel and --n"),
        }
    }
}

fn csv_mode(reproducible: bool) -> CsvMode {
    if reproducible {
        CsvMode::Reproducible
    } else {
        CsvMode::Full
    }
}

fn bench(a: BenchArgs) -> Result<()> {
    let (code, channel) = a.code.resolve()?;
    let trials = a.trials.unwrap_or_else(|| default_trials(code.n()));
    let cfg = TrialConfig::new(trials, a.seed)
        .with_representation(a.representation)
        .with_workers(a.workers);
    let row = run_trials(&code, &channel, &cfg)?;
    println!(
        "{} n={} beta {:.4} fer {:.4} trials {} undetected {}",
        row.channel,
        row.n,
        row.beta,
        row.fer_measured.unwrap_or(f64::NAN),
        row.trials,
        row.undetected_errors
    );
    if let Some(tp) = row.throughput_mbps {
        let label = if row.workers > 1 { " (multi-worker aggregate)" } else { "" };
        println!("throughput {tp:.2} Mb/s{label}");
    }
    if a.compare {
        let c = compare_representations(&code, &channel, trials, a.seed)?;
        println!(
            "fixed vs float: verdict agreement {:.4} ({} of {}), identical estimates {}, fer fixed {:.4} float {:.4}",
            c.agreement(),
            c.agreeing,
            c.trials,
            c.identical,
            c.fer_fixed,
            c.fer_float
        );
    }
    if let Some(path) = a.csv {
        emit_csv(&BenchReport { rows: vec![row] }, &path, csv_mode(a.reproducible))?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let (report, failed) = if let Some(path) = &a.manifest {
        let m = Manifest::load(path)?;
        let out = run_manifest(&m)?;
        for c in &out.checks {
            println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.description);
        }
        let failed = out.checks.iter().filter(|c| !c.passed).count();
        (out.report, failed)
    } else {
        if a.channels.is_empty() || a.n.is_empty() {
            bail!("give --manifest or both --channels and --n");
        }
        let cfg = SweepConfig {
            target_fer: a.target_fer,
            quantization: Quantization::default(),
            trials: a.trials.map(|t| TrialConfig::new(t, a.seed)),
        };
        (sweep_efficiency(&a.channels, &a.n, &cfg)?, 0)
    };
    for r in &report.rows {
        print!("{} n={} beta {:.4}", r.channel, r.n, r.beta);
        if let Some(alt) = r.beta_alt {
            print!(" beta_alt {alt:.4}");
        }
        if let Some(fer) = r.fer_measured {
            print!(" fer {fer:.4}");
        }
        println!();
    }
    if let Some(path) = a.csv {
        emit_csv(&report, &path, csv_mode(a.reproducible))?;
    }
    if failed > 0 {
        return Err(ThresholdFailure(failed).into());
    }
    Ok(())
}

fn print_summary(summary: &RunSummary) {
    println!(
        "blocks {} verified {} discarded {} leakage_bits {}",
        summary.verdicts.len(),
        summary.verified(),
        summary.discarded(),
        summary.leakage_bits
    );
    if let Some(reason) = &summary.interrupted {
        println!("interrupted: {reason}");
    }
}

fn verdict_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Verified => "verified",
        Outcome::Discarded => "discarded",
        Outcome::Pending => "pending",
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let code = load_table(&a.table)?;
    let channel = a.channel.unwrap_or(code.metadata().channel);
    let blocks: Vec<(u64, pqkd_core::polar_core::BitBlock)> = match &a.keys_in {
        Some(path) => (0u64..).zip(load_keys(path, code.block_len())?).collect(),
        None => {
            // demo mode: simulate the quantum channel here and hand Bob his side
            let mut obs_bytes = Vec::new();
            let mut blocks = Vec::new();
            for id in 0..a.blocks {
                let (x, obs) = trial_input(&channel, code.n(), a.seed, id)?;
                obs_bytes.extend(encode_observations(&obs));
                blocks.push((id, x));
            }
            let path = a.observations_out.as_ref().expect("required without --keys-in");
            std::fs::write(path, obs_bytes).with_context(|| format!("writing {}", path.display()))?;
            blocks
        }
    };
    let keys: std::collections::HashMap<u64, Vec<u8>> =
        blocks.iter().map(|(id, x)| (*id, x.as_slice().to_vec())).collect();

    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let (stream, peer) = listener.accept()?;
    log::info!("connection from {peer}");
    let reader = stream.try_clone()?;
    let summary = run_alice(reader, stream, &code, blocks, a.window)?;

    let mut log = KeyLog::create(a.keys_out.as_deref())?;
    for v in &summary.verdicts {
        println!("block {} {} leakage_bits {}", v.block_id, verdict_name(v.outcome), v.leakage_bits);
        if v.outcome == Outcome::Verified {
            log.record(v.block_id, &keys[&v.block_id])?;
        }
    }
    log.finish()?;
    print_summary(&summary);
    Ok(())
}

fn connect(a: ConnectArgs) -> Result<()> {
    let code = load_table(&a.table)?;
    let channel = a.channel.unwrap_or(code.metadata().channel);
    let observations = ObservationFile::load(&a.observations, channel, code.block_len())?;
    let stream = TcpStream::connect(&a.connect).with_context(|| format!("connecting to {}", a.connect))?;
    let reader = stream.try_clone()?;
    let mut decoder = BobDecoder::new(a.representation);
    let mut log = KeyLog::create(a.keys_out.as_deref())?;
    let mut log_err = None;
    let summary = run_bob(
        reader,
        stream,
        &code,
        &channel,
        &mut decoder,
        |id| observations.get(id),
        |v, estimate| {
            println!("block {} {} leakage_bits {}", v.block_id, verdict_name(v.outcome), v.leakage_bits);
            if v.outcome == Outcome::Verified && log_err.is_none() {
                log_err = log.record(v.block_id, estimate.as_slice()).err();
            }
        },
    )?;
    if let Some(e) = log_err {
        return Err(e);
    }
    log.finish()?;
    print_summary(&summary);
    Ok(())
}

fn keyrate(a: KeyrateArgs) -> Result<()> {
    let mutual_info = match (a.mutual_info, a.channel) {
        (Some(i), _) => i,
        (None, Some(ChannelModel::BiAwgn { snr })) => gaussian_mutual_information(snr)?,
        (None, Some(ch)) => {
            ch.validate()?;
            ch.capacity()
        }
        (None, None) => bail!("give --mutual-info or --channel"),
    };
    let params = KeyRateParams::new(a.beta, mutual_info, a.holevo, a.alpha, a.fer)?;
    let k = key_rate(&params);
    println!("mutual_info {mutual_info:.6}");
    println!("K {:.6}", k.k);
    println!("K_real {:.6}", k.k_real);
    println!("K_sys {:.6}", k.k_sys);
    if k.no_secret_key {
        println!("no secret key");
    }
    Ok(())
}
