//! Sweep manifests: a TOML list of runs with optional pass/fail thresholds.
//!
//! ```toml
//! seed = 7
//! target_fer = 0.1
//!
//! [[run]]
//! channels = ["bsc:0.02"]
//! n = [16, 20]
//! trials = 200              # omit for construction only
//! representation = "fixed"
//! beta_min = 0.93
//! fer_max = 0.19
//! increasing_in_n = true    # beta must grow with n for every channel
//! min_passing = 1           # rows that must meet the beta bounds (default: all)
//! ```

use serde::Deserialize;

use super::{sweep_with_codes, BenchError, BenchReport, BenchRow, SweepConfig, TrialConfig};
use crate::channel::ChannelModel;
use crate::construction::Quantization;
use crate::polar_core::Representation;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_target_fer")]
    pub target_fer: f64,
    /// Density-evolution bin count.
    pub bins: Option<u32>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub run: Vec<ManifestRun>,
}

fn default_seed() -> u64 {
    1
}

fn default_target_fer() -> f64 {
    0.1
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManifestRun {
    pub channels: Vec<String>,
    pub n: Vec<u8>,
    pub trials: Option<usize>,
    pub representation: Option<String>,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
    /// Bounds on the BI-AWGN capacity efficiency.
    pub beta_alt_min: Option<f64>,
    pub beta_alt_max: Option<f64>,
    pub fer_min: Option<f64>,
    pub fer_max: Option<f64>,
    #[serde(default)]
    pub increasing_in_n: bool,
    pub min_passing: Option<usize>,
}

/// One threshold evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub description: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestOutcome {
    pub report: BenchReport,
    pub checks: Vec<Check>,
}

impl ManifestOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let m: Manifest = toml::from_str(text).map_err(|e| BenchError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, BenchError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.run.is_empty() {
            return Err(BenchError::Manifest("no [[run]] entries".into()));
        }
        for (i, r) in self.run.iter().enumerate() {
            if r.channels.is_empty() || r.n.is_empty() {
                return Err(BenchError::Manifest(format!("run {i}: channels and n must be non-empty")));
            }
            for c in &r.channels {
                c.parse::<ChannelModel>()
                    .map_err(|e| BenchError::Manifest(format!("run {i}: {e}")))?;
            }
            if let Some(rep) = &r.representation {
                rep.parse::<Representation>()
                    .map_err(|e| BenchError::Manifest(format!("run {i}: {e}")))?;
            }
            if r.trials == Some(0) {
                return Err(BenchError::Manifest(format!("run {i}: trials must be at least 1")));
            }
        }
        Ok(())
    }
}

fn within(v: f64, lo: Option<f64>, hi: Option<f64>) -> bool {
    lo.is_none_or(|lo| v >= lo) && hi.is_none_or(|hi| v <= hi)
}

fn row_label(r: &BenchRow) -> String {
    format!("{} n={}", r.channel, r.n)
}

/// Runs every entry and evaluates its thresholds.
pub fn run_manifest(m: &Manifest) -> Result<ManifestOutcome, BenchError> {
    let quantization = match m.bins {
        Some(b) => Quantization::with_bins(b)?,
        None => Quantization::default(),
    };
    let mut report = BenchReport::default();
    let mut checks = Vec::new();
    for run in &m.run {
        let channels: Vec<ChannelModel> = run
            .channels
            .iter()
            .map(|c| c.parse().map_err(|e| BenchError::Manifest(format!("{e}"))))
            .collect::<Result<_, _>>()?;
        let representation = match &run.representation {
            Some(r) => r.parse().map_err(BenchError::Manifest)?,
            None => Representation::Fixed16,
        };
        let cfg = SweepConfig {
            target_fer: m.target_fer,
            quantization,
            trials: run.trials.map(|t| {
                TrialConfig::new(t, m.seed)
                    .with_representation(representation)
                    .with_workers(m.workers)
            }),
        };
        let (part, _) = sweep_with_codes(&channels, &run.n, &cfg)?;

        let has_beta_bounds = [run.beta_min, run.beta_max, run.beta_alt_min, run.beta_alt_max]
            .iter()
            .any(Option::is_some);
        if has_beta_bounds {
            let passing: Vec<bool> = part
                .rows
                .iter()
                .map(|r| {
                    within(r.beta, run.beta_min, run.beta_max)
                        && (run.beta_alt_min.is_none() && run.beta_alt_max.is_none()
                            || r.beta_alt.is_some_and(|b| within(b, run.beta_alt_min, run.beta_alt_max)))
                })
                .collect();
            let need = run.min_passing.unwrap_or(part.rows.len());
            let got = passing.iter().filter(|&&p| p).count();
            for (r, &p) in part.rows.iter().zip(&passing) {
                log::info!("{}: beta {:.4} {}", row_label(r), r.beta, if p { "within bounds" } else { "out of bounds" });
            }
            checks.push(Check {
                description: format!(
                    "{} of {} rows within efficiency bounds (need {need}) for {:?}",
                    got,
                    part.rows.len(),
                    run.channels
                ),
                passed: got >= need,
            });
        }
        if run.fer_min.is_some() || run.fer_max.is_some() {
            for r in &part.rows {
                if let Some(fer) = r.fer_measured {
                    checks.push(Check {
                        description: format!("{}: FER {fer:.4} within [{:?}, {:?}]", row_label(r), run.fer_min, run.fer_max),
                        passed: within(fer, run.fer_min, run.fer_max),
                    });
                }
            }
        }
        if run.increasing_in_n {
            for chunk in part.rows.chunks(run.n.len()) {
                let betas: Vec<f64> = chunk.iter().map(|r| r.beta).collect();
                checks.push(Check {
                    description: format!("{}: beta increasing in n {:?}", chunk[0].channel, betas),
                    passed: betas.windows(2).all(|w| w[0] < w[1]),
                });
            }
        }
        report.rows.extend(part.rows);
    }
    Ok(ManifestOutcome { report, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let m = Manifest::parse(
            r#"
            seed = 3
            [[run]]
            channels = ["bsc:0.05"]
            n = [6, 8]
            beta_min = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(m.seed, 3);
        assert_eq!(m.target_fer, 0.1);
        assert_eq!(m.run[0].n, vec![6, 8]);
        assert!(Manifest::parse("seed = 1\n[[run]]\nchannels = [\"bsc:0.6\"]\nn = [4]\n").is_err());
        assert!(Manifest::parse("[[run]]\nchannels = [\"bsc:0.1\"]\nn = [4]\ncolour = 1\n").is_err());
        assert!(Manifest::parse("seed = 1\n").is_err());
        assert!(Manifest::parse("[[run]]\nchannels = [\"bsc:0.1\"]\nn = [4]\nrepresentation = \"double\"\n").is_err());
    }

    #[test]
    fn thresholds_pass_and_fail() {
        let m = Manifest::parse(
            r#"
            [[run]]
            channels = ["bsc:0.05", "bsc:0.08"]
            n = [6, 8]
            trials = 20
            beta_min = 0.2
            fer_max = 1.0
            increasing_in_n = true

            [[run]]
            channels = ["bsc:0.05"]
            n = [6]
            beta_min = 0.99
            "#,
        )
        .unwrap();
        let out = run_manifest(&m).unwrap();
        assert_eq!(out.report.rows.len(), 5);
        let failed: Vec<&Check> = out.checks.iter().filter(|c| !c.passed).collect();
        assert_eq!(failed.len(), 1, "{:?}", out.checks);
        assert!(failed[0].description.contains("need 1"));
        assert!(!out.all_passed());
    }
}
