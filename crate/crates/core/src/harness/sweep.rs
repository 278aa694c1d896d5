//! Monte Carlo symbol-error-rate sweeps.
//!
//! Trial `k` of SNR point `p` draws its symbols and noise from seeds derived
//! from `(seed, p, k)`, synthesizes the full four-channel block and hands the
//! architecture's channels to the estimator. Trials run in parallel but are
//! reduced in trial order, so the output depends only on the configuration.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::channel::{draw_symbols, synthesize};
use crate::combiner::Architecture;
use crate::constellation::SymbolAlphabet;
use crate::error::{Error, Result};
use crate::harness::estimator::{EstimatorRegistry, TrialInput};
use crate::harness::scenario::Scenario;
use crate::rng::{derive_seed, STREAM_NOISE, STREAM_SYMBOLS};

pub const CSV_HEADER: &str = "arch,estimator,M,T,snr_db,ser,symbol_errors,symbols_total,trials,mean_em_iters,seed";

/// How the quarter-turn ambiguity of blind estimators is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationMode {
    /// Use the estimator's own resolution.
    #[default]
    Likelihood,
    /// Count errors against the best of the four rotations of the truth.
    Genie,
}

impl std::str::FromStr for RotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "likelihood" => Ok(RotationMode::Likelihood),
            "genie" => Ok(RotationMode::Genie),
            _ => Err(Error::InvalidParameter(format!("unknown rotation mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub arch: Architecture,
    pub order: usize,
    pub block_len: usize,
    pub snr_db: Vec<f64>,
    /// Blocks per SNR point.
    pub trials: usize,
    pub estimator: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub rotation: RotationMode,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn new(arch: Architecture, order: usize, block_len: usize, snr_db: Vec<f64>, trials: usize, estimator: &str, seed: u64) -> Self {
        Self {
            arch,
            order,
            block_len,
            snr_db,
            trials,
            estimator: estimator.to_string(),
            seed,
            scenario: Scenario::default(),
            rotation: RotationMode::default(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerRecord {
    pub arch: Architecture,
    pub estimator: String,
    pub order: usize,
    pub block_len: usize,
    pub snr_db: f64,
    pub ser: f64,
    pub symbol_errors: u64,
    pub symbols_total: u64,
    pub trials: usize,
    /// Zero for estimators that do not iterate.
    pub mean_em_iters: f64,
    pub seed: u64,
}

impl SerRecord {
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub fn standard_error(&self) -> f64 {
        (self.ser * (1.0 - self.ser) / self.symbols_total as f64).sqrt()
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.16e},{:.16e},{},{},{},{:.16e},{}",
            self.arch.tag(),
            self.estimator,
            self.order,
            self.block_len,
            self.snr_db,
            self.ser,
            self.symbol_errors,
            self.symbols_total,
            self.trials,
            self.mean_em_iters,
            self.seed
        )
    }
}

/// `start:step:stop` (inclusive) or a single value.
pub fn parse_snr_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("bad SNR range `{text}`"));
    let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
    if parts.iter().any(|p| !p.is_finite()) {
        return Err(bad());
    }
    match parts[..] {
        [v] => Ok(vec![v]),
        [start, step, stop] => {
            if !(step > 0.0) || stop < start {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..n).map(|k| start + k as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

struct TrialTally {
    errors: u64,
    iterations: usize,
}

fn run_trial(
    config: &SweepConfig,
    registry: &EstimatorRegistry,
    alphabet: &SymbolAlphabet,
    model: &crate::channel::ChannelModel,
    point: usize,
    trial: usize,
) -> Result<TrialTally> {
    let trial_seed = derive_seed(config.seed, &[point as u64, trial as u64]);
    let symbols = draw_symbols(alphabet, config.block_len, derive_seed(trial_seed, &[STREAM_SYMBOLS]));
    let full = synthesize(model, &symbols, derive_seed(trial_seed, &[STREAM_NOISE]))?;
    let channels = config.arch.channels();
    let block = full.restrict(&channels)?;
    let sub_model = model.restrict(&channels)?;
    let estimator = registry.get(&config.estimator)?;
    let det = estimator.detect(&TrialInput { block: &block, model: &sub_model, alphabet })?;
    let errors = if estimator.is_blind() && config.rotation == RotationMode::Genie {
        (0..4)
            .filter_map(|k| alphabet.rotation_map(k))
            .map(|perm| {
                det.symbols
                    .indices()
                    .iter()
                    .zip(symbols.indices())
                    .filter(|(d, s)| **d != perm[**s])
                    .count()
            })
            .min()
            .unwrap_or(det.symbols.errors_against(&symbols))
    } else {
        det.symbols.errors_against(&symbols)
    };
    Ok(TrialTally { errors: errors as u64, iterations: det.iterations.unwrap_or(0) })
}

fn sweep_points(config: &SweepConfig, registry: &EstimatorRegistry) -> Result<Vec<SerRecord>> {
    let alphabet = SymbolAlphabet::qam(config.order)?;
    let estimator = registry.get(&config.estimator)?;
    let mut out = Vec::with_capacity(config.snr_db.len());
    for (point, &snr) in config.snr_db.iter().enumerate() {
        let model = config.scenario.model_at_snr(snr, alphabet.avg_power())?;
        let tallies: Vec<Result<TrialTally>> = (0..config.trials)
            .into_par_iter()
            .map(|trial| run_trial(config, registry, &alphabet, &model, point, trial))
            .collect();
        let mut errors = 0u64;
        let mut iterations = 0usize;
        for t in tallies {
            let t = t?;
            errors += t.errors;
            iterations += t.iterations;
        }
        let total = (config.trials * config.block_len) as u64;
        out.push(SerRecord {
            arch: config.arch,
            estimator: estimator.name().to_string(),
            order: config.order,
            block_len: config.block_len,
            snr_db: snr,
            ser: errors as f64 / total as f64,
            symbol_errors: errors,
            symbols_total: total,
            trials: config.trials,
            mean_em_iters: if estimator.is_blind() { iterations as f64 / config.trials as f64 } else { 0.0 },
            seed: config.seed,
        });
    }
    Ok(out)
}

pub fn run_ser_sweep(config: &SweepConfig, registry: &EstimatorRegistry) -> Result<Vec<SerRecord>> {
    if config.trials == 0 || config.block_len == 0 || config.snr_db.is_empty() {
        return Err(Error::InvalidParameter("a sweep needs trials, a block length and SNR points".into()));
    }
    let (ns, nn) = config.arch.layout();
    if registry.get(&config.estimator)?.is_blind() && config.block_len < ns + nn {
        return Err(Error::InvalidParameter(format!(
            "block length {} is shorter than the {} channels of {}",
            config.block_len,
            ns + nn,
            config.arch
        )));
    }
    let mut records = match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| sweep_points(config, registry))?
        }
        None => sweep_points(config, registry)?,
    };
    sort_records(&mut records);
    Ok(records)
}

/// Order rows by `(arch, estimator, T, snr_db)`.
pub fn sort_records(records: &mut [SerRecord]) {
    records.sort_by(|a, b| {
        (a.arch, &a.estimator, a.block_len)
            .cmp(&(b.arch, &b.estimator, b.block_len))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
}

pub fn records_to_csv(records: &[SerRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

pub fn write_csv(records: &[SerRecord], path: &Path) -> Result<()> {
    std::fs::write(path, records_to_csv(records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_ranges() {
        assert_eq!(parse_snr_range("0:5:20").unwrap(), vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_snr_range("10").unwrap(), vec![10.0]);
        let r = parse_snr_range("0:0.1:0.3").unwrap();
        assert_eq!(r.len(), 4);
        assert!((r[3] - 0.3).abs() < 1e-12);
        for bad in ["", "a:1:2", "0:0:5", "5:1:0", "1:2", "0:1:2:3"] {
            assert!(parse_snr_range(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn csv_layout() {
        let r = SerRecord {
            arch: Architecture::WhB,
            estimator: "em".into(),
            order: 16,
            block_len: 100,
            snr_db: 10.0,
            ser: 0.25,
            symbol_errors: 25,
            symbols_total: 100,
            trials: 1,
            mean_em_iters: 12.0,
            seed: 7,
        };
        let csv = records_to_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "whB,em,16,100,1.0000000000000000e1,2.5000000000000000e-1,25,100,1,1.2000000000000000e1,7"
        );
    }

    #[test]
    fn high_snr_known_sweep_is_error_free() {
        let cfg = SweepConfig::new(Architecture::WhD, 16, 500, vec![60.0], 4, "known", 3);
        let rec = run_ser_sweep(&cfg, &EstimatorRegistry::default()).unwrap();
        assert_eq!(rec[0].symbol_errors, 0);
        assert_eq!(rec[0].symbols_total, 2000);
    }

    #[test]
    fn unknown_estimator_is_reported() {
        let cfg = SweepConfig::new(Architecture::WhA, 4, 10, vec![0.0], 1, "magic", 3);
        assert!(matches!(run_ser_sweep(&cfg, &EstimatorRegistry::default()), Err(Error::UnknownEstimator(_))));
    }
}
