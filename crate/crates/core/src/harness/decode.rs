//! Blind decoding of recorded IQ blocks, and synthesis of such recordings.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{draw_symbols, synthesize, ObservationBlock};
use crate::combiner::Architecture;
use crate::constellation::{SymbolAlphabet, SymbolSequence};
use crate::em::{calibrate, detect_symbols, run_em, Detector, EmConfig};
use crate::error::{Error, Result};
use crate::harness::scenario::Scenario;
use crate::linalg::ComplexMatrix;
use crate::rng::{derive_seed, STREAM_NOISE, STREAM_SYMBOLS};

/// `[re, im]` pairs in JSON.
type Pair = [f64; 2];

fn pair(z: Complex64) -> Pair {
    [z.re, z.im]
}

fn matrix_pairs(m: &ComplexMatrix) -> Vec<Vec<Pair>> {
    (0..m.rows()).map(|i| m.row(i).iter().copied().map(pair).collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DecodeReport {
    pub mod_order: usize,
    pub n_s: usize,
    pub n_n: usize,
    pub block_len: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Quarter turns applied to resolve the phase ambiguity.
    pub rotation: u32,
    pub scale: f64,
    pub log_likelihood: f64,
    pub h_s: Vec<Pair>,
    pub sigma_ss: Vec<Vec<Pair>>,
    pub sigma_sn: Vec<Vec<Pair>>,
    pub sigma_nn: Vec<Vec<Pair>>,
    pub symbols: Vec<usize>,
    pub s_cal: Vec<Pair>,
}

impl DecodeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn decode_block(
    block: &ObservationBlock,
    order: usize,
    config: &EmConfig,
    detector: Detector,
) -> Result<(DecodeReport, SymbolSequence)> {
    let alphabet = SymbolAlphabet::qam(order)?;
    let out = run_em(block, &alphabet, config)?;
    let cal = calibrate(&out.state, &alphabet, block)?;
    let symbols = detect_symbols(&cal, &alphabet, detector);
    let rotation = (0..4).find(|&k| crate::constellation::quarter_turn(k) == cal.rotation).unwrap_or(0);
    let report = DecodeReport {
        mod_order: order,
        n_s: block.n_s(),
        n_n: block.n_n(),
        block_len: block.t_len(),
        iterations: out.iterations,
        converged: out.converged,
        rotation,
        scale: cal.scale,
        log_likelihood: *out.log_likelihood.last().expect("at least one likelihood value"),
        h_s: cal.h_cal.iter().copied().map(pair).collect(),
        sigma_ss: matrix_pairs(&cal.sigma_cal.sigma_ss),
        sigma_sn: matrix_pairs(&cal.sigma_cal.sigma_sn),
        sigma_nn: matrix_pairs(&cal.sigma_cal.sigma_nn),
        symbols: symbols.indices().to_vec(),
        s_cal: cal.s_cal.iter().copied().map(pair).collect(),
    };
    Ok((report, symbols))
}

/// `NsxNn`, e.g. `2x2`.
pub fn parse_channels(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidParameter(format!("bad channel layout `{text}`, expected NsxNn"));
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let ns: usize = a.trim().parse().map_err(|_| bad())?;
    let nn: usize = b.trim().parse().map_err(|_| bad())?;
    if ns == 0 {
        return Err(bad());
    }
    Ok((ns, nn))
}

/// A synthetic recording: the architecture's channels plus the transmitted indices.
pub fn synthesize_recording(
    scenario: &Scenario,
    arch: Architecture,
    order: usize,
    block_len: usize,
    snr_db: f64,
    seed: u64,
) -> Result<(ObservationBlock, SymbolSequence)> {
    let alphabet = SymbolAlphabet::qam(order)?;
    let model = scenario.model_at_snr(snr_db, alphabet.avg_power())?;
    let symbols = draw_symbols(&alphabet, block_len, derive_seed(seed, &[STREAM_SYMBOLS]));
    let full = synthesize(&model, &symbols, derive_seed(seed, &[STREAM_NOISE]))?;
    Ok((full.restrict(&arch.channels())?, symbols))
}

/// Ground truth as `t,index` rows.
pub fn truth_csv(symbols: &SymbolSequence) -> String {
    let mut out = String::from("t,index\n");
    for (t, i) in symbols.indices().iter().enumerate() {
        let _ = writeln!(out, "{t},{i}");
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
