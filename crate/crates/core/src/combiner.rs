//! Known-parameter optimal combining: `w = Sigma^-1 h / (h^H Sigma^-1 h)`,
//! `s_hat = w^H y`, with estimation variance `1 / (h^H Sigma^-1 h)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::channel::{ChannelModel, ObservationBlock};
use crate::error::{Error, Result};
use crate::linalg::{hpd_inverse, inner, ComplexMatrix};

/// Correlation magnitudes above this are rejected before inversion.
pub const MAX_CORRELATION: f64 = 1.0 - 1e-9;
/// Relative band inside which two architecture variances count as equal.
pub const TIE_BAND: f64 = 1e-12;

/// Channel subsets of the 4-channel receiver: 1 probe signal, 2 coupling signal,
/// 3 probe noise reference, 4 coupling noise reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    WhA,
    WhB,
    WhC,
    WhD,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [Architecture::WhA, Architecture::WhB, Architecture::WhC, Architecture::WhD];

    /// 1-based channel numbers.
    pub fn channel_indices(self) -> &'static [usize] {
        match self {
            Architecture::WhA => &[1],
            Architecture::WhB => &[1, 3],
            Architecture::WhC => &[1, 2],
            Architecture::WhD => &[1, 2, 3, 4],
        }
    }

    /// 0-based rows of the 4-channel model.
    pub fn channels(self) -> Vec<usize> {
        self.channel_indices().iter().map(|c| c - 1).collect()
    }

    /// `(N_s, N_n)` the architecture sees.
    pub fn layout(self) -> (usize, usize) {
        match self {
            Architecture::WhA => (1, 0),
            Architecture::WhB => (1, 1),
            Architecture::WhC => (2, 0),
            Architecture::WhD => (2, 2),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::WhA => "whA",
            Architecture::WhB => "whB",
            Architecture::WhC => "whC",
            Architecture::WhD => "whD",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wha" | "wh_a" | "a" => Ok(Architecture::WhA),
            "whb" | "wh_b" | "b" => Ok(Architecture::WhB),
            "whc" | "wh_c" | "c" => Ok(Architecture::WhC),
            "whd" | "wh_d" | "d" => Ok(Architecture::WhD),
            _ => Err(Error::InvalidParameter(format!("unknown architecture `{s}`"))),
        }
    }
}

/// How WH-A picks its single channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingleChannelRule {
    /// Always the probe signal channel.
    #[default]
    Probe,
    /// Whichever signal channel has the smaller `Sigma_mm / |h_m|^2`.
    MinVariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinerResult {
    pub weights: Vec<Complex64>,
    pub variance: f64,
    pub snr_gain_db: f64,
    /// 0-based channels of the 4-channel model the weights apply to.
    pub channels: Vec<usize>,
}

fn check_correlations(sigma: &ComplexMatrix) -> Result<()> {
    let n = sigma.rows();
    for m in 0..n {
        for k in (m + 1)..n {
            let r = sigma[(m, k)].norm() / (sigma[(m, m)].re * sigma[(k, k)].re).sqrt();
            if r > MAX_CORRELATION {
                return Err(Error::NearSingular(r));
            }
        }
    }
    Ok(())
}

/// Returns `(Sigma^-1 h, h^H Sigma^-1 h)`.
fn whitened_gain(h: &[Complex64], sigma: &ComplexMatrix) -> Result<(Vec<Complex64>, f64)> {
    if sigma.rows() != h.len() || sigma.cols() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "gain of length {} with {}x{} covariance",
            h.len(),
            sigma.rows(),
            sigma.cols()
        )));
    }
    if h.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::ZeroGain);
    }
    check_correlations(sigma)?;
    let g = hpd_inverse(sigma)?.mat_vec(h)?;
    let q = inner(h, &g).re;
    Ok((g, q))
}

pub fn compute_weights(h: &[Complex64], sigma: &ComplexMatrix) -> Result<Vec<Complex64>> {
    let (g, q) = whitened_gain(h, sigma)?;
    Ok(g.into_iter().map(|z| z / q).collect())
}

pub fn estimation_variance(h: &[Complex64], sigma: &ComplexMatrix) -> Result<f64> {
    let (_, q) = whitened_gain(h, sigma)?;
    Ok(1.0 / q)
}

fn require_four_channel(model: &ChannelModel) -> Result<()> {
    if model.n_s() != 2 || model.n_n() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "architecture comparison needs a 2+2 channel model, got {}+{}",
            model.n_s(),
            model.n_n()
        )));
    }
    Ok(())
}

fn subset_weights(model: &ChannelModel, channels: &[usize]) -> Result<(Vec<Complex64>, f64)> {
    let h: Vec<Complex64> = channels.iter().map(|&c| model.full_gain()[c]).collect();
    let sigma = model.sigma().submatrix(channels, channels);
    let (g, q) = whitened_gain(&h, &sigma)?;
    Ok((g.into_iter().map(|z| z / q).collect(), 1.0 / q))
}

fn single_channel(model: &ChannelModel, rule: SingleChannelRule) -> Result<usize> {
    match rule {
        SingleChannelRule::Probe => Ok(0),
        SingleChannelRule::MinVariance => {
            let var = |m: usize| {
                let h = model.h_s()[m].norm_sqr();
                if h > 0.0 { model.sigma()[(m, m)].re / h } else { f64::INFINITY }
            };
            Ok(if var(1) < var(0) { 1 } else { 0 })
        }
    }
}

/// Weights, variance and gain over WH-A for one architecture of a 2+2 channel model.
pub fn architecture_result(arch: Architecture, model: &ChannelModel) -> Result<CombinerResult> {
    architecture_result_with(arch, model, SingleChannelRule::Probe)
}

pub fn architecture_result_with(
    arch: Architecture,
    model: &ChannelModel,
    rule: SingleChannelRule,
) -> Result<CombinerResult> {
    require_four_channel(model)?;
    let a_channel = [single_channel(model, rule)?];
    let (_, var_a) = subset_weights(model, &a_channel)?;
    let channels = match arch {
        Architecture::WhA => a_channel.to_vec(),
        _ => arch.channels(),
    };
    let (weights, variance) = subset_weights(model, &channels)?;
    let snr_gain_db = if arch == Architecture::WhA { 0.0 } else { 10.0 * (var_a / variance).log10() };
    Ok(CombinerResult { weights, variance, snr_gain_db, channels })
}

/// `s_hat^(t) = w^H y^(t)` over the block's stacked channels.
pub fn apply_weights(weights: &[Complex64], block: &ObservationBlock) -> Result<Vec<Complex64>> {
    if weights.len() != block.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} channels",
            weights.len(),
            block.n()
        )));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); block.t_len()];
    let rows = (0..block.n_s())
        .map(|i| block.y_s().row(i))
        .chain((0..block.n_n()).map(|i| block.y_n().row(i)));
    for (w, row) in weights.iter().zip(rows) {
        let wc = w.conj();
        for (o, y) in out.iter_mut().zip(row) {
            *o += wc * y;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcOrdering {
    BBetter,
    CBetter,
    Tie,
}

pub fn compare_b_vs_c(model: &ChannelModel) -> Result<BcOrdering> {
    let b = architecture_result(Architecture::WhB, model)?.variance;
    let c = architecture_result(Architecture::WhC, model)?.variance;
    Ok(if (b - c).abs() <= TIE_BAND * b.max(c) {
        BcOrdering::Tie
    } else if b < c {
        BcOrdering::BBetter
    } else {
        BcOrdering::CBetter
    })
}
