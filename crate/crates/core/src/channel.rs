//! Correlated-noise multi-channel observation model `y = h s + n`,
//! `n ~ CN(0, Sigma)`, with signal channels first and noise-only channels after.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constellation::{SymbolAlphabet, SymbolSequence};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_factor, ComplexMatrix};
use crate::rng::{rng_from_seed, SimRng};

/// Gains and noise covariance for `n_s` signal channels followed by `n_n` noise channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    n_s: usize,
    n_n: usize,
    h_s: Vec<Complex64>,
    sigma: ComplexMatrix,
}

impl ChannelModel {
    pub fn new(h_s: Vec<Complex64>, n_n: usize, sigma: ComplexMatrix) -> Result<Self> {
        let n_s = h_s.len();
        let n = n_s + n_n;
        if n_s == 0 {
            return Err(Error::DimensionMismatch("at least one signal channel is required".into()));
        }
        if sigma.rows() != n || sigma.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} covariance for {n} channels",
                sigma.rows(),
                sigma.cols()
            )));
        }
        if h_s.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return Err(Error::InvalidParameter("channel gains must be finite".into()));
        }
        for m in 0..n {
            let d = sigma[(m, m)];
            if !(d.re > 0.0) || d.im != 0.0 {
                return Err(Error::InvalidParameter(format!("noise variance {m} must be real positive")));
            }
        }
        for m in 0..n {
            for k in (m + 1)..n {
                let bound = (sigma[(m, m)].re * sigma[(k, k)].re).sqrt();
                if sigma[(m, k)].norm() > bound * (1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!("|r_{}{}| exceeds 1", m + 1, k + 1)));
                }
            }
        }
        cholesky_factor(&sigma)?;
        Ok(Self { n_s, n_n, h_s, sigma })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_n(&self) -> usize {
        self.n_n
    }

    pub fn n(&self) -> usize {
        self.n_s + self.n_n
    }

    pub fn h_s(&self) -> &[Complex64] {
        &self.h_s
    }

    pub fn sigma(&self) -> &ComplexMatrix {
        &self.sigma
    }

    /// `h = [h_s; 0]` over all channels.
    pub fn full_gain(&self) -> Vec<Complex64> {
        let mut h = self.h_s.clone();
        h.resize(self.n(), Complex64::new(0.0, 0.0));
        h
    }

    /// Sub-model over the listed channel indices (0-based, ascending). Indices below
    /// `n_s` stay signal channels; the rest stay noise channels.
    pub fn restrict(&self, channels: &[usize]) -> Result<ChannelModel> {
        if channels.windows(2).any(|w| w[0] >= w[1]) || channels.iter().any(|&c| c >= self.n()) {
            return Err(Error::InvalidParameter(format!("bad channel subset {channels:?}")));
        }
        let h_s: Vec<Complex64> = channels.iter().filter(|&&c| c < self.n_s).map(|&c| self.h_s[c]).collect();
        let n_n = channels.len() - h_s.len();
        ChannelModel::new(h_s, n_n, self.sigma.submatrix(channels, channels))
    }
}

/// `Sigma_mm = sigma_m^2`, `Sigma_mk = r_mk sigma_m sigma_k` for `m < k` (upper
/// triangle of `correlations`), Hermitian below the diagonal.
pub fn build_covariance(sigmas: &[f64], correlations: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = sigmas.len();
    if correlations.rows() != n || correlations.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} correlations for {n} channels",
            correlations.rows(),
            correlations.cols()
        )));
    }
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::InvalidParameter(format!("noise standard deviation {s} must be positive")));
    }
    let mut out = ComplexMatrix::zeros(n, n);
    for m in 0..n {
        out[(m, m)] = Complex64::new(sigmas[m] * sigmas[m], 0.0);
        for k in (m + 1)..n {
            let r = correlations[(m, k)];
            if r.norm() > 1.0 {
                return Err(Error::InvalidParameter(format!("|r_{}{}| = {} > 1", m + 1, k + 1, r.norm())));
            }
            let v = r * (sigmas[m] * sigmas[k]);
            out[(m, k)] = v;
            out[(k, m)] = v.conj();
        }
    }
    cholesky_factor(&out)?;
    Ok(out)
}

/// `T` i.i.d. circularly-symmetric draws from `CN(0, sigma)` as an `N x T` matrix.
pub fn sample_noise(sigma: &ComplexMatrix, t_len: usize, seed: u64) -> Result<ComplexMatrix> {
    let l = cholesky_factor(sigma)?;
    Ok(sample_noise_with(&l, t_len, &mut rng_from_seed(seed)))
}

/// `n = L (g_re + i g_im) / sqrt(2)`, drawing `(re, im)` pairs channel by channel,
/// slot by slot.
pub fn sample_noise_with(chol: &ComplexMatrix, t_len: usize, rng: &mut SimRng) -> ComplexMatrix {
    let n = chol.rows();
    let mut out = ComplexMatrix::zeros(n, t_len);
    let mut g = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..t_len {
        for gi in g.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *gi = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        }
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, gk) in g.iter().enumerate().take(i + 1) {
                acc += chol[(i, k)] * gk;
            }
            out[(i, t)] = acc;
        }
    }
    out
}

/// Uniformly drawn symbol indices.
pub fn draw_symbols(alphabet: &SymbolAlphabet, t_len: usize, seed: u64) -> SymbolSequence {
    let mut rng = rng_from_seed(seed);
    let m = alphabet.order();
    let idx = (0..t_len).map(|_| rng.random_range(0..m)).collect();
    SymbolSequence::from_indices(idx, alphabet).expect("indices drawn within the alphabet")
}

/// Received block for `T` symbol slots, partitioned into signal and noise rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBlock {
    y_s: ComplexMatrix,
    y_n: ComplexMatrix,
}

impl ObservationBlock {
    pub fn new(y_s: ComplexMatrix, y_n: ComplexMatrix) -> Result<Self> {
        if y_s.cols() != y_n.cols() && y_n.rows() > 0 {
            return Err(Error::DimensionMismatch(format!(
                "signal rows have {} slots, noise rows {}",
                y_s.cols(),
                y_n.cols()
            )));
        }
        if !y_s.is_finite() || !y_n.is_finite() {
            return Err(Error::InvalidParameter("observations must be finite".into()));
        }
        let y_n = if y_n.rows() == 0 { ComplexMatrix::zeros(0, y_s.cols()) } else { y_n };
        Ok(Self { y_s, y_n })
    }

    /// Splits an `N x T` matrix after the first `n_s` rows.
    pub fn from_stacked(y: &ComplexMatrix, n_s: usize) -> Result<Self> {
        if n_s > y.rows() {
            return Err(Error::DimensionMismatch(format!("{n_s} signal rows of {}", y.rows())));
        }
        let t = y.cols();
        Self::new(y.block(0, 0, n_s, t), y.block(n_s, 0, y.rows() - n_s, t))
    }

    pub fn t_len(&self) -> usize {
        self.y_s.cols()
    }

    pub fn n_s(&self) -> usize {
        self.y_s.rows()
    }

    pub fn n_n(&self) -> usize {
        self.y_n.rows()
    }

    pub fn n(&self) -> usize {
        self.n_s() + self.n_n()
    }

    pub fn y_s(&self) -> &ComplexMatrix {
        &self.y_s
    }

    pub fn y_n(&self) -> &ComplexMatrix {
        &self.y_n
    }

    /// Stacked `y^(t) = [y_s^(t); y_n^(t)]`.
    pub fn column(&self, t: usize) -> Vec<Complex64> {
        let mut v = self.y_s.col(t);
        v.extend(self.y_n.col(t));
        v
    }

    pub fn stacked(&self) -> ComplexMatrix {
        let (ns, nn, t) = (self.n_s(), self.n_n(), self.t_len());
        let mut out = ComplexMatrix::zeros(ns + nn, t);
        for i in 0..ns {
            out.row_mut(i).copy_from_slice(self.y_s.row(i));
        }
        for i in 0..nn {
            out.row_mut(ns + i).copy_from_slice(self.y_n.row(i));
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { y_s: self.y_s.scale_real(factor), y_n: self.y_n.scale_real(factor) }
    }

    /// Keeps only the listed channels (0-based over the stacked rows, ascending).
    pub fn restrict(&self, channels: &[usize]) -> Result<Self> {
        let y = self.stacked();
        if channels.iter().any(|&c| c >= y.rows()) {
            return Err(Error::InvalidParameter(format!("bad channel subset {channels:?}")));
        }
        let ns = channels.iter().filter(|&&c| c < self.n_s()).count();
        let cols: Vec<usize> = (0..self.t_len()).collect();
        Self::from_stacked(&y.submatrix(channels, &cols), ns)
    }
}

/// `y^(t) = h s^(t) + n^(t)`; noise rows carry no signal.
pub fn synthesize(model: &ChannelModel, symbols: &SymbolSequence, seed: u64) -> Result<ObservationBlock> {
    let l = cholesky_factor(model.sigma())?;
    Ok(synthesize_with(model, &l, symbols, &mut rng_from_seed(seed)))
}

pub(crate) fn synthesize_with(
    model: &ChannelModel,
    chol: &ComplexMatrix,
    symbols: &SymbolSequence,
    rng: &mut SimRng,
) -> ObservationBlock {
    let mut y = sample_noise_with(chol, symbols.len(), rng);
    for (i, h) in model.h_s().iter().enumerate() {
        for (yt, s) in y.row_mut(i).iter_mut().zip(symbols.values()) {
            *yt += h * s;
        }
    }
    ObservationBlock::from_stacked(&y, model.n_s()).expect("synthesized block is consistent")
}

fn iq_header(n: usize) -> String {
    let mut h = String::from("t");
    for c in 0..n {
        let _ = write!(h, ",ch{c}_re,ch{c}_im");
    }
    h
}

/// IQ CSV: header `t,ch0_re,ch0_im,...`, one row per slot, signal channels first.
/// Values use Rust's shortest round-trip formatting so parsing restores every bit.
pub fn to_iq_csv(block: &ObservationBlock) -> String {
    let y = block.stacked();
    let mut out = iq_header(y.rows());
    out.push('\n');
    for t in 0..y.cols() {
        let _ = write!(out, "{t}");
        for i in 0..y.rows() {
            let z = y[(i, t)];
            let _ = write!(out, ",{:?},{:?}", z.re, z.im);
        }
        out.push('\n');
    }
    out
}

pub fn parse_iq_csv(text: &str, n_s: usize, n_n: usize) -> Result<ObservationBlock> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::malformed(None, "empty file"))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() < 3 || fields.len().is_multiple_of(2) || fields[0] != "t" {
        return Err(Error::malformed(Some(1), format!("bad header `{header}`")));
    }
    let channels = (fields.len() - 1) / 2;
    if iq_header(channels) != fields.join(",") {
        return Err(Error::malformed(Some(1), format!("bad header `{header}`")));
    }
    let n = n_s + n_n;
    if channels != n {
        return Err(Error::DimensionMismatch(format!(
            "file has {channels} channels, layout {n_s}x{n_n} expects {n}"
        )));
    }
    let mut data: Vec<Vec<Complex64>> = vec![Vec::new(); n];
    for (expect_t, (lineno, line)) in lines.enumerate() {
        let lineno = lineno + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 1 + 2 * n {
            return Err(Error::malformed(Some(lineno), format!("expected {} fields, got {}", 1 + 2 * n, cells.len())));
        }
        let t: usize = cells[0]
            .parse()
            .map_err(|_| Error::malformed(Some(lineno), format!("bad slot index `{}`", cells[0])))?;
        if t != expect_t {
            return Err(Error::malformed(Some(lineno), format!("slot {t} out of order, expected {expect_t}")));
        }
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| Error::malformed(Some(lineno), format!("non-numeric `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::malformed(Some(lineno), format!("non-finite `{s}`")))
            }
        };
        for (c, row) in data.iter_mut().enumerate() {
            row.push(Complex64::new(num(cells[1 + 2 * c])?, num(cells[2 + 2 * c])?));
        }
    }
    let t_len = data[0].len();
    if t_len == 0 {
        return Err(Error::malformed(None, "no data rows"));
    }
    let y = ComplexMatrix::from_vec(n, t_len, data.concat())?;
    ObservationBlock::from_stacked(&y, n_s)
}

pub fn write_iq_csv(block: &ObservationBlock, path: &Path) -> Result<()> {
    std::fs::write(path, to_iq_csv(block)).map_err(|e| Error::io(path, e))
}

pub fn read_iq_csv(path: &Path, n_s: usize, n_n: usize) -> Result<ObservationBlock> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_iq_csv(&text, n_s, n_n)
}
