//! Blind joint estimation of signal gains, block noise covariance and M-QAM
//! symbols by expectation-maximization.
//!
//! The noise-channel block `Sigma_nn` is estimated once from the noise rows and
//! held fixed. Each iteration computes per-slot posteriors over the alphabet
//! from the partitioned inverse `[[A, B], [B^H, C]]` of the current covariance,
//! then updates `h_s`, `Sigma_ss` and `Sigma_sn` in closed form. After
//! convergence the symbol estimates are rescaled to the constellation power and
//! the residual quarter-turn ambiguity is resolved (see [`calibrate`]).
//!
//! All sums over symbol slots run sequentially in slot order, so results are
//! bit-stable for a given input.

use num_complex::Complex64;

use crate::channel::ObservationBlock;
use crate::constellation::{quarter_turn, SymbolAlphabet, SymbolSequence};
use crate::error::{Error, Result};
use crate::linalg::{
    block_inverse, cholesky_factor, dominant_eigenpair, hermitian_symmetrize, hpd_inverse,
    log_det_from_cholesky, smallest_eigenvalue, BlockInverse, ComplexMatrix,
};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Relative likelihood band inside which candidate rotations count as tied.
pub const ROTATION_TIE_BAND: f64 = 1e-9;
/// Initial gain power is floored at this fraction of the dominant eigenvalue.
pub const INIT_POWER_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Threshold on `||h s^T - h' s'^T||_F`; `None` uses `1e-6 * ||Y_s||_F`.
    pub eps_hs: Option<f64>,
    /// Threshold on `||Sigma - Sigma'||_F`; `None` uses `1e-8 * ||Sigma^[0]||_F`.
    pub eps_sigma: Option<f64>,
    pub max_iters: usize,
    /// Replace `Sigma_sn` by `(Sigma_sn + Sigma_sn^H) / 2` when it is square.
    /// [`run_em_from`] skips the projection on iterations where it would lower
    /// the observed-data likelihood.
    pub symmetrize_cross: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { eps_hs: None, eps_sigma: None, max_iters: 200, symmetrize_cross: true }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        let bad = |e: Option<f64>| e.is_some_and(|v| !(v.is_finite() && v > 0.0));
        if bad(self.eps_hs) || bad(self.eps_sigma) {
            return Err(Error::InvalidParameter("EM thresholds must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// `theta = {h_s, Sigma}` in block form.
#[derive(Debug, Clone, PartialEq)]
pub struct EmParams {
    pub h_s: Vec<Complex64>,
    pub sigma_ss: ComplexMatrix,
    pub sigma_sn: ComplexMatrix,
    pub sigma_nn: ComplexMatrix,
}

impl EmParams {
    pub fn n_s(&self) -> usize {
        self.h_s.len()
    }

    pub fn n_n(&self) -> usize {
        self.sigma_nn.rows()
    }

    /// Full covariance `[[S_ss, S_sn], [S_sn^H, S_nn]]`.
    pub fn sigma(&self) -> ComplexMatrix {
        ComplexMatrix::assemble_hermitian_blocks(&self.sigma_ss, &self.sigma_sn, &self.sigma_nn)
            .expect("parameter blocks have consistent shapes")
    }

    /// `S_sn S_nn^-1`, the regression of signal-row noise on the noise rows.
    fn noise_regression(&self) -> Result<Option<ComplexMatrix>> {
        if self.n_n() == 0 {
            return Ok(None);
        }
        Ok(Some(&self.sigma_sn * &hpd_inverse(&self.sigma_nn)?))
    }
}

/// Per-slot posterior moments of the transmitted symbol.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    /// `E[s | y]`
    pub s_hat: Vec<Complex64>,
    /// `E[|s|^2 | y]`
    pub u: Vec<f64>,
    /// `u - |s_hat|^2`
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub iter: usize,
    pub params: EmParams,
    pub moments: Moments,
}

impl EmState {
    pub fn h_s(&self) -> &[Complex64] {
        &self.params.h_s
    }

    pub fn s_hat(&self) -> &[Complex64] {
        &self.moments.s_hat
    }
}

/// Posterior probabilities `w_m^(t)` and distances `d_m^(t)`, stored slot-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    order: usize,
    w: Vec<f64>,
    d: Vec<f64>,
}

impl PosteriorTable {
    pub fn from_parts(order: usize, w: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if order == 0 || !w.len().is_multiple_of(order) || w.len() != d.len() {
            return Err(Error::DimensionMismatch("posterior table shape".into()));
        }
        Ok(Self { order, w, d })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn t_len(&self) -> usize {
        self.w.len() / self.order
    }

    pub fn w(&self, m: usize, t: usize) -> f64 {
        self.w[t * self.order + m]
    }

    pub fn d(&self, m: usize, t: usize) -> f64 {
        self.d[t * self.order + m]
    }

    pub fn weights(&self, t: usize) -> &[f64] {
        &self.w[t * self.order..(t + 1) * self.order]
    }

    pub fn distances(&self, t: usize) -> &[f64] {
        &self.d[t * self.order..(t + 1) * self.order]
    }
}

/// Quantities shared by every slot of one E-step.
struct PreparedStep<'a> {
    blocks: BlockInverse,
    h_s: &'a [Complex64],
    /// `h_s^H A h_s`
    kappa: f64,
    log_det: f64,
    points: &'a [Complex64],
    point_power: Vec<f64>,
}

impl<'a> PreparedStep<'a> {
    fn new(params: &'a EmParams, alphabet: &'a SymbolAlphabet) -> Result<Self> {
        let sigma = params.sigma();
        let chol = cholesky_factor(&sigma)?;
        let blocks = block_inverse(&sigma, params.n_s(), params.n_n())?;
        let kappa = crate::linalg::quadratic_form(&params.h_s, &blocks.a, &params.h_s).re;
        Ok(Self {
            blocks,
            h_s: &params.h_s,
            kappa,
            log_det: log_det_from_cholesky(&chol),
            points: alphabet.points(),
            point_power: alphabet.points().iter().map(Complex64::norm_sqr).collect(),
        })
    }

    /// Fills `d[m] = (y - h a_m)^H Sigma^-1 (y - h a_m)` for slot `t` using the
    /// partitioned inverse:
    ///
    /// `d_m = q0 - 2 Re(a_m^* g) + |a_m|^2 h_s^H A h_s` with
    /// `q0 = y_s^H A y_s + y_n^H C y_n + 2 Re(y_s^H B y_n)` and
    /// `g = h_s^H (A y_s + B y_n)`.
    fn distances(&self, y: &ObservationBlock, t: usize, ys: &mut [Complex64], yn: &mut [Complex64], d: &mut [f64]) {
        let (ns, nn) = (ys.len(), yn.len());
        for (i, v) in ys.iter_mut().enumerate() {
            *v = y.y_s()[(i, t)];
        }
        for (i, v) in yn.iter_mut().enumerate() {
            *v = y.y_n()[(i, t)];
        }
        let (a, b, c) = (&self.blocks.a, &self.blocks.b, &self.blocks.c);
        let mut q0 = 0.0;
        let mut g = Complex64::new(0.0, 0.0);
        for i in 0..ns {
            // row i of (A y_s + B y_n)
            let mut r = Complex64::new(0.0, 0.0);
            for (j, yj) in ys.iter().enumerate() {
                r += a[(i, j)] * yj;
            }
            let mut rb = Complex64::new(0.0, 0.0);
            for (j, yj) in yn.iter().enumerate() {
                rb += b[(i, j)] * yj;
            }
            q0 += (ys[i].conj() * r).re + 2.0 * (ys[i].conj() * rb).re;
            g += self.h_s[i].conj() * (r + rb);
        }
        for i in 0..nn {
            let mut r = Complex64::new(0.0, 0.0);
            for (j, yj) in yn.iter().enumerate() {
                r += c[(i, j)] * yj;
            }
            q0 += (yn[i].conj() * r).re;
        }
        for ((dm, a), p) in d.iter_mut().zip(self.points).zip(&self.point_power) {
            *dm = q0 - 2.0 * (a.conj() * g).re + p * self.kappa;
        }
    }
}

/// Normalizes `exp(-d)` in place into `w` after shifting by the smallest distance,
/// returning `ln sum_m exp(-d_m)`.
fn posterior_column(d: &[f64], w: &mut [f64]) -> f64 {
    let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (wm, dm) in w.iter_mut().zip(d) {
        *wm = (-(dm - d_min)).exp();
        total += *wm;
    }
    for wm in w.iter_mut() {
        *wm /= total;
    }
    total.ln() - d_min
}

fn column_moments(w: &[f64], points: &[Complex64], power: &[f64]) -> (Complex64, f64, f64) {
    let mut s = Complex64::new(0.0, 0.0);
    let mut u = 0.0;
    for ((wm, a), p) in w.iter().zip(points).zip(power) {
        s += a * wm;
        u += wm * p;
    }
    let v = (u - s.norm_sqr()).max(0.0);
    (s, u, v)
}

/// Observed-data log-likelihood from the per-slot log-sum-exp terms.
fn assemble_log_likelihood(lse_sum: f64, t_len: usize, n: usize, order: usize, log_det: f64) -> f64 {
    let t = t_len as f64;
    lse_sum - t * (order as f64).ln() - t * log_det - (n as f64) * t * LN_PI
}

fn check_block(y: &ObservationBlock, params: &EmParams) -> Result<()> {
    if y.n_s() != params.n_s() || y.n_n() != params.n_n() {
        return Err(Error::DimensionMismatch(format!(
            "block is {}+{} channels, parameters {}+{}",
            y.n_s(),
            y.n_n(),
            params.n_s(),
            params.n_n()
        )));
    }
    Ok(())
}

/// Moments plus observed-data log-likelihood, without materializing the table.
fn expectation(y: &ObservationBlock, params: &EmParams, alphabet: &SymbolAlphabet) -> Result<(Moments, f64)> {
    check_block(y, params)?;
    let prep = PreparedStep::new(params, alphabet)?;
    let (ns, nn, m, t_len) = (y.n_s(), y.n_n(), alphabet.order(), y.t_len());
    let mut ys = vec![Complex64::new(0.0, 0.0); ns];
    let mut yn = vec![Complex64::new(0.0, 0.0); nn];
    let mut d = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut mom = Moments {
        s_hat: Vec::with_capacity(t_len),
        u: Vec::with_capacity(t_len),
        v: Vec::with_capacity(t_len),
    };
    let mut lse_sum = 0.0;
    for t in 0..t_len {
        prep.distances(y, t, &mut ys, &mut yn, &mut d);
        lse_sum += posterior_column(&d, &mut w);
        let (s, u, v) = column_moments(&w, prep.points, &prep.point_power);
        mom.s_hat.push(s);
        mom.u.push(u);
        mom.v.push(v);
    }
    Ok((mom, assemble_log_likelihood(lse_sum, t_len, ns + nn, m, prep.log_det)))
}

fn posterior_table(y: &ObservationBlock, params: &EmParams, alphabet: &SymbolAlphabet) -> Result<(PosteriorTable, Moments)> {
    check_block(y, params)?;
    let prep = PreparedStep::new(params, alphabet)?;
    let (ns, nn, m, t_len) = (y.n_s(), y.n_n(), alphabet.order(), y.t_len());
    let mut ys = vec![Complex64::new(0.0, 0.0); ns];
    let mut yn = vec![Complex64::new(0.0, 0.0); nn];
    let mut d = vec![0.0; m * t_len];
    let mut w = vec![0.0; m * t_len];
    let mut mom = Moments::default();
    for t in 0..t_len {
        let dt = &mut d[t * m..(t + 1) * m];
        let wt = &mut w[t * m..(t + 1) * m];
        prep.distances(y, t, &mut ys, &mut yn, dt);
        posterior_column(dt, wt);
        let (s, u, v) = column_moments(wt, prep.points, &prep.point_power);
        mom.s_hat.push(s);
        mom.u.push(u);
        mom.v.push(v);
    }
    Ok((PosteriorTable { order: m, w, d }, mom))
}

/// `Sigma_nn = (1/T) sum_t y_n y_n^H`, required to be positive definite.
pub fn estimate_noise_covariance(y_n: &ComplexMatrix) -> Result<ComplexMatrix> {
    let t_len = y_n.cols();
    if y_n.rows() == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    if t_len < y_n.rows() {
        return Err(Error::DimensionMismatch(format!("{t_len} slots for {} noise channels", y_n.rows())));
    }
    let cov = hermitian_symmetrize(&(y_n * &y_n.adjoint()).scale_real(1.0 / t_len as f64))?;
    if !cov.is_finite() {
        return Err(Error::DegenerateBlock("noise rows are not finite".into()));
    }
    match cholesky_factor(&cov) {
        Ok(_) => Ok(cov),
        Err(_) => Err(Error::RankDeficient),
    }
}

/// Starting point: `h_s^[0]` along the dominant eigenvector of the signal-row
/// sample covariance, `Sigma_ss^[0]` that sample covariance, `Sigma_sn^[0] = 0`.
///
/// The gain power `|h_s^[0]|^2 P_s` is the gap between the largest and smallest
/// eigenvalue when there are two or more signal rows. With a single signal row
/// that gap is always zero, so the power comes from the second and fourth sample
/// moments instead: for `y = h s + n` with circular Gaussian noise,
/// `2 m2^2 - m4 = (2 - kurtosis) (|h|^2 P_s)^2`. Both are floored at
/// `INIT_POWER_FLOOR` times the dominant eigenvalue.
pub fn init_state(y: &ObservationBlock, alphabet: &SymbolAlphabet) -> Result<EmState> {
    let (ns, t_len) = (y.n_s(), y.t_len());
    if ns == 0 {
        return Err(Error::DimensionMismatch("no signal channels".into()));
    }
    if t_len < y.n() {
        return Err(Error::DimensionMismatch(format!("{t_len} slots for {} channels", y.n())));
    }
    let ys = y.y_s();
    let r_ss = hermitian_symmetrize(&(ys * &ys.adjoint()).scale_real(1.0 / t_len as f64))?;
    if !r_ss.is_finite() {
        return Err(Error::DegenerateBlock("signal rows are not finite".into()));
    }
    let sigma_nn = estimate_noise_covariance(y.y_n())?;
    let (lmax, mut dir) = dominant_eigenpair(&r_ss)?;
    if !(lmax > 0.0) {
        return Err(Error::DegenerateBlock("signal rows are identically zero".into()));
    }
    let floor = INIT_POWER_FLOOR * lmax;
    let excess = if ns >= 2 {
        lmax - smallest_eigenvalue(&r_ss)?
    } else {
        moment_power_estimate(ys.row(0), alphabet)
    };
    let power = excess.max(floor);
    // Phase reference: first component real and non-negative.
    let phase = if dir[0].norm() > 0.0 { dir[0].conj() / dir[0].norm() } else { Complex64::new(1.0, 0.0) };
    let mag = (power / alphabet.avg_power()).sqrt();
    dir.iter_mut().for_each(|z| *z *= phase * mag);
    let params = EmParams {
        h_s: dir,
        sigma_ss: r_ss,
        sigma_sn: ComplexMatrix::zeros(ns, y.n_n()),
        sigma_nn,
    };
    Ok(EmState {
        iter: 0,
        params,
        moments: Moments {
            s_hat: vec![Complex64::new(0.0, 0.0); t_len],
            u: vec![0.0; t_len],
            v: vec![0.0; t_len],
        },
    })
}

fn moment_power_estimate(row: &[Complex64], alphabet: &SymbolAlphabet) -> f64 {
    let t = row.len() as f64;
    let m2 = row.iter().map(Complex64::norm_sqr).sum::<f64>() / t;
    let m4 = row.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / t;
    let kurt = alphabet.kurtosis();
    if !(kurt < 2.0) {
        return m2;
    }
    ((2.0 * m2 * m2 - m4).max(0.0) / (2.0 - kurt)).sqrt().min(m2)
}

/// Posterior table and moments under the state's current parameters.
pub fn e_step(y: &ObservationBlock, state: &EmState, alphabet: &SymbolAlphabet) -> Result<(PosteriorTable, Moments)> {
    posterior_table(y, &state.params, alphabet)
}

/// Closed-form maximization given the posterior moments in `state`.
///
/// `h_s' = (sum y_s s^* - S_sn S_nn^-1 sum y_n s^*) / sum u`, then
/// `S_ss' = (1/T) sum [(y_s - h_s' s)(y_s - h_s' s)^H + h_s' h_s'^H v]` and
/// `S_sn' = (1/T) sum (y_s - h_s' s) y_n^H`, with `S_nn` unchanged.
pub fn m_step(y: &ObservationBlock, state: &EmState, config: &EmConfig) -> Result<EmParams> {
    let params = &state.params;
    check_block(y, params)?;
    let mom = &state.moments;
    let (ns, nn, t_len) = (y.n_s(), y.n_n(), y.t_len());
    if mom.s_hat.len() != t_len {
        return Err(Error::DimensionMismatch("moments do not cover the block".into()));
    }
    let h = m_step_gain(y, state)?;

    let inv_t = 1.0 / t_len as f64;
    let mut ss = ComplexMatrix::zeros(ns, ns);
    let mut sn = ComplexMatrix::zeros(ns, nn);
    let mut e = vec![Complex64::new(0.0, 0.0); ns];
    let mut sum_v = 0.0;
    for t in 0..t_len {
        let s = mom.s_hat[t];
        for (i, ei) in e.iter_mut().enumerate() {
            *ei = y.y_s()[(i, t)] - h[i] * s;
        }
        for i in 0..ns {
            for j in 0..ns {
                ss[(i, j)] += e[i] * e[j].conj();
            }
            for j in 0..nn {
                sn[(i, j)] += e[i] * y.y_n()[(j, t)].conj();
            }
        }
        sum_v += mom.v[t];
    }
    for i in 0..ns {
        for j in 0..ns {
            ss[(i, j)] = (ss[(i, j)] + h[i] * h[j].conj() * sum_v) * inv_t;
        }
    }
    let mut sigma_ss = hermitian_symmetrize(&ss)?;
    let exact_sn = sn.scale_real(inv_t);
    let mut next = EmParams { h_s: h, sigma_ss: sigma_ss.clone(), sigma_sn: exact_sn.clone(), sigma_nn: params.sigma_nn.clone() };
    if projects_cross_block(config, y) {
        // The projection can leave the assembled matrix indefinite; the exact
        // cross block never does, so keep it in that case.
        let projected = EmParams { sigma_sn: hermitian_symmetrize(&exact_sn)?, ..next.clone() };
        if cholesky_factor(&projected.sigma()).is_ok() {
            return Ok(projected);
        }
    }
    if cholesky_factor(&next.sigma()).is_err() {
        // one retry with diagonal loading on the signal block
        let n = (ns + nn) as f64;
        let eps = crate::linalg::JITTER * next.sigma().trace().re.abs() / n;
        for i in 0..ns {
            sigma_ss[(i, i)] += Complex64::new(eps, 0.0);
        }
        next.sigma_ss = sigma_ss;
        cholesky_factor(&next.sigma())?;
    }
    Ok(next)
}

/// Observed-data log-likelihood
/// `sum_t ln[(1/M) sum_m exp(-d_m^(t))] - T ln|Sigma| - N T ln pi`.
pub fn log_likelihood(y: &ObservationBlock, state: &EmState, alphabet: &SymbolAlphabet) -> Result<f64> {
    params_log_likelihood(y, &state.params, alphabet)
}

pub fn params_log_likelihood(y: &ObservationBlock, params: &EmParams, alphabet: &SymbolAlphabet) -> Result<f64> {
    Ok(expectation(y, params, alphabet)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome {
    /// Final parameters with the posterior moments computed under them.
    pub state: EmState,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at the initial point and after each iteration.
    pub log_likelihood: Vec<f64>,
}

/// Thresholds actually used by a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub eps_hs: f64,
    pub eps_sigma: f64,
}

pub fn resolve_thresholds(config: &EmConfig, y: &ObservationBlock, init: &EmParams) -> Thresholds {
    Thresholds {
        eps_hs: config.eps_hs.unwrap_or_else(|| 1e-6 * y.y_s().frobenius_norm()),
        eps_sigma: config.eps_sigma.unwrap_or_else(|| 1e-8 * init.sigma().frobenius_norm()),
    }
}

/// `||h' s'^T - h s^T||_F` without forming the outer products.
fn outer_product_change(h_new: &[Complex64], s_new: &[Complex64], h_old: &[Complex64], s_old: &[Complex64]) -> f64 {
    let mut acc = 0.0;
    for (hn, ho) in h_new.iter().zip(h_old) {
        for (sn, so) in s_new.iter().zip(s_old) {
            acc += (hn * sn - ho * so).norm_sqr();
        }
    }
    acc.sqrt()
}

fn projects_cross_block(config: &EmConfig, y: &ObservationBlock) -> bool {
    config.symmetrize_cross && y.n_s() == y.n_n() && y.n_n() > 0
}

pub fn run_em(y: &ObservationBlock, alphabet: &SymbolAlphabet, config: &EmConfig) -> Result<EmOutcome> {
    let init = init_state(y, alphabet)?;
    run_em_from(y, alphabet, config, init)
}

/// Iterates from an explicit starting state (its moments are recomputed).
pub fn run_em_from(
    y: &ObservationBlock,
    alphabet: &SymbolAlphabet,
    config: &EmConfig,
    init: EmState,
) -> Result<EmOutcome> {
    config.validate()?;
    let thresholds = resolve_thresholds(config, y, &init.params);
    let (moments, ll0) = expectation(y, &init.params, alphabet)?;
    let mut state = EmState { iter: 0, params: init.params, moments };
    let mut trace = vec![ll0];
    let mut converged = false;
    let exact = EmConfig { symmetrize_cross: false, ..config.clone() };
    while state.iter < config.max_iters {
        let mut params = m_step(y, &state, config)?;
        let (mut moments, mut ll) = expectation(y, &params, alphabet)?;
        let prev = *trace.last().expect("trace starts with the initial likelihood");
        if ll < prev && projects_cross_block(config, y) {
            // The Hermitian projection is not an exact maximization; fall back
            // to the unconstrained update when it costs likelihood.
            params = m_step(y, &state, &exact)?;
            (moments, ll) = expectation(y, &params, alphabet)?;
        }
        let d_hs = outer_product_change(&params.h_s, &moments.s_hat, &state.params.h_s, &state.moments.s_hat);
        let d_sigma = (&params.sigma() - &state.params.sigma()).frobenius_norm();
        state = EmState { iter: state.iter + 1, params, moments };
        trace.push(ll);
        if d_hs < thresholds.eps_hs && d_sigma < thresholds.eps_sigma {
            converged = true;
            break;
        }
    }
    Ok(EmOutcome { iterations: state.iter, converged, state, log_likelihood: trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Detector {
    /// `argmax_m w_m^(t)` under the calibrated parameters.
    #[default]
    MaxPosterior,
    /// `argmin_m |s_cal^(t) - a_m|`.
    MinDistance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub s_cal: Vec<Complex64>,
    pub h_cal: Vec<Complex64>,
    pub sigma_cal: EmParams,
    /// Power-matching factor applied to the raw estimates.
    pub scale: f64,
    /// Quarter turn `i^k` applied to `s_cal` (and undone on `h_cal`).
    pub rotation: Complex64,
    pub posterior: PosteriorTable,
    pub detected: SymbolSequence,
}

/// Rescales the converged symbol estimates to the constellation power, recomputes
/// the matching gains, fixes the quarter-turn ambiguity and runs both detectors.
///
/// The raw estimates are multiplied by `alpha = sqrt(T P_s / sum |s_hat|^2)`; the
/// gains come from the `h_s` update evaluated with the rescaled first and second
/// moments, so `h_cal s_cal` reproduces the converged `h_s s_hat` product.
///
/// Square QAM is invariant under multiplication by `i`, so all four rotations
/// have the same observed-data likelihood up to rounding. Candidates within
/// `ROTATION_TIE_BAND` of the best likelihood are tied, and the tie goes to the
/// rotation that puts the first signal gain closest to the positive real axis.
pub fn calibrate(state: &EmState, alphabet: &SymbolAlphabet, y: &ObservationBlock) -> Result<CalibrationResult> {
    check_block(y, &state.params)?;
    let mom = &state.moments;
    let t_len = y.t_len();
    let energy: f64 = mom.s_hat.iter().map(Complex64::norm_sqr).sum();
    if !(energy > 0.0) {
        return Err(Error::ZeroEstimate);
    }
    let scale = (t_len as f64 * alphabet.avg_power() / energy).sqrt();
    let s_scaled: Vec<Complex64> = mom.s_hat.iter().map(|s| s * scale).collect();
    let calibrated_moments = Moments {
        s_hat: s_scaled.clone(),
        u: mom.u.iter().map(|u| u * scale * scale).collect(),
        v: mom.v.iter().map(|v| v * scale * scale).collect(),
    };
    let rescaled = EmState { iter: state.iter, params: state.params.clone(), moments: calibrated_moments };
    let h_scaled = m_step_gain(y, &rescaled)?;

    let mut best: Option<(f64, f64, u32)> = None;
    let mut candidates = Vec::with_capacity(4);
    for k in 0..4u32 {
        let rho = quarter_turn(k);
        let params = EmParams { h_s: h_scaled.iter().map(|h| h * rho.conj()).collect(), ..state.params.clone() };
        let ll = params_log_likelihood(y, &params, alphabet)?;
        candidates.push((k, ll, params.h_s[0].re));
    }
    let ll_max = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    for &(k, ll, re_h0) in &candidates {
        if ll >= ll_max - ROTATION_TIE_BAND * ll_max.abs().max(1.0) {
            let better = match best {
                None => true,
                Some((_, best_re, _)) => re_h0 > best_re,
            };
            if better {
                best = Some((ll, re_h0, k));
            }
        }
    }
    let k = best.map(|b| b.2).unwrap_or(0);
    let rotation = quarter_turn(k);
    let s_cal: Vec<Complex64> = s_scaled.iter().map(|s| s * rotation).collect();
    let h_cal: Vec<Complex64> = h_scaled.iter().map(|h| h * rotation.conj()).collect();
    let sigma_cal = EmParams { h_s: h_cal.clone(), ..state.params.clone() };
    let (posterior, _) = posterior_table(y, &sigma_cal, alphabet)?;
    let detected = SymbolSequence::from_indices(argmax_posterior(&posterior), alphabet)?;
    Ok(CalibrationResult { s_cal, h_cal, sigma_cal, scale, rotation, posterior, detected })
}

/// Gain update alone, from the moments held in `state`.
fn m_step_gain(y: &ObservationBlock, state: &EmState) -> Result<Vec<Complex64>> {
    let mom = &state.moments;
    let sum_u: f64 = mom.u.iter().sum();
    if !(sum_u > 0.0) {
        return Err(Error::ZeroPosteriorMass);
    }
    let cross = |rows: &ComplexMatrix| -> Vec<Complex64> {
        (0..rows.rows())
            .map(|i| rows.row(i).iter().zip(&mom.s_hat).map(|(y, s)| y * s.conj()).sum())
            .collect()
    };
    let mut h = cross(y.y_s());
    if let Some(k) = state.params.noise_regression()? {
        let correction = k.mat_vec(&cross(y.y_n()))?;
        h.iter_mut().zip(&correction).for_each(|(a, b)| *a -= b);
    }
    h.iter_mut().for_each(|z| *z /= sum_u);
    Ok(h)
}

/// Per-slot `argmax_m w_m^(t)`, lowest index on ties.
pub fn argmax_posterior(table: &PosteriorTable) -> Vec<usize> {
    (0..table.t_len())
        .map(|t| {
            let w = table.weights(t);
            let mut best = 0;
            for (m, &wm) in w.iter().enumerate() {
                if wm > w[best] {
                    best = m;
                }
            }
            best
        })
        .collect()
}

pub fn detect_symbols(result: &CalibrationResult, alphabet: &SymbolAlphabet, mode: Detector) -> SymbolSequence {
    let idx = match mode {
        Detector::MaxPosterior => return result.detected.clone(),
        Detector::MinDistance => result.s_cal.iter().map(|&s| alphabet.nearest(s)).collect(),
    };
    SymbolSequence::from_indices(idx, alphabet).expect("nearest index is within the alphabet")
}
