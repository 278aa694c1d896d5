//! Four-channel receiver scenarios and their text format.
//!
//! ```text
//! # probe and coupling gains
//! h1 = 1
//! h2 = 0.3
//! sigma1 = 1
//! r13 = 0.9
//! r12 = 0.2+0.1i
//! ```
//!
//! Keys are `h1`, `h2`, `sigma1`..`sigma4` and the upper-triangle correlations
//! `r12, r13, r14, r23, r24, r34`. Unlisted keys keep their defaults. Complex
//! values are written `a`, `bi`, `a+bi` or `a-bi`.

use std::path::Path;

use num_complex::Complex64;

use crate::channel::{build_covariance, ChannelModel};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

const KEYS: [&str; 12] = [
    "h1", "h2", "sigma1", "sigma2", "sigma3", "sigma4", "r12", "r13", "r14", "r23", "r24", "r34",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub h: [Complex64; 2],
    pub sigmas: [f64; 4],
    /// Upper triangle holds `r_mk`, `m < k`; the rest is ignored.
    pub correlations: ComplexMatrix,
}

impl Default for Scenario {
    /// Probe gain 1, coupling gain 0.3, noise levels `[1, 2, 1, 2]`, reference
    /// correlations `r13 = r24 = 0.9`, signal-channel correlation `r12 = 0.3`.
    /// The same 0.3 coupling between the two noise references and the two cross
    /// terms `r14 = r23 = r12 r13 = 0.27` keep the covariance positive definite.
    fn default() -> Self {
        let mut r = ComplexMatrix::zeros(4, 4);
        let set = |r: &mut ComplexMatrix, m: usize, k: usize, v: f64| r[(m - 1, k - 1)] = Complex64::new(v, 0.0);
        set(&mut r, 1, 2, 0.3);
        set(&mut r, 1, 3, 0.9);
        set(&mut r, 1, 4, 0.27);
        set(&mut r, 2, 3, 0.27);
        set(&mut r, 2, 4, 0.9);
        set(&mut r, 3, 4, 0.3);
        Self { h: [Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.0)], sigmas: [1.0, 2.0, 1.0, 2.0], correlations: r }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sc = Scenario::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = Some(ln + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::malformed(line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::malformed(line_no, format!("unknown key `{key}`")));
            }
            let z = parse_complex(value.trim()).ok_or_else(|| Error::malformed(line_no, format!("bad value `{}`", value.trim())))?;
            let bytes = key.as_bytes();
            match bytes[0] {
                b'h' => sc.h[(bytes[1] - b'1') as usize] = z,
                b's' => {
                    if z.im != 0.0 {
                        return Err(Error::malformed(line_no, "noise levels are real"));
                    }
                    sc.sigmas[(bytes[5] - b'1') as usize] = z.re;
                }
                _ => {
                    let (m, k) = ((bytes[1] - b'1') as usize, (bytes[2] - b'1') as usize);
                    sc.correlations[(m, k)] = z;
                }
            }
        }
        sc.covariance()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn covariance(&self) -> Result<ComplexMatrix> {
        build_covariance(&self.sigmas, &self.correlations)
    }

    /// The four-channel model as written.
    pub fn model(&self) -> Result<ChannelModel> {
        ChannelModel::new(self.h.to_vec(), 2, self.covariance()?)
    }

    /// `10 log10(|h1|^2 P_s / sigma1^2)` of the scenario as written.
    pub fn snr_db(&self, avg_power: f64) -> f64 {
        10.0 * (self.h[0].norm_sqr() * avg_power / (self.sigmas[0] * self.sigmas[0])).log10()
    }

    /// Model with every noise level scaled by the same factor so that the probe
    /// channel sees `snr_db`.
    pub fn model_at_snr(&self, snr_db: f64, avg_power: f64) -> Result<ChannelModel> {
        if !snr_db.is_finite() {
            return Err(Error::InvalidParameter(format!("SNR {snr_db} dB")));
        }
        if self.h[0].norm_sqr() == 0.0 {
            return Err(Error::ZeroGain);
        }
        let factor = 10f64.powf((self.snr_db(avg_power) - snr_db) / 20.0);
        let scaled = Scenario { sigmas: self.sigmas.map(|s| s * factor), ..self.clone() };
        scaled.model()
    }
}

/// `a`, `bi`, `a+bi`, `a-bi`, with optional spaces and exponents.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix(['i', 'j']) else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    // split at the last sign that is not the leading one or an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| match t {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        _ => t.parse::<f64>().ok(),
    };
    match split {
        Some(k) => Some(Complex64::new(body[..k].parse().ok()?, imag(&body[k..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::smallest_eigenvalue;

    #[test]
    fn complex_literals() {
        let c = Complex64::new;
        assert_eq!(parse_complex("0.5"), Some(c(0.5, 0.0)));
        assert_eq!(parse_complex("2i"), Some(c(0.0, 2.0)));
        assert_eq!(parse_complex("-i"), Some(c(0.0, -1.0)));
        assert_eq!(parse_complex("0.2+0.1i"), Some(c(0.2, 0.1)));
        assert_eq!(parse_complex("0.2 - 0.1i"), Some(c(0.2, -0.1)));
        assert_eq!(parse_complex("1e-3-2e-1i"), Some(c(1e-3, -0.2)));
        assert_eq!(parse_complex("-1.5"), Some(c(-1.5, 0.0)));
        assert_eq!(parse_complex("abc"), None);
        assert_eq!(parse_complex(""), None);
    }

    #[test]
    fn default_scenario_is_positive_definite() {
        let sc = Scenario::default();
        let sigma = sc.covariance().unwrap();
        assert!(smallest_eigenvalue(&sigma).unwrap() > 0.0);
        assert_eq!(sigma[(0, 2)], Complex64::new(0.9, 0.0));
        assert_eq!(sigma[(1, 3)], Complex64::new(0.9 * 4.0, 0.0));
    }

    #[test]
    fn parse_overrides_defaults() {
        let sc = Scenario::parse("# comment\nh2 = 0.5-0.5i\nsigma3 = 1.5 # trailing\nr13 = 0.8\n\n").unwrap();
        assert_eq!(sc.h[1], Complex64::new(0.5, -0.5));
        assert_eq!(sc.sigmas[2], 1.5);
        assert_eq!(sc.correlations[(0, 2)], Complex64::new(0.8, 0.0));
        assert_eq!(sc.h[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Scenario::parse("h3 = 1"), Err(Error::MalformedInput { line: Some(1), .. })));
        assert!(matches!(Scenario::parse("\nh1 1"), Err(Error::MalformedInput { line: Some(2), .. })));
        assert!(matches!(Scenario::parse("sigma1 = x"), Err(Error::MalformedInput { .. })));
        assert!(matches!(Scenario::parse("sigma1 = 1i"), Err(Error::MalformedInput { .. })));
        // correlations that are individually valid but jointly impossible
        assert!(matches!(Scenario::parse("r12 = 0.9\nr13 = 0.9\nr23 = -0.9"), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn snr_scaling_hits_the_target() {
        let sc = Scenario::default();
        for snr in [-5.0, 0.0, 10.0, 23.5] {
            let model = sc.model_at_snr(snr, 10.0).unwrap();
            let got = 10.0 * (model.h_s()[0].norm_sqr() * 10.0 / model.sigma()[(0, 0)].re).log10();
            assert!((got - snr).abs() < 1e-12);
            // all noise levels move together
            let ratio = model.sigma()[(1, 1)].re / model.sigma()[(0, 0)].re;
            assert!((ratio - 4.0).abs() < 1e-12);
        }
    }
}
