//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wh_receiver::{ChannelModel, ComplexMatrix};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `X X^H + diag(d)` with uniform entries and `d` in `[0.05, 1)`.
pub fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let mut x = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            x[(i, j)] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    let mut s = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = c(0.0, 0.0);
            for k in 0..n {
                acc += x[(i, k)] * x[(j, k)].conj();
            }
            s[(i, j)] = acc;
        }
        s[(i, i)] = c(s[(i, i)].re + rng.random_range(0.05..1.0), 0.0);
    }
    s
}

/// Four-channel model with two signal channels and a random covariance.
pub fn random_model(rng: &mut ChaCha8Rng) -> ChannelModel {
    let sigma = random_hpd(rng, 4);
    let h = vec![
        c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
    ];
    ChannelModel::new(h, 2, sigma).unwrap()
}

/// Gauss-Jordan elimination with partial pivoting on a plain row-major copy.
pub fn gauss_jordan_inverse(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    let n = m.rows();
    let mut a: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut row: Vec<Complex64> = (0..n).map(|j| m[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }));
            row
        })
        .collect();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm())).unwrap();
        a.swap(col, p);
        let pivot = a[col][col];
        for v in a[col].iter_mut() {
            *v /= pivot;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                for k in 0..2 * n {
                    let sub = f * a[col][k];
                    a[r][k] -= sub;
                }
            }
        }
    }
    a.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// `1/(h^H Sigma^-1 h)` through the Gauss-Jordan inverse.
pub fn reference_variance(h: &[Complex64], sigma: &ComplexMatrix) -> f64 {
    let inv = gauss_jordan_inverse(sigma);
    let mut q = c(0.0, 0.0);
    for i in 0..h.len() {
        for j in 0..h.len() {
            q += h[i].conj() * inv[i][j] * h[j];
        }
    }
    1.0 / q.re
}

/// Gaussian tail `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Symbol error rate of square M-QAM in AWGN at symbol SNR `snr` (linear).
pub fn qam_ser_awgn(order: usize, snr: f64) -> f64 {
    let m = order as f64;
    let p = 2.0 * (1.0 - 1.0 / m.sqrt()) * q_function((3.0 * snr / (m - 1.0)).sqrt());
    1.0 - (1.0 - p) * (1.0 - p)
}
