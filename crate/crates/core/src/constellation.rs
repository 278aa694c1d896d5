//! Square M-QAM alphabets on the odd-integer grid and hard symbol decisions.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A finite symbol alphabet. QAM alphabets are unnormalized: levels are ±1, ±3, ...
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolAlphabet {
    points: Vec<Complex64>,
    avg_power: f64,
}

impl SymbolAlphabet {
    /// Square QAM of the given order. Point `k` has in-phase level `k % L` and
    /// quadrature level `k / L`, with `L = sqrt(order)` levels `-(L-1), ..., L-1`.
    pub fn qam(order: usize) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if order < 4 || side * side != order {
            return Err(Error::InvalidOrder(order));
        }
        let level = |k: usize| (2 * k) as f64 - (side - 1) as f64;
        let points = (0..order)
            .map(|k| Complex64::new(level(k % side), level(k / side)))
            .collect();
        Ok(Self::from_points(points))
    }

    /// Arbitrary alphabet, e.g. degenerate alphabets in tests.
    pub fn from_points(points: Vec<Complex64>) -> Self {
        let avg_power = mean_power(&points);
        Self { points, avg_power }
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Average power `P_s`, cached at construction.
    pub fn avg_power(&self) -> f64 {
        self.avg_power
    }

    /// Fourth-order moment ratio `E|a|^4 / P_s^2` under uniform priors.
    pub fn kurtosis(&self) -> f64 {
        let m4 = self.points.iter().map(|a| a.norm_sqr().powi(2)).sum::<f64>() / self.order() as f64;
        m4 / (self.avg_power * self.avg_power)
    }

    /// Index of the point closest to `z`; ties resolve to the lowest index.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (m, a) in self.points.iter().enumerate() {
            let d = (z - a).norm_sqr();
            if d < best_d {
                best_d = d;
                best = m;
            }
        }
        best
    }

    /// `perm[m]` is the index of `i^quarter_turns * a_m`, or `None` if the
    /// alphabet is not closed under that rotation.
    pub fn rotation_map(&self, quarter_turns: u32) -> Option<Vec<usize>> {
        let rot = quarter_turn(quarter_turns);
        self.points
            .iter()
            .map(|&a| {
                let target = a * rot;
                let m = self.nearest(target);
                ((self.points[m] - target).norm() < 1e-9).then_some(m)
            })
            .collect()
    }
}

/// `i^k` with exact components.
pub fn quarter_turn(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

pub fn build_qam(order: usize) -> Result<SymbolAlphabet> {
    SymbolAlphabet::qam(order)
}

pub fn nearest_symbol(z: Complex64, alphabet: &SymbolAlphabet) -> usize {
    alphabet.nearest(z)
}

/// Recomputes `(1/M) sum |a_m|^2` from the points.
pub fn average_power(alphabet: &SymbolAlphabet) -> f64 {
    mean_power(alphabet.points())
}

fn mean_power(points: &[Complex64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().map(Complex64::norm_sqr).sum::<f64>() / points.len() as f64
}

/// A transmitted (or detected) symbol stream: indices plus their alphabet values.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSequence {
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl SymbolSequence {
    pub fn from_indices(indices: Vec<usize>, alphabet: &SymbolAlphabet) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= alphabet.order()) {
            return Err(Error::InvalidParameter(format!(
                "symbol index {bad} outside alphabet of order {}",
                alphabet.order()
            )));
        }
        let values = indices.iter().map(|&i| alphabet.point(i)).collect();
        Ok(Self { indices, values })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of positions where `self` and `other` disagree.
    pub fn errors_against(&self, other: &SymbolSequence) -> usize {
        self.indices.iter().zip(&other.indices).filter(|(a, b)| a != b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qam4_points_and_power() {
        let a = build_qam(4).unwrap();
        let mut pts: Vec<(i64, i64)> = a.points().iter().map(|z| (z.re as i64, z.im as i64)).collect();
        pts.sort();
        assert_eq!(pts, vec![(-1, -1), (-1, 1), (1, -1), (1, 1)]);
        assert_eq!(a.avg_power(), 2.0);
        assert_eq!(average_power(&a), 2.0);
    }

    #[test]
    fn qam_power_matches_two_thirds_m_minus_one() {
        // Brute-force enumeration of the odd-integer grid.
        for (m, expect) in [(16usize, 10.0), (64, 42.0), (256, 170.0)] {
            let side = (m as f64).sqrt() as i64;
            let mut acc = 0.0;
            for i in 0..side {
                for q in 0..side {
                    let re = (2 * i - (side - 1)) as f64;
                    let im = (2 * q - (side - 1)) as f64;
                    acc += re * re + im * im;
                }
            }
            let enumerated = acc / m as f64;
            assert_eq!(enumerated, expect);
            let a = build_qam(m).unwrap();
            assert!((average_power(&a) - expect).abs() < 1e-12);
            assert!((a.avg_power() - 2.0 * (m as f64 - 1.0) / 3.0).abs() < 1e-12);
            assert_eq!(a.order(), m);
        }
    }

    #[test]
    fn invalid_orders() {
        for m in [0, 1, 2, 3, 8, 32, 15] {
            assert!(matches!(build_qam(m), Err(Error::InvalidOrder(_))), "{m}");
        }
    }

    #[test]
    fn nearest_examples() {
        let a = build_qam(16).unwrap();
        assert_eq!(nearest_symbol(a.point(3), &a), 3);
        let q = build_qam(4).unwrap();
        let idx = nearest_symbol(c(0.9, 1.2), &q);
        assert_eq!(q.point(idx), c(1.0, 1.0));

        // Four-way tie at the origin: brute-force distances confirm it.
        let d: Vec<f64> = a.points().iter().map(|p| p.norm_sqr()).collect();
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let tied: Vec<usize> = (0..16).filter(|&m| d[m] == dmin).collect();
        assert_eq!(tied.len(), 4);
        assert_eq!(nearest_symbol(c(0.0, 0.0), &a), tied[0]);
    }

    #[test]
    fn every_point_maps_to_itself_and_rotation_closes() {
        for m in [4, 16, 64] {
            let a = build_qam(m).unwrap();
            for (k, &p) in a.points().iter().enumerate() {
                assert_eq!(a.nearest(p), k);
            }
            let perm = a.rotation_map(1).unwrap();
            let mut sorted = perm.clone();
            sorted.sort();
            assert_eq!(sorted, (0..m).collect::<Vec<_>>());
            for (k, &j) in perm.iter().enumerate() {
                assert_eq!(a.point(j), a.point(k) * c(0.0, 1.0));
            }
            assert_eq!(a.rotation_map(0).unwrap(), (0..m).collect::<Vec<_>>());
        }
    }

    #[test]
    fn symbol_sequence_values_follow_indices() {
        let a = build_qam(16).unwrap();
        let s = SymbolSequence::from_indices(vec![0, 5, 15], &a).unwrap();
        for (i, v) in s.indices().iter().zip(s.values()) {
            assert_eq!(a.point(*i), *v);
        }
        assert!(SymbolSequence::from_indices(vec![16], &a).is_err());
    }

    proptest::proptest! {
        #[test]
        fn nearest_is_true_argmin(re in -8.0f64..8.0, im in -8.0f64..8.0) {
            let a = build_qam(16).unwrap();
            let z = c(re, im);
            let k = a.nearest(z);
            let dk = (z - a.point(k)).norm_sqr();
            for p in a.points() {
                proptest::prop_assert!(dk <= (z - p).norm_sqr());
            }
        }
    }
}
